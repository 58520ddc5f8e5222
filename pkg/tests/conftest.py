import numpy as np
import pytest

from radcomm.scenario import ChannelRealization, config_from_dict

ACCEPTANCE_LINES = []


def channel(gamma_rr=1.0, gamma_cc=1.0, eta_rc=0.0, eta_cr=0.0, eta_rr=0.0, n=None):
    """Build a realization, broadcasting scalars to length ``n``."""
    vals = [gamma_rr, gamma_cc, eta_rc, eta_cr, eta_rr]
    if n is None:
        n = max(np.size(v) for v in vals)
    return ChannelRealization(*(np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() for v in vals))


def random_channel(rng, n, cross=0.05, clutter=0.05):
    return ChannelRealization(
        gamma_rr=rng.exponential(1.0, n), gamma_cc=rng.exponential(1.0, n),
        eta_rc=rng.exponential(cross, n), eta_cr=rng.exponential(cross, n),
        eta_rr=rng.exponential(clutter, n))


def cfg_of(**kw):
    base = dict(n_subcarriers=16, P_r=600.0, P_c=600.0, kappa=2.5)
    base.update(kw)
    return config_from_dict(base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def report_criterion(number: int, passed: bool, detail: str):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
