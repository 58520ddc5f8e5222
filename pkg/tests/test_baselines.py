import math

import numpy as np
import pytest

from radcomm.baselines import (
    InfeasibleError,
    check_feasibility,
    comm_absent_optimum,
    greedy_report,
    greedy_search,
    waterfill_comm,
)
from radcomm.metrics import Status, comm_throughput, radar_sinr
from radcomm.scenario import Constraints, generate_channels
from conftest import cfg_of, channel, random_channel


def cons(pr=10.0, pc=3.0, kappa=0.0, xi_r=None, xi_c=None):
    return Constraints(total_radar_power=pr, total_comm_power=pc, peak_radar=xi_r, peak_comm=xi_c,
                       throughput_floor=kappa)


def radar_only_oracle(gamma, eta, budget, cap):
    """Comm-absent optimum by bisection on the budget multiplier.

    Stationarity of gamma p / (eta p + 1) - nu p gives
    p = (sqrt(gamma / nu) - 1) / eta, clipped to [0, cap].
    """
    def powers(nu):
        return np.clip((np.sqrt(gamma / nu) - 1.0) / eta, 0.0, cap)

    if powers(1e-300).sum() <= budget:
        return powers(1e-300)
    lo, hi = 1e-300, gamma.max() * 2
    for _ in range(2000):
        mid = math.sqrt(lo * hi)
        lo, hi = (lo, mid) if powers(mid).sum() < budget else (mid, hi)
        if hi / lo < 1 + 1e-15:
            break
    return powers(math.sqrt(lo * hi))


def test_waterfill_comm_examples():
    ch = channel(gamma_cc=[1, 0.5])
    assert np.allclose(waterfill_comm(ch, cons(pc=3, xi_c=np.inf)), [2, 1])
    assert np.all(waterfill_comm(ch, cons(pc=0)) == 0)
    ch4 = channel(gamma_cc=0.7, n=4)
    assert np.allclose(waterfill_comm(ch4, cons(pc=8, xi_c=2)), 2.0)


def test_feasibility_boundary():
    ch = channel(gamma_cc=1.0)
    f = check_feasibility(ch, cons(pc=3, xi_c=3, kappa=2))
    assert f.feasible and f.max_throughput == pytest.approx(2.0)
    assert not check_feasibility(ch, cons(pc=3, xi_c=3, kappa=2.5)).feasible
    assert check_feasibility(ch, cons(pc=0, kappa=0)).feasible


def test_feasibility_monotone_in_kappa(rng):
    for _ in range(20):
        ch = random_channel(rng, 6)
        top = check_feasibility(ch, cons(pc=5)).max_throughput
        for k in np.linspace(0, top, 6):
            assert check_feasibility(ch, cons(pc=5, kappa=k)).feasible
        assert not check_feasibility(ch, cons(pc=5, kappa=top * 1.01 + 1e-9)).feasible


def test_comm_absent_single_subcarrier():
    ch = channel(gamma_rr=2.0, eta_rr=0.1, eta_cr=0.3)
    rep = comm_absent_optimum(ch, cons(pr=10, xi_r=4))
    assert rep.allocation.p_r[0] == pytest.approx(4.0, abs=1e-6)
    assert rep.sinr == pytest.approx(8 / 1.4, rel=1e-8)
    assert rep.allocation.p_c[0] == 0.0


def test_comm_absent_symmetric_split():
    ch = channel(gamma_rr=1.5, eta_rr=0.2, n=2)
    rep = comm_absent_optimum(ch, cons(pr=10))
    assert np.allclose(rep.allocation.p_r, [5, 5], atol=1e-5)


def test_comm_absent_zero_gain():
    ch = channel(gamma_rr=0.0, eta_rr=0.1, n=3)
    assert comm_absent_optimum(ch, cons(pr=10)).sinr == 0.0


def test_comm_absent_matches_multiplier_oracle(rng):
    for _ in range(30):
        n = int(rng.integers(2, 10))
        ch = random_channel(rng, n)
        budget = rng.uniform(10, 800)
        cap = rng.uniform(budget / n, 2 * budget)
        rep = comm_absent_optimum(ch, cons(pr=budget, xi_r=cap))
        p = radar_only_oracle(ch.gamma_rr, ch.eta_rr, budget, cap)
        best = float(np.sum(ch.gamma_rr * p / (ch.eta_rr * p + 1)))
        assert rep.sinr == pytest.approx(best, rel=1e-7)
        assert rep.sinr <= best * (1 + 1e-9)


def test_greedy_hand_trace():
    ch = channel(gamma_rr=[1, 2], gamma_cc=[3, 1], eta_rr=[0.1, 0.2])
    alloc, u = greedy_search(ch, cons(pr=10, pc=3, kappa=2, xi_r=10, xi_c=3))
    assert list(u) == [1, 0]
    assert alloc.p_c[0] == pytest.approx(3.0) and alloc.p_c[1] == 0.0
    assert alloc.p_r[0] == 0.0 and alloc.p_r[1] == pytest.approx(10.0, abs=1e-6)
    assert comm_throughput(ch, alloc) == pytest.approx(math.log2(10))
    assert radar_sinr(ch, alloc) == pytest.approx(20 / 3, abs=1e-6)


def test_greedy_zero_floor_gives_radar_everything():
    ch = channel(gamma_rr=[1, 2, 0.5], gamma_cc=[3, 1, 2], eta_rr=0.1)
    alloc, u = greedy_search(ch, cons(pr=9, kappa=0))
    assert not u.any() and np.all(alloc.p_c == 0)
    assert alloc.p_r.sum() == pytest.approx(9.0, abs=1e-6)


def test_greedy_at_max_throughput_uses_every_needed_subcarrier():
    ch = channel(gamma_rr=1.0, gamma_cc=[2.0, 1.0, 0.5, 0.25], eta_rr=0.1)
    c = cons(pc=4.0, xi_c=np.inf)
    top = check_feasibility(ch, c).max_throughput
    wf = waterfill_comm(ch, c)
    _, u = greedy_search(ch, cons(pc=4.0, xi_c=np.inf, kappa=top - 1e-12))
    assert np.all(u[wf > 0] == 1)


def test_greedy_tie_break_lower_index():
    ch = channel(gamma_rr=1.0, gamma_cc=[1.0, 2.0, 2.0], eta_rr=0.05)
    _, u = greedy_search(ch, cons(pc=3, xi_c=3, kappa=1.0))
    assert list(u) == [0, 1, 0]


def test_greedy_infeasible():
    ch = channel(gamma_cc=1.0, n=2)
    with pytest.raises(InfeasibleError):
        greedy_search(ch, cons(pc=2, xi_c=1, kappa=5))
    assert greedy_report(ch, cons(pc=2, xi_c=1, kappa=5)).status == Status.INFEASIBLE


def test_greedy_disjoint_and_floor_met():
    cfg = cfg_of()
    c = cfg.resolved_constraints()
    for k in range(10):
        ch = generate_channels(cfg, k)
        alloc, u = greedy_search(ch, c)
        assert np.all(alloc.p_r * alloc.p_c == 0)
        assert np.all(alloc.p_c[u == 0] == 0) and np.all(alloc.p_r[u == 1] == 0)
        assert comm_throughput(ch, alloc) >= c.throughput_floor - 1e-6


def test_greedy_radar_part_optimal_on_its_set(rng):
    # the radar share equals the comm-absent optimum restricted to radar-owned subcarriers
    cfg = cfg_of(n_subcarriers=8)
    c = cfg.resolved_constraints()
    ch = generate_channels(cfg, 2)
    alloc, u = greedy_search(ch, c)
    idx = np.flatnonzero(u == 0)
    p = radar_only_oracle(ch.gamma_rr[idx], ch.eta_rr[idx], c.total_radar_power, c.peak_radar)
    best = float(np.sum(ch.gamma_rr[idx] * p / (ch.eta_rr[idx] * p + 1)))
    assert radar_sinr(ch, alloc) == pytest.approx(best, rel=1e-7)
