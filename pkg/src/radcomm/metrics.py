"""Radar SINR, communication throughput and shared result types."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from radcomm.scenario import ChannelRealization, Constraints

LN2 = np.log(2.0)


@dataclass(frozen=True)
class PowerAllocation:
    """Radar and communication power per subcarrier (linear units)."""

    p_r: np.ndarray
    p_c: np.ndarray

    def __post_init__(self):
        p_r = np.asarray(self.p_r, dtype=float).copy()
        p_c = np.asarray(self.p_c, dtype=float).copy()
        if p_r.ndim != 1 or p_r.shape != p_c.shape:
            raise ValueError(f"p_r and p_c must be equal-length vectors, got {p_r.shape} and {p_c.shape}")
        if not (np.all(np.isfinite(p_r)) and np.all(np.isfinite(p_c))):
            raise ValueError("powers must be finite")
        if np.any(p_r < 0) or np.any(p_c < 0):
            raise ValueError("powers must be nonnegative")
        p_r.setflags(write=False)
        p_c.setflags(write=False)
        object.__setattr__(self, "p_r", p_r)
        object.__setattr__(self, "p_c", p_c)

    @property
    def n(self) -> int:
        return self.p_r.size

    @classmethod
    def clipped(cls, p_r, p_c) -> "PowerAllocation":
        """Build from solver output, clipping round-off negatives to zero."""
        return cls(np.maximum(np.asarray(p_r, dtype=float), 0.0),
                   np.maximum(np.asarray(p_c, dtype=float), 0.0))

    def stacked(self) -> np.ndarray:
        """The 2 x N matrix [p_r; p_c]."""
        return np.vstack([self.p_r, self.p_c])


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


@dataclass
class SolveReport:
    allocation: Optional[PowerAllocation]
    sinr: float
    throughput: float
    objective_trace: list = field(default_factory=list)
    outer_iters: int = 0
    total_inner_iters: int = 0
    status: Status = Status.CONVERGED
    init_sinr: Optional[float] = None
    # unilateral only: the clutter-rewritten minimand per iteration
    minimand_trace: Optional[list] = None

    @classmethod
    def infeasible(cls) -> "SolveReport":
        return cls(allocation=None, sinr=float("nan"), throughput=float("nan"),
                   status=Status.INFEASIBLE)


def _check(ch: ChannelRealization, alloc: PowerAllocation):
    if alloc.n != ch.n:
        raise ValueError(f"allocation has {alloc.n} subcarriers, channel has {ch.n}")


def radar_sinr_terms(ch: ChannelRealization, p_r, p_c) -> np.ndarray:
    return ch.gamma_rr * p_r / (ch.eta_rr * p_r + ch.eta_cr * p_c + 1.0)


def throughput_terms(ch: ChannelRealization, p_r, p_c) -> np.ndarray:
    return np.log1p(ch.gamma_cc * p_c / (ch.eta_rc * p_r + 1.0)) / LN2


def radar_sinr(ch: ChannelRealization, alloc: PowerAllocation) -> float:
    """Radar output SINR summed over subcarriers."""
    _check(ch, alloc)
    return float(np.sum(radar_sinr_terms(ch, alloc.p_r, alloc.p_c)))


def comm_throughput(ch: ChannelRealization, alloc: PowerAllocation) -> float:
    """Achievable communication rate in bits/s/Hz."""
    _check(ch, alloc)
    return float(np.sum(throughput_terms(ch, alloc.p_r, alloc.p_c)))


def to_db(x: float) -> float:
    if not x > 0:
        raise ValueError(f"to_db requires a positive value, got {x}")
    return float(10.0 * np.log10(x))


def constraint_violations(ch: ChannelRealization, alloc: PowerAllocation, cons: Constraints,
                          check_throughput: bool = True, budget_tol: float = 1e-6,
                          peak_tol: float = 1e-9, rate_tol: float = 1e-6) -> list:
    """Human-readable list of violated constraints (empty when feasible).

    ``cons`` must carry resolved peak caps.
    """
    problems = []
    if np.sum(alloc.p_r) > cons.total_radar_power + budget_tol:
        problems.append(f"radar budget {np.sum(alloc.p_r):.9g} > {cons.total_radar_power}")
    if np.sum(alloc.p_c) > cons.total_comm_power + budget_tol:
        problems.append(f"comm budget {np.sum(alloc.p_c):.9g} > {cons.total_comm_power}")
    if np.max(alloc.p_r, initial=0.0) > cons.peak_radar + peak_tol:
        problems.append("radar peak exceeded")
    if np.max(alloc.p_c, initial=0.0) > cons.peak_comm + peak_tol:
        problems.append("comm peak exceeded")
    if check_throughput:
        rate = comm_throughput(ch, alloc)
        if rate < cons.throughput_floor - rate_tol:
            problems.append(f"throughput {rate:.9g} < {cons.throughput_floor}")
    return problems
