"""Radar-only power optimization against a fixed communication allocation.

With ``p_c`` frozen the SINR is a sum of concave ratios, rewritten as

    sum gamma/eta_rr - sum gamma c / (eta_rr^2 p_r + eta_rr c),   c = eta_cr p_c + 1,

so maximizing the SINR is minimizing the convex second sum. The rate floor
is a difference of concave functions of ``p_r``; its subtracted part
``log2(eta_rc p_r + 1)`` is replaced by a tangent upper bound, giving a
convex inner approximation that is re-anchored at every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from radcomm.baselines import resolve, sinr_oracle, waterfill_comm
from radcomm.cvx_core import ConvexProblem, SolverStatus, solve_concave
from radcomm.metrics import LN2, PowerAllocation, SolveReport, Status, comm_throughput, radar_sinr
from radcomm.scenario import ChannelRealization, Constraints, SystemConfig

INNER_TOL = 1e-8
INNER_MAX_NEWTON = 500


class DegenerateClutterError(ValueError):
    """The clutter rewrite needs every eta_rr > 0."""


@dataclass(frozen=True)
class UnilateralProblem:
    ch: ChannelRealization
    p_c_fixed: np.ndarray
    cons: Constraints

    def __post_init__(self):
        p_c = np.asarray(self.p_c_fixed, dtype=float)
        if p_c.shape != (self.ch.n,):
            raise ValueError(f"p_c_fixed must have length {self.ch.n}")
        if np.any(p_c < -1e-12):
            raise ValueError("p_c_fixed must be nonnegative")
        object.__setattr__(self, "p_c_fixed", np.maximum(p_c, 0.0))
        object.__setattr__(self, "cons", resolve(self.cons, self.ch.n))

    @classmethod
    def waterfilled(cls, ch: ChannelRealization, cons: Constraints) -> "UnilateralProblem":
        return cls(ch, waterfill_comm(ch, cons), cons)

    @property
    def interference(self) -> np.ndarray:
        return self.ch.eta_cr * self.p_c_fixed + 1.0


def _vec(prob: UnilateralProblem, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (prob.ch.n,):
        raise ValueError(f"expected a length-{prob.ch.n} vector, got shape {v.shape}")
    return v


def rewritten_objective(prob: UnilateralProblem, p_r) -> float:
    """The convex minimand; ``sum(gamma/eta_rr) - minimand`` is the SINR."""
    p_r = _vec(prob, p_r)
    eta = prob.ch.eta_rr
    if np.any(eta <= 0):
        raise DegenerateClutterError("clutter rewrite requires eta_rr > 0 on every subcarrier")
    c = prob.interference
    return float(np.sum(prob.ch.gamma_rr * c / (eta**2 * p_r + eta * c)))


def taylor_throughput_bound(prob: UnilateralProblem, p_r, anchor) -> float:
    """Lower bound on the comm rate as a function of radar power, tight at ``anchor``."""
    p_r = _vec(prob, p_r)
    anchor = _vec(prob, anchor)
    if np.any(anchor < 0):
        raise ValueError("anchor must be nonnegative")
    ch = prob.ch
    f1 = np.log2(ch.eta_rc * p_r + 1.0 + ch.gamma_cc * prob.p_c_fixed)
    b = ch.eta_rc * anchor + 1.0
    f2 = np.log2(b) + ch.eta_rc * (p_r - anchor) / (LN2 * b)
    return float(np.sum(f1 - f2))


def _minimand_oracle(prob: UnilateralProblem):
    g, eta, c = prob.ch.gamma_rr, prob.ch.eta_rr, prob.interference

    def oracle(p):
        den = eta**2 * p + eta * c
        value = -np.sum(g * c / den)
        grad = g * c * eta**2 / den**2
        hess = -2.0 * g * c * eta**4 / den**3
        return value, grad, hess

    return oracle


def _bound_constraint(prob: UnilateralProblem, anchor: np.ndarray, kappa: float):
    ch = prob.ch
    shift = 1.0 + ch.gamma_cc * prob.p_c_fixed
    b = ch.eta_rc * anchor + 1.0
    lin0 = np.sum(np.log2(b))
    slope = ch.eta_rc / (LN2 * b)

    def oracle(p):
        a = ch.eta_rc * p + shift
        value = np.sum(np.log2(a)) - lin0 - np.sum(slope * (p - anchor)) - kappa
        grad = ch.eta_rc / (LN2 * a) - slope
        hess = -ch.eta_rc**2 / (LN2 * a**2)
        return value, grad, hess

    return oracle


def _rate(prob: UnilateralProblem, p_r) -> float:
    return comm_throughput(prob.ch, PowerAllocation.clipped(p_r, prob.p_c_fixed))


def solve_unilateral(prob: UnilateralProblem, cfg: SystemConfig,
                     init: Optional[np.ndarray] = None) -> SolveReport:
    """Maximize the radar SINR with the comm powers held at ``prob.p_c_fixed``.

    Subcarrier sets with zero clutter cannot use the rewritten minimand;
    those instances maximize the (equally concave) SINR sum directly inside
    the same iteration.
    """
    ch, cons = prob.ch, prob.cons
    n = ch.n
    kappa = cons.throughput_floor
    if _rate(prob, np.zeros(n)) < kappa:
        return SolveReport.infeasible()
    use_rate = kappa > 0
    rewrite = bool(np.all(ch.eta_rr > 0))
    upper = np.full(n, min(cons.peak_radar, cons.total_radar_power))

    def measure(p):
        if rewrite:
            return rewritten_objective(prob, p)
        return radar_sinr(ch, PowerAllocation.clipped(p, prob.p_c_fixed))

    if init is None:
        init = np.full(n, 1e-6 * cons.total_radar_power / n)
    p = np.minimum(np.asarray(init, dtype=float), upper * (1 - 1e-9))
    p[upper <= 0] = 0.0
    while use_rate and _rate(prob, p) <= kappa and np.any(p > 0):
        p = p * 1e-3
        if np.max(p) < 1e-300:
            p = np.zeros(n)
    p_alloc = PowerAllocation.clipped(p, prob.p_c_fixed)
    sinr = radar_sinr(ch, p_alloc)
    trace = [sinr]
    minimand = [measure(p)] if rewrite else None
    objective = _minimand_oracle(prob) if rewrite else sinr_oracle(ch.gamma_rr, ch.eta_rr, prob.interference)

    status = Status.MAX_ITERS
    it = 0
    newton = 0
    if np.any(p > 0) or not use_rate:
        prev = measure(p)
        for it in range(1, cfg.max_outer_iters + 1):
            cp = ConvexProblem(
                dimension=n,
                objective=objective,
                box_lower=np.zeros(n),
                box_upper=upper,
                start=p,
                budget_groups=[(np.arange(n), cons.total_radar_power)],
                concave_constraints=[_bound_constraint(prob, p, kappa)] if use_rate else [],
            )
            sol = solve_concave(cp, tol=INNER_TOL, max_iters=INNER_MAX_NEWTON)
            if sol.status == SolverStatus.INFEASIBLE_START:
                it -= 1
                break
            newton += sol.iterations
            p = np.clip(sol.point, 0.0, upper)
            cur = measure(p)
            trace.append(radar_sinr(ch, PowerAllocation.clipped(p, prob.p_c_fixed)))
            if minimand is not None:
                minimand.append(cur)
            if abs(cur - prev) / max(abs(prev), 1e-12) < cfg.tolerance:
                status = Status.CONVERGED
                break
            prev = cur

    alloc = PowerAllocation.clipped(p, prob.p_c_fixed)
    return SolveReport(allocation=alloc, sinr=radar_sinr(ch, alloc), throughput=comm_throughput(ch, alloc),
                       objective_trace=trace, outer_iters=it, total_inner_iters=newton, status=status,
                       init_sinr=trace[0], minimand_trace=minimand)


def unilateral_report(ch: ChannelRealization, cons: Constraints, cfg: SystemConfig) -> SolveReport:
    """Waterfill the comm system first, then let the radar join."""
    return solve_unilateral(UnilateralProblem.waterfilled(ch, cons), cfg)
