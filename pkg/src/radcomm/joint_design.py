"""Joint radar and communication power allocation.

The sum-of-ratios SINR is handled with the quadratic transform: for fixed
slack weights ``lambda`` the surrogate

    F(lambda, P) = sum_n 2 lambda_n sqrt(gamma_rr p_r) - lambda_n^2 (eta_rr p_r + eta_cr p_c + 1)

is concave in the stacked powers ``P = [p_r; p_c]``. The throughput floor is
convexified by linearizing the concave interference term
``log2(eta_rc p_r + 1)`` around the previous inner iterate (an inner
approximation of the true feasible set), and the resulting convex program
is re-solved until the surrogate settles.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from radcomm.baselines import InfeasibleError, check_feasibility, greedy_search, resolve
from radcomm.cvx_core import ConvexProblem, SolverStatus, solve_concave
from radcomm.metrics import (
    LN2,
    PowerAllocation,
    SolveReport,
    Status,
    comm_throughput,
    radar_sinr,
)
from radcomm.scenario import ChannelRealization, Constraints, SystemConfig

INNER_TOL = 1e-8
INIT_MIX = 0.01
INNER_MAX_NEWTON = 500


def _check(ch, *allocs):
    for a in allocs:
        if a.n != ch.n:
            raise ValueError(f"allocation has {a.n} subcarriers, channel has {ch.n}")


def update_lambda(ch: ChannelRealization, alloc: PowerAllocation) -> np.ndarray:
    """Closed-form maximizer of F over lambda for fixed powers."""
    _check(ch, alloc)
    return np.sqrt(ch.gamma_rr * alloc.p_r) / (ch.eta_rr * alloc.p_r + ch.eta_cr * alloc.p_c + 1.0)


def surrogate_value(ch: ChannelRealization, lambdas, alloc: PowerAllocation) -> float:
    _check(ch, alloc)
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (ch.n,):
        raise ValueError(f"lambdas must have length {ch.n}")
    den = ch.eta_rr * alloc.p_r + ch.eta_cr * alloc.p_c + 1.0
    return float(np.sum(2.0 * lam * np.sqrt(ch.gamma_rr * alloc.p_r) - lam**2 * den))


def linearized_throughput(ch: ChannelRealization, alloc: PowerAllocation,
                          anchor: PowerAllocation) -> float:
    """Concave lower bound on the throughput, exact at ``alloc == anchor``."""
    _check(ch, alloc, anchor)
    full = np.log2(ch.gamma_cc * alloc.p_c + ch.eta_rc * alloc.p_r + 1.0)
    b = ch.eta_rc * anchor.p_r + 1.0
    lin = np.log2(b) + ch.eta_rc * (alloc.p_r - anchor.p_r) / (LN2 * b)
    return float(np.sum(full - lin))


def _surrogate_oracle(ch: ChannelRealization, lam: np.ndarray):
    n = ch.n
    root_g = np.sqrt(ch.gamma_rr)
    lam2 = lam**2
    c_r = lam2 * ch.eta_rr
    c_c = lam2 * ch.eta_cr
    const = lam2.sum()

    def oracle(x):
        p_r, p_c = x[:n], x[n:]
        sq = np.sqrt(p_r)
        value = np.sum(2.0 * lam * root_g * sq - c_r * p_r - c_c * p_c) - const
        with np.errstate(divide="ignore", invalid="ignore"):
            g_r = np.where(lam * root_g > 0, lam * root_g / sq, 0.0) - c_r
            h_r = np.where(lam * root_g > 0, -0.5 * lam * root_g / (sq * p_r), 0.0)
        grad = np.concatenate([g_r, -c_c])
        hess = np.concatenate([h_r, np.zeros(n)])
        return value, grad, hess

    return oracle


def _linearized_rate_constraint(ch: ChannelRealization, anchor_pr: np.ndarray, kappa: float):
    n = ch.n
    b = ch.eta_rc * anchor_pr + 1.0
    lin0 = np.sum(np.log2(b))
    slope = ch.eta_rc / (LN2 * b)
    v_r, v_c = ch.eta_rc, ch.gamma_cc
    idx = np.arange(n)

    def oracle(x):
        p_r, p_c = x[:n], x[n:]
        a = v_c * p_c + v_r * p_r + 1.0
        value = np.sum(np.log2(a)) - lin0 - np.sum(slope * (p_r - anchor_pr)) - kappa
        grad = np.concatenate([v_r / (LN2 * a) - slope, v_c / (LN2 * a)])
        w = 1.0 / (LN2 * a**2)
        hess = np.zeros((2 * n, 2 * n))
        hess[idx, idx] = -w * v_r * v_r
        hess[idx, idx + n] = hess[idx + n, idx] = -w * v_r * v_c
        hess[idx + n, idx + n] = -w * v_c * v_c
        return value, grad, hess

    return oracle


def _bounds(cons: Constraints, n: int, comm_active: bool = True):
    ub_r = np.full(n, min(cons.peak_radar, cons.total_radar_power))
    ub_c = np.full(n, min(cons.peak_comm, cons.total_comm_power) if comm_active else 0.0)
    return np.concatenate([ub_r, ub_c])


def interior_point(alloc: PowerAllocation, cons: Constraints, theta: float = 1e-6,
                   comm_active: bool = True) -> np.ndarray:
    """Nudge a feasible allocation a fraction ``theta`` toward a strictly interior uniform point."""
    n = alloc.n
    upper = _bounds(cons, n, comm_active)
    uniform = np.concatenate([
        np.full(n, 0.5 * min(cons.total_radar_power / n, cons.peak_radar)),
        np.full(n, 0.5 * min(cons.total_comm_power / n, cons.peak_comm)),
    ])
    uniform[upper <= 0] = 0.0
    x = np.concatenate([alloc.p_r, alloc.p_c])
    x = np.minimum(x, upper)
    return (1.0 - theta) * x + theta * uniform


def uniform_init(ch: ChannelRealization, cons: Constraints) -> PowerAllocation:
    """Power-constraints-only start: P/N per subcarrier clipped to the peak cap."""
    cons = resolve(cons, ch.n)
    n = ch.n
    return PowerAllocation(np.full(n, min(cons.total_radar_power / n, cons.peak_radar)),
                           np.full(n, min(cons.total_comm_power / n, cons.peak_comm)))


def _rel_change(new: float, old: float) -> float:
    return abs(new - old) / max(abs(old), 1e-12)


def _inner_problem(ch, cons, lam, anchor_x, kappa, use_rate):
    n = ch.n
    cons_list = [_linearized_rate_constraint(ch, anchor_x[:n], kappa)] if use_rate else []
    return ConvexProblem(
        dimension=2 * n,
        objective=_surrogate_oracle(ch, lam),
        box_lower=np.zeros(2 * n),
        box_upper=_bounds(cons, n, use_rate),
        start=anchor_x,
        budget_groups=[(np.arange(n), cons.total_radar_power),
                       (np.arange(n, 2 * n), cons.total_comm_power)],
        concave_constraints=cons_list,
    )


def solve_joint(ch: ChannelRealization, cons: Constraints, cfg: SystemConfig,
                init: Optional[PowerAllocation] = None) -> SolveReport:
    """Maximize the radar SINR over both power vectors under budgets, peaks and the rate floor.

    ``init`` defaults to the greedy-search allocation. Returns an
    ``INFEASIBLE`` report (no allocation) when the floor is unreachable.
    """
    cons = resolve(cons, ch.n)
    n = ch.n
    kappa = cons.throughput_floor
    if not check_feasibility(ch, cons).feasible:
        return SolveReport.infeasible()
    if init is None:
        try:
            init, _ = greedy_search(ch, cons)
        except InfeasibleError:
            return SolveReport.infeasible()
    _check(ch, init)
    # C >= 0 always holds, so a zero floor is vacuous; comm power then only
    # interferes and is pinned at zero
    use_rate = kappa > 0

    def rate_slack(x):
        return comm_throughput(ch, PowerAllocation.clipped(x[:n], x[n:])) - kappa

    x = None
    for theta in (INIT_MIX, 1e-4, 1e-6, 1e-9, 1e-12):
        cand = interior_point(init, cons, theta, comm_active=use_rate)
        if not use_rate or rate_slack(cand) > 0:
            x = cand
            break
    start_alloc = PowerAllocation.clipped(x[:n], x[n:]) if x is not None else init
    sinr = radar_sinr(ch, start_alloc)
    trace = [sinr]
    report = SolveReport(allocation=start_alloc, sinr=sinr, throughput=comm_throughput(ch, start_alloc),
                         objective_trace=trace, status=Status.MAX_ITERS, init_sinr=sinr)
    if x is None:
        return report

    inner_total = 0
    status = Status.MAX_ITERS
    outer = 0
    for outer in range(1, cfg.max_outer_iters + 1):
        alloc = PowerAllocation.clipped(x[:n], x[n:])
        lam = update_lambda(ch, alloc)
        f_prev = surrogate_value(ch, lam, alloc)
        x_hat = x
        for _ in range(cfg.max_inner_iters):
            prob = _inner_problem(ch, cons, lam, x_hat, kappa, use_rate)
            sol = solve_concave(prob, tol=INNER_TOL, max_iters=INNER_MAX_NEWTON)
            if sol.status == SolverStatus.INFEASIBLE_START:
                break
            inner_total += 1
            x_hat = sol.point
            f_new = sol.objective_value
            if _rel_change(f_new, f_prev) < cfg.tolerance:
                break
            f_prev = f_new
        x = x_hat
        new_sinr = radar_sinr(ch, PowerAllocation.clipped(x[:n], x[n:]))
        trace.append(new_sinr)
        if _rel_change(new_sinr, sinr) < cfg.tolerance:
            sinr = new_sinr
            status = Status.CONVERGED
            break
        sinr = new_sinr

    alloc = PowerAllocation.clipped(x[:n], x[n:])
    return SolveReport(allocation=alloc, sinr=radar_sinr(ch, alloc), throughput=comm_throughput(ch, alloc),
                       objective_trace=trace, outer_iters=outer, total_inner_iters=inner_total,
                       status=status, init_sinr=report.init_sinr)
