"""Reference allocators: waterfilling, greedy subcarrier split, comm-absent bound."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from radcomm.cvx_core import ConvexProblem, SolverStatus, capped_waterfill, solve_concave
from radcomm.metrics import PowerAllocation, SolveReport, Status, comm_throughput, radar_sinr
from radcomm.scenario import ChannelRealization, Constraints, SystemConfig


class InfeasibleError(RuntimeError):
    """The throughput floor cannot be met under the power constraints."""


class Feasibility(NamedTuple):
    feasible: bool
    max_throughput: float


def resolve(cons: Constraints, n: int) -> Constraints:
    return cons.resolved(n)


def waterfill_comm(ch: ChannelRealization, cons: Constraints) -> np.ndarray:
    """Communication powers maximizing sum(log2(1 + gamma_cc p_c)) with the radar absent."""
    cons = resolve(cons, ch.n)
    return capped_waterfill(ch.gamma_cc, cons.total_comm_power, cons.peak_comm)


def check_feasibility(ch: ChannelRealization, cons: Constraints) -> Feasibility:
    """Whether the throughput floor is reachable at all (radar silent, comm waterfilled)."""
    p_c = waterfill_comm(ch, cons)
    rate = comm_throughput(ch, PowerAllocation(np.zeros(ch.n), p_c))
    return Feasibility(bool(rate >= cons.throughput_floor), rate)


def sinr_oracle(gamma, eta, interference):
    """Concave oracle for sum(gamma p / (eta p + interference)), diagonal Hessian."""

    def oracle(p):
        den = eta * p + interference
        value = np.sum(gamma * p / den)
        grad = gamma * interference / den**2
        hess = -2.0 * gamma * interference * eta / den**3
        return value, grad, hess

    return oracle


def radar_box(n: int, budget: float, cap: float, active=None):
    """Upper bounds for radar powers and a strictly interior uniform start.

    Coordinates outside ``active`` are pinned to zero.
    """
    upper = np.full(n, min(cap, budget))
    if active is not None:
        upper[~np.asarray(active, dtype=bool)] = 0.0
    free = upper > 0
    start = np.zeros(n)
    if np.any(free):
        start[free] = 0.5 * min(budget / np.count_nonzero(free), cap)
    return upper, start


def maximize_fixed_interference_sinr(ch: ChannelRealization, interference, budget: float, cap: float,
                                     active=None, tol: float = 1e-8, max_iters: int = 500):
    """Radar powers maximizing the SINR when the comm interference is frozen.

    Every term gamma p / (eta p + c) is concave in p, so one convex solve
    gives the global optimum.
    """
    n = ch.n
    upper, start = radar_box(n, budget, cap, active)
    if not np.any(upper > 0):
        return np.zeros(n), None
    prob = ConvexProblem(
        dimension=n,
        objective=sinr_oracle(ch.gamma_rr, ch.eta_rr, np.asarray(interference, dtype=float)),
        box_lower=np.zeros(n),
        box_upper=upper,
        start=start,
        budget_groups=[(np.arange(n), budget)],
    )
    sol = solve_concave(prob, tol=tol, max_iters=max_iters)
    return np.clip(sol.point, 0.0, upper), sol


def comm_absent_optimum(ch: ChannelRealization, cons: Constraints,
                        cfg: Optional[SystemConfig] = None) -> SolveReport:
    """Best radar SINR with the communication system switched off (upper bound)."""
    cons = resolve(cons, ch.n)
    p_r, sol = maximize_fixed_interference_sinr(
        ch, np.ones(ch.n), cons.total_radar_power, cons.peak_radar)
    alloc = PowerAllocation.clipped(p_r, np.zeros(ch.n))
    sinr = radar_sinr(ch, alloc)
    status = Status.CONVERGED if sol is None or sol.status == SolverStatus.CONVERGED else Status.MAX_ITERS
    return SolveReport(allocation=alloc, sinr=sinr, throughput=0.0, objective_trace=[sinr],
                       outer_iters=1, total_inner_iters=0 if sol is None else sol.iterations,
                       status=status)


def greedy_search(ch: ChannelRealization, cons: Constraints):
    """Subcarrier-partition heuristic.

    Comm takes subcarriers in decreasing gamma_cc order (ties to the lower
    index), re-waterfilling over its set each round, until its throughput
    reaches the floor; radar then maximizes its SINR on what is left.

    Returns ``(PowerAllocation, u)`` with ``u[n] = 1`` for comm-owned
    subcarriers. Raises :class:`InfeasibleError` if the floor is unreachable.
    """
    cons = resolve(cons, ch.n)
    n = ch.n
    order = np.argsort(-ch.gamma_cc, kind="stable")
    u = np.zeros(n, dtype=int)
    p_c = np.zeros(n)
    rate = 0.0
    m = 0
    while rate < cons.throughput_floor:
        if m == n:
            raise InfeasibleError(
                f"throughput floor {cons.throughput_floor} unreachable (max {rate:.6g})")
        u[order[m]] = 1
        m += 1
        p_c = capped_waterfill(ch.gamma_cc * u, cons.total_comm_power, cons.peak_comm)
        rate = float(np.sum(np.log2(1.0 + u * ch.gamma_cc * p_c)))
    p_c = p_c * u
    # radar on free subcarriers sees no comm interference
    p_r, _ = maximize_fixed_interference_sinr(
        ch, np.ones(n), cons.total_radar_power, cons.peak_radar, active=(u == 0))
    p_r = p_r * (1 - u)
    return PowerAllocation.clipped(p_r, p_c), u


def greedy_report(ch: ChannelRealization, cons: Constraints,
                  cfg: Optional[SystemConfig] = None) -> SolveReport:
    try:
        alloc, _ = greedy_search(ch, cons)
    except InfeasibleError:
        return SolveReport.infeasible()
    sinr = radar_sinr(ch, alloc)
    return SolveReport(allocation=alloc, sinr=sinr, throughput=comm_throughput(ch, alloc),
                       objective_trace=[sinr], outer_iters=1, status=Status.CONVERGED)
