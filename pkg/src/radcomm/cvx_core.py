"""Inner convex solvers.

``solve_concave`` is a log-barrier interior-point method (damped Newton
centering, barrier weight raised ``BARRIER_GROWTH``-fold per stage) for maximizing a smooth
concave function over

    box_lower <= x <= box_upper,
    sum(x[S]) <= b        for every budget group (S, b),
    g_j(x) >= 0           for every concave constraint g_j.

Oracles take a point and return ``(value, gradient)`` or
``(value, gradient, hessian)``; the Hessian may be a dense ``(d, d)``
array or a length-``d`` diagonal. A missing Hessian is approximated by
forward differences of the gradient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

Oracle = Callable[[np.ndarray], tuple]

MAX_CENTERING_STEPS = 50
BARRIER_GROWTH = 10.0
T_MAX = 1e16


class SolverStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    INFEASIBLE_START = "infeasible_start"


@dataclass
class ConvexProblem:
    dimension: int
    objective: Oracle
    box_lower: np.ndarray
    box_upper: np.ndarray
    start: np.ndarray
    budget_groups: Sequence[tuple] = field(default_factory=list)
    concave_constraints: Sequence[Oracle] = field(default_factory=list)

    def __post_init__(self):
        d = self.dimension
        self.box_lower = np.broadcast_to(np.asarray(self.box_lower, dtype=float), (d,)).copy()
        self.box_upper = np.broadcast_to(np.asarray(self.box_upper, dtype=float), (d,)).copy()
        self.start = np.asarray(self.start, dtype=float).reshape(d).copy()
        if np.any(self.box_lower > self.box_upper):
            raise ValueError("box_lower must not exceed box_upper")
        groups = []
        for idx, budget in self.budget_groups:
            idx = np.asarray(idx, dtype=int)
            if budget < 0:
                raise ValueError("budgets must be nonnegative")
            groups.append((idx, float(budget)))
        self.budget_groups = groups


@dataclass
class Solution:
    point: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    status: SolverStatus


def _unpack(out, d):
    if len(out) == 2:
        value, grad = out
        hess = None
    else:
        value, grad, hess = out
    return float(value), np.asarray(grad, dtype=float), hess


def _add_hess(target: np.ndarray, hess, scale: float):
    if hess is None:
        return
    hess = np.asarray(hess, dtype=float)
    if hess.ndim == 1:
        target[np.diag_indices_from(target)] += scale * hess
    else:
        target += scale * hess


def _fd_hessian(oracle, x, grad, free, lo, hi):
    """Forward-difference Hessian for oracles that only report gradients."""
    d = x.size
    h_mat = np.zeros((d, d))
    for i in np.flatnonzero(free):
        up, down = hi[i] - x[i], x[i] - lo[i]
        h = 1e-6 * max(1.0, abs(x[i]))
        h = min(h, 0.5 * max(up, down)) * (1.0 if up >= down else -1.0)
        xe = x.copy()
        xe[i] += h
        h_mat[:, i] = (_unpack(oracle(xe), d)[1] - grad) / h
    return 0.5 * (h_mat + h_mat.T)


class _Barrier:
    """Slack bookkeeping for one problem instance."""

    def __init__(self, p: ConvexProblem, free: np.ndarray):
        self.p = p
        self.free = free
        lo, hi = p.box_lower, p.box_upper
        self.lo_idx = np.flatnonzero(free & np.isfinite(lo))
        self.hi_idx = np.flatnonzero(free & np.isfinite(hi))
        self.groups = []
        self.fixed_groups = []
        for idx, budget in p.budget_groups:
            if np.any(free[idx]):
                self.groups.append((idx, budget))
            else:
                self.fixed_groups.append((idx, budget))
        self.cons = list(p.concave_constraints)
        self.m_nonbox = len(self.groups) + len(self.cons)
        self.m = self.lo_idx.size + self.hi_idx.size + self.m_nonbox

    def linear_slacks(self, x):
        s_lo = x[self.lo_idx] - self.p.box_lower[self.lo_idx]
        s_hi = self.p.box_upper[self.hi_idx] - x[self.hi_idx]
        s_b = np.array([b - x[idx].sum() for idx, b in self.groups])
        return s_lo, s_hi, s_b

    def max_linear_step(self, x, dx):
        s_lo, s_hi, s_b = self.linear_slacks(x)
        alpha = np.inf
        d_lo = dx[self.lo_idx]
        mask = d_lo < 0
        if np.any(mask):
            alpha = min(alpha, np.min(s_lo[mask] / -d_lo[mask]))
        d_hi = dx[self.hi_idx]
        mask = d_hi > 0
        if np.any(mask):
            alpha = min(alpha, np.min(s_hi[mask] / d_hi[mask]))
        for (idx, _), s in zip(self.groups, s_b):
            rate = dx[idx].sum()
            if rate > 0:
                alpha = min(alpha, s / rate)
        return alpha

    def evaluate(self, x, t, need_derivs=True):
        """Barrier value t*f + sum(log s); None if x is not strictly interior."""
        s_lo, s_hi, s_b = self.linear_slacks(x)
        if (s_lo.size and s_lo.min() <= 0) or (s_hi.size and s_hi.min() <= 0) or \
                (s_b.size and s_b.min() <= 0):
            return None
        con_out = []
        lo, hi = self.p.box_lower, self.p.box_upper
        for g in self.cons:
            gv, gg, gh = _unpack(g(x), x.size)
            if not gv > 0:
                return None
            if gh is None and need_derivs:
                gh = _fd_hessian(g, x, gg, self.free, lo, hi)
            con_out.append((gv, gg, gh))
        fv, fg, fh = _unpack(self.p.objective(x), x.size)
        if not np.isfinite(fv):
            return None
        if fh is None and need_derivs:
            fh = _fd_hessian(self.p.objective, x, fg, self.free, lo, hi)
        phi = t * fv + np.log(s_lo).sum() + np.log(s_hi).sum() + np.log(s_b).sum() \
            + sum(np.log(gv) for gv, _, _ in con_out)
        if not need_derivs:
            return phi, fv
        d = x.size
        grad = t * fg
        hess = np.zeros((d, d))
        _add_hess(hess, fh, t)
        diag = np.zeros(d)
        np.add.at(grad, self.lo_idx, 1.0 / s_lo)
        np.add.at(diag, self.lo_idx, -1.0 / s_lo**2)
        np.add.at(grad, self.hi_idx, -1.0 / s_hi)
        np.add.at(diag, self.hi_idx, -1.0 / s_hi**2)
        hess[np.diag_indices(d)] += diag
        for (idx, _), s in zip(self.groups, s_b):
            grad[idx] -= 1.0 / s
            hess[np.ix_(idx, idx)] -= 1.0 / s**2
        for gv, gg, gh in con_out:
            grad += gg / gv
            hess -= np.outer(gg, gg) / gv**2
            _add_hess(hess, gh, 1.0 / gv)
        return phi, fv, fg, grad, hess, s_b, con_out

    def kkt_residual(self, x, t, fv, fg, s_b, con_out):
        """Relative duality gap of fitted KKT multipliers.

        Multipliers of the budget and concave constraints are fitted by
        nonnegative least squares on the coordinates away from their box
        bounds (barrier estimates 1/(t s) lose precision as s -> 0). Box
        multipliers then absorb what is left of the Lagrangian gradient, so
        stationarity holds by construction except toward infinite bounds;
        the residual is the resulting complementarity sum over max(1, |f|),
        which bounds the relative suboptimality.
        """
        lo, hi = self.p.box_lower, self.p.box_upper
        cols = [-np.bincount(idx, minlength=x.size).astype(float) for idx, _ in self.groups]
        cols += [gg for _, gg, _ in con_out]
        if cols:
            slacks = np.concatenate([s_b, [gv for gv, _, _ in con_out]])
            jac = np.column_stack(cols)
            width = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
            near = np.minimum(x - lo, hi - x) <= 1e-6 * np.maximum(width, 1.0)
            rows = self.free & ~near
            mu = 1.0 / (t * slacks)
            if np.any(rows):
                a = np.vstack([jac[rows], np.diag(slacks)])
                rhs = np.concatenate([-fg[rows], np.zeros(slacks.size)])
                mu, _ = nnls(a, rhs)
            grad_l = fg + jac @ mu
            gap = float(mu @ slacks)
        else:
            grad_l = fg
            gap = 0.0
        r = grad_l[self.free]
        down = np.maximum(-r, 0.0) * (x - lo)[self.free]
        up = np.maximum(r, 0.0) * (hi - x)[self.free]
        comp = np.nan_to_num(down, nan=0.0, posinf=np.inf) + np.nan_to_num(up, nan=0.0, posinf=np.inf)
        # a gradient toward an infinite bound is a plain stationarity violation
        unbounded = ~np.isfinite(comp)
        stat = np.abs(r[unbounded]).max(initial=0.0) / max(1.0, np.abs(fg).max(initial=0.0))
        gap += comp[~unbounded].sum()
        return max(stat, gap / max(1.0, abs(fv)))


def _newton_direction(grad, hess, free):
    f = np.flatnonzero(free)
    m = -hess[np.ix_(f, f)]
    g = grad[f]
    scale = max(1.0, np.abs(np.diag(m)).max(initial=1.0))
    reg = 0.0
    for _ in range(12):
        try:
            chol = np.linalg.cholesky(m + reg * np.eye(f.size))
            step = np.linalg.solve(chol.T, np.linalg.solve(chol, g))
            break
        except np.linalg.LinAlgError:
            reg = max(reg * 100.0, 1e-12 * scale)
    else:
        step = g / scale
    dx = np.zeros_like(grad)
    dx[f] = step
    return dx, float(g @ step)


def _recenter(bar: _Barrier, x, free) -> np.ndarray:
    """Pull a start off the boundary toward an interior reference point.

    Newton on a log barrier can at most double a slack per step, so warm
    starts hugging their bounds would otherwise crawl back to the central
    path. Mixes are only taken if strictly feasible.
    """
    p = bar.p
    lo, hi = p.box_lower, p.box_upper
    if not np.all(np.isfinite(lo[free])):
        return x
    top = hi.copy()
    for idx, budget in bar.groups:
        share = (budget - lo[idx].sum()) / idx.size
        top[idx] = np.minimum(top[idx], lo[idx] + max(share, 0.0))
    ref = np.where(free, lo + 0.5 * (top - lo), x)
    for theta in (1e-2, 1e-3, 1e-4):
        cand = (1.0 - theta) * x + theta * ref
        if bar.evaluate(cand, 0.0, need_derivs=False) is not None:
            return cand
    return x


def _initial_weight(bar: _Barrier, x, free) -> float:
    """Barrier weight that makes ``x`` as central as possible.

    Least-squares fit of t * grad f + grad barrier ~ 0 in the barrier
    Hessian norm; a warm start near a previous solution gets a large t.
    """
    if bar.m == 0:
        return 1.0
    out = bar.evaluate(x, 0.0)
    fg, g_b, h_b = out[2], out[3], out[4]
    f = np.flatnonzero(free)
    try:
        m = -h_b[np.ix_(f, f)]
        chol = np.linalg.cholesky(m + 1e-12 * np.abs(np.diag(m)).max() * np.eye(f.size))
        u = np.linalg.solve(chol, fg[f])
        v = np.linalg.solve(chol, g_b[f])
        denom = float(u @ u)
        t = -float(u @ v) / denom if denom > 0 else 1.0
    except np.linalg.LinAlgError:
        t = 1.0
    g_norm = np.linalg.norm(fg[f])
    fallback = np.linalg.norm(g_b[f]) / g_norm if g_norm > 0 else 1.0
    if not np.isfinite(t) or t <= 0:
        t = fallback
    return float(np.clip(t, 1e-8, 1e12))


def start_violations(p: ConvexProblem, interior_only: bool = True) -> list:
    """Constraint names violated (or touched, for barrier starts) at p.start."""
    x = p.start
    bad = []
    free = p.box_upper > p.box_lower
    fixed = ~free
    if np.any(np.abs(x[fixed] - p.box_lower[fixed]) > 0):
        bad.append("fixed coordinate off its bound")
    lo_ok = x[free] > p.box_lower[free] if interior_only else x[free] >= p.box_lower[free]
    hi_ok = x[free] < p.box_upper[free] if interior_only else x[free] <= p.box_upper[free]
    if not np.all(lo_ok & hi_ok):
        bad.append("box")
    for k, (idx, budget) in enumerate(p.budget_groups):
        total = x[idx].sum()
        has_free = np.any(free[idx])
        if total > budget or (interior_only and has_free and not total < budget):
            bad.append(f"budget[{k}]")
    for k, g in enumerate(p.concave_constraints):
        gv = _unpack(g(x), x.size)[0]
        if not (gv > 0 if interior_only else gv >= 0):
            bad.append(f"constraint[{k}]")
    return bad


def solve_concave(p: ConvexProblem, tol: float = 1e-8, max_iters: int = 500) -> Solution:
    """Maximize ``p.objective`` over the feasible set from a strictly feasible start."""
    x = p.start.copy()
    free = p.box_upper > p.box_lower
    if start_violations(p):
        fv = _unpack(p.objective(x), x.size)[0]
        return Solution(x, fv, np.inf, 0, SolverStatus.INFEASIBLE_START)
    f_start = _unpack(p.objective(x), x.size)[0]
    if not np.any(free):
        return Solution(x, f_start, 0.0, 0, SolverStatus.CONVERGED)

    bar = _Barrier(p, free)
    x = _recenter(bar, x, free)
    t = _initial_weight(bar, x, free)

    iters = 0
    status = SolverStatus.MAX_ITERS
    residual = np.inf
    while True:
        # centering at weight t
        prev_dec2 = np.inf
        for _ in range(MAX_CENTERING_STEPS):
            if iters >= max_iters:
                break
            phi, fv, fg, grad, hess, s_b, con_out = bar.evaluate(x, t)
            dx, dec2 = _newton_direction(grad, hess, free)
            if dec2 <= 2e-10 or not np.all(np.isfinite(dx)):
                break
            if dec2 < 1e-3 and dec2 > 0.25 * prev_dec2:
                break  # round-off floor: no quadratic progress left
            prev_dec2 = dec2
            alpha = min(1.0, 0.99 * bar.max_linear_step(x, dx))
            accepted = False
            for _ in range(60):
                x_new = x + alpha * dx
                trial = bar.evaluate(x_new, t, need_derivs=False)
                if trial is not None and trial[0] >= phi + 0.25 * alpha * dec2 - 1e-13 * abs(phi):
                    accepted = True
                    break
                alpha *= 0.5
            iters += 1
            if not accepted:
                break
            x = x_new
        phi, fv, fg, grad, hess, s_b, con_out = bar.evaluate(x, t)
        gap_ok = bar.m == 0 or bar.m / t <= tol * max(1.0, abs(fv))
        last = iters >= max_iters or t > T_MAX
        if gap_ok or last:
            residual = bar.kkt_residual(x, t, fv, fg, s_b, con_out)
            if residual <= tol:
                status = SolverStatus.CONVERGED
                break
        if last:
            break
        t *= BARRIER_GROWTH

    fv = _unpack(p.objective(x), x.size)[0]
    if fv < f_start:
        x = p.start.copy()
        fv = f_start
    return Solution(x, fv, residual, iters, status)


def waterfill_level(gains, budget: float, cap: float = np.inf) -> tuple:
    """Capped waterfilling; returns ``(powers, water_level)``.

    Maximizes sum(log(1 + g_n p_n)) s.t. sum(p) <= budget, 0 <= p <= cap,
    with p_n = clip(mu - 1/g_n, 0, cap). Zero gains get zero power. The
    water level is ``inf`` when every usable channel saturates at the cap
    and ``nan`` when nothing is allocated.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0):
        raise ValueError("gains must be nonnegative")
    p = np.zeros_like(g)
    with np.errstate(divide="ignore", over="ignore"):
        inv_all = 1.0 / g
    # gains so small that 1/g overflows can never be filled
    act = np.flatnonzero(np.isfinite(inv_all))
    if budget <= 0 or cap <= 0 or act.size == 0:
        return p, float("nan")
    inv = inv_all[act]
    if np.isfinite(cap) and cap * act.size <= budget:
        p[act] = cap
        return p, float("inf")
    bps = np.sort(np.concatenate([inv, inv + cap]) if np.isfinite(cap) else inv)

    def total(mu):
        return np.clip(mu - inv, 0.0, cap).sum()

    totals = np.array([total(b) for b in bps])
    k = int(np.searchsorted(totals, budget, side="left"))
    if k >= bps.size:
        # beyond the last breakpoint (only possible without a cap): all channels active
        mu = bps[-1] + (budget - totals[-1]) / act.size
    else:
        # total(mu) is linear between consecutive breakpoints; totals[0] == 0 < budget
        lo_mu, hi_mu = bps[k - 1], bps[k]
        span = totals[k] - totals[k - 1]
        mu = hi_mu if span <= 0 else lo_mu + (budget - totals[k - 1]) / span * (hi_mu - lo_mu)
    p[act] = np.clip(mu - inv, 0.0, cap)
    # renormalize round-off so the budget is met exactly
    excess = p.sum() - budget
    if excess > 0:
        inner = (p > 0) & (p < cap)
        if np.any(inner):
            p[inner] -= excess / np.count_nonzero(inner)
            p = np.maximum(p, 0.0)
    return p, float(mu)


def capped_waterfill(gains, budget: float, cap: float = np.inf) -> np.ndarray:
    """Throughput-optimal powers with a per-channel peak cap."""
    return waterfill_level(gains, budget, cap)[0]
