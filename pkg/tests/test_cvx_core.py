import numpy as np
import pytest

from radcomm.cvx_core import (
    ConvexProblem,
    SolverStatus,
    capped_waterfill,
    solve_concave,
    waterfill_level,
)


def parabola(x):
    return -(x[0] - 1.0) ** 2, np.array([-2.0 * (x[0] - 1.0)])


def shift_constraint(x):
    return x[0] - 2.0, np.array([1.0])


def test_unconstrained_interior_optimum():
    sol = solve_concave(ConvexProblem(1, parabola, [0.0], [3.0], [0.5]))
    assert sol.status == SolverStatus.CONVERGED
    assert sol.point[0] == pytest.approx(1.0, abs=1e-6)
    assert sol.kkt_residual <= 1e-8


def test_active_concave_constraint():
    sol = solve_concave(ConvexProblem(1, parabola, [0.0], [3.0], [2.5],
                                      concave_constraints=[shift_constraint]))
    assert sol.status == SolverStatus.CONVERGED
    assert sol.point[0] == pytest.approx(2.0, abs=1e-6)


def test_infeasible_start():
    sol = solve_concave(ConvexProblem(1, parabola, [0.0], [1.0], [0.5],
                                      concave_constraints=[shift_constraint]))
    assert sol.status == SolverStatus.INFEASIBLE_START
    sol = solve_concave(ConvexProblem(2, lambda x: (0.0, np.zeros(2)), [0, 0], [1, 1], [0.6, 0.6],
                                      budget_groups=[(np.arange(2), 1.0)]))
    assert sol.status == SolverStatus.INFEASIBLE_START


def test_problem_validation():
    with pytest.raises(ValueError):
        ConvexProblem(1, parabola, [1.0], [0.0], [0.5])
    with pytest.raises(ValueError):
        ConvexProblem(2, parabola, [0.0], [1.0], [0.5])


def log_sum(gains):
    def oracle(x):
        a = 1.0 + gains * x
        return np.sum(np.log2(a)), gains / (np.log(2) * a)
    return oracle


def water_oracle(gains, budget, cap):
    """Bisection on the water level, independent of the breakpoint scan."""
    gains = np.asarray(gains, float)
    pos = gains > 0
    inv = np.where(pos, 1.0 / np.where(pos, gains, 1.0), np.inf)

    def fill(mu):
        return np.where(pos, np.clip(mu - inv, 0.0, cap), 0.0)

    if fill(1e12).sum() <= budget:
        return fill(1e12)
    lo, hi = 0.0, 1e12
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if fill(mid).sum() < budget else (lo, mid)
    return fill(0.5 * (lo + hi))


def test_waterfill_examples():
    assert np.allclose(capped_waterfill([1, 0.5], 3), [2, 1])
    assert np.allclose(capped_waterfill([1, 0.5], 3, 1.5), [1.5, 1.5])
    assert np.allclose(capped_waterfill([1, 1], 2), [1, 1])
    assert np.all(capped_waterfill([1, 2, 3], 0.0) == 0)


def test_waterfill_level():
    p, mu = waterfill_level([1, 0.5], 3)
    assert mu == pytest.approx(3.0)
    p, mu = waterfill_level([1, 1], 10, cap=2)
    assert np.allclose(p, [2, 2]) and mu == np.inf


def test_waterfill_zero_gain_excluded():
    p = capped_waterfill([0.0, 1.0, 0.5], 3)
    assert p[0] == 0.0 and np.allclose(p[1:], [2, 1])


def test_waterfill_matches_bisection(rng):
    for _ in range(200):
        n = rng.integers(1, 9)
        g = rng.exponential(1.0, n)
        budget = rng.uniform(0, 20)
        cap = rng.choice([np.inf, rng.uniform(0.1, 10)])
        assert np.allclose(capped_waterfill(g, budget, cap), water_oracle(g, budget, cap), atol=1e-9)


def test_waterfill_agrees_with_interior_point(rng):
    for _ in range(20):
        n = int(rng.integers(1, 9))
        g = rng.exponential(1.0, n)
        budget, cap = rng.uniform(0.5, 10), rng.uniform(0.5, 5)
        p_wf = capped_waterfill(g, budget, cap)
        start = np.full(n, 0.5 * min(cap, budget / n))
        sol = solve_concave(ConvexProblem(n, log_sum(g), np.zeros(n), np.full(n, cap), start,
                                          budget_groups=[(np.arange(n), budget)]))
        assert sol.objective_value == pytest.approx(log_sum(g)(p_wf)[0], abs=1e-5)


def test_budget_and_dense_hessian():
    # maximize -||x - c||^2 with sum(x) <= 1, dense Hessian form
    c = np.array([1.0, 1.0, 0.2])

    def obj(x):
        return -np.sum((x - c) ** 2), -2 * (x - c), -2 * np.eye(3)

    sol = solve_concave(ConvexProblem(3, obj, np.zeros(3), np.full(3, 5.0), np.full(3, 0.1),
                                      budget_groups=[(np.arange(3), 1.0)]))
    # projection of c onto {sum <= 1, x >= 0}
    assert np.allclose(sol.point, [0.5, 0.5, 0.0], atol=1e-6)
    assert sol.point.sum() <= 1 + 1e-8


def test_fixed_coordinates_stay_put():
    sol = solve_concave(ConvexProblem(2, lambda x: (-(x[0] - 1) ** 2 - x[1], np.array([-2 * (x[0] - 1), -1.0])),
                                      [0, 0.0], [3, 0.0], [0.5, 0.0]))
    assert sol.point[1] == 0.0 and sol.point[0] == pytest.approx(1.0, abs=1e-6)


def test_never_worse_than_start(rng):
    for _ in range(20):
        n = 4
        g = rng.exponential(1.0, n)
        start = rng.uniform(0.01, 0.2, n)
        prob = ConvexProblem(n, log_sum(g), np.zeros(n), np.ones(n), start,
                             budget_groups=[(np.arange(n), 1.0)])
        sol = solve_concave(prob, max_iters=3)
        assert sol.objective_value >= log_sum(g)(start)[0] - 1e-12
        assert sol.point.sum() <= 1 + 1e-8 and np.all(sol.point >= 0) and np.all(sol.point <= 1)


def test_waterfill_underflowing_gain_gets_nothing():
    p = capped_waterfill([1e-300, 1.0], 2.0)
    assert np.all(np.isfinite(p)) and p[0] == 0.0 and p[1] == pytest.approx(2.0)
