from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest

from dofoc.config import SolverConfig
from dofoc.errors import DynamicsEvaluationError, SolverDivergenceError, ValidationError
from dofoc.operators import (
    TimeGrid,
    Trajectory,
    build_distribution,
    bump_distribution,
    constant_weight,
    do_caputo_left,
    do_rl_right,
    polynomial_weight,
)
from dofoc.problems import paper_example_sec4
from dofoc.solvers import (
    AdjointProblem,
    ForwardProblem,
    residual_forward,
    solve_adjoint,
    solve_forward,
    transversality_residual,
)


def zero_control(grid: TimeGrid, m: int = 1) -> Trajectory:
    return Trajectory(grid, np.zeros((len(grid), m)))


def laplace_inverse(F, t: float) -> float:
    with mp.workdps(30):
        return float(mp.re(mp.invertlaplace(F, t, method="talbot")))


# {{{ forward


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.9])
def test_relaxation_single_order(alpha: float) -> None:
    # D^alpha x = -x, x(0) = 1  =>  x = E_alpha(-t^alpha)
    grid = TimeGrid(0.0, 1.0, 2000)
    dist = bump_distribution(alpha, 1e-6, 4)
    p = ForwardProblem(lambda t, x, u: -x, zero_control(grid), [1.0], dist, grid)
    x = solve_forward(p, SolverConfig(n_steps=2000))
    for t in (0.25, 0.5, 1.0):
        exact = laplace_inverse(lambda s: s ** (alpha - 1) / (s**alpha + 1), t)
        assert x.values[grid.index_of(t), 0] == pytest.approx(exact, abs=2e-3)


def test_relaxation_distributed_order() -> None:
    # D^psi x = -x with psi = 1: X(s) = Phi(s) / (s (Phi(s) + 1)), Phi = (s - 1) / ln s
    grid = TimeGrid(0.0, 1.0, 2000)
    dist = build_distribution(constant_weight(1.0), 20)
    p = ForwardProblem(lambda t, x, u: -x, zero_control(grid), [1.0], dist, grid)
    x = solve_forward(p, SolverConfig())

    def X(s):
        phi = (s - 1) / mp.log(s)
        return phi / (s * (phi + 1))

    for t in (0.5, 1.0):
        assert x.values[grid.index_of(t), 0] == pytest.approx(laplace_inverse(X, t), abs=2e-3)


def test_manufactured_solution_converges() -> None:
    # x = t^2 with psi = 1 + alpha; the forcing uses the same order quadrature
    dist = build_distribution(polynomial_weight([1.0, 1.0]), 12)
    errors = []
    for n in (100, 200, 400):
        grid = TimeGrid(0.0, 1.0, n)

        def forcing(t, x, u):
            return np.array([
                sum(c * 2.0 * t ** (2.0 - a) / math.gamma(3.0 - a)
                    for c, a in zip(dist.coefficients, dist.nodes))
            ])

        x = solve_forward(ForwardProblem(forcing, zero_control(grid), [0.0], dist, grid), SolverConfig(n_steps=n))
        errors.append(np.max(np.abs(x.values[:, 0] - grid.nodes**2)))
    assert errors[-1] < 1e-3
    assert errors[0] / errors[1] > 1.5 and errors[1] / errors[2] > 1.5


def test_residual_forward_at_solver_tolerance() -> None:
    grid = TimeGrid(0.0, 2.0, 400)
    dist = build_distribution(polynomial_weight([0.2, 0.5, 1.0]), 10)
    u = Trajectory.from_function(grid, lambda t: np.cos(t)[:, None])
    p = ForwardProblem(lambda t, x, w: w - np.sin(x), u, [0.5], dist, grid)
    cfg = SolverConfig(n_steps=400)
    x = solve_forward(p, cfg)
    assert residual_forward(x, p) <= 10 * cfg.newton_tol


def test_vector_state() -> None:
    # harmonic-type system; the solver handles n > 1 componentwise
    grid = TimeGrid(0.0, 1.0, 300)
    dist = bump_distribution(1.0, 1e-3, 6)
    p = ForwardProblem(
        lambda t, x, u: np.array([x[1], -x[0]]), zero_control(grid), [1.0, 0.0], dist, grid
    )
    x = solve_forward(p, SolverConfig(n_steps=300))
    assert x.values[-1, 0] == pytest.approx(math.cos(1.0), abs=5e-3)
    assert x.values[-1, 1] == pytest.approx(-math.sin(1.0), abs=5e-3)


def test_classical_limit_exponential() -> None:
    grid = TimeGrid(0.0, 1.0, 2000)
    dist = bump_distribution(1.0, 1e-3, 20)
    p = ForwardProblem(lambda t, x, u: x, zero_control(grid), [1.0], dist, grid)
    x = solve_forward(p, SolverConfig())
    assert abs(x.values[-1, 0] - math.e) <= 5e-3


def test_worked_example_growth_matches_dominant_pole() -> None:
    r"""With u = 2 the state solves :math:`{}^C\mathbb{D}^\psi x = 2x`; for large
    t, :math:`\log x(5)` is governed by the real root of :math:`\Phi(s) = 2`.
    The values at n = 2000, 4000, 8000 are Aitken-extrapolated in log space."""
    prob = paper_example_sec4()
    logs = []
    for n in (2000, 4000, 8000):
        cfg = SolverConfig(n_steps=n)
        grid = prob.grid(cfg)
        x = prob.forward(Trajectory(grid, np.full((n + 1, 1), 2.0)), cfg)
        logs.append(math.log(x.values[-1, 0]))
    d1, d2 = logs[1] - logs[0], logs[2] - logs[1]
    limit = logs[2] - d2 * d2 / (d2 - d1)

    with mp.workdps(30):
        phi = lambda s: (s * (mp.log(s) - 1) + 1) / (3 * mp.log(s) ** 2)  # noqa: E731
        root = mp.findroot(lambda s: phi(s) - 2, 28)
        residue = phi(root) / (root * mp.diff(phi, root))
        expected = float(4 * root + mp.log(residue))

    assert limit == pytest.approx(expected, abs=0.05)
    # log error decreases roughly linearly in h
    assert 1.6 < d1 / d2 < 2.8


# }}}


# {{{ adjoint


def test_adjoint_constant_source_single_order() -> None:
    # D^alpha_{b-} lam = 1, lam(b) = 0  =>  lam = (b - t)^alpha / Gamma(1 + alpha)
    alpha = 0.5
    grid = TimeGrid(0.0, 2.0, 2000)
    dist = bump_distribution(alpha, 1e-6, 4)
    x = zero_control(grid)
    p = AdjointProblem(lambda t, x, u, lam: np.ones(1), x, x, dist, grid)
    lam = solve_adjoint(p, SolverConfig())
    exact = (2.0 - grid.nodes) ** alpha / math.gamma(1 + alpha)
    err = np.abs(lam.values[:, 0] - exact)
    # the (b - t)^alpha layer at the terminal end limits the local accuracy
    assert np.max(err[grid.nodes <= 1.9]) < 2e-3
    assert np.max(err) < 1e-2
    assert lam.values[-1, 0] == 0.0


def test_adjoint_satisfies_rl_equation() -> None:
    # independent check with the right-sided RL derivative operator
    grid = TimeGrid(0.0, 1.0, 2000)
    dist = build_distribution(constant_weight(1.0), 16)
    state = Trajectory.from_function(grid, lambda t: np.exp(t)[:, None])
    u = zero_control(grid)
    p = AdjointProblem(lambda t, x, w, lam: x - 0.5 * lam, state, u, dist, grid)
    lam = solve_adjoint(p, SolverConfig())
    lhs = do_rl_right(lam, dist).values[:, 0]
    rhs = np.exp(grid.nodes) - 0.5 * lam.values[:, 0]
    interior = slice(20, -20)
    assert np.max(np.abs(lhs[interior] - rhs[interior])) < 5e-2


def test_transversality_small_for_regular_adjoint() -> None:
    grid = TimeGrid(0.0, 1.0, 2000)
    dist = build_distribution(constant_weight(1.0), 20)
    u = zero_control(grid)
    p = AdjointProblem(lambda t, x, w, lam: np.ones(1), u, u, dist, grid)
    lam = solve_adjoint(p, SolverConfig())
    assert transversality_residual(lam, dist) < 1e-2


# }}}


# {{{ errors


def test_nonfinite_dynamics_raise() -> None:
    grid = TimeGrid(0.0, 1.0, 10)
    dist = build_distribution(constant_weight(), 4)
    p = ForwardProblem(lambda t, x, u: np.array([np.nan]), zero_control(grid), [1.0], dist, grid)
    with pytest.raises(DynamicsEvaluationError):
        solve_forward(p, SolverConfig(n_steps=10))


def test_iteration_budget_exhausted() -> None:
    grid = TimeGrid(0.0, 1.0, 10)
    dist = build_distribution(constant_weight(), 4)
    p = ForwardProblem(lambda t, x, u: np.sin(x) + 1.0, zero_control(grid), [1.0], dist, grid)
    with pytest.raises(SolverDivergenceError) as info:
        solve_forward(p, SolverConfig(n_steps=10, max_inner_iters=1))
    assert info.value.step == 1


def test_shape_mismatch_raises() -> None:
    grid = TimeGrid(0.0, 1.0, 10)
    dist = build_distribution(constant_weight(), 4)
    p = ForwardProblem(lambda t, x, u: np.zeros(2), zero_control(grid), [1.0], dist, grid)
    with pytest.raises(ValidationError):
        solve_forward(p, SolverConfig(n_steps=10))


def test_grid_mismatch_rejected() -> None:
    dist = build_distribution(constant_weight(), 4)
    with pytest.raises(ValidationError):
        ForwardProblem(
            lambda t, x, u: x, zero_control(TimeGrid(0.0, 1.0, 10)), [1.0], dist, TimeGrid(0.0, 1.0, 20)
        )


def test_forward_deterministic() -> None:
    grid = TimeGrid(0.0, 1.0, 200)
    dist = build_distribution(polynomial_weight([0.0, 1.0]), 10)
    p = ForwardProblem(lambda t, x, u: np.cos(x), zero_control(grid), [0.3], dist, grid)
    a = solve_forward(p, SolverConfig(n_steps=200)).values
    b = solve_forward(p, SolverConfig(n_steps=200)).values
    assert a.tobytes() == b.tobytes()
    np.testing.assert_allclose(do_caputo_left(Trajectory(grid, a), dist).values[1:, 0], np.cos(a[1:, 0]), atol=1e-9)


# }}}
