r"""Time stepping for distributed-order initial and terminal value problems.

The forward problem

.. math::

    {}^C\mathbb{D}^\psi_{a+} x(t) = f(t, x(t), u(t)), \qquad x(a) = x_a,

is discretized by the multi-term L1 scheme: at every node :math:`t_i`,
:math:`i \ge 1`,

.. math::

    B_0 (x_i - x_{i-1}) + \sum_{k=0}^{i-2} B_{i-1-k} (x_{k+1} - x_k)
        = f(t_i, x_i, u_i),
    \qquad
    B_l = \sum_j w_j \psi(\alpha_j) \frac{h^{-\alpha_j}}{\Gamma(2 - \alpha_j)}
        b^{(\alpha_j)}_l,

which is implicit in :math:`x_i` and solved by (damped) fixed-point
iteration.

The adjoint problem :math:`\mathbb{D}^\psi_{b-} \lambda = g(t, x, u, \lambda)`
with :math:`\lambda(b) = 0` becomes, under :math:`s = a + b - t`, a left-sided
problem for :math:`\mu(s) = \lambda(a + b - s)` with :math:`\mu(a) = 0`. For a
zero initial value the Riemann-Liouville and Caputo derivatives coincide,
so the same stepper marches it from the terminal end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from dofoc.config import SolverConfig
from dofoc.errors import DynamicsEvaluationError, SolverDivergenceError, ValidationError
from dofoc.operators import (
    OrderDistribution,
    TimeGrid,
    Trajectory,
    do_caputo_left,
    do_integral_right,
    l1_weights,
)
from dofoc.special import gamma_fn

log = logging.getLogger(__name__)

Dynamics = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
AdjointRhs = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

#: plain fixed-point iterations before damping kicks in
UNDAMPED_ITERS = 20
DAMPING = 0.5
#: multiple of machine epsilon below which the step residual is pure rounding
ROUNDING_FLOOR = 64 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class ForwardProblem:
    rhs: Dynamics
    control: Trajectory
    x0: np.ndarray
    dist: OrderDistribution
    grid: TimeGrid

    def __post_init__(self) -> None:
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        if not np.all(np.isfinite(x0)):
            raise ValidationError("initial state must be finite")
        if self.control.grid != self.grid:
            raise ValidationError("control grid does not match the solver grid")
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class AdjointProblem:
    rhs: AdjointRhs
    state: Trajectory
    control: Trajectory
    dist: OrderDistribution
    grid: TimeGrid

    def __post_init__(self) -> None:
        if self.state.grid != self.grid or self.control.grid != self.grid:
            raise ValidationError("state/control grids do not match the solver grid")


def multiterm_weights(dist: OrderDistribution, h: float, n: int) -> np.ndarray:
    """Combined L1 history weights ``B_l``, ``l = 0, ..., n - 1``."""
    out = np.zeros(n)
    for c, alpha in zip(dist.coefficients, dist.nodes):
        alpha = float(alpha)
        out += c * h**-alpha / gamma_fn(2.0 - alpha) * l1_weights(alpha, n)
    return out


def _evaluate(fn: Callable[..., np.ndarray], *args: object, dim: int) -> np.ndarray:
    value = np.asarray(fn(*args), dtype=np.float64).reshape(-1)
    if value.shape != (dim,):
        raise ValidationError(f"right-hand side returned shape {value.shape}, expected ({dim},)")
    if not np.isfinite(value).all():
        raise DynamicsEvaluationError(f"right-hand side is not finite at t = {args[0]}")
    return value


def march(
    rhs: Callable[[int, np.ndarray], np.ndarray],
    y0: np.ndarray,
    weights: np.ndarray,
    n_steps: int,
    cfg: SolverConfig,
) -> np.ndarray:
    """Solve ``B_0 (y_i - y_{i-1}) + history_i = rhs(i, y_i)`` for ``i = 1..n_steps``.

    *rhs* receives the node index and the current iterate. Returns the
    ``(n_steps + 1, dim)`` array of samples.
    """
    dim = y0.shape[0]
    y = np.zeros((n_steps + 1, dim))
    dy = np.zeros((n_steps, dim))
    y[0] = y0
    b0 = weights[0]

    for i in range(1, n_steps + 1):
        # sum_{k=0}^{i-2} B_{i-1-k} dy_k, fixed summation order
        hist = weights[i - 1 : 0 : -1] @ dy[: i - 1] if i > 1 else np.zeros(dim)

        yi = y[i - 1].copy()
        for it in range(cfg.max_inner_iters):
            fi = rhs(i, yi)
            residual = b0 * (yi - y[i - 1]) + hist - fi
            rmax = float(np.abs(residual).max())
            if not math.isfinite(rmax):
                raise SolverDivergenceError("fixed-point iteration overflowed", i)
            # absolute tolerance, relative once |f| exceeds unity, with a floor
            # at the rounding level of the terms that cancel in the residual
            scale = max(1.0, float(np.abs(fi).max()))
            floor = ROUNDING_FLOOR * (b0 * float(np.abs(yi).max()) + float(np.abs(hist).max()))
            if rmax <= max(cfg.newton_tol * scale, floor):
                break
            omega = 1.0 if it < UNDAMPED_ITERS else DAMPING
            yi = yi - omega * residual / b0
        else:
            raise SolverDivergenceError(
                f"fixed-point iteration did not converge in {cfg.max_inner_iters} "
                f"iterations (residual {rmax:.3e})",
                i,
            )

        y[i] = yi
        dy[i - 1] = yi - y[i - 1]

    return y


def solve_forward(p: ForwardProblem, cfg: SolverConfig) -> Trajectory:
    """March the state equation from ``x(a) = x0``."""
    grid = p.grid
    t = grid.nodes
    u = p.control.values
    dim = p.x0.shape[0]
    weights = multiterm_weights(p.dist, grid.h, grid.n_steps)

    def rhs(i: int, x: np.ndarray) -> np.ndarray:
        return _evaluate(p.rhs, float(t[i]), x, u[i], dim=dim)

    values = march(rhs, p.x0, weights, grid.n_steps, cfg)
    return Trajectory(grid, values)


def solve_adjoint(p: AdjointProblem, cfg: SolverConfig) -> Trajectory:
    r"""March the adjoint equation backward from :math:`\lambda(b) = 0`.

    The terminal condition is imposed pointwise; how well it stands in for
    :math:`\mathbb{I}^{1-\psi}_{b-}\lambda(b) = 0` is reported by
    :func:`transversality_residual`.
    """
    grid = p.grid
    t = grid.nodes
    x = p.state.values
    u = p.control.values
    dim = x.shape[1]
    weights = multiterm_weights(p.dist, grid.h, grid.n_steps)
    n = grid.n_steps

    def rhs(k: int, mu: np.ndarray) -> np.ndarray:
        i = n - k
        return _evaluate(p.rhs, float(t[i]), x[i], u[i], mu, dim=dim)

    mu = march(rhs, np.zeros(dim), weights, n, cfg)
    return Trajectory(grid, mu[::-1])


def transversality_residual(lam: Trajectory, dist: OrderDistribution) -> float:
    r"""Size of :math:`\mathbb{I}^{1-\psi}_{b-}\lambda` at the terminal end.

    On the grid the integration window at :math:`t = b` is empty, so the
    value at the last interior node (the smallest non-empty window) is
    included as well; the maximum of both magnitudes is returned.
    """
    ilam = do_integral_right(lam, dist).values
    return float(max(np.max(np.abs(ilam[-1])), np.max(np.abs(ilam[-2]))))


def residual_forward(x: Trajectory, p: ForwardProblem) -> float:
    """Max-norm defect of the state equation at nodes ``i >= 1``.

    The derivative is taken from :func:`~dofoc.operators.do_caputo_left`,
    independently of the stepping code.
    """
    if x.grid != p.grid:
        raise ValidationError("trajectory grid does not match the problem grid")

    lhs = do_caputo_left(x, p.dist).values
    t = p.grid.nodes
    u = p.control.values
    worst = 0.0
    for i in range(1, len(p.grid)):
        f = _evaluate(p.rhs, float(t[i]), x.values[i], u[i], dim=x.dim)
        worst = max(worst, float(np.max(np.abs(lhs[i] - f))))
    return worst
