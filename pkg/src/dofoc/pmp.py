r"""Pontryagin maximum principle for distributed-order optimal control.

The problem is

.. math::

    J[x, u] = \int_a^b L(t, x, u) \,\mathrm{d}t \to \max, \qquad
    {}^C\mathbb{D}^\psi_{a+} x = f(t, x, u), \quad x(a) = x_a,
    \quad u(t) \in \Omega,

with :math:`\Omega` a box. Candidates satisfy

* maximality: :math:`u^*(t)` maximizes :math:`H(t, x^*, \omega, \lambda)`
  over :math:`\Omega`, with :math:`H = L + \lambda \cdot f`,
* the adjoint equation :math:`\mathbb{D}^\psi_{b-}\lambda = \partial_x H`,
* transversality :math:`\mathbb{I}^{1-\psi}_{b-}\lambda(b) = 0`.

:func:`solve_pmp` assembles these into a relaxed forward-backward sweep.
The remaining functions probe first-order optimality empirically with
needle variations of the control.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from dofoc.config import SolverConfig
from dofoc.errors import (
    DynamicsEvaluationError,
    ResolutionError,
    ValidationError,
)
from dofoc.operators import OrderDistribution, TimeGrid, Trajectory, trapezoid
from dofoc.solvers import (
    AdjointProblem,
    ForwardProblem,
    multiterm_weights,
    solve_adjoint,
    solve_forward,
    transversality_residual,
)
from dofoc.special import MLParams, gamma_fn, mittag_leffler

log = logging.getLogger(__name__)

#: central finite difference step for missing Jacobians
FD_STEP = 1.0e-6

VectorMap = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
ScalarMap = Callable[[float, np.ndarray, np.ndarray], float]


# {{{ problem model


def _fd_jacobian(fn: VectorMap, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for k in range(x.shape[0]):
        step = FD_STEP * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        fp = np.atleast_1d(np.asarray(fn(t, xp, u), dtype=np.float64))
        fm = np.atleast_1d(np.asarray(fn(t, xm, u), dtype=np.float64))
        cols.append((fp - fm) / (2.0 * step))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ControlProblem:
    """Data of a distributed-order optimal control problem.

    Missing ``dynamics_dx`` / ``cost_dx`` are replaced by central finite
    differences and ``approximate_derivatives`` is set. ``control_affine``
    declares that :math:`H` is affine in the control (bang-bang
    maximization); ``None`` means it is detected numerically.
    """

    n: int
    m_ctrl: int
    dynamics: VectorMap
    cost: ScalarMap
    lo: np.ndarray
    hi: np.ndarray
    x0: np.ndarray
    horizon: tuple[float, float]
    dist: OrderDistribution
    dynamics_dx: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None
    cost_dx: VectorMap | None = None
    control_affine: bool | None = None
    initial_control: np.ndarray | None = None
    name: str = "custom"
    approximate_derivatives: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        if lo.shape != (self.m_ctrl,) or hi.shape != (self.m_ctrl,):
            raise ValidationError(f"control bounds must have {self.m_ctrl} components")
        if np.any(lo > hi):
            raise ValidationError("control bounds must satisfy lo <= hi")
        if x0.shape != (self.n,):
            raise ValidationError(f"initial state must have {self.n} components")
        a, b = self.horizon
        if not a < b:
            raise ValidationError(f"horizon must satisfy a < b: {self.horizon}")

        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "horizon", (float(a), float(b)))

        approx = False
        if self.dynamics_dx is None:
            object.__setattr__(
                self, "dynamics_dx", lambda t, x, u: _fd_jacobian(self.dynamics, t, x, u)
            )
            approx = True
        if self.cost_dx is None:
            object.__setattr__(
                self,
                "cost_dx",
                lambda t, x, u: _fd_jacobian(
                    lambda s, y, w: np.atleast_1d(self.cost(s, y, w)), t, x, u
                )[0],
            )
            approx = True
        object.__setattr__(self, "approximate_derivatives", approx)

    def grid(self, cfg: SolverConfig) -> TimeGrid:
        return TimeGrid(self.horizon[0], self.horizon[1], cfg.n_steps)

    def f(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        value = np.atleast_1d(np.asarray(self.dynamics(t, x, u), dtype=np.float64))
        if not np.isfinite(value).all():
            raise DynamicsEvaluationError(f"dynamics not finite at t = {t}")
        return value

    def L(self, t: float, x: np.ndarray, u: np.ndarray) -> float:
        value = float(self.cost(t, x, u))
        if not math.isfinite(value):
            raise DynamicsEvaluationError(f"running cost not finite at t = {t}")
        return value

    def dHdx(self, t: float, x: np.ndarray, u: np.ndarray, lam: np.ndarray) -> np.ndarray:
        r""":math:`\partial_x L + (\partial_x f)^T \lambda`."""
        fx = np.asarray(self.dynamics_dx(t, x, u), dtype=np.float64).reshape(self.n, self.n)
        lx = np.atleast_1d(np.asarray(self.cost_dx(t, x, u), dtype=np.float64))
        return lx + fx.T @ lam

    def cost_value(self, x: Trajectory, u: Trajectory) -> float:
        t = x.grid.nodes
        values = np.array([self.L(float(t[i]), x.values[i], u.values[i]) for i in range(len(t))])
        return float(trapezoid(values, x.grid.h))

    def forward(self, u: Trajectory, cfg: SolverConfig) -> Trajectory:
        return solve_forward(
            ForwardProblem(self.f, u, self.x0, self.dist, u.grid), cfg
        )

    def adjoint(self, x: Trajectory, u: Trajectory, cfg: SolverConfig) -> Trajectory:
        return solve_adjoint(AdjointProblem(self.dHdx, x, u, self.dist, x.grid), cfg)


@dataclass(frozen=True)
class PMPSolution:
    state: Trajectory
    control: Trajectory
    adjoint: Trajectory
    cost_value: float
    sweep_iterations: int
    hamiltonian_residual: float
    transversality_residual: float
    converged: bool = True
    switch_times: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True)
class NeedleSpec:
    """Needle variation: the control is replaced by *v* on ``[tau - theta, tau)``."""

    tau: float
    v: np.ndarray
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=np.float64)))
        if not self.theta > 0:
            raise ValidationError(f"needle width must be positive: {self.theta}")

    def validate(self, prob: ControlProblem) -> None:
        a, b = prob.horizon
        if not a <= self.tau < b:
            raise ValidationError(f"needle time {self.tau} outside [{a}, {b})")
        if self.tau - self.theta < a - 1e-12:
            raise ValidationError(f"needle window [{self.tau - self.theta}, {self.tau}) starts before a")
        if self.v.shape != prob.lo.shape or np.any(self.v < prob.lo) or np.any(self.v > prob.hi):
            raise ValidationError(f"needle value {self.v} outside the control set")


# }}}


# {{{ hamiltonian


def hamiltonian(
    prob: ControlProblem, t: float, x: np.ndarray, u: np.ndarray, lam: np.ndarray
) -> float:
    """``H = L + lam . f``."""
    return prob.L(t, x, u) + float(np.dot(lam, prob.f(t, x, u)))


def _is_affine(prob: ControlProblem, t: float, x: np.ndarray, lam: np.ndarray) -> bool:
    lo, hi = prob.lo, prob.hi
    h_lo = hamiltonian(prob, t, x, lo, lam)
    slopes = np.zeros(prob.m_ctrl)
    for k in range(prob.m_ctrl):
        if hi[k] > lo[k]:
            e = lo.copy()
            e[k] = hi[k]
            slopes[k] = hamiltonian(prob, t, x, e, lam) - h_lo

    scale = max(1.0, abs(h_lo), float(np.max(np.abs(slopes))))
    for frac in (0.5, 0.3):
        w = lo + frac * (hi - lo)
        predicted = h_lo + frac * float(np.sum(slopes))
        if abs(hamiltonian(prob, t, x, w, lam) - predicted) > 1.0e-9 * scale:
            return False
    return True


def switching_coefficients(
    prob: ControlProblem, t: float, x: np.ndarray, lam: np.ndarray
) -> np.ndarray:
    """Per-component slopes of an affine Hamiltonian, ``(H(hi_k) - H(lo_k)) / (hi_k - lo_k)``."""
    lo, hi = prob.lo, prob.hi
    h_lo = hamiltonian(prob, t, x, lo, lam)
    out = np.zeros(prob.m_ctrl)
    for k in range(prob.m_ctrl):
        if hi[k] > lo[k]:
            e = lo.copy()
            e[k] = hi[k]
            out[k] = (hamiltonian(prob, t, x, e, lam) - h_lo) / (hi[k] - lo[k])
    return out


def _check_grid(prob: ControlProblem, cfg: SolverConfig) -> np.ndarray:
    axes = [np.linspace(lo, hi, cfg.control_grid) for lo, hi in zip(prob.lo, prob.hi)]
    return np.array(list(itertools.product(*axes)))


def maximize_hamiltonian(
    prob: ControlProblem, t: float, x: np.ndarray, lam: np.ndarray, cfg: SolverConfig
) -> np.ndarray:
    """Argmax of ``w -> H(t, x, w, lam)`` over the control box.

    Affine Hamiltonians give bang-bang controls (upper bound for a positive
    switching coefficient, lower bound otherwise, including exact zero).
    Other Hamiltonians are scanned on a ``control_grid``-per-axis lattice and
    the best point is polished by a bounded local search.
    """
    affine = prob.control_affine
    if affine is None:
        affine = _is_affine(prob, t, x, lam)

    if affine:
        sigma = switching_coefficients(prob, t, x, lam)
        return np.where(sigma > 0, prob.hi, prob.lo)

    candidates = _check_grid(prob, cfg)
    values = np.array([hamiltonian(prob, t, x, w, lam) for w in candidates])
    best = candidates[int(np.argmax(values))]
    best_value = float(np.max(values))

    def neg(w: np.ndarray) -> float:
        return -hamiltonian(prob, t, x, np.atleast_1d(w), lam)

    spacing = (prob.hi - prob.lo) / (cfg.control_grid - 1)
    if prob.m_ctrl == 1:
        lo = max(prob.lo[0], best[0] - spacing[0])
        hi = min(prob.hi[0], best[0] + spacing[0])
        if hi > lo:
            res = optimize.minimize_scalar(
                neg, bounds=(lo, hi), method="bounded", options={"xatol": 1.0e-12}
            )
            if -res.fun > best_value:
                best = np.array([res.x])
    else:
        res = optimize.minimize(
            neg, best, method="L-BFGS-B", bounds=list(zip(prob.lo, prob.hi))
        )
        if -res.fun > best_value:
            best = np.clip(res.x, prob.lo, prob.hi)

    return best


def _argmax_trajectory(
    prob: ControlProblem, x: Trajectory, lam: Trajectory, cfg: SolverConfig
) -> Trajectory:
    t = x.grid.nodes
    values = np.array(
        [maximize_hamiltonian(prob, float(t[i]), x.values[i], lam.values[i], cfg) for i in range(len(t))]
    )
    return Trajectory(x.grid, values)


def hamiltonian_gap(
    prob: ControlProblem,
    x: Trajectory,
    u: Trajectory,
    lam: Trajectory,
    cfg: SolverConfig,
) -> float:
    r"""Largest relative maximality defect over the nodes,

    .. math::

        \max_i \frac{\max_{\omega} H(t_i, x_i, \omega, \lambda_i)
            - H(t_i, x_i, u_i, \lambda_i)}{\max(1, |H(t_i, x_i, u_i, \lambda_i)|)},

    with :math:`\omega` ranging over the check lattice plus the argmax.
    Zero (up to rounding) when *u* maximizes the Hamiltonian everywhere.
    """
    t = x.grid.nodes
    lattice = _check_grid(prob, cfg)
    worst = -math.inf
    for i in range(len(t)):
        ti, xi, li = float(t[i]), x.values[i], lam.values[i]
        h_u = hamiltonian(prob, ti, xi, u.values[i], li)
        best = maximize_hamiltonian(prob, ti, xi, li, cfg)
        h_max = max(
            hamiltonian(prob, ti, xi, best, li),
            max(hamiltonian(prob, ti, xi, w, li) for w in lattice),
        )
        scale = max(1.0, abs(h_u), abs(h_max))
        worst = max(worst, (h_max - h_u) / scale)
    return worst


# }}}


# {{{ forward-backward sweep


def detect_switches(u: Trajectory) -> tuple[tuple[float, ...], ...]:
    """Per control component, the node times at which the value changes
    (the first node of each new arc)."""
    t = u.grid.nodes
    out = []
    for k in range(u.dim):
        col = u.values[:, k]
        jumps = np.nonzero(np.abs(np.diff(col)) > 1.0e-9 * max(1.0, float(np.max(np.abs(col)))))[0]
        out.append(tuple(float(t[j + 1]) for j in jumps))
    return tuple(out)


def _initial_control(prob: ControlProblem, grid: TimeGrid) -> Trajectory:
    if prob.initial_control is not None:
        u0 = np.broadcast_to(np.asarray(prob.initial_control, dtype=np.float64), (len(grid), prob.m_ctrl))
    else:
        u0 = np.broadcast_to(np.clip(0.0, prob.lo, prob.hi), (len(grid), prob.m_ctrl))
    return Trajectory(grid, np.array(u0))


def solve_pmp(prob: ControlProblem, cfg: SolverConfig) -> PMPSolution:
    """Relaxed forward-backward sweep on the maximum principle conditions.

    Each sweep solves the state equation with the current control, the
    adjoint equation along it, maximizes the Hamiltonian node by node and
    relaxes ``u <- (1 - gamma) u + gamma u_new``. The relaxation is halved
    whenever the cost drops on two consecutive sweeps. Once the control
    change falls below ``sweep_tol`` the control is replaced by the
    pointwise argmax and the state and adjoint are recomputed; the result
    is accepted if the argmax is then reproduced.
    """
    grid = prob.grid(cfg)
    u = _initial_control(prob, grid)
    gamma = cfg.gamma
    history: list[float] = []
    drops = 0
    best: tuple[float, Trajectory, Trajectory, Trajectory] | None = None

    for sweep in range(1, cfg.max_sweeps + 1):
        x = prob.forward(u, cfg)
        lam = prob.adjoint(x, u, cfg)
        J = prob.cost_value(x, u)
        if best is None or J > best[0]:
            best = (J, x, u, lam)

        if history and J < history[-1]:
            drops += 1
            if drops >= 2:
                gamma *= 0.5
                drops = 0
                log.info("sweep %d: cost decreasing, relaxation halved to %g", sweep, gamma)
        else:
            drops = 0
        history.append(J)

        u_new = _argmax_trajectory(prob, x, lam, cfg)
        change = gamma * float(np.max(np.abs(u_new.values - u.values)))
        log.debug("sweep %d: J = %.12e, control change %.3e", sweep, J, change)

        if change < cfg.sweep_tol:
            # snap to the argmax and confirm it is a fixed point
            x_s = prob.forward(u_new, cfg)
            lam_s = prob.adjoint(x_s, u_new, cfg)
            u_check = _argmax_trajectory(prob, x_s, lam_s, cfg)
            if float(np.max(np.abs(u_check.values - u_new.values))) < cfg.sweep_tol:
                return _finish(prob, cfg, x_s, u_new, lam_s, sweep, converged=True)
            u = u_new
            continue

        u = u.with_values((1.0 - gamma) * u.values + gamma * u_new.values)

    assert best is not None
    log.warning("sweep did not converge in %d iterations", cfg.max_sweeps)
    _, x, u, lam = best
    return _finish(prob, cfg, x, u, lam, cfg.max_sweeps, converged=False)


def _finish(
    prob: ControlProblem,
    cfg: SolverConfig,
    x: Trajectory,
    u: Trajectory,
    lam: Trajectory,
    sweeps: int,
    *,
    converged: bool,
) -> PMPSolution:
    return PMPSolution(
        state=x,
        control=u,
        adjoint=lam,
        cost_value=prob.cost_value(x, u),
        sweep_iterations=sweeps,
        hamiltonian_residual=hamiltonian_gap(prob, x, u, lam, cfg),
        transversality_residual=transversality_residual(lam, prob.dist),
        converged=converged,
        switch_times=detect_switches(u),
    )


def solution_from_control(prob: ControlProblem, u: Trajectory, cfg: SolverConfig) -> PMPSolution:
    """Wrap an arbitrary admissible control (not necessarily optimal) as a
    :class:`PMPSolution`, e.g. to test it with :func:`needle_optimality_check`."""
    x = prob.forward(u, cfg)
    lam = prob.adjoint(x, u, cfg)
    return _finish(prob, cfg, x, u, lam, 0, converged=False)


# }}}


# {{{ needle variations


def needle_mask(grid: TimeGrid, tau: float, theta: float) -> np.ndarray:
    """Boolean mask of the nodes in ``[tau - theta, tau)``."""
    t = grid.nodes
    eps = 1.0e-9 * grid.h
    return (t >= tau - theta - eps) & (t < tau - eps)


def apply_needle(u: Trajectory, spec: NeedleSpec) -> Trajectory:
    """Set the control to ``spec.v`` on the grid nodes in ``[tau - theta, tau)``."""
    mask = needle_mask(u.grid, spec.tau, spec.theta)
    if not np.any(mask):
        raise ResolutionError(
            f"needle window [{spec.tau - spec.theta:.6g}, {spec.tau:.6g}) contains "
            f"no grid node (h = {u.grid.h:.3g}); refine the grid"
        )
    values = np.array(u.values)
    values[mask] = spec.v
    return u.with_values(values)


def effective_width(grid: TimeGrid, spec: NeedleSpec) -> float:
    """Width actually perturbed on the grid: number of window nodes times ``h``."""
    return float(np.count_nonzero(needle_mask(grid, spec.tau, spec.theta))) * grid.h


@dataclass(frozen=True)
class NeedleResult:
    spec: NeedleSpec
    thetas: tuple[float, ...]
    quotients: tuple[float, ...]
    extrapolated: float
    passed: bool
    skipped: tuple[float, ...] = ()


@dataclass(frozen=True)
class NeedleReport:
    results: tuple[NeedleResult, ...]
    tolerance: float
    notices: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def worst(self) -> float:
        if not self.results:
            return -math.inf
        return max(r.extrapolated for r in self.results)


def _extrapolate(thetas: Sequence[float], values: Sequence[float]) -> float:
    # linear extrapolation to theta = 0 through the two smallest widths
    if len(values) == 1:
        return values[0]
    t1, t2 = thetas[-2], thetas[-1]
    d1, d2 = values[-2], values[-1]
    if t1 == t2:
        return d2
    return d2 - t2 * (d1 - d2) / (t1 - t2)


def needle_optimality_check(
    prob: ControlProblem,
    sol: PMPSolution,
    specs: Sequence[NeedleSpec],
    cfg: SolverConfig,
    *,
    levels: int = 3,
    max_levels: int = 8,
    agreement: float = 0.25,
) -> NeedleReport:
    r"""Empirical first-order optimality test.

    For every spec the widths ``theta, theta/2, ...`` are tried; for each
    resolvable width the state is re-solved with the perturbed control and
    :math:`(J[u^\theta] - J[u^*]) / \theta` recorded, with :math:`\theta` the
    width actually covered by grid nodes. At least *levels* widths are
    tried; halving continues (up to *max_levels*) while the two smallest
    quotients differ by more than *agreement* relative to their size, since
    strongly growing states keep wide needles out of the linear regime.
    The limit :math:`\theta \to 0` is extrapolated linearly from the two
    smallest widths. A spec passes when the extrapolated value is at most
    ``cfg.needle_tol``.
    """
    J0 = prob.cost_value(sol.state, sol.control)
    grid = sol.control.grid
    results = []
    notices = []

    def settled(q: list[float]) -> bool:
        if len(q) < 2:
            return False
        scale = max(abs(q[-1]), abs(q[-2]), cfg.needle_tol)
        return abs(q[-1] - q[-2]) <= agreement * scale

    for spec in specs:
        spec.validate(prob)
        thetas, quotients, skipped = [], [], []
        for level in range(max_levels):
            if level >= levels and settled(quotients):
                break
            s = replace(spec, theta=spec.theta / 2**level)
            width = effective_width(grid, s)
            if width == 0.0 or (thetas and width >= thetas[-1]):
                skipped.append(s.theta)
                if width == 0.0:
                    break
                continue
            u_theta = apply_needle(sol.control, s)
            x_theta = prob.forward(u_theta, cfg)
            quotients.append((prob.cost_value(x_theta, u_theta) - J0) / width)
            thetas.append(width)

        if not quotients:
            notices.append(f"needle at tau={spec.tau:.6g} skipped: window unresolved")
            continue
        if skipped:
            notices.append(
                f"needle at tau={spec.tau:.6g}: {len(skipped)} unresolved width(s) skipped"
            )

        value = _extrapolate(thetas, quotients)
        results.append(
            NeedleResult(
                spec=spec,
                thetas=tuple(thetas),
                quotients=tuple(quotients),
                extrapolated=value,
                passed=value <= cfg.needle_tol,
                skipped=tuple(skipped),
            )
        )

    return NeedleReport(tuple(results), cfg.needle_tol, tuple(notices))


def random_needles(
    prob: ControlProblem, grid: TimeGrid, count: int, seed: int
) -> list[NeedleSpec]:
    """Needles with ``tau`` uniform over interior nodes (with room for a
    window of four steps), ``v`` uniform in the box and ``theta`` uniform in
    ``[4 h, (tau - a) / 2]``."""
    rng = np.random.default_rng(seed)
    a = grid.a
    h = grid.h
    first = 8  # (tau - a) / 2 >= 4 h
    specs = []
    for _ in range(count):
        i = int(rng.integers(first, grid.n_steps))
        tau = a + i * h
        v = rng.uniform(prob.lo, prob.hi)
        theta = float(rng.uniform(4.0 * h, (tau - a) / 2.0))
        specs.append(NeedleSpec(tau=tau, v=v, theta=theta))
    return specs


# }}}


# {{{ sensitivity diagnostics


@dataclass(frozen=True)
class ContinuityReport:
    thetas: tuple[float, ...]
    deviations: tuple[float, ...]
    exponent: float
    log_constant: float
    monotone: bool
    degenerate: bool
    bound_constant: float
    bound_holds: bool
    lipschitz_k: float
    control_bound_m: float

    @property
    def passed(self) -> bool:
        if self.degenerate:
            return True
        return self.monotone and self.exponent > 0 and self.bound_holds


def estimate_constants(prob: ControlProblem, sol: PMPSolution) -> tuple[float, float]:
    """Sampled Lipschitz constant ``K`` (spectral norm of ``f_x``) and bound
    ``M`` on ``|f|`` along the optimal state, over the box corners and the
    optimal control."""
    t = sol.state.grid.nodes
    corners = [np.array(c) for c in itertools.product(*zip(prob.lo, prob.hi))]
    K = M = 0.0
    for i in range(len(t)):
        xi = sol.state.values[i]
        for w in corners + [sol.control.values[i]]:
            fx = np.asarray(prob.dynamics_dx(float(t[i]), xi, w), dtype=np.float64)
            K = max(K, float(np.linalg.norm(fx.reshape(prob.n, prob.n), 2)))
            M = max(M, float(np.linalg.norm(prob.f(float(t[i]), xi, w))))
    return K, M


def gronwall_constant(K: float, M: float, mass: float, order: float, length: float) -> float:
    r""":math:`\frac{2M}{m\Gamma(\alpha + 1)} E_{\alpha,1}(K (b - a)^\alpha)`."""
    return 2.0 * M / (mass * gamma_fn(order + 1.0)) * mittag_leffler(
        MLParams(order, 1.0), K * length**order
    )


def continuity_rate_probe(
    prob: ControlProblem,
    sol: PMPSolution,
    spec: NeedleSpec,
    theta_ladder: Sequence[float],
    cfg: SolverConfig,
    *,
    lipschitz_k: float | None = None,
    control_bound_m: float | None = None,
) -> ContinuityReport:
    r"""Fit :math:`\|x^\theta - x^*\|_\infty \approx C\theta^p` on a ladder.

    Returns the fitted exponent and :math:`\log C` (least squares in log-log
    coordinates) together with the Gronwall-type upper bound
    :math:`\varpi_1 \theta^p` evaluated with the given (or sampled) ``K`` and
    ``M``.
    """
    thetas = [float(t) for t in theta_ladder]
    if any(t2 >= t1 for t1, t2 in zip(thetas, thetas[1:])):
        raise ValidationError("theta ladder must be strictly decreasing")

    deviations = []
    for theta in thetas:
        s = replace(spec, theta=theta)
        s.validate(prob)
        u_theta = apply_needle(sol.control, s)
        x_theta = prob.forward(u_theta, cfg)
        deviations.append(float(np.max(np.abs(x_theta.values - sol.state.values))))

    if lipschitz_k is None or control_bound_m is None:
        K, M = estimate_constants(prob, sol)
        lipschitz_k = K if lipschitz_k is None else lipschitz_k
        control_bound_m = M if control_bound_m is None else control_bound_m

    dev = np.array(deviations)
    monotone = bool(np.all(np.diff(dev) < 0))
    if np.all(dev == 0.0):
        return ContinuityReport(
            tuple(thetas), tuple(deviations), math.nan, -math.inf, True, True,
            0.0, True, lipschitz_k, control_bound_m,
        )
    if np.any(dev <= 0.0):
        return ContinuityReport(
            tuple(thetas), tuple(deviations), math.nan, math.nan, False, False,
            math.nan, False, lipschitz_k, control_bound_m,
        )

    slope, intercept = np.polyfit(np.log(thetas), np.log(dev), 1)
    a, b = prob.horizon
    order = min(max(float(slope), 1.0e-3), 1.0)
    try:
        bound = gronwall_constant(lipschitz_k, control_bound_m, prob.dist.mass, order, b - a)
        holds = bool(np.all(dev <= bound * np.array(thetas) ** slope))
    except (ArithmeticError, ValueError) as exc:
        log.warning("Gronwall bound unavailable: %s", exc)
        bound, holds = math.inf, True

    return ContinuityReport(
        thetas=tuple(thetas),
        deviations=tuple(deviations),
        exponent=float(slope),
        log_constant=float(intercept),
        monotone=monotone,
        degenerate=False,
        bound_constant=bound,
        bound_holds=holds,
        lipschitz_k=lipschitz_k,
        control_bound_m=control_bound_m,
    )


def variational_trajectory(
    prob: ControlProblem, sol: PMPSolution, spec: NeedleSpec, cfg: SolverConfig
) -> Trajectory:
    r"""First-order response :math:`\eta` of the state to a needle at ``tau``.

    :math:`\eta` solves the linearized distributed-order equation
    :math:`{}^C\mathbb{D}^\psi\eta = \partial_x f(t, x^*, u^*)\,\eta` driven by
    a concentrated source of total mass
    :math:`f(\tau, x^*, v) - f(\tau, x^*, u^*)` placed on the last node before
    ``tau`` (the node every needle window contains). For a single order
    :math:`\alpha_0` with mass :math:`m` this is the jump condition
    :math:`I^{1-\alpha_0}\eta(\tau^+) = [f(\tau, x^*, v) - f(\tau, x^*, u^*)]/m`.
    The same multi-term L1 discretization as the state solver is used, so
    :math:`(x^\theta - x^*)/\theta \to \eta` holds at the discrete level.
    """
    spec.validate(prob)
    grid = sol.state.grid
    h, n = grid.h, grid.n_steps
    t = grid.nodes
    x = sol.state.values
    u = sol.control.values

    i_tau = grid.index_of(spec.tau)
    start = i_tau - 1
    if start < 0:
        raise ResolutionError("needle time must lie after the first grid node")

    jump = prob.f(float(t[start]), x[start], spec.v) - prob.f(float(t[start]), x[start], u[start])
    weights = multiterm_weights(prob.dist, h, n)
    b0 = weights[0]

    eta = np.zeros((n + 1, prob.n))
    d_eta = np.zeros((n, prob.n))
    eye = np.eye(prob.n)
    for i in range(start, n + 1):
        if i == 0:
            continue
        hist = weights[i - 1 : 0 : -1] @ d_eta[: i - 1] if i > 1 else np.zeros(prob.n)
        A = np.asarray(prob.dynamics_dx(float(t[i]), x[i], u[i]), dtype=np.float64).reshape(prob.n, prob.n)
        source = jump / h if i == start else 0.0
        eta[i] = np.linalg.solve(b0 * eye - A, b0 * eta[i - 1] - hist + source)
        d_eta[i - 1] = eta[i] - eta[i - 1]

    return Trajectory(grid, eta)


def variational_gaps(
    prob: ControlProblem,
    sol: PMPSolution,
    spec: NeedleSpec,
    thetas: Sequence[float],
    cfg: SolverConfig,
    window: tuple[float, float],
) -> tuple[Trajectory, list[float]]:
    r"""Max-norm gaps between :math:`(x^\theta - x^*)/\theta` and
    :math:`\eta` on the closed *window*, for every width in *thetas*."""
    eta = variational_trajectory(prob, sol, spec, cfg)
    grid = sol.state.grid
    t = grid.nodes
    mask = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    gaps = []
    for theta in thetas:
        s = replace(spec, theta=theta)
        u_theta = apply_needle(sol.control, s)
        x_theta = prob.forward(u_theta, cfg)
        quotient = (x_theta.values - sol.state.values) / effective_width(grid, s)
        gaps.append(float(np.max(np.abs(quotient[mask] - eta.values[mask]))))
    return eta, gaps


# }}}
