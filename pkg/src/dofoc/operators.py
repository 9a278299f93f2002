r"""Discrete single-order and distributed-order fractional operators.

Everything acts on samples over a uniform :class:`TimeGrid`. The building
blocks are

* the product-trapezoid rule for the Riemann-Liouville integral
  :math:`I^\alpha_{a+}` (exact for piecewise-linear data),
* the L1 scheme for the Caputo derivative :math:`{}^C D^\alpha_{a+}`,
* right-sided variants obtained by time reversal :math:`t \mapsto a + b - t`.

Distributed-order operators replace :math:`\int_0^1 \psi(\alpha)\,
\mathcal{O}^\alpha \,\mathrm{d}\alpha` by a Gauss-Legendre sum
:math:`\sum_j w_j \psi(\alpha_j) \mathcal{O}^{\alpha_j}`. Sums are always
accumulated in ascending quadrature index so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from dofoc.errors import DegenerateDistributionError, DomainError, ValidationError
from dofoc.special import gamma_fn

WeightFn = Callable[[float], float]

#: default number of Gauss-Legendre nodes in the order variable
DEFAULT_QUAD_ORDER = 20
#: distributions with smaller mass are rejected
MASS_EPS = 1.0e-14


# {{{ grids and sampled functions


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = a + i (b - a) / n_steps`` for ``i = 0, ..., n_steps``."""

    a: float
    b: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
            raise ValidationError(f"horizon must satisfy a < b: [{self.a}, {self.b}]")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValidationError(f"n_steps must be an integer >= 2: {self.n_steps}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n_steps + 1)

    def __len__(self) -> int:
        return self.n_steps + 1

    def index_of(self, t: float) -> int:
        """Index of the node nearest to *t*."""
        i = int(round((t - self.a) / self.h))
        return min(max(i, 0), self.n_steps)


@dataclass(frozen=True)
class Trajectory:
    """Vector samples on a grid, stored as an ``(n_steps + 1, dim)`` array."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] != len(self.grid):
            raise ValidationError(
                f"expected {len(self.grid)} rows of samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("trajectory samples must be finite")

        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @classmethod
    def from_function(
        cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]
    ) -> Trajectory:
        """Sample a vectorized function ``fn(t)`` on *grid*."""
        return cls(grid, np.asarray(fn(grid.nodes), dtype=np.float64))

    def with_values(self, values: np.ndarray) -> Trajectory:
        return Trajectory(self.grid, values)

    def reversed(self) -> Trajectory:
        """Samples of ``t -> f(a + b - t)`` on the same grid."""
        return Trajectory(self.grid, self.values[::-1])


def _check_same_grid(*trajs: Trajectory) -> None:
    grid = trajs[0].grid
    for other in trajs[1:]:
        if other.grid != grid:
            raise ValidationError(f"grid mismatch: {grid} != {other.grid}")


# }}}


# {{{ order distributions


@dataclass(frozen=True)
class OrderDistribution:
    r"""A weight :math:`\psi(\alpha)` on the orders together with its
    quadrature discretization.

    ``nodes`` and ``weights`` are Gauss-Legendre abscissae and weights on
    the support interval, ``psi_values`` caches :math:`\psi` at the nodes
    and ``mass`` is :math:`m = \int_0^1 \psi(\alpha) \,\mathrm{d}\alpha`
    computed by the same rule.
    """

    weight: WeightFn
    nodes: np.ndarray
    weights: np.ndarray
    psi_values: np.ndarray
    mass: float
    support: tuple[float, float] = (0.0, 1.0)

    @property
    def coefficients(self) -> np.ndarray:
        r"""Effective multi-term coefficients :math:`w_j \psi(\alpha_j)`."""
        return self.weights * self.psi_values

    @property
    def max_order(self) -> float:
        return float(np.max(self.nodes))

    def integrate(self, fn: Callable[[float], float]) -> float:
        r"""Approximate :math:`\int \psi(\alpha) g(\alpha) \,\mathrm{d}\alpha`."""
        total = 0.0
        for c, alpha in zip(self.coefficients, self.nodes):
            total += c * fn(float(alpha))
        return total


def build_distribution(
    weight: WeightFn,
    quad_order: int = DEFAULT_QUAD_ORDER,
    *,
    support: tuple[float, float] = (0.0, 1.0),
) -> OrderDistribution:
    """Discretize the order weight *weight* with a Gauss-Legendre rule.

    The rule is mapped to *support* (a subinterval of ``[0, 1]``, useful for
    narrow bumps); Gauss-Legendre nodes are interior, so the endpoints
    ``alpha = 0`` and ``alpha = 1`` are never sampled.
    """
    if int(quad_order) != quad_order or quad_order < 2:
        raise ValidationError(f"quad_order must be an integer >= 2: {quad_order}")

    lo, hi = support
    if not 0.0 <= lo < hi <= 1.0:
        raise ValidationError(f"support must be a subinterval of [0, 1]: {support}")

    x, w = np.polynomial.legendre.leggauss(int(quad_order))
    nodes = lo + 0.5 * (hi - lo) * (x + 1.0)
    weights = 0.5 * (hi - lo) * w

    psi = np.array([float(weight(float(alpha))) for alpha in nodes])
    if not np.all(np.isfinite(psi)):
        raise ValidationError("order weight is not finite at the quadrature nodes")
    if np.any(psi < 0):
        alpha = nodes[np.argmin(psi)]
        raise ValidationError(f"order weight is negative at alpha = {alpha:.6g}")

    mass = float(np.sum(weights * psi))
    if mass <= MASS_EPS:
        raise DegenerateDistributionError(f"order weight has mass {mass:.3e}")

    for arr in (nodes, weights, psi):
        arr.setflags(write=False)

    return OrderDistribution(
        weight=weight,
        nodes=nodes,
        weights=weights,
        psi_values=psi,
        mass=mass,
        support=(float(lo), float(hi)),
    )


def constant_weight(value: float = 1.0) -> WeightFn:
    return lambda alpha: value


def polynomial_weight(coefficients: list[float]) -> WeightFn:
    """``psi(alpha) = c_0 + c_1 alpha + c_2 alpha^2 + ...``"""
    coeffs = [float(c) for c in coefficients]
    return lambda alpha: float(np.polynomial.polynomial.polyval(alpha, coeffs))


@dataclass(frozen=True)
class _Bump:
    center: float
    width: float
    scale: float = 1.0

    def __call__(self, alpha: float) -> float:
        r = (alpha - self.center) / self.width
        if abs(r) >= 1.0:
            return 0.0
        return self.scale * 0.5 * (1.0 + math.cos(math.pi * r)) / self.width


def bump_distribution(
    center: float,
    width: float,
    quad_order: int = DEFAULT_QUAD_ORDER,
    mass: float = 1.0,
) -> OrderDistribution:
    """Raised-cosine bump of half-width *width* around *center*, truncated to
    ``[0, 1]`` and scaled so the discrete mass equals *mass*.

    The quadrature is placed on the support of the bump, so arbitrarily
    narrow bumps (approximating a single order) are resolved.
    """
    if not 0.0 <= center <= 1.0:
        raise DomainError(f"bump center must lie in [0, 1]: {center}")
    if not width > 0:
        raise DomainError(f"bump width must be positive: {width}")

    support = (max(0.0, center - width), min(1.0, center + width))
    raw = build_distribution(_Bump(center, width), quad_order, support=support)
    return build_distribution(
        _Bump(center, width, scale=mass / raw.mass), quad_order, support=support
    )


# }}}


# {{{ single-order kernels


def _check_order(order: float, *, allow_zero: bool = False) -> float:
    order = float(order)
    lo_ok = order >= 0 if allow_zero else order > 0
    if not (lo_ok and order <= 1.0):
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        raise DomainError(f"order must lie in {interval}: {order}")
    return order


def _power_increments(p: float, n: int) -> np.ndarray:
    """``(j + 1)^p - j^p`` for ``j = 0, ..., n - 1`` without cancellation."""
    j = np.arange(n, dtype=np.float64)
    out = np.empty(n)
    out[0] = 1.0
    jj = j[1:]
    out[1:] = jj**p * np.expm1(p * np.log1p(1.0 / jj))
    return out


def _second_differences(p: float, n: int) -> np.ndarray:
    """``(j + 1)^p - 2 j^p + (j - 1)^p`` for ``j = 1, ..., n`` without cancellation."""
    j = np.arange(1, n + 1, dtype=np.float64)
    with np.errstate(divide="ignore"):
        # j = 1 hits log1p(-1) = -inf, and expm1(-inf) = -1 is the right limit
        return j**p * (np.expm1(p * np.log1p(1.0 / j)) + np.expm1(p * np.log1p(-1.0 / j)))


def l1_weights(order: float, n: int) -> np.ndarray:
    r"""L1 coefficients :math:`b_l = (l + 1)^{1 - \alpha} - l^{1 - \alpha}`,
    ``l = 0, ..., n - 1``."""
    return _power_increments(1.0 - order, n)


def _rl_integral_array(f: np.ndarray, order: float, h: float) -> np.ndarray:
    r"""Product-trapezoid rule for :math:`I^\alpha_{a+}` on uniform samples.

    .. math::

        I^\alpha f(t_n) \approx \frac{h^\alpha}{\Gamma(\alpha + 2)} \Big[
            a_{0,n} f_0 + \sum_{k = 1}^n a_{k,n} f_k \Big],

    with :math:`a_{0,n} = (n - 1)^{\alpha + 1} - (n - \alpha - 1) n^\alpha`,
    :math:`a_{n,n} = 1` and
    :math:`a_{k,n} = (n-k+1)^{\alpha+1} - 2(n-k)^{\alpha+1} + (n-k-1)^{\alpha+1}`.
    """
    npts = f.shape[0]
    out = np.zeros_like(f)
    if order == 1.0:
        # plain cumulative trapezoid
        out[1:] = np.cumsum(0.5 * h * (f[1:] + f[:-1]), axis=0)
        return out

    p = order + 1.0
    n = np.arange(1, npts, dtype=np.float64)
    a0 = (n - 1.0) ** p - (n - order - 1.0) * n**order
    kernel = np.empty(npts - 1)
    kernel[0] = 1.0
    kernel[1:] = _second_differences(p, npts - 2)

    scale = h**order / gamma_fn(order + 2.0)
    for col in range(f.shape[1]):
        conv = np.convolve(kernel, f[1:, col])[: npts - 1]
        out[1:, col] = scale * (a0 * f[0, col] + conv)

    return out


def _caputo_l1_array(x: np.ndarray, order: float, h: float) -> np.ndarray:
    r"""L1 scheme :math:`\frac{h^{-\alpha}}{\Gamma(2 - \alpha)} \sum_{k < n}
    b_{n - 1 - k} (x_{k + 1} - x_k)`; node 0 is zero."""
    npts = x.shape[0]
    dx = np.diff(x, axis=0)
    out = np.zeros_like(x)
    if order == 1.0:
        out[1:] = dx / h
        return out

    b = l1_weights(order, npts - 1)
    scale = h**-order / gamma_fn(2.0 - order)
    for col in range(x.shape[1]):
        out[1:, col] = scale * np.convolve(b, dx[:, col])[: npts - 1]

    return out


def _derivative_array(g: np.ndarray, h: float) -> np.ndarray:
    # central differences inside, one-sided at both ends
    return np.gradient(g, h, axis=0, edge_order=1)


def rl_integral_left(f: Trajectory, order: float) -> Trajectory:
    r"""Left Riemann-Liouville integral
    :math:`\frac{1}{\Gamma(\alpha)} \int_a^t (t - s)^{\alpha - 1} f(s) \,\mathrm{d}s`
    by the product-trapezoid rule (piecewise-linear interpolation of *f*).
    """
    order = _check_order(order)
    return f.with_values(_rl_integral_array(f.values, order, f.grid.h))


def rl_integral_right(f: Trajectory, order: float) -> Trajectory:
    """Right Riemann-Liouville integral, computed by time reversal of
    :func:`rl_integral_left`."""
    return rl_integral_left(f.reversed(), order).reversed()


def caputo_derivative_left(x: Trajectory, order: float) -> Trajectory:
    r"""Left Caputo derivative by the L1 scheme.

    The scheme is exact for affine data. Order 1 reduces to backward
    differences and order 0 to :math:`x(t) - x(a)`.
    """
    order = _check_order(order, allow_zero=True)
    if order == 0.0:
        return x.with_values(x.values - x.values[0])
    return x.with_values(_caputo_l1_array(x.values, order, x.grid.h))


def caputo_derivative_right(x: Trajectory, order: float) -> Trajectory:
    """Right Caputo derivative (time reversal of :func:`caputo_derivative_left`)."""
    return caputo_derivative_left(x.reversed(), order).reversed()


def rl_derivative_left(x: Trajectory, order: float) -> Trajectory:
    r"""Left Riemann-Liouville derivative
    :math:`\frac{\mathrm{d}}{\mathrm{d}t} I^{1 - \alpha}_{a+} x`."""
    order = _check_order(order, allow_zero=True)
    if order == 0.0:
        return x
    if order == 1.0:
        return x.with_values(_derivative_array(x.values, x.grid.h))

    g = _rl_integral_array(x.values, 1.0 - order, x.grid.h)
    return x.with_values(_derivative_array(g, x.grid.h))


def rl_derivative_right(x: Trajectory, order: float) -> Trajectory:
    r"""Right Riemann-Liouville derivative
    :math:`-\frac{\mathrm{d}}{\mathrm{d}t} I^{1 - \alpha}_{b-} x`."""
    return rl_derivative_left(x.reversed(), order).reversed()


# }}}


# {{{ distributed-order operators


def _weighted_sum(
    x: Trajectory, dist: OrderDistribution, op: Callable[[Trajectory, float], Trajectory]
) -> Trajectory:
    total = np.zeros_like(x.values)
    for c, alpha in zip(dist.coefficients, dist.nodes):
        total += c * op(x, float(alpha)).values
    return x.with_values(total)


def do_caputo_left(x: Trajectory, dist: OrderDistribution) -> Trajectory:
    r"""Distributed-order Caputo derivative
    :math:`\sum_j w_j \psi(\alpha_j) \, {}^C D^{\alpha_j}_{a+} x`."""
    return _weighted_sum(x, dist, caputo_derivative_left)


def do_caputo_right(x: Trajectory, dist: OrderDistribution) -> Trajectory:
    return _weighted_sum(x, dist, caputo_derivative_right)


def do_rl_left(x: Trajectory, dist: OrderDistribution) -> Trajectory:
    return _weighted_sum(x, dist, rl_derivative_left)


def do_rl_right(x: Trajectory, dist: OrderDistribution) -> Trajectory:
    r"""Distributed-order right Riemann-Liouville derivative
    :math:`\sum_j w_j \psi(\alpha_j) D^{\alpha_j}_{b-} x`."""
    return _weighted_sum(x, dist, rl_derivative_right)


def do_integral_right(x: Trajectory, dist: OrderDistribution) -> Trajectory:
    r""":math:`\sum_j w_j \psi(\alpha_j) I^{1 - \alpha_j}_{b-} x`.

    This is the quantity whose value at :math:`t = b` enters the terminal
    condition of the adjoint equation.
    """
    return _weighted_sum(x, dist, lambda y, alpha: rl_integral_right(y, 1.0 - alpha))


def rl_caputo_correction(
    grid: TimeGrid, dist: OrderDistribution, side: str = "left"
) -> np.ndarray:
    r"""Kernel :math:`\sum_j w_j \psi(\alpha_j) s^{-\alpha_j} / \Gamma(1 - \alpha_j)`
    with :math:`s = t - a` (left) or :math:`s = b - t` (right).

    The endpoint where :math:`s = 0` is singular and set to ``inf``.
    """
    t = grid.nodes
    s = t - grid.a if side == "left" else grid.b - t
    out = np.zeros_like(t)
    with np.errstate(divide="ignore"):
        for c, alpha in zip(dist.coefficients, dist.nodes):
            out += c * s ** (-alpha) / gamma_fn(1.0 - alpha)
    return out


def do_rl_caputo_relation_residual(
    x: Trajectory, dist: OrderDistribution, side: str = "left", *, exclude: float = 0.0
) -> float:
    r"""Max-norm over interior nodes of

    .. math::

        {}^C\mathbb{D}^\psi x - \Big[\mathbb{D}^\psi x - x(\text{endpoint})
            \int_0^1 \frac{\psi(\alpha)}{\Gamma(1 - \alpha)} s^{-\alpha}
            \,\mathrm{d}\alpha\Big],

    a consistency check between the two discretizations.

    When ``x(endpoint) != 0`` the correction is singular at the endpoint and
    the first few nodes next to it carry an :math:`O(h^{-\alpha})` defect;
    nodes closer than *exclude* to the endpoint are then left out.
    """
    if side == "left":
        caputo, rl, endpoint = do_caputo_left(x, dist), do_rl_left(x, dist), x.values[0]
    elif side == "right":
        caputo, rl, endpoint = do_caputo_right(x, dist), do_rl_right(x, dist), x.values[-1]
    else:
        raise ValidationError(f"side must be 'left' or 'right': {side!r}")

    corr = rl_caputo_correction(x.grid, dist, side)
    with np.errstate(invalid="ignore"):
        diff = caputo.values - (rl.values - np.outer(corr, endpoint))
    s = x.grid.nodes - x.grid.a if side == "left" else x.grid.b - x.grid.nodes
    keep = s >= exclude
    keep[0] = keep[-1] = False
    return float(np.max(np.abs(diff[keep])))


def trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    """Composite trapezoid rule along the time axis."""
    values = np.asarray(values, dtype=np.float64)
    return h * (0.5 * values[0] + values[1:-1].sum(axis=0) + 0.5 * values[-1])


def integration_by_parts_residual(
    x: Trajectory, y: Trajectory, dist: OrderDistribution
) -> float:
    r"""Discrete defect of the fractional integration by parts identity

    .. math::

        \int_a^b x \, {}^C\mathbb{D}^\psi_{a+} y \,\mathrm{d}t
        = \Big[y \, \mathbb{I}^{1 - \psi}_{b-} x\Big]_a^b
        + \int_a^b y \, \mathbb{D}^\psi_{b-} x \,\mathrm{d}t,

    with the time integrals evaluated by the trapezoid rule. For vector
    data the products are dot products.
    """
    _check_same_grid(x, y)
    if x.dim != y.dim:
        raise ValidationError(f"dimension mismatch: {x.dim} != {y.dim}")

    h = x.grid.h
    lhs = trapezoid(np.sum(x.values * do_caputo_left(y, dist).values, axis=1), h)
    ix = do_integral_right(x, dist).values
    boundary = float(y.values[-1] @ ix[-1] - y.values[0] @ ix[0])
    rhs = trapezoid(np.sum(y.values * do_rl_right(x, dist).values, axis=1), h)

    return abs(float(lhs) - boundary - float(rhs))


# }}}
