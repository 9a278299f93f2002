r"""Scalar special functions: the Gamma function and the two-parameter
Mittag-Leffler function

.. math::

    E_{\alpha, \beta}(z) = \sum_{k = 0}^\infty \frac{z^k}{\Gamma(\alpha k + \beta)}.

Only real arguments are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from dofoc.errors import AccuracyError, DomainError

#: relative size of the next series term at which summation stops
SERIES_RTOL = 1.0e-16
#: minimal and absolute cap on the number of series terms; the working
#: cap grows with the position of the largest term, ``|z|^(1/alpha) / alpha``
SERIES_MIN_TERMS = 500
SERIES_MAX_TERMS = 100_000
#: absolute accuracy promised on the supported range
ML_ATOL = 1.0e-10


@dataclass(frozen=True)
class MLParams:
    """Parameters of :math:`E_{\\alpha,\\beta}`."""

    alpha: float
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise DomainError(f"Mittag-Leffler alpha must be positive: {self.alpha}")


def gamma_fn(x: float) -> float:
    """Gamma function on the real line, excluding the poles ``0, -1, -2, ...``."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"Gamma function has a pole at {x}")

    return math.gamma(x)


def _rgamma(x: float) -> float:
    # 1 / Gamma(x), zero at the poles
    if x <= 0 and x == math.floor(x):
        return 0.0
    if x > 171.0:
        return math.exp(-math.lgamma(x))
    return 1.0 / math.gamma(x)


def _ml_series(p: MLParams, z: float) -> tuple[float, float]:
    """Sum the power series; returns the value and a rounding error estimate."""
    total = 0.0
    largest = 0.0
    logz = math.log(abs(z)) if z != 0.0 else -math.inf
    zk = 1.0
    peak = abs(z) ** (1.0 / p.alpha) / p.alpha if z != 0.0 else 0.0
    cap = int(min(SERIES_MAX_TERMS, SERIES_MIN_TERMS + 3.0 * peak))
    for k in range(cap):
        arg = p.alpha * k + p.beta
        if k > 0:
            zk *= z
        if arg < 170.0 and abs(zk) < 1.0e300:
            term = zk * _rgamma(arg)
        else:
            # log space keeps z^k and Gamma from overflowing separately
            sign = -1.0 if (z < 0 and k % 2) else 1.0
            logterm = k * logz - math.lgamma(arg)
            term = sign * math.exp(logterm) if logterm < 709.0 else sign * math.inf
        if not math.isfinite(term) or not math.isfinite(total + term):
            raise AccuracyError(
                f"Mittag-Leffler series overflows for alpha={p.alpha}, z={z}",
                math.inf,
            )
        total += term
        largest = max(largest, abs(term))
        # past the peak of the terms the tail is dominated by the next term
        if k > 0 and abs(term) < SERIES_RTOL * abs(total) and abs(z) ** (1 / p.alpha) < k:
            break
        if z == 0.0:
            break
    else:
        raise AccuracyError(
            f"Mittag-Leffler series did not converge in {cap} terms",
            abs(term),
        )

    return total, 4.0 * largest * 2.0**-52


def _ml_negative_integral(alpha: float, z: float) -> float:
    r"""Laplace-type integral for :math:`E_\alpha(-x)`, :math:`0 < \alpha < 1`.

    Uses :math:`E_\alpha(-t^\alpha) = \int_0^\infty e^{-r t} K_\alpha(r) \,dr`
    with the spectral density
    :math:`K_\alpha(r) = \pi^{-1} r^{\alpha - 1} \sin \alpha\pi /
    (r^{2\alpha} + 2 r^\alpha \cos \alpha\pi + 1)`, rescaled by
    :math:`r = \rho / t` so the exponential has unit rate.
    """
    t = (-z) ** (1.0 / alpha)
    s, c = math.sin(alpha * math.pi), math.cos(alpha * math.pi)

    def smooth(rho: float) -> float:
        # K_alpha(rho / t) / t without the rho^(alpha - 1) factor
        ra = (rho / t) ** alpha
        return math.exp(-rho) * t**-alpha * s / (ra * ra + 2.0 * ra * c + 1.0)

    head, e1 = integrate.quad(
        smooth, 0.0, 1.0, weight="alg", wvar=(alpha - 1.0, 0.0),
        epsabs=1.0e-14, epsrel=1.0e-12, limit=200,
    )
    tail, e2 = integrate.quad(
        lambda rho: smooth(rho) * rho ** (alpha - 1.0), 1.0, math.inf,
        epsabs=1.0e-14, epsrel=1.0e-12, limit=200,
    )
    error = (e1 + e2) / math.pi
    if error > ML_ATOL:
        raise AccuracyError("Mittag-Leffler integral representation inaccurate", error)

    return (head + tail) / math.pi


def mittag_leffler(p: MLParams, z: float) -> float:
    """Evaluate :math:`E_{\\alpha,\\beta}(z)` for real *z*.

    The power series is summed until the next term drops below ``1e-16``
    of the partial sum (at least 500 terms are allowed, more when
    the largest term lies further out). When cancellation for negative *z*
    would spoil the absolute accuracy, the integral representation is used
    instead (available for ``0 < alpha < 1, beta = 1``); otherwise an
    :class:`~dofoc.errors.AccuracyError` is raised with the achieved estimate.
    """
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"argument must be finite: {z}")

    has_integral = z < 0 and 0 < p.alpha < 1 and p.beta == 1.0
    try:
        value, estimate = _ml_series(p, z)
    except AccuracyError:
        if not has_integral:
            raise
        return _ml_negative_integral(p.alpha, z)

    # no cancellation for z >= 0: the sum is accurate to rounding relative to itself
    if estimate <= ML_ATOL or z >= 0:
        return value

    if has_integral:
        return _ml_negative_integral(p.alpha, z)

    raise AccuracyError(
        f"Mittag-Leffler series loses accuracy for alpha={p.alpha}, "
        f"beta={p.beta}, z={z}",
        estimate,
    )
