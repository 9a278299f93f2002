"""Built-in problem library used by the CLI and the acceptance suite."""

from __future__ import annotations

from typing import Callable

import numpy as np

from dofoc.operators import (
    DEFAULT_QUAD_ORDER,
    bump_distribution,
    build_distribution,
    constant_weight,
    polynomial_weight,
)
from dofoc.pmp import ControlProblem

#: width of the order bump used to emulate integer order 1
CLASSICAL_BUMP_WIDTH = 1.0e-3


def paper_example_sec4(quad_order: int = DEFAULT_QUAD_ORDER, x0: float = 1.0) -> ControlProblem:
    r"""Maximize :math:`\int_1^5 (1 - 3u) x \,dt` subject to
    :math:`{}^C\mathbb{D}^\psi x = u x`, :math:`\psi(\alpha) = \alpha / 3`,
    :math:`u \in [0, 2]`, :math:`x(1) = x_0 > 0`."""
    return ControlProblem(
        n=1,
        m_ctrl=1,
        dynamics=lambda t, x, u: u * x,
        dynamics_dx=lambda t, x, u: np.array([[u[0]]]),
        cost=lambda t, x, u: (1.0 - 3.0 * u[0]) * x[0],
        cost_dx=lambda t, x, u: np.array([1.0 - 3.0 * u[0]]),
        lo=[0.0],
        hi=[2.0],
        x0=[x0],
        horizon=(1.0, 5.0),
        dist=build_distribution(polynomial_weight([0.0, 1.0 / 3.0]), quad_order),
        control_affine=True,
        name="paper_example_sec4",
    )


def zero_dynamics(quad_order: int = DEFAULT_QUAD_ORDER) -> ControlProblem:
    """``f = 0``, ``L = -|u|^2`` on ``[0, 1]`` with ``u in [-1, 1]``; the
    optimum is ``u = 0`` with ``J = 0``."""
    return ControlProblem(
        n=1,
        m_ctrl=1,
        dynamics=lambda t, x, u: np.zeros(1),
        dynamics_dx=lambda t, x, u: np.zeros((1, 1)),
        cost=lambda t, x, u: -float(u @ u),
        cost_dx=lambda t, x, u: np.zeros(1),
        lo=[-1.0],
        hi=[1.0],
        x0=[0.0],
        horizon=(0.0, 1.0),
        dist=build_distribution(constant_weight(1.0), quad_order),
        control_affine=False,
        initial_control=[0.5],
        name="zero_dynamics",
    )


def classical_limit_lq(quad_order: int = DEFAULT_QUAD_ORDER) -> ControlProblem:
    r"""Maximize :math:`-\frac12\int_0^1 (x^2 + u^2)\,dt` with
    :math:`\dot x = u`, :math:`x(0) = 1`, orders concentrated at 1.

    In the integer-order limit the optimum is
    :math:`x = \cosh(1 - t)/\cosh 1`, :math:`u = \lambda = -\sinh(1 - t)/\cosh 1`.
    """
    return ControlProblem(
        n=1,
        m_ctrl=1,
        dynamics=lambda t, x, u: np.array([u[0]]),
        dynamics_dx=lambda t, x, u: np.zeros((1, 1)),
        cost=lambda t, x, u: -0.5 * (x[0] ** 2 + u[0] ** 2),
        cost_dx=lambda t, x, u: np.array([-x[0]]),
        lo=[-10.0],
        hi=[10.0],
        x0=[1.0],
        horizon=(0.0, 1.0),
        dist=bump_distribution(1.0, CLASSICAL_BUMP_WIDTH, quad_order),
        control_affine=False,
        name="classical_limit_lq",
    )


def classical_lq_reference(t: np.ndarray) -> dict[str, np.ndarray]:
    """Closed-form integer-order optimum of :func:`classical_limit_lq`."""
    c = np.cosh(1.0)
    return {
        "state": np.cosh(1.0 - t) / c,
        "control": -np.sinh(1.0 - t) / c,
        "adjoint": -np.sinh(1.0 - t) / c,
    }


BUILTINS: dict[str, Callable[..., ControlProblem]] = {
    "paper_example_sec4": paper_example_sec4,
    "zero_dynamics": zero_dynamics,
    "classical_limit_lq": classical_limit_lq,
}
