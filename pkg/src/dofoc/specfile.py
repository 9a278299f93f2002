"""Problem specification files.

A spec is a YAML mapping with the sections below. Parsing is strict:
unknown keys, missing sections and ill-shaped arrays are rejected with a
:class:`SpecError` that names the offending section (its ``reason``).

.. code-block:: yaml

    horizon: {a: 1.0, b: 5.0}
    initial_state: [1.0]
    psi: {kind: polynomial, coefficients: [0.0, 0.3333333333333333]}
    dynamics: {kind: builtin, name: paper_example_sec4}
    cost: {kind: builtin, name: paper_example_sec4}
    omega: [{lo: 0.0, hi: 2.0}]
    solver: {n_steps: 2000}              # optional, see SolverConfig
    initial_control: [0.0]               # optional
    diagnostics: {lipschitz_k: 2.0}      # optional

``psi`` is one of

* ``{kind: constant, value: c}``,
* ``{kind: polynomial, coefficients: [c0, c1, ...]}``,
* ``{kind: bump, center: c, width: w, mass: m}`` (``mass`` defaults to 1).

``dynamics`` is either a built-in right-hand side or
``{kind: affine, c, A, B, N}`` meaning
:math:`f = c + A x + B u + \\sum_k u_k N_k x`; ``cost`` is a built-in or
``{kind: affine, s, q, r, N, Q, R}`` meaning
:math:`L = s + q \\cdot x + r \\cdot u + x^T N u + \\frac12 x^T Q x + \\frac12 u^T R u`.
Omitted coefficient tables are zero.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from dofoc import problems
from dofoc.config import SolverConfig
from dofoc.errors import DofocError
from dofoc.operators import (
    OrderDistribution,
    bump_distribution,
    build_distribution,
    constant_weight,
    polynomial_weight,
)
from dofoc.pmp import ControlProblem


class SpecError(DofocError, ValueError):
    """Malformed specification; *reason* is the section at fault."""

    def __init__(self, reason: str, message: str) -> None:
        super().__init__(f"{reason}: {message}")
        self.reason = reason
        self.detail = message


TOP_LEVEL_KEYS = {
    "horizon", "initial_state", "psi", "dynamics", "cost", "omega",
    "solver", "initial_control", "diagnostics",
}
REQUIRED_KEYS = ("horizon", "initial_state", "psi", "dynamics", "cost", "omega")
DIAGNOSTIC_DEFAULTS: dict[str, float | None] = {"lipschitz_k": None, "control_bound_m": None}


@dataclass(frozen=True)
class LoadedSpec:
    problem: ControlProblem
    config: SolverConfig
    diagnostics: dict[str, float | None]
    #: the fully resolved spec, defaults included, for echoing in reports
    resolved: dict[str, Any]


# {{{ helpers


def _mapping(reason: str, value: Any, allowed: set[str], required: tuple[str, ...] = ()) -> dict:
    if not isinstance(value, dict):
        raise SpecError(reason, "expected a mapping")
    unknown = sorted(set(map(str, value)) - allowed)
    if unknown:
        raise SpecError(reason, f"unknown key(s) {', '.join(unknown)}")
    for key in required:
        if key not in value:
            raise SpecError(reason, f"missing key '{key}'")
    return value


def _real(reason: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(reason, f"expected a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SpecError(reason, f"expected a finite number, got {value}")
    return value


def _array(reason: str, value: Any, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SpecError(reason, f"expected a numeric array: {exc}") from None
    if arr.shape != shape:
        raise SpecError(reason, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpecError(reason, "entries must be finite")
    return arr


def _kind(reason: str, value: Any, kinds: tuple[str, ...]) -> str:
    if not isinstance(value, dict) or "kind" not in value:
        raise SpecError(reason, "missing key 'kind'")
    kind = value["kind"]
    if kind not in kinds:
        raise SpecError(reason, f"kind must be one of {', '.join(kinds)}, got {kind!r}")
    return kind


def _builtin(reason: str, value: dict) -> ControlProblem:
    _mapping(reason, value, {"kind", "name"}, ("name",))
    name = value["name"]
    if name not in problems.BUILTINS:
        raise SpecError(reason, f"unknown builtin {name!r}")
    return problems.BUILTINS[name]()


# }}}


# {{{ sections


def _parse_psi(value: Any, quad_order: int) -> tuple[OrderDistribution, dict]:
    kind = _kind("psi", value, ("constant", "polynomial", "bump"))
    if kind == "constant":
        _mapping("psi", value, {"kind", "value"})
        c = _real("psi", value.get("value", 1.0))
        return build_distribution(constant_weight(c), quad_order), {"kind": kind, "value": c}
    if kind == "polynomial":
        _mapping("psi", value, {"kind", "coefficients"}, ("coefficients",))
        coeffs = value["coefficients"]
        if not isinstance(coeffs, list) or not coeffs:
            raise SpecError("psi", "coefficients must be a non-empty list")
        coeffs = [_real("psi", c) for c in coeffs]
        return (
            build_distribution(polynomial_weight(coeffs), quad_order),
            {"kind": kind, "coefficients": coeffs},
        )

    _mapping("psi", value, {"kind", "center", "width", "mass"}, ("center", "width"))
    center = _real("psi", value["center"])
    width = _real("psi", value["width"])
    mass = _real("psi", value.get("mass", 1.0))
    if not mass > 0:
        raise SpecError("psi", f"bump mass must be positive: {mass}")
    return (
        bump_distribution(center, width, quad_order, mass=mass),
        {"kind": kind, "center": center, "width": width, "mass": mass},
    )


def _affine_dynamics(value: dict, n: int, m: int) -> tuple[dict, dict]:
    _mapping("dynamics", value, {"kind", "c", "A", "B", "N"})
    c = _array("dynamics", value.get("c", [0.0] * n), (n,))
    A = _array("dynamics", value.get("A", np.zeros((n, n)).tolist()), (n, n))
    B = _array("dynamics", value.get("B", np.zeros((n, m)).tolist()), (n, m))
    N = _array("dynamics", value.get("N", np.zeros((m, n, n)).tolist()), (m, n, n))

    def f(t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return c + A @ x + B @ u + np.einsum("k,kij,j->i", u, N, x)

    def f_x(t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return A + np.einsum("k,kij->ij", u, N)

    resolved = {"kind": "affine", "c": c.tolist(), "A": A.tolist(), "B": B.tolist(), "N": N.tolist()}
    return {"dynamics": f, "dynamics_dx": f_x}, resolved


def _affine_cost(value: dict, n: int, m: int) -> tuple[dict, dict, bool]:
    _mapping("cost", value, {"kind", "s", "q", "r", "N", "Q", "R"})
    s = _real("cost", value.get("s", 0.0))
    q = _array("cost", value.get("q", [0.0] * n), (n,))
    r = _array("cost", value.get("r", [0.0] * m), (m,))
    N = _array("cost", value.get("N", np.zeros((n, m)).tolist()), (n, m))
    Q = _array("cost", value.get("Q", np.zeros((n, n)).tolist()), (n, n))
    R = _array("cost", value.get("R", np.zeros((m, m)).tolist()), (m, m))
    Qs = 0.5 * (Q + Q.T)

    def L(t: float, x: np.ndarray, u: np.ndarray) -> float:
        return float(s + q @ x + r @ u + x @ N @ u + 0.5 * x @ Q @ x + 0.5 * u @ R @ u)

    def L_x(t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return q + N @ u + Qs @ x

    resolved = {
        "kind": "affine", "s": s, "q": q.tolist(), "r": r.tolist(),
        "N": N.tolist(), "Q": Q.tolist(), "R": R.tolist(),
    }
    return {"cost": L, "cost_dx": L_x}, resolved, not np.any(R)


# }}}


def parse_spec(
    data: Any,
    *,
    overrides: dict[str, Any] | None = None,
    name: str = "custom",
) -> LoadedSpec:
    """Validate a spec mapping and build the problem and solver configuration.

    *overrides* replace entries of the ``solver`` section (command-line
    flags take precedence over the file).
    """
    if data is None:
        data = {}
    _mapping("spec", data, TOP_LEVEL_KEYS)
    for key in REQUIRED_KEYS:
        if key not in data:
            raise SpecError(key, "section is missing")

    # solver first: the quadrature order is needed for psi
    solver_in = dict(data.get("solver") or {})
    _mapping("solver", solver_in, {f.name for f in fields(SolverConfig)})
    solver_in.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key, value in solver_in.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecError("solver", f"{key} must be numeric, got {value!r}")
    try:
        cfg = SolverConfig(**solver_in)
    except DofocError as exc:
        raise SpecError("solver", str(exc)) from None

    horizon = _mapping("horizon", data["horizon"], {"a", "b"}, ("a", "b"))
    a, b = _real("horizon", horizon["a"]), _real("horizon", horizon["b"])
    if not a < b:
        raise SpecError("horizon", f"need a < b, got a = {a}, b = {b}")

    x0_in = data["initial_state"]
    if not isinstance(x0_in, list) or not x0_in:
        raise SpecError("initial_state", "expected a non-empty list")
    x0 = np.array([_real("initial_state", v) for v in x0_in])
    n = x0.shape[0]

    omega_in = data["omega"]
    if not isinstance(omega_in, list) or not omega_in:
        raise SpecError("omega", "expected a non-empty list of {lo, hi}")
    lo, hi = [], []
    for comp in omega_in:
        _mapping("omega", comp, {"lo", "hi"}, ("lo", "hi"))
        lo.append(_real("omega", comp["lo"]))
        hi.append(_real("omega", comp["hi"]))
        if not lo[-1] <= hi[-1]:
            raise SpecError("omega", f"need lo <= hi, got [{lo[-1]}, {hi[-1]}]")
    m = len(lo)

    try:
        dist, psi_resolved = _parse_psi(data["psi"], cfg.quad_order)
    except SpecError:
        raise
    except DofocError as exc:
        raise SpecError("psi", str(exc)) from None

    affine_parts = []
    pieces: dict[str, Any] = {}
    resolved_sections: dict[str, Any] = {}
    for section in ("dynamics", "cost"):
        value = data[section]
        kind = _kind(section, value, ("builtin", "affine"))
        if kind == "builtin":
            ref = _builtin(section, value)
            if (ref.n, ref.m_ctrl) != (n, m):
                raise SpecError(
                    section,
                    f"builtin {value['name']!r} needs {ref.n} state(s) and "
                    f"{ref.m_ctrl} control(s), spec has {n} and {m}",
                )
            if section == "dynamics":
                pieces.update(dynamics=ref.dynamics, dynamics_dx=ref.dynamics_dx)
            else:
                pieces.update(cost=ref.cost, cost_dx=ref.cost_dx)
            affine_parts.append(ref.control_affine)
            resolved_sections[section] = {"kind": "builtin", "name": value["name"]}
        elif section == "dynamics":
            parts, resolved = _affine_dynamics(value, n, m)
            pieces.update(parts)
            affine_parts.append(True)
            resolved_sections[section] = resolved
        else:
            parts, resolved, linear = _affine_cost(value, n, m)
            pieces.update(parts)
            affine_parts.append(linear)
            resolved_sections[section] = resolved

    if all(p is True for p in affine_parts):
        control_affine: bool | None = True
    elif any(p is False for p in affine_parts):
        control_affine = False
    else:
        control_affine = None

    initial_control = None
    if data.get("initial_control") is not None:
        initial_control = _array("initial_control", data["initial_control"], (m,))
        if np.any(initial_control < lo) or np.any(initial_control > hi):
            raise SpecError("initial_control", "must lie in omega")

    diag_in = _mapping("diagnostics", data.get("diagnostics") or {}, set(DIAGNOSTIC_DEFAULTS))
    diagnostics = dict(DIAGNOSTIC_DEFAULTS)
    for key, value in diag_in.items():
        diagnostics[key] = _real("diagnostics", value)
        if not diagnostics[key] > 0:
            raise SpecError("diagnostics", f"{key} must be positive")

    problem = ControlProblem(
        n=n,
        m_ctrl=m,
        lo=np.array(lo),
        hi=np.array(hi),
        x0=x0,
        horizon=(a, b),
        dist=dist,
        control_affine=control_affine,
        initial_control=initial_control,
        name=name,
        **pieces,
    )

    resolved = {
        "horizon": {"a": a, "b": b},
        "initial_state": x0.tolist(),
        "psi": psi_resolved,
        "omega": [{"lo": l, "hi": h} for l, h in zip(lo, hi)],
        "solver": cfg.to_dict(),
        "initial_control": None if initial_control is None else initial_control.tolist(),
        "diagnostics": diagnostics,
        **resolved_sections,
    }
    return LoadedSpec(problem, cfg, diagnostics, resolved)


# {{{ built-in specs

BUILTIN_SPECS: dict[str, dict[str, Any]] = {
    "paper_example_sec4": {
        "horizon": {"a": 1.0, "b": 5.0},
        "initial_state": [1.0],
        "psi": {"kind": "polynomial", "coefficients": [0.0, 1.0 / 3.0]},
        "dynamics": {"kind": "builtin", "name": "paper_example_sec4"},
        "cost": {"kind": "builtin", "name": "paper_example_sec4"},
        "omega": [{"lo": 0.0, "hi": 2.0}],
    },
    "zero_dynamics": {
        "horizon": {"a": 0.0, "b": 1.0},
        "initial_state": [0.0],
        "psi": {"kind": "constant", "value": 1.0},
        "dynamics": {"kind": "builtin", "name": "zero_dynamics"},
        "cost": {"kind": "builtin", "name": "zero_dynamics"},
        "omega": [{"lo": -1.0, "hi": 1.0}],
        "initial_control": [0.5],
    },
    "classical_limit_lq": {
        "horizon": {"a": 0.0, "b": 1.0},
        "initial_state": [1.0],
        "psi": {"kind": "bump", "center": 1.0, "width": problems.CLASSICAL_BUMP_WIDTH},
        "dynamics": {"kind": "builtin", "name": "classical_limit_lq"},
        "cost": {"kind": "builtin", "name": "classical_limit_lq"},
        "omega": [{"lo": -10.0, "hi": 10.0}],
    },
}

# }}}


def load_spec(source: str | Path, *, overrides: dict[str, Any] | None = None) -> LoadedSpec:
    """Load a spec from a YAML file, or by built-in name when *source* is
    not an existing path."""
    path = Path(source)
    if not path.exists() and str(source) in BUILTIN_SPECS:
        return parse_spec(
            copy.deepcopy(BUILTIN_SPECS[str(source)]), overrides=overrides, name=str(source)
        )

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError("io", f"cannot read {source}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError("syntax", str(exc).replace("\n", " ")) from None
    return parse_spec(data, overrides=overrides, name=path.stem)
