"""Numerical knobs shared by the solvers, the sweep and the CLI."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from dofoc.errors import ValidationError


@dataclass(frozen=True)
class SolverConfig:
    n_steps: int = 2000
    quad_order: int = 20
    sweep_tol: float = 1.0e-6
    newton_tol: float = 1.0e-10
    max_inner_iters: int = 200
    max_sweeps: int = 500
    control_grid: int = 101
    needle_tol: float = 1.0e-3
    gamma: float = 0.5

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValidationError(f"solver.{f.name} must be positive: {value}")
        for name in ("n_steps", "quad_order", "max_inner_iters", "max_sweeps", "control_grid"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValidationError(f"solver.{name} must be an integer")
        if self.n_steps < 2:
            raise ValidationError(f"solver.n_steps must be >= 2: {self.n_steps}")
        if self.quad_order < 2:
            raise ValidationError(f"solver.quad_order must be >= 2: {self.quad_order}")
        if self.control_grid < 2:
            raise ValidationError(f"solver.control_grid must be >= 2: {self.control_grid}")
        if self.gamma > 1:
            raise ValidationError(f"solver.gamma must lie in (0, 1]: {self.gamma}")

    def to_dict(self) -> dict[str, float | int]:
        return asdict(self)
