"""Reading and writing solution traces and reports.

Traces are CSV with a one-line header (``t,x1,...``) and values printed
with 17 significant digits, which round-trips IEEE doubles exactly.
Reports are JSON with sorted keys. All files are written to a temporary
file in the target directory and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from dofoc.errors import ValidationError
from dofoc.operators import TimeGrid, Trajectory

#: file name and column prefix of each trace
TRACES = {"state": "x", "control": "u", "adjoint": "l"}
REPORT_NAME = "report.json"


def _format(value: float) -> str:
    return f"{value:.17g}" if math.isfinite(value) else str(value)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(traj: Trajectory, prefix: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"{prefix}{k + 1}" for k in range(traj.dim)])
    for t, row in zip(traj.t, traj.values):
        writer.writerow([_format(t)] + [_format(v) for v in row])
    return buf.getvalue()


def write_trajectory(path: Path, traj: Trajectory, prefix: str) -> None:
    write_atomic(path, trajectory_csv(traj, prefix))


def read_trajectory(path: Path, prefix: str, grid: TimeGrid) -> Trajectory:
    """Read a trace and check it lives on *grid* (to 1e-12 relative)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t" or any(
        h != f"{prefix}{k + 1}" for k, h in enumerate(header[1:])
    ) or len(header) < 2:
        raise ValidationError(f"{path}: bad header {','.join(header)}")
    try:
        data = np.array([[float(v) for v in row] for row in body], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")

    scale = max(1.0, abs(grid.a), abs(grid.b))
    if data.shape[0] != len(grid) or np.max(np.abs(data[:, 0] - grid.nodes)) > 1e-12 * scale:
        raise GridMismatchError(
            f"{path}: {data.shape[0]} samples do not match the grid "
            f"[{grid.a}, {grid.b}] with {grid.n_steps} steps"
        )
    return Trajectory(grid, data[:, 1:])


class GridMismatchError(ValidationError):
    pass


def report_json(report: dict[str, Any]) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_report(path: Path, report: dict[str, Any]) -> None:
    write_atomic(path, report_json(report))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value
