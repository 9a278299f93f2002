"""Command-line front end: ``dofoc solve | validate | probe``.

Exit codes
----------
0  success (converged solve, all needles pass, probe properties hold)
1  the problem file could not be parsed
2  a solver or I/O error (including a solution/spec grid mismatch)
3  ``solve`` only: the sweep did not converge; the best iterate is written
4  ``validate``/``probe``: the check ran but did not pass

Errors are reported as a single JSON line on stderr with keys ``error``
(``parse`` or ``solver``), ``reason`` and ``detail``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from dofoc import __version__
from dofoc.artifacts import (
    REPORT_NAME,
    TRACES,
    GridMismatchError,
    read_trajectory,
    report_json,
    write_report,
    write_trajectory,
)
from dofoc.errors import DofocError
from dofoc.operators import (
    OrderDistribution,
    TimeGrid,
    Trajectory,
    do_rl_caputo_relation_residual,
    integration_by_parts_residual,
)
from dofoc.pmp import (
    NeedleSpec,
    PMPSolution,
    continuity_rate_probe,
    needle_optimality_check,
    random_needles,
    solution_from_control,
    solve_pmp,
    variational_gaps,
)
from dofoc.specfile import LoadedSpec, SpecError, load_spec

log = logging.getLogger("dofoc")

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_SOLVER = 2
EXIT_NOT_CONVERGED = 3
EXIT_FAILED = 4

#: refinement levels of the operator probe
REFINEMENT_STEPS = (500, 1000, 2000, 4000)
#: minimal empirical order accepted by the operator probe
MIN_ORDER = 0.5
#: continuity ladder as fractions of the horizon length
CONTINUITY_LADDER = (0.1, 0.05, 0.025, 0.0125)
#: variational ladder in grid steps
VARIATIONAL_LADDER = (24, 12, 6, 3)
#: admissible range of successive gap ratios for the variational probe
VARIATIONAL_RATIO = (0.35, 0.8)


class CommandError(Exception):
    def __init__(self, code: int, kind: str, reason: str, detail: str) -> None:
        super().__init__(detail)
        self.code = code
        self.kind = kind
        self.reason = reason
        self.detail = detail


# {{{ helpers


def _load(args: argparse.Namespace) -> LoadedSpec:
    overrides = {"n_steps": args.n_steps, "quad_order": args.quad_order}
    try:
        return load_spec(args.spec, overrides=overrides)
    except SpecError as exc:
        raise CommandError(EXIT_PARSE, "parse", exc.reason, exc.detail) from None


def _solver_error(exc: Exception) -> CommandError:
    return CommandError(EXIT_SOLVER, "solver", type(exc).__name__, str(exc))


def _solve(spec: LoadedSpec) -> PMPSolution:
    try:
        return solve_pmp(spec.problem, spec.config)
    except (DofocError, ArithmeticError, ValueError) as exc:
        raise _solver_error(exc) from None


def _emit(report: dict[str, Any], out: str | None) -> None:
    if out is not None:
        write_report(Path(out), report)
    sys.stdout.write(report_json(report))


def _header(command: str, spec: LoadedSpec) -> dict[str, Any]:
    return {
        "command": command,
        "problem": spec.problem.name,
        "spec": spec.resolved,
        "version": __version__,
        "approximate_derivatives": spec.problem.approximate_derivatives,
    }


def _empirical_orders(values: Sequence[float], steps: Sequence[int]) -> list[float]:
    orders = []
    for (r1, n1), (r2, n2) in zip(zip(values, steps), zip(values[1:], steps[1:])):
        if r1 > 0 and r2 > 0:
            orders.append(math.log(r1 / r2) / math.log(n2 / n1))
        else:
            orders.append(math.nan)
    return orders


def solution_summary(sol: PMPSolution) -> dict[str, Any]:
    return {
        "J": sol.cost_value,
        "converged": sol.converged,
        "sweep_iterations": sol.sweep_iterations,
        "hamiltonian_residual": sol.hamiltonian_residual,
        "transversality_residual": sol.transversality_residual,
        "switch_times": [list(s) for s in sol.switch_times],
    }


# }}}


# {{{ solve


def cmd_solve(args: argparse.Namespace) -> int:
    spec = _load(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(EXIT_SOLVER, "solver", "io", str(exc)) from None

    sol = _solve(spec)
    report = _header("solve", spec)
    report.update(solution_summary(sol))
    try:
        for name, traj in (("state", sol.state), ("control", sol.control), ("adjoint", sol.adjoint)):
            write_trajectory(out / f"{name}.csv", traj, TRACES[name])
        write_report(out / REPORT_NAME, report)
    except OSError as exc:
        raise CommandError(EXIT_SOLVER, "solver", "io", str(exc)) from None
    sys.stdout.write(report_json(report))
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


# }}}


# {{{ validate


def cmd_validate(args: argparse.Namespace) -> int:
    spec = _load(args)
    prob, cfg = spec.problem, spec.config
    grid = prob.grid(cfg)
    if args.needles < 0:
        raise CommandError(EXIT_PARSE, "parse", "needles", "needle count must be >= 0")

    try:
        u = read_trajectory(Path(args.sol) / "control.csv", TRACES["control"], grid)
    except GridMismatchError as exc:
        raise CommandError(EXIT_SOLVER, "solver", "grid", str(exc)) from None
    except (OSError, DofocError) as exc:
        raise CommandError(EXIT_SOLVER, "solver", "solution", str(exc)) from None
    if u.dim != prob.m_ctrl:
        raise CommandError(
            EXIT_SOLVER, "solver", "solution",
            f"control has {u.dim} components, spec has {prob.m_ctrl}",
        )
    if np.any(u.values < prob.lo - 1e-12) or np.any(u.values > prob.hi + 1e-12):
        raise CommandError(EXIT_SOLVER, "solver", "solution", "control leaves omega")

    try:
        sol = solution_from_control(prob, u, cfg)
        specs = random_needles(prob, grid, args.needles, args.seed)
        result = needle_optimality_check(prob, sol, specs, cfg)
    except (DofocError, ArithmeticError, ValueError) as exc:
        raise _solver_error(exc) from None

    if args.needles == 0:
        print("warning: no needles requested; validation passes trivially", file=sys.stderr)
    for notice in result.notices:
        print(f"notice: {notice}", file=sys.stderr)

    report = _header("validate", spec)
    report.update(
        {
            "seed": args.seed,
            "needle_count": args.needles,
            "J": sol.cost_value,
            "tolerance": result.tolerance,
            "passed": result.passed,
            "worst": result.worst if result.results else None,
            "needles": [
                {
                    "tau": r.spec.tau,
                    "v": r.spec.v.tolist(),
                    "theta": r.spec.theta,
                    "widths": list(r.thetas),
                    "quotients": list(r.quotients),
                    "extrapolated": r.extrapolated,
                    "status": "PASS" if r.passed else "FAIL",
                }
                for r in result.results
            ],
        }
    )
    _emit(report, args.report)
    return EXIT_OK if result.passed else EXIT_FAILED


# }}}


# {{{ probe


def operator_refinement(
    dist: OrderDistribution, a: float, b: float, steps: Sequence[int] = REFINEMENT_STEPS
) -> dict[str, Any]:
    """Refinement tables for the RL/Caputo relation (``x = (t - a)^2``) and
    integration by parts (``x = sin(t - a)``, ``y = (t - a)^2``)."""
    relation, parts = [], []
    for n in steps:
        grid = TimeGrid(a, b, n)
        sq = Trajectory.from_function(grid, lambda t: ((t - a) ** 2)[:, None])
        sn = Trajectory.from_function(grid, lambda t: np.sin(t - a)[:, None])
        relation.append(do_rl_caputo_relation_residual(sq, dist))
        parts.append(integration_by_parts_residual(sn, sq, dist))

    tables = {}
    passed = True
    for name, values in (("rl_caputo_relation", relation), ("integration_by_parts", parts)):
        orders = _empirical_orders(values, steps)
        decreasing = all(r2 < r1 for r1, r2 in zip(values, values[1:]))
        ok = decreasing and all(o >= MIN_ORDER for o in orders)
        passed = passed and ok
        tables[name] = {
            "n_steps": list(steps),
            "residual": values,
            "empirical_order": orders,
            "decreasing": decreasing,
            "status": "PASS" if ok else "FAIL",
        }
    return {"tables": tables, "passed": passed}


def _needle_from_args(args: argparse.Namespace, spec: LoadedSpec, sol: PMPSolution) -> NeedleSpec:
    prob = spec.problem
    a, b = prob.horizon
    grid = sol.control.grid
    tau = args.tau if args.tau is not None else a + 0.5 * (b - a)
    if args.v is not None:
        v = np.array(args.v, dtype=np.float64)
    else:
        v = prob.lo.copy()
    # the width is a placeholder; probes replace it by the ladder
    needle = NeedleSpec(tau=tau, v=v, theta=grid.h)
    try:
        needle.validate(prob)
    except DofocError as exc:
        raise CommandError(EXIT_PARSE, "parse", "needle", str(exc)) from None
    return needle


def probe_continuity(
    spec: LoadedSpec, sol: PMPSolution, needle: NeedleSpec, ladder: Sequence[float]
) -> dict[str, Any]:
    rep = continuity_rate_probe(
        spec.problem, sol, needle, ladder, spec.config,
        lipschitz_k=spec.diagnostics["lipschitz_k"],
        control_bound_m=spec.diagnostics["control_bound_m"],
    )
    return {
        "tau": needle.tau,
        "v": needle.v.tolist(),
        "thetas": list(rep.thetas),
        "deviations": list(rep.deviations),
        "exponent": rep.exponent,
        "log_constant": rep.log_constant,
        "monotone": rep.monotone,
        "degenerate": rep.degenerate,
        "gronwall_constant": rep.bound_constant,
        "bound_holds": rep.bound_holds,
        "lipschitz_k": rep.lipschitz_k,
        "control_bound_m": rep.control_bound_m,
        "passed": rep.passed,
    }


def probe_variational(
    spec: LoadedSpec,
    sol: PMPSolution,
    needle: NeedleSpec,
    ladder: Sequence[float],
    window: tuple[float, float] | None = None,
) -> dict[str, Any]:
    b = spec.problem.horizon[1]
    if window is None:
        window = (needle.tau + 0.25 * (b - needle.tau), b)
    _, gaps = variational_gaps(spec.problem, sol, needle, ladder, spec.config, window)
    degenerate = all(g == 0.0 for g in gaps)
    ratios = [g2 / g1 if g1 > 0 else math.nan for g1, g2 in zip(gaps, gaps[1:])]
    lo, hi = VARIATIONAL_RATIO
    passed = degenerate or all(lo <= r <= hi for r in ratios)
    return {
        "tau": needle.tau,
        "v": needle.v.tolist(),
        "window": list(window),
        "thetas": list(ladder),
        "gaps": gaps,
        "ratios": ratios,
        "ratio_range": [lo, hi],
        "degenerate": degenerate,
        "passed": passed,
    }


def cmd_probe(args: argparse.Namespace) -> int:
    spec = _load(args)
    prob = spec.problem
    a, b = prob.horizon
    report = _header("probe", spec)
    report["kind"] = args.kind

    try:
        if args.kind == "operators":
            result = operator_refinement(prob.dist, a, b)
        else:
            sol = _solve(spec)
            report["solution"] = solution_summary(sol)
            needle = _needle_from_args(args, spec, sol)
            h = sol.control.grid.h
            if args.kind == "continuity":
                ladder = args.thetas or [f * (b - a) for f in CONTINUITY_LADDER]
                result = probe_continuity(spec, sol, needle, ladder)
            else:
                ladder = args.thetas or [k * h for k in VARIATIONAL_LADDER]
                result = probe_variational(spec, sol, needle, ladder)
    except CommandError:
        raise
    except (DofocError, ArithmeticError, ValueError) as exc:
        raise _solver_error(exc) from None

    report.update(result)
    _emit(report, args.report)
    return EXIT_OK if result["passed"] else EXIT_FAILED


# }}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dofoc",
        allow_abbrev=False,
        description="Distributed-order fractional optimal control via the maximum principle.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("spec", help="YAML spec file or built-in problem name")
        p.add_argument("--n-steps", type=int, default=None, help="override solver.n_steps")
        p.add_argument("--quad-order", type=int, default=None, help="override solver.quad_order")

    p = sub.add_parser("solve", help="solve the maximum principle system")
    common(p)
    p.add_argument("--out", required=True, help="output directory for traces and report")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="needle-variation test of a stored control")
    common(p)
    p.add_argument("--sol", required=True, help="directory containing control.csv")
    p.add_argument("--needles", type=int, default=16, help="number of random needles")
    p.add_argument("--seed", type=int, default=0, help="seed of the needle generator")
    p.add_argument("--report", default=None, help="also write the report to this file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("probe", help="convergence diagnostics")
    common(p)
    p.add_argument("--kind", required=True, choices=("continuity", "variational", "operators"))
    p.add_argument("--tau", type=float, default=None, help="needle time (default: midpoint)")
    p.add_argument("--v", type=float, nargs="+", default=None, help="needle value (default: lower bound)")
    p.add_argument("--thetas", type=float, nargs="+", default=None, help="decreasing width ladder")
    p.add_argument("--report", default=None, help="also write the report to this file")
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CommandError as exc:
        line = {"error": exc.kind, "reason": exc.reason, "detail": exc.detail}
        print(json.dumps(line, sort_keys=True), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
