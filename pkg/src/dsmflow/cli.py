"""Command-line interface: reproducible flow solves and condition checks.

Commands write machine-readable CSV/JSON artifacts into --out-dir; every
JSON report embeds the full run manifest (no timestamps), so identical
flags, seed and inputs reproduce identical bytes.

Exit codes: 0 when the command's success condition holds, 2 when the
computation ran but did not meet it (non-converged solve, diverged Newton),
1 for usage and I/O errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .conditions import admissibility_check, estimate_constants
from .flow import (
    STOP_CONVERGED,
    FlowConfig,
    decay_fit,
    integrate_flow,
    write_trajectory_csv,
)
from .newton_lab import (
    ClassicalIFTConfig,
    ContractionEscapeError,
    ConvergenceError,
    contraction_solve,
    newton_solve,
    smoothing_loss_probe,
    write_iteration_csv,
    write_loss_probe_csv,
)
from .operators import OPERATOR_IDS, ProblemSetup, make_operator
from .scale import GridFunction, read_grid_csv, sobolev_norm, write_grid_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2

H_FAMILIES = ("scaled-linear", "quadratic-perturb")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser, n_default=201):
    parser.add_argument("--operator", choices=OPERATOR_IDS, default="volterra-quadratic")
    parser.add_argument("--n", type=int, default=n_default, help="grid-point count")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--u-min", type=float, default=0.1,
                        help="guard for the division in the inverse derivative")
    parser.add_argument("--radius", type=float, default=0.05,
                        help="working-ball radius around the reference point")


def _add_h_flags(parser):
    parser.add_argument("--h-file", type=Path, help="right-hand side as grid CSV")
    parser.add_argument("--h-family", choices=H_FAMILIES,
                        help="built-in analytic right-hand side family")
    parser.add_argument("--param", type=float, default=1.1,
                        help="parameter of --h-family")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsmflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="integrate the Newton flow for one right-hand side")
    _add_common(p)
    _add_h_flags(p)
    p.add_argument("--u0-file", type=Path, help="initial iterate as grid CSV (default: U)")
    p.add_argument("--scheme", choices=("euler", "rk4"), default="rk4")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=30.0)
    p.add_argument("--eps-rel", type=float, default=0.0)
    p.add_argument("--eps-abs", type=float, default=1e-8)
    p.add_argument("--record-stride", type=int, default=1)
    p.add_argument("--enforce-ball", action="store_true")
    p.add_argument("--samples", type=int, default=200,
                   help="sample count for the constants estimate")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="estimate condition constants on the working ball")
    _add_common(p)
    _add_h_flags(p)
    p.add_argument("--u0-file", type=Path)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("probe-loss", help="inverse-derivative amplification per sine mode")
    _add_common(p, n_default=401)
    p.add_argument("--k-max", type=int, default=32)
    p.set_defaults(func=cmd_probe_loss)

    p = sub.add_parser("compare-newton", help="Newton iteration next to a default flow solve")
    _add_common(p)
    _add_h_flags(p)
    p.add_argument("--u0-file", type=Path)
    p.add_argument("--max-iter", type=int, default=25)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_compare_newton)

    p = sub.add_parser("classical-ift", help="contraction solve of the pointwise map z + z^2")
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--p", type=float, default=0.1, help="constant right-hand side")
    p.add_argument("--p-file", type=Path, help="right-hand side as grid CSV")
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_classical_ift)

    return parser


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run; embedded in every JSON report.

    Deliberately carries no timestamps so identical flags, seed and inputs
    reproduce identical bytes.
    """

    command: str
    operator: str | None
    n: int | None
    seed: int | None
    parameters: dict = field(default_factory=dict)
    input_files: dict = field(default_factory=dict)
    output_files: dict = field(default_factory=dict)
    version: str = __version__


def _manifest(args, inputs: dict, outputs: dict) -> dict:
    skip = {"func", "command", "operator", "n", "seed", "out_dir",
            "u0_file", "h_file", "p_file"}
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in skip and not callable(v) and not isinstance(v, Path)}
    manifest = RunManifest(
        command=args.command,
        operator=getattr(args, "operator", None),
        n=getattr(args, "n", None),
        seed=getattr(args, "seed", None),
        parameters=params,
        input_files={k: str(v) for k, v in inputs.items()},
        output_files={k: str(v) for k, v in outputs.items()},
    )
    return asdict(manifest)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _build_setup(args) -> ProblemSetup:
    operator = make_operator(args.operator, u_min=args.u_min)
    return ProblemSetup.from_reference(
        operator, GridFunction.constant(1.0, args.n), args.radius)


def _family_h(family: str, param: float, n: int) -> GridFunction:
    x = GridFunction.constant(0.0, n).x
    if family == "scaled-linear":
        return GridFunction(param * param * x)
    if family == "quadratic-perturb":
        return GridFunction(x + param * x * x)
    raise ValueError(f"unknown h family {family!r}")


def _load_h(args, setup: ProblemSetup, inputs: dict) -> GridFunction:
    if args.h_file is not None and args.h_family is not None:
        raise ValueError("--h-file and --h-family are mutually exclusive")
    if args.h_file is not None:
        inputs["h"] = args.h_file
        return read_grid_csv(args.h_file)
    if args.h_family is not None:
        return _family_h(args.h_family, args.param, args.n)
    return setup.f


def _load_u0(args, setup: ProblemSetup, inputs: dict) -> GridFunction:
    if getattr(args, "u0_file", None) is not None:
        inputs["u0"] = args.u0_file
        return read_grid_csv(args.u0_file)
    return setup.U


def _family_solution(args, setup: ProblemSetup) -> GridFunction | None:
    """Analytic solution for built-in families, scalar-evaluated per node."""
    if args.h_family is None and args.h_file is not None:
        return None
    family = args.h_family or "trivial"
    x = setup.U.x
    if args.operator == "volterra-quadratic":
        if family == "scaled-linear":
            vals = [abs(args.param) for _ in x]
        elif family == "quadratic-perturb":
            if 1.0 + 2.0 * args.param * 1.0 <= 0.0:
                return None
            vals = [math.sqrt(1.0 + 2.0 * args.param * xi) for xi in x]
        else:
            vals = [1.0 for _ in x]
    else:
        if family == "scaled-linear":
            vals = [args.param * args.param for _ in x]
        elif family == "quadratic-perturb":
            vals = [1.0 + 2.0 * args.param * xi for xi in x]
        else:
            vals = [1.0 for _ in x]
    return GridFunction(vals)


def cmd_solve(args) -> int:
    setup = _build_setup(args)
    inputs: dict = {}
    h = _load_h(args, setup, inputs)
    u0 = _load_u0(args, setup, inputs)
    report = estimate_constants(setup, args.samples, args.seed)
    verdict = admissibility_check(setup, u0, h, report)
    cfg = FlowConfig(scheme=args.scheme, dt=args.dt, t_max=args.t_max,
                     eps_rel=args.eps_rel, eps_abs=args.eps_abs,
                     record_stride=args.record_stride,
                     enforce_ball=args.enforce_ball)
    traj = integrate_flow(setup, u0, h, cfg)
    try:
        slope, r_squared = decay_fit(traj)
    except ValueError:
        slope, r_squared = None, None

    args.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "trajectory": args.out_dir / "trajectory.csv",
        "final_u": args.out_dir / "final_u.csv",
        "summary": args.out_dir / "solve_summary.json",
    }
    write_trajectory_csv(traj, outputs["trajectory"])
    write_grid_csv(traj.final_u, outputs["final_u"])
    _write_json(outputs["summary"], {
        "stop_reason": traj.stop_reason,
        "final_t": traj.final_t,
        "g0": traj.g0,
        "g_final": traj.g_final,
        "decay_slope": slope,
        "decay_r_squared": r_squared,
        "r_bound": verdict.r,
        "admissible": verdict.admissible,
        "rho0": verdict.rho0,
        "margin": verdict.margin,
        "manifest": _manifest(args, inputs, outputs),
    })
    return EXIT_OK if traj.stop_reason == STOP_CONVERGED else EXIT_FAILED


def cmd_verify(args) -> int:
    setup = _build_setup(args)
    inputs: dict = {}
    h = _load_h(args, setup, inputs)
    u0 = _load_u0(args, setup, inputs)
    report = estimate_constants(setup, args.samples, args.seed)
    verdict = admissibility_check(setup, u0, h, report)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {"constants": args.out_dir / "constants.json"}
    _write_json(outputs["constants"], {
        "c0_lower": report.c0_lower,
        "c0_upper": report.c0_upper,
        "c_iso": report.c_iso,
        "c_lip": report.c_lip,
        "rho0": report.rho0,
        "r": verdict.r,
        "sample_count": report.sample_count,
        "seed": report.seed,
        "skipped": report.skipped,
        "admissible": verdict.admissible,
        "margin": verdict.margin,
        "manifest": _manifest(args, inputs, outputs),
    })
    return EXIT_OK


def cmd_probe_loss(args) -> int:
    setup = _build_setup(args)
    result = smoothing_loss_probe(setup, setup.U, args.k_max)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "modes": args.out_dir / "loss_probe.csv",
        "summary": args.out_dir / "loss_probe.json",
    }
    write_loss_probe_csv(result, outputs["modes"])
    _write_json(outputs["summary"], {
        "exponent": result.exponent,
        "k_max": args.k_max,
        "ratio_same_index_k1": result.modes[1].ratio_same_index,
        "ratio_shifted_index_k1": result.modes[1].ratio_shifted_index,
        "manifest": _manifest(args, {}, outputs),
    })
    return EXIT_OK


def cmd_compare_newton(args) -> int:
    setup = _build_setup(args)
    inputs: dict = {}
    h = _load_h(args, setup, inputs)
    u0 = _load_u0(args, setup, inputs)
    oracle = _family_solution(args, setup)
    record = newton_solve(setup, u0, h, max_iter=args.max_iter, tol=args.tol,
                          oracle=oracle)
    traj = integrate_flow(setup, u0, h, FlowConfig())

    args.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "iterations": args.out_dir / "newton_iterations.csv",
        "flow_trajectory": args.out_dir / "flow_trajectory.csv",
        "summary": args.out_dir / "newton_comparison.json",
    }
    write_iteration_csv(record, outputs["iterations"])
    write_trajectory_csv(traj, outputs["flow_trajectory"])
    _write_json(outputs["summary"], {
        "newton": {
            "converged": record.converged,
            "iterations": record.steps[-1].k,
            "final_residual": record.steps[-1].residual,
            "diverged_at": record.diverged_at,
        },
        "flow": {
            "stop_reason": traj.stop_reason,
            "final_t": traj.final_t,
            "g0": traj.g0,
            "g_final": traj.g_final,
        },
        "manifest": _manifest(args, inputs, outputs),
    })
    return EXIT_OK if record.converged else EXIT_FAILED


def cmd_classical_ift(args) -> int:
    inputs: dict = {}
    if args.p_file is not None:
        inputs["p"] = args.p_file
        p_rhs = read_grid_csv(args.p_file)
    else:
        p_rhs = GridFunction.constant(args.p, args.n)
    cfg = ClassicalIFTConfig(m=args.m, epsilon=args.epsilon,
                             max_iter=args.max_iter, tol=args.tol)

    def phi(z: GridFunction) -> GridFunction:
        return z + z * z

    args.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "solution": args.out_dir / "contraction_solution.csv",
        "summary": args.out_dir / "classical_ift.json",
    }
    try:
        z = contraction_solve(phi, p_rhs, cfg)
    except (ContractionEscapeError, ConvergenceError) as exc:
        _write_json(outputs["summary"], {
            "solved": False,
            "reason": str(exc),
            "manifest": _manifest(args, inputs, outputs),
        })
        return EXIT_FAILED

    payload = {
        "solved": True,
        "defect": sobolev_norm(phi(z) - p_rhs, 0),
        "z_min": z.min(),
        "z_max": z.max(),
        "manifest": _manifest(args, inputs, outputs),
    }
    if args.p_file is None:
        oracle = (-1.0 + math.sqrt(1.0 + 4.0 * args.p)) / 2.0
        payload["oracle"] = oracle
        payload["oracle_max_error"] = float(max(abs(v - oracle) for v in z.values))
    write_grid_csv(z, outputs["solution"])
    _write_json(outputs["summary"], payload)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"dsmflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"dsmflow: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
