"""Command line entry point: ``run``, ``sweep`` and ``mesh`` subcommands."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import BenchmarkCase, emit_csv, grid, load_case, run_sweep
from .meshgen import benchmark_mesh


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _depths(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _two_stage(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected m_small,m_large,threshold")
    return (int(parts[0]), int(parts[1]), float(parts[2]))


def _add_case_flags(p: argparse.ArgumentParser, sweep: bool) -> None:
    p.add_argument("--mesh-n", type=int, help="subdivisions per side of the base mesh")
    p.add_argument("--layers", type=int, help="boundary refinement layers")
    p.add_argument("--family", choices=["taylor-hood", "scott-vogelius"])
    p.add_argument("--method", choices=["picard", "newton"])
    p.add_argument("--two-stage", type=_two_stage, metavar="M_SMALL,M_LARGE,THRESHOLD")
    p.add_argument("--linesearch", choices=["none", "ls1", "ls2"])
    p.add_argument("--beta-grid", action="store_true", help="choose beta from {1/16, ..., 1} by look-ahead")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory for CSV files")
    if sweep:
        p.add_argument("--ra", type=_floats, required=True, help="comma-separated Rayleigh numbers")
        p.add_argument("--m", type=_depths, default=[0], help="comma-separated depths")
        p.add_argument("--beta", type=_floats, default=None, help="comma-separated damping factors")
        p.add_argument("--workers", type=int, default=1)
    else:
        p.add_argument("--config", type=Path, help="key = value case file")
        p.add_argument("--ra", type=float)
        p.add_argument("--m", type=int)
        p.add_argument("--beta", type=float)


def _overrides(args) -> dict:
    out = {}
    for flag, field in (("mesh_n", "mesh_n"), ("layers", "boundary_layers"), ("family", "family"),
                        ("method", "method"), ("two_stage", "two_stage"), ("linesearch", "linesearch"),
                        ("tol", "tol"), ("max_iters", "max_iters")):
        val = getattr(args, flag, None)
        if val is not None:
            out[field] = val
    if args.beta_grid:
        out["beta_grid"] = True
    return out


def _print_results(results) -> None:
    print(f"{'Ra':>10} {'method':>7} {'m':>6} {'beta':>6} {'status':>10} {'iters':>6} {'seconds':>8}")
    for case, rec in results:
        print(f"{case.Ra:>10.3g} {case.method:>7} {case.depth_label:>6} {case.beta_mode:>6} "
              f"{rec.status:>10} {rec.iterations:>6} {rec.seconds:>8.2f}")


def cmd_run(args) -> int:
    case = load_case(args.config) if args.config else BenchmarkCase()
    kw = _overrides(args)
    if args.ra is not None:
        kw["Ri"] = args.ra * case.nu * case.kappa
    if args.m is not None:
        kw["m"] = args.m
    if args.beta is not None:
        kw["beta"] = args.beta
    case = replace(case, **kw)
    results = run_sweep([case])
    emit_csv(results, args.out)
    _print_results(results)
    return 0 if results[0][1].converged else 1


def cmd_sweep(args) -> int:
    kw = _overrides(args)
    two_stage = kw.pop("two_stage", None)
    depths = list(args.m) + ([two_stage] if two_stage else [])
    betas = args.beta if args.beta is not None else [None]
    if kw.get("linesearch", "none") != "none":
        betas = [kw.pop("linesearch")]
    if kw.pop("beta_grid", False):
        betas = ["grid"]
    cases = grid(args.ra, depths, betas, **kw)
    results = run_sweep(cases, workers=args.workers)
    emit_csv(results, args.out)
    _print_results(results)
    return 0


def cmd_mesh(args) -> int:
    mesh = benchmark_mesh(args.mesh_n, args.layers, args.alfeld)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    mesh.write(args.out)
    print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boussinesq-aa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single case")
    _add_case_flags(p_run, sweep=False)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a grid of cases")
    _add_case_flags(p_sweep, sweep=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_mesh = sub.add_parser("mesh", help="export a benchmark mesh as text")
    p_mesh.add_argument("--mesh-n", type=int, default=16)
    p_mesh.add_argument("--layers", type=int, default=1)
    p_mesh.add_argument("--alfeld", action="store_true")
    p_mesh.add_argument("--out", type=Path, default=Path("mesh.txt"))
    p_mesh.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
