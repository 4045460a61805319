"""Command line entry point.

Exit codes: 0 success, 1 numerical or input failure (a JSON error object is
printed to stdout), 2 usage error, 3 solver finished without convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import ExperimentSpec, run_experiment, write_outputs
from .filters import FilterPlan, degree_heuristic, estimate_eigencount, map_window, scalar_filter_eval
from .linalg import SpectralBounds, estimate_bounds
from .mmio import load_matrix_market
from .solver import MODES, NORMS, SolverConfig, solve

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3


def _window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be 'a,b', got {text!r}") from None
    if not a < b:
        raise argparse.ArgumentTypeError(f"window needs a < b, got {text!r}")
    return a, b


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--matrix", required=True, help="Matrix Market coordinate file")
    p.add_argument("--window", required=True, type=_window, metavar="A,B")
    p.add_argument("--margin", type=float, default=0.01, help="spectral bound inflation (default 0.01)")
    p.add_argument("--lanczos-iters", type=int, default=80)
    deg = p.add_mutually_exclusive_group()
    deg.add_argument("--degree", type=int, help="fixed series degree d")
    deg.add_argument("--auto-degree", nargs=2, type=float, metavar=("D", "K"),
                     help="degree heuristic constants (default 2 5)")
    p.add_argument("--moments", "-M", type=int, default=8, dest="M")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cjslice", description="Interval eigensolver for sparse Hermitian matrices")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="eigenpairs in a window, as JSON")
    _add_problem_args(s)
    s.add_argument("--mode", choices=MODES, default="rrr")
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--delta", type=float, default=1e-4)
    s.add_argument("--trunc-tol", type=float, default=1e-12)
    s.add_argument("--max-restarts", type=int, default=10)
    s.add_argument("--ell", type=int, help="block width (default from the target count)")
    s.add_argument("--n-target", type=int, help="number of eigenvalues expected in the window")
    s.add_argument("--C", type=float, default=1.0, dest="C")
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--norm", choices=NORMS, default="auto",
                   help="norm used in the relative residual (auto: per mode)")
    s.add_argument("--vectors", action="store_true", help="include eigenvectors in the JSON")
    s.add_argument("--trace-csv", help="write per-restart trace rows here")

    c = sub.add_parser("count", help="stochastic eigenvalue count in a window")
    _add_problem_args(c)
    c.add_argument("--samples", type=int, default=100)

    f = sub.add_parser("filter-plot", help="CSV of scalar filter values on a grid")
    f.add_argument("--window", required=True, type=_window, metavar="A,B",
                   help="window in the bounds' coordinates")
    f.add_argument("--bounds", type=_window, default=(-1.0, 1.0), metavar="LO,HI")
    deg = f.add_mutually_exclusive_group()
    deg.add_argument("--degree", type=int)
    deg.add_argument("--auto-degree", nargs=2, type=float, metavar=("D", "K"))
    f.add_argument("--moments", "-M", type=int, default=1, dest="M")
    f.add_argument("--points", type=int, default=2001)
    f.add_argument("--out")

    b = sub.add_parser("bench", help="run an experiment spec (JSON)")
    b.add_argument("spec")
    b.add_argument("--csv")
    b.add_argument("--json")
    b.add_argument("--workers", type=int)
    return parser


def _degree(args, window) -> int:
    if args.degree is not None:
        return args.degree
    D, K = args.auto_degree if args.auto_degree else (2.0, 5.0)
    return degree_heuristic(window, args.M, D, K)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _cmd_solve(args) -> int:
    A = load_matrix_market(args.matrix)
    bounds = estimate_bounds(A, args.margin, args.lanczos_iters, seed=args.seed)
    D, K = args.auto_degree if args.auto_degree else (2.0, 5.0)
    cfg = SolverConfig(window=args.window, M=args.M, ell=args.ell, degree=args.degree, D=D, K=K,
                       tol=args.tol, mode=args.mode, delta=args.delta, trunc_tol=args.trunc_tol,
                       C=args.C, kappa=args.kappa, max_restarts=args.max_restarts, seed=args.seed,
                       n_target=args.n_target, norm=args.norm)
    rep = solve(A, bounds, cfg)
    _emit(rep.to_json(include_vectors=args.vectors, indent=1), args.out)
    if args.trace_csv:
        Path(args.trace_csv).write_text(rep.trace_csv())
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def _cmd_count(args) -> int:
    A = load_matrix_market(args.matrix)
    bounds = estimate_bounds(A, args.margin, args.lanczos_iters, seed=args.seed)
    window = map_window(bounds, *args.window)
    d = _degree(args, window)
    est = estimate_eigencount(A, bounds, window, d, args.samples, args.seed)
    out = {"count": est.count, "mean": est.mean, "stderr": est.stderr, "samples": est.samples,
           "degree": d, "bounds": bounds.to_dict()}
    _emit(json.dumps(out, indent=1), args.out)
    return EXIT_OK


def _cmd_filter_plot(args) -> int:
    lo, hi = args.bounds
    bounds = SpectralBounds(lo, hi, 0.0)
    window = map_window(bounds, *args.window)
    d = _degree(args, window)
    plan = FilterPlan.build(window, args.M, d)
    t = np.linspace(-1.0, 1.0, args.points)
    x = bounds.center + bounds.half_width * t
    cols = [scalar_filter_eval(plan, k, t) for k in range(args.M)]
    lines = ["x,t," + ",".join(f"F{k}" for k in range(args.M))]
    for i in range(t.size):
        lines.append(",".join([repr(float(x[i])), repr(float(t[i]))] + [repr(float(c[i])) for c in cols]))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = ExperimentSpec.from_file(args.spec)
    if args.workers:
        spec.workers = args.workers
    rows, runs, summary = run_experiment(spec)
    write_outputs(spec, rows, runs, summary, args.csv, args.json)
    if not (args.csv or args.json or spec.outputs):
        _emit(json.dumps({"summary": summary}, indent=1), None)
    return EXIT_OK


_COMMANDS = {"solve": _cmd_solve, "count": _cmd_count, "filter-plot": _cmd_filter_plot, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, ArithmeticError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        sys.stdout.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
