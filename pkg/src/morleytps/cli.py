"""Command line interface: ``morleytps fit | eval | select-lambda | experiment``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import IllConditionedSystem, InvalidArgument, MorleyTpsError, SolverError
from .mesh import UNIT_SQUARE, build_uniform_mesh
from .morley import MorleySpace, read_function_csv, write_function_csv
from .smoother import SmootherConfig, mesh_divisions_for_lambda, self_consistent_lambda, write_trace_csv
from .system import DiscreteSmoother, read_samples_csv
from .harness import experiments as ex
from .harness.data import NoiseModel

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("morleytps")


def _mesh_div_arg(s):
    if s == "auto":
        return s
    try:
        m = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {s!r}") from None
    if m < 1:
        raise argparse.ArgumentTypeError("mesh-div must be >= 1")
    return m


def _int_list(s):
    try:
        return [int(v) for v in s.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morleytps", description="Thin-plate spline smoothing with Morley elements.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a smoother to samples")
    f.add_argument("--input", required=True, help="samples CSV (x,y,value[,truth])")
    g = f.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambda", dest="lam", type=float, help="smoothing parameter")
    g.add_argument("--auto", action="store_true", help="select lambda by the self-consistent iteration")
    f.add_argument("--mesh-div", type=_mesh_div_arg, default="auto", help="divisions per side, or 'auto' (default)")
    f.add_argument("--m-max", type=int, default=200, help="cap on automatic mesh divisions (default 200)")
    f.add_argument("--out", required=True, help="output coefficient CSV")
    f.add_argument("--summary", help="optional key,value summary CSV")

    e = sub.add_parser("eval", help="evaluate a persisted fit")
    e.add_argument("--fit", required=True, help="coefficient CSV written by 'fit'")
    e.add_argument("--points", required=True, help="points CSV (x,y)")
    e.add_argument("--out", required=True, help="output CSV (x,y,value)")

    s = sub.add_parser("select-lambda", help="run the self-consistent lambda iteration")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="trace CSV")
    s.add_argument("--tol", type=float, default=1e-3, help="relative change stopping tolerance")
    s.add_argument("--max-iter", type=int, default=30)

    x = sub.add_parser("experiment", help="run an experiment and write CSV/SVG output")
    x.add_argument("name", choices=["ex1", "ex2", "ex3", "tail", "rates", "enrich-rates"])
    x.add_argument("--n", type=int, help="number of samples (perfect square)")
    x.add_argument("--ns", type=_int_list, help="ex2: comma-separated sample sizes")
    x.add_argument("--sigma", type=float, default=1.0, help="noise scale (default 1)")
    x.add_argument("--sigma2", type=float, default=0.0, help="second scale of the combined noise")
    x.add_argument("--noise", default=None, choices=NoiseModel.KINDS, help="noise kind (default gaussian, combined if --sigma2 > 0)")
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--replicates", type=int, help="ex2 replicates (default 10), tail replicates (default 200)")
    x.add_argument("--lambda", dest="lam", type=float, help="tail: fixed smoothing parameter")
    x.add_argument("--meshes", type=_int_list, help="rates/enrich-rates: comma-separated mesh divisions")
    x.add_argument("--max-n", type=int, default=ex.MAX_N, help="raise the desk-scale sample cap")
    x.add_argument("--out", required=True, help="output directory")
    return p


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def write_meta(path, **items) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items.items()))


def _domain_str(domain) -> str:
    return ",".join(repr(float(v)) for v in domain)


def _write_summary(path, items) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in items.items():
            w.writerow([k, ex.fmt(v)])


def cmd_fit(args) -> int:
    samples = read_samples_csv(args.input)
    extra = {}
    if args.auto:
        if args.mesh_div != "auto":
            raise InvalidArgument("--auto chooses the mesh; combine it with --mesh-div auto")
        trace = self_consistent_lambda(samples, None, SmootherConfig(m_max=args.m_max))
        fit = trace.fit
        extra = {"converged": trace.converged, "iterations": len(trace.iterations)}
    else:
        if not args.lam > 0:
            raise InvalidArgument(f"--lambda must be positive, got {args.lam}")
        m = mesh_divisions_for_lambda(args.lam, args.m_max) if args.mesh_div == "auto" else args.mesh_div
        fit = DiscreteSmoother(MorleySpace(build_uniform_mesh(m)), samples).solve(args.lam)
    write_function_csv(fit.function, args.out)
    write_meta(args.out + ".meta", mesh_div=fit.mesh_div, domain=_domain_str(UNIT_SQUARE), **{"lambda": repr(fit.lam)})
    if args.summary:
        _write_summary(
            args.summary,
            {
                "n": samples.n,
                "lambda": fit.lam,
                "mesh_div": fit.mesh_div,
                "n_dofs": fit.function.space.n_dofs,
                "residual_n": fit.residual_n,
                "seminorm_2h": fit.seminorm_2h,
                "energy": fit.energy,
                "solver_iters": fit.solver_iters,
                **extra,
            },
        )
    log.info("fit: lambda=%.4e mesh_div=%d residual_n=%.6g", fit.lam, fit.mesh_div, fit.residual_n)
    return EXIT_OK


def _infer_mesh_div(path) -> int:
    # a uniform m x m mesh has (m+1)^2 vertices and 3m^2 + 2m edges, i.e. (2m+1)^2 DOFs
    with open(path) as fh:
        n = sum(1 for line in fh if line.strip()) - 1
    k = math.isqrt(max(n, 0))
    if k * k != n or k % 2 == 0 or k < 3:
        raise InvalidArgument(f"{path}: {n} DOFs do not match a uniform mesh")
    return (k - 1) // 2


def load_fit(path):
    meta_path = Path(str(path) + ".meta")
    if meta_path.exists():
        meta = read_meta(meta_path)
        try:
            m = int(meta["mesh_div"])
            domain = tuple(float(v) for v in meta.get("domain", _domain_str(UNIT_SQUARE)).split(","))
        except (KeyError, ValueError):
            raise InvalidArgument(f"malformed metadata in {meta_path}") from None
    else:
        m, domain = _infer_mesh_div(path), UNIT_SQUARE
    return read_function_csv(path, MorleySpace(build_uniform_mesh(m, domain)))


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["x", "y"]:
            raise InvalidArgument(f"{path}: expected header starting with x,y, got {header!r}")
        try:
            pts = [(float(r[0]), float(r[1])) for r in reader if r]
        except (ValueError, IndexError) as exc:
            raise InvalidArgument(f"{path}: {exc}") from None
    if not pts:
        raise InvalidArgument(f"{path}: no points")
    pts = np.array(pts)
    if not np.all(np.isfinite(pts)):
        raise InvalidArgument(f"{path}: non-finite coordinates")
    return pts


def cmd_eval(args) -> int:
    f = load_fit(args.fit)
    pts = read_points_csv(args.points)
    vals = f.hat_eval(pts)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for (x, y), v in zip(pts.tolist(), vals.tolist()):
            w.writerow([repr(x), repr(y), repr(v)])
    return EXIT_OK


def cmd_select(args) -> int:
    samples = read_samples_csv(args.input)
    trace = self_consistent_lambda(samples, None, SmootherConfig(tol_lam=args.tol, max_iter=args.max_iter))
    write_trace_csv(trace, args.out)
    if not trace.converged:
        log.warning("lambda iteration did not converge in %d steps", args.max_iter)
    return EXIT_OK


def _noise(args) -> NoiseModel:
    kind = args.noise or ("combined" if args.sigma2 > 0 else "gaussian")
    if kind == "gaussian" and args.sigma == 0:
        kind = "none"
    return NoiseModel(kind, args.sigma, args.sigma2)


def cmd_experiment(args) -> int:
    noise = _noise(args)
    kw = {}
    name = args.name
    if name in ("ex1", "ex3", "tail") and args.n is not None:
        kw["n"] = args.n
    if name in ("ex1", "ex2", "ex3", "tail"):
        kw["seed"] = args.seed
        kw["noise"] = noise
    if name == "ex1":
        report = ex.run_lambda_sweep(max_n=args.max_n, **kw)
    elif name == "ex2":
        ns = args.ns or ([args.n] if args.n is not None else list(ex.DEFAULT_RATE_NS))
        report = ex.run_rate_study(ns=ns, replicates=args.replicates or 10, max_n=args.max_n, **kw)
    elif name == "ex3":
        report = ex.run_self_consistent(max_n=args.max_n, **kw)
    elif name == "tail":
        report = ex.run_tail_study(lam=args.lam, replicates=args.replicates or 200, **kw)
    else:
        opts = {"meshes": tuple(args.meshes)} if args.meshes else {}
        if args.n is not None:
            opts["n"] = args.n
        runner = ex.run_interpolation_rates if name == "rates" else ex.run_enrichment_rates
        report = runner(**opts)
    for path in ex.write_report(report, args.out):
        print(path)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "eval": cmd_eval, "select-lambda": cmd_select, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SolverError, IllConditionedSystem) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MorleyTpsError, ValueError, OSError, StopIteration) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def cli(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
