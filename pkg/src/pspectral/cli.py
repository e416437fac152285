"""Command-line driver.

Exit codes:

    0  success
    1  unexpected internal error
    2  invalid configuration or arguments
    3  input could not be read or parsed
    4  graph unusable (isolated vertices, k >= n, invariant violation)
    5  solver failure
    6  clustering or metric failure
    7  determinism failure in bench mode
    8  output could not be written

On failure a single JSON error record is printed to stderr:
``{"error": <class>, "stage": <stage>, "exit_code": <int>, "message": <str>}``.
"""

import argparse
import json
import logging
import sys

from . import algebra as alg
from .cluster import KMeansConfig
from .errors import ConfigError, PSpectralError
from .graph_io import SyntheticSpec
from .manifold import SolverConfig
from .pipeline import MODES, PipelineConfig, benchmark, run_pipeline

log = logging.getLogger("pspectral")


def _thread_list(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="pspectral",
        description="Multiway p-spectral graph clustering.",
        epilog=f"The default worker count can be set with ${alg.THREADS_ENV}; "
               "--threads takes precedence.",
    )
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", metavar="PATH", help="Matrix Market coordinate file")
    src.add_argument("--synthetic", metavar="SPEC",
                     help="'family:key=value,...' or a key = value file "
                          "(families: sbm, grid2d, ring-of-cliques)")
    ap.add_argument("--k", type=int, default=4, help="number of clusters (default 4)")
    ap.add_argument("--p-final", type=float, default=1.2)
    ap.add_argument("--p-factor", type=float, default=0.9)
    ap.add_argument("--mode", choices=MODES, default="cluster")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None)

    solver = ap.add_argument_group("solver")
    solver.add_argument("--grad-tol", type=float, default=None,
                        help="Riemannian gradient-norm stop (default 1e-6*sqrt(n*k))")
    solver.add_argument("--max-outer", type=int, default=200, help="outer iterations per p")
    solver.add_argument("--tcg-max-iters", type=int, default=None)
    solver.add_argument("--hessian-mode", choices=("sparse", "full"), default="sparse")
    solver.add_argument("--eps", type=float, default=1e-9, help="singularity cap")

    km = ap.add_argument_group("k-means")
    km.add_argument("--restarts", type=int, default=10)
    km.add_argument("--kmeans-max-iters", type=int, default=300)
    km.add_argument("--row-normalize", action="store_true")

    ap.add_argument("--allow-isolated", action="store_true")
    ap.add_argument("--bench-threads", type=_thread_list, default=(1, 2, 4, 8),
                    metavar="1,2,4,8")

    out = ap.add_argument_group("outputs")
    out.add_argument("--out-assignments", metavar="PATH")
    out.add_argument("--out-report", metavar="PATH")
    out.add_argument("--out-trace", metavar="PATH", help="per-iteration CSV")
    out.add_argument("--out-bench-csv", metavar="PATH")
    out.add_argument("--omit-volatile", action="store_true",
                     help="leave timings and thread counts out of the report")
    ap.add_argument("--log-level", default="WARNING")
    return ap


def config_from_args(args):
    synthetic = None
    if args.synthetic is not None:
        synthetic = SyntheticSpec.parse(args.synthetic)
        if "seed=" not in args.synthetic.replace(" ", ""):
            synthetic = SyntheticSpec(**{**synthetic.to_dict(), "seed": args.seed})
    threads = alg.default_threads() if args.threads is None else args.threads
    return PipelineConfig(
        input=args.input,
        synthetic=synthetic,
        k=args.k,
        p_final=args.p_final,
        p_factor=args.p_factor,
        solver=SolverConfig(grad_tol=args.grad_tol, max_outer=args.max_outer,
                            tcg_max_iters=args.tcg_max_iters,
                            hessian_mode=args.hessian_mode, eps=args.eps, seed=args.seed),
        kmeans=KMeansConfig(restarts=args.restarts, max_iters=args.kmeans_max_iters,
                            seed=args.seed),
        threads=threads,
        seed=args.seed,
        mode=args.mode,
        bench_threads=args.bench_threads,
        row_normalize=args.row_normalize,
        allow_isolated=args.allow_isolated,
        out_assignments=args.out_assignments,
        out_report=args.out_report,
        out_trace=args.out_trace,
        out_bench_csv=args.out_bench_csv,
        omit_volatile=args.omit_volatile,
    )


def _error_record(exc, code, stage):
    return json.dumps({"error": type(exc).__name__, "stage": stage, "exit_code": code,
                       "message": str(exc)})


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if cfg.threads > alg.max_threads():
            raise ConfigError(f"--threads {cfg.threads} exceeds the pool size {alg.max_threads()}")
        if cfg.mode == "bench":
            report = benchmark(cfg)
            if not cfg.out_report:
                print(json.dumps(report["stages"], indent=2))
        else:
            report = run_pipeline(cfg)
            if not cfg.out_report:
                sys.stdout.write(report.to_json(volatile=not cfg.omit_volatile))
    except PSpectralError as exc:
        print(_error_record(exc, exc.exit_code, exc.stage), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort record for the caller
        log.debug("internal error", exc_info=True)
        print(_error_record(exc, 1, "internal"), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
