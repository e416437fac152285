"""End-to-end clustering pipeline, run reports and the scaling benchmark."""

from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import logging
import math
import time

import numpy as np

from . import algebra as alg
from .cluster import KMeansConfig, confusion_accuracy, kmeans, rcut
from .errors import ConfigError, DeterminismError, GraphValidationError, OutputError
from .graph_io import SyntheticSpec, generate_synthetic, read_matrix_market
from .manifold import ContinuationSchedule, SolverConfig, continuation_solve
from .plap import check_p

log = logging.getLogger(__name__)

__all__ = ["PipelineConfig", "RunReport", "run_pipeline", "benchmark", "bench_csv", "MODES",
           "REPORT_SCHEMA_VERSION"]

REPORT_SCHEMA_VERSION = 1
BENCH_SCHEMA_VERSION = 1
MODES = ("cluster", "baseline-p2", "bench")


@dataclass
class PipelineConfig:
    """Everything that determines a run. Exactly one of ``input``/``synthetic``."""

    input: str | None = None
    synthetic: SyntheticSpec | None = None
    k: int = 4
    p_final: float = 1.2
    p_factor: float = 0.9
    solver: SolverConfig = field(default_factory=SolverConfig)
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    threads: int = 1
    seed: int = 0
    mode: str = "cluster"
    bench_threads: tuple = (1, 2, 4, 8)
    row_normalize: bool = False
    allow_isolated: bool = False
    out_assignments: str | None = None
    out_report: str | None = None
    out_trace: str | None = None
    out_bench_csv: str | None = None
    omit_volatile: bool = False

    def __post_init__(self):
        if (self.input is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of input or synthetic")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        try:
            check_p(self.p_final)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.p_factor < 1:
            raise ConfigError("p_factor must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")

    @property
    def schedule(self):
        p_final = 2.0 if self.mode == "baseline-p2" else self.p_final
        return ContinuationSchedule(p_final=p_final, factor=self.p_factor)

    def to_dict(self, *, volatile=True):
        d = asdict(self)
        d["synthetic"] = None if self.synthetic is None else self.synthetic.to_dict()
        d["bench_threads"] = list(self.bench_threads)
        if not volatile:
            for key in ("threads", "bench_threads", "out_assignments", "out_report",
                        "out_trace", "out_bench_csv", "omit_volatile"):
                d.pop(key)
        return d


@dataclass
class RunReport:
    """Serializable summary of a pipeline run.

    ``threads`` and ``timings`` are the volatile fields: they are dropped by
    ``to_dict(volatile=False)`` so that reports of identical runs compare
    byte-for-byte across machines and worker counts.
    """

    mode: str
    n: int
    m: int
    k: int
    p_sequence: list
    final_F: float
    rcut: float
    sse: float
    seed: int
    stage_status: dict
    config: dict
    accuracy: float | None = None
    threads: int | None = None
    timings: dict | None = None
    trace_path: str | None = None
    schema_version: int = REPORT_SCHEMA_VERSION
    # in-memory results, not serialized
    assignment: object = field(default=None, repr=False, compare=False)
    embedding: object = field(default=None, repr=False, compare=False)
    trace: object = field(default=None, repr=False, compare=False)

    _SERIALIZED = ("schema_version", "mode", "n", "m", "k", "p_sequence", "final_F", "rcut",
                   "sse", "accuracy", "seed", "stage_status", "config", "trace_path",
                   "threads", "timings")

    def to_dict(self, *, volatile=True):
        d = {key: getattr(self, key) for key in self._SERIALIZED}
        d["graph"] = {"n": d.pop("n"), "m": d.pop("m")}
        if not volatile:
            d.pop("threads")
            d.pop("timings")
        return d

    def to_json(self, *, volatile=True):
        return json.dumps(self.to_dict(volatile=volatile), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        graph = d.pop("graph")
        d.setdefault("threads", None)
        d.setdefault("timings", None)
        return cls(n=graph["n"], m=graph["m"], **d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def write(self, path, *, volatile=True):
        _write_text(path, self.to_json(volatile=volatile))


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


# ---------------------------------------------------------------------------
# stages


def _ingest(cfg):
    if cfg.input is not None:
        return read_matrix_market(cfg.input), None
    return generate_synthetic(cfg.synthetic)


def _validate(g, cfg):
    iso = g.isolated()
    if iso.size and not cfg.allow_isolated:
        raise GraphValidationError(
            f"graph has {iso.size} isolated vertex(es) (first: {int(iso[0])}); "
            "pass allow_isolated to proceed")
    if not cfg.k < g.n:
        raise GraphValidationError(f"k={cfg.k} must be smaller than n={g.n}")


def _solve(g, cfg, ctx):
    solver = cfg.solver
    if solver.seed != cfg.seed:
        solver = replace(solver, seed=cfg.seed)
    U, trace = continuation_solve(g, cfg.k, cfg.schedule, solver, ctx=ctx)
    return U, trace


def _discretize(U, cfg):
    X = np.ascontiguousarray(U.T)
    if cfg.row_normalize:
        norms = np.sqrt((X * X).sum(axis=1))
        X = X / np.where(norms > 0, norms, 1.0)[:, None]
    kcfg = cfg.kmeans
    if kcfg.seed != cfg.seed:
        kcfg = replace(kcfg, seed=cfg.seed)
    return kmeans(X, cfg.k, kcfg)


def _run_stages(g, truth, cfg, ctx, timings):
    t = time.perf_counter()
    U, trace = _solve(g, cfg, ctx)
    timings["solve_total"] = time.perf_counter() - t
    timings["solve"] = {repr(p): s for p, s in trace.stage_seconds.items()}

    t = time.perf_counter()
    assignment, sse = _discretize(U, cfg)
    timings["kmeans"] = time.perf_counter() - t

    t = time.perf_counter()
    metrics = {"rcut": rcut(g, assignment)}
    metrics["accuracy"] = None if truth is None else confusion_accuracy(assignment, truth)
    timings["metrics"] = time.perf_counter() - t
    return U, trace, assignment, sse, metrics


def run_pipeline(cfg):
    """Ingest, solve, discretize and score; write the requested outputs.

    ``mode='cluster'`` runs the p-continuation down to ``cfg.p_final``;
    ``mode='baseline-p2'`` stops after the p = 2 stage.
    """
    if cfg.mode == "bench":
        raise ConfigError("use benchmark() for bench mode")
    ctx = alg.Context(cfg.threads)
    timings = {}
    t0 = time.perf_counter()
    t = time.perf_counter()
    g, truth = _ingest(cfg)
    _validate(g, cfg)
    if truth is not None and truth.k != cfg.k:
        truth = None
    timings["io"] = time.perf_counter() - t

    U, trace, assignment, sse, metrics = _run_stages(g, truth, cfg, ctx, timings)
    final = trace.records[-1]
    timings["total"] = time.perf_counter() - t0

    report = RunReport(
        mode=cfg.mode, n=g.n, m=g.m, k=cfg.k,
        p_sequence=cfg.schedule.sequence(), final_F=final.F,
        rcut=metrics["rcut"], sse=sse, accuracy=metrics["accuracy"], seed=cfg.seed,
        stage_status={repr(p): s for p, s in trace.stage_status.items()},
        config=cfg.to_dict(volatile=not cfg.omit_volatile),
        threads=cfg.threads, timings=timings, trace_path=cfg.out_trace,
        assignment=assignment, embedding=U, trace=trace,
    )
    if cfg.out_assignments:
        assignment.write(cfg.out_assignments)
    if cfg.out_trace:
        _write_text(cfg.out_trace, trace.to_csv())
    if cfg.out_report:
        report.write(cfg.out_report, volatile=not cfg.omit_volatile)
    return report


def _digest(U, assignment):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(U).tobytes())
    h.update(assignment.to_text().encode())
    return h.hexdigest()


def benchmark(cfg, thread_counts=None):
    """Strong-scaling sweep: the same run at each worker count.

    Outputs (embedding bytes and assignment) must be identical across all
    counts, otherwise :class:`DeterminismError` is raised and no timings
    are reported. Returns the scaling report as a dict.
    """
    counts = list(cfg.bench_threads if thread_counts is None else thread_counts)
    if not counts or counts[0] != 1 or counts != sorted(set(counts)):
        raise ConfigError("thread counts must be strictly ascending and start at 1")
    for c in counts:
        alg.Context(c)  # validates against the pool size
    t = time.perf_counter()
    g, truth = _ingest(cfg)
    _validate(g, cfg)
    if truth is not None and truth.k != cfg.k:
        truth = None
    io_seconds = time.perf_counter() - t

    runs = []
    reference = None
    for c in counts:
        timings = {}
        U, trace, assignment, sse, metrics = _run_stages(g, truth, cfg, alg.Context(c), timings)
        digest = _digest(U, assignment)
        if reference is None:
            reference = (digest, assignment)
        elif digest != reference[0]:
            raise DeterminismError(
                f"outputs at {c} threads differ from the single-thread run")
        runs.append(timings)
        log.info("bench threads=%d solve=%.3fs", c, timings["solve_total"])

    stages = {}
    for name, key in (("solve", "solve_total"), ("kmeans", "kmeans"), ("metrics", "metrics")):
        secs = [r[key] for r in runs]
        stages[name] = {
            "seconds": secs,
            "normalized": [s / secs[0] if secs[0] > 0 else math.nan for s in secs],
            "speedup": [secs[0] / s if s > 0 else math.nan for s in secs],
        }
    if cfg.out_assignments:
        reference[1].write(cfg.out_assignments)
    report = {
        "schema_version": BENCH_SCHEMA_VERSION,
        "graph": {"n": g.n, "m": g.m},
        "thread_counts": counts,
        "io_seconds": io_seconds,
        "stages": stages,
        "outputs_identical": True,
        "output_digest": reference[0],
        "rcut": metrics["rcut"],
        "config": cfg.to_dict(),
    }
    if cfg.out_report:
        _write_text(cfg.out_report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    if cfg.out_bench_csv:
        _write_text(cfg.out_bench_csv, bench_csv(report))
    return report


def bench_csv(report):
    """Plot-ready rows ``threads,stage,seconds,normalized,speedup``."""
    lines = [f"# schema_version={BENCH_SCHEMA_VERSION}", "threads,stage,seconds,normalized,speedup"]
    for stage, vals in report["stages"].items():
        for c, s, nrm, sp in zip(report["thread_counts"], vals["seconds"], vals["normalized"],
                                 vals["speedup"]):
            lines.append(f"{c},{stage},{s:.6f},{nrm:.6f},{sp:.6f}")
    return "\n".join(lines) + "\n"
