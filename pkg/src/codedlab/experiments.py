"""Experiment runners behind the CLI: config in, ordered ResultRows out."""
from __future__ import annotations

import concurrent.futures
import dataclasses
import math
import os

import numpy as np

from . import codedmm, gradcode, sketch, simulator
from .config import ExperimentConfig
from .linalg import spectral_norm
from .rng import substream

AXES = {
    "gc": ("stragglers",),
    "cmm": ("trial",),
    "sketch": ("q",),
    "descend": ("iteration",),
}


@dataclasses.dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    axes: tuple  # (name, value) pairs in grid order
    metric: str
    value: float
    seed: int
    timestamp: float  # simulated clock, or the row's logical ordinal for meters

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"metric {self.metric} is not finite: {self.value}")


@dataclasses.dataclass
class RunResult:
    rows: list
    unrecoverable: bool = False
    figure_data: dict = dataclasses.field(default_factory=dict)


def worker_count() -> int:
    raw = os.environ.get("CODEDLAB_THREADS", "").strip()
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def ordered_map(fn, items):
    """Map over grid points on up to CODEDLAB_THREADS workers; results keep grid order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def experiment_id(cfg: ExperimentConfig) -> str:
    name = cfg.get("scheme", cfg.get("method", ""))
    return f"{cfg.experiment}-{name}-s{cfg.seed}"


def server_model(cfg: ExperimentConfig, n: int) -> simulator.ServerModel:
    return simulator.ServerModel(n, cfg.get("delay"), cfg.get("shift"), cfg.get("rate"),
                                 cfg.get("delays", ()))


def straggler_policy(cfg: ExperimentConfig) -> simulator.StragglerPolicy:
    return simulator.StragglerPolicy(cfg.get("policy"), cfg.get("stragglers", ()), cfg.get("s", 0))


def gaussian_data(seed, *shapes):
    rng = substream(seed, "data")
    return [rng.standard_normal(shape) for shape in shapes]


def build_gc_scheme(cfg: ExperimentConfig) -> gradcode.GCScheme:
    p = cfg.params
    name, s = p["scheme"], p.get("s", 0)
    if name == "frc":
        scheme = gradcode.frc_scheme(p["n"], s)
    elif name == "brs":
        scheme = gradcode.brs_scheme(p["n"], p["k"], s)
    elif name == "bernoulli":
        scheme = gradcode.bernoulli_scheme(p["n"], p["k"], s, seed=substream(cfg.seed, "gc-scheme"))
    elif name == "expander":
        graph = p.get("graph", "petersen")
        if graph == "petersen":
            adj = gradcode.petersen_graph()
        elif graph == "complete":
            adj = gradcode.complete_graph(p["n"])
        else:
            adj = gradcode.random_regular_graph(p["n"], p["degree"], seed=substream(cfg.seed, "graph"))
        scheme = gradcode.expander_scheme(adj, s)
    else:
        design = gradcode.fano_plane() if p.get("design", "fano") == "fano" else gradcode.complete_design(p["v"])
        scheme = gradcode.bibd_scheme(design, s=s)
    decoder = p.get("decoder", "default")
    if decoder == "optimal":
        scheme = scheme.with_decoder(gradcode.Decoder.OPTIMAL)
    elif decoder == "one-step" and "rho" in p:
        scheme = scheme.with_decoder(gradcode.Decoder.ONE_STEP, p["rho"])
    return scheme


def run_gc(cfg: ExperimentConfig) -> RunResult:
    scheme = build_gc_scheme(cfg)
    eid = experiment_id(cfg)
    _, sets = gradcode.straggler_sets(scheme.n, scheme.s, substream(cfg.seed, "gc-sets"))
    rows, errors = [], []
    for t, stragglers in enumerate(sets):
        err = gradcode.gc_error(scheme, gradcode.responders_from_stragglers(stragglers, scheme.n))
        label = " ".join(str(i) for i in stragglers)
        rows.append(ResultRow(eid, (("stragglers", label),), "gc_error", err, cfg.seed, float(t)))
        errors.append(err)
    return RunResult(rows, figure_data={"errors": errors})


def build_cmm_scheme(cfg: ExperimentConfig, A, B, seed):
    p = cfg.params
    name, n = p["scheme"], p.get("n")
    if name == "matdot":
        return codedmm.matdot(A, B, p["k"], n=n)
    if name == "polynomial":
        return codedmm.polynomial_code(A, B, p["k"], n=n)
    if name == "entangled":
        return codedmm.entangled_example(A, B, n=n)
    if name == "independent":
        return codedmm.coded_independent_sampling(A, B, p["k"], p["r"], n=n, seed=seed)
    if name == "setwise":
        return codedmm.coded_setwise_sampling(A, B, p["k"], p["r"], n=n, seed=seed)
    if name == "weighted":
        return codedmm.weighted_cr_cmm(A, B, p["k"], p["r"], n=n, seed=seed)
    return codedmm.oversketch(A, B, p["q"], p["b"], p.get("e", 0), seed=seed)


def run_cmm(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    A, B = gaussian_data(cfg.seed, (p["L"], p["N"]), (p["N"], p["M"]))
    target = A @ B
    eid = experiment_id(cfg)
    policy = straggler_policy(cfg)

    def trial(t):
        scheme = build_cmm_scheme(cfg, A, B, substream(cfg.seed, "cmm-scheme", t))
        job = simulator.MatMulJob(scheme, target)
        return simulator.run_round(job, server_model(cfg, scheme.n), policy, substream(cfg.seed, "cmm-round", t))

    rows, unrecoverable, errors = [], False, []
    for t, trace in enumerate(ordered_map(trial, range(p["trials"]))):
        axes = (("trial", t),)
        if trace.unrecoverable:
            unrecoverable = True
            last = trace.arrivals[-1][1] if trace.arrivals else 0.0
            rows.append(ResultRow(eid, axes, "unrecoverable", 1.0, cfg.seed, float(last)))
            continue
        when = float(trace.decode_time)
        rows.append(ResultRow(eid, axes, "rel_error", trace.error, cfg.seed, when))
        rows.append(ResultRow(eid, axes, "decode_time", when, cfg.seed, when))
        rows.append(ResultRow(eid, axes, "responses", float(len(trace.arrivals)), cfg.seed, when))
        errors.append(trace.error)
    return RunResult(rows, unrecoverable, {"errors": errors})


def sketch_operator(method, q, A, B, seed):
    N = A.shape[1]
    if method == "cr":
        return sketch.row_sampling_sketch(sketch.cr_distribution(A, B), q, seed)
    if method == "leverage":
        return sketch.row_sampling_sketch(sketch.leverage_distribution(B), q, seed)
    if method == "gaussian":
        return sketch.gaussian_sketch(q, N, seed)
    if method == "srht":
        return sketch.srht(q, N, seed)
    return sketch.countsketch_operator(N, q, seed)


def run_sketch(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    A, B = gaussian_data(cfg.seed, (p["L"], p["N"]), (p["N"], p["M"]))
    scale = np.linalg.norm(A) * np.linalg.norm(B)
    eid = experiment_id(cfg)

    def grid_point(q):
        amm, se = [], []
        for t in range(p["trials"]):
            S = sketch_operator(p["method"], q, A, B, substream(cfg.seed, "sketch", q, t))
            amm.append(sketch.amm_error(A, B, S) / scale)
            se.append(sketch.se_error(S, B))
        return float(np.median(amm)), float(np.mean(amm)), float(np.median(se))

    rows, medians = [], []
    for t, (q, (med, mean, se_med)) in enumerate(zip(p["q"], ordered_map(grid_point, p["q"]))):
        axes = (("q", q),)
        rows.append(ResultRow(eid, axes, "amm_median_error", med, cfg.seed, float(t)))
        rows.append(ResultRow(eid, axes, "amm_mean_error", mean, cfg.seed, float(t)))
        rows.append(ResultRow(eid, axes, "se_median_error", se_med, cfg.seed, float(t)))
        medians.append(med)
    return RunResult(rows, figure_data={"q": list(p["q"]), "median": medians})


def least_squares_instance(cfg: ExperimentConfig):
    p = cfg.params
    A, noise = gaussian_data(cfg.seed, (p["N"], p["d"]), (p["N"],))
    b = A @ np.ones(p["d"]) + p["noise"] * noise
    return A, b


def run_descend(cfg: ExperimentConfig) -> RunResult:
    p = cfg.params
    A, b = least_squares_instance(cfg)
    step = p.get("step", 0.5 / spectral_norm(A) ** 2)
    x_opt, *_ = np.linalg.lstsq(A, b, rcond=None)
    opt = simulator.least_squares_loss(A, b, x_opt)
    name = p["scheme"]
    if name == "iterative":
        gd = simulator.GDConfig(step, p["iterations"])
        hist = simulator.iterative_sketching_gc(A, b, p["k"], p["n"], p.get("s", 0), gd,
                                                server_model(cfg, p["n"]), seed=cfg.seed)
    else:
        scheme = None if name == "centralized" else build_gc_scheme(cfg)
        gd = simulator.GDConfig(step, p["iterations"], scheme)
        model = None if scheme is None else server_model(cfg, scheme.n)
        hist = simulator.gradient_descent(A, b, gd, model, straggler_policy(cfg), seed=cfg.seed)

    eid = experiment_id(cfg)
    rows, clock = [], 0.0
    rows.append(ResultRow(eid, (("iteration", 0),), "loss", hist.losses[0], cfg.seed, 0.0))
    for t in range(len(hist.grad_errors)):
        clock += float(hist.decode_times[t])
        axes = (("iteration", t + 1),)
        rows.append(ResultRow(eid, axes, "loss", hist.losses[t + 1], cfg.seed, clock))
        rows.append(ResultRow(eid, axes, "grad_error", hist.grad_errors[t], cfg.seed, clock))
    last = (("iteration", len(hist.grad_errors)),)
    if hist.aborted:
        rows.append(ResultRow(eid, last, "unrecoverable", 1.0, cfg.seed, clock))
    rows.append(ResultRow(eid, last, "optimal_loss", opt, cfg.seed, clock))
    if opt > 0:
        rows.append(ResultRow(eid, last, "loss_ratio", hist.losses[-1] / opt, cfg.seed, clock))
    return RunResult(rows, hist.aborted, {"losses": list(hist.losses), "optimal": opt})


RUNNERS = {"gc": run_gc, "cmm": run_cmm, "sketch": run_sketch, "descend": run_descend}


def run(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.experiment](cfg)
