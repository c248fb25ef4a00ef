"""Discrete-event straggler simulation and distributed gradient descent.

Time is simulated. Each server's finishing time is its task cost (FLOPs
relative to the mean task) times its heterogeneity factor times a draw from
the delay law. The master decodes as soon as the arrivals so far are
decodable; later arrivals are discarded.
"""
from __future__ import annotations

import dataclasses
import enum
import heapq
import json
import warnings

import numpy as np

from .codedmm import CMMScheme, Exactness
from .errors import InvalidParameterError, RankDeficiencyError
from .gradcode import Decoder, GCScheme, adversarial_straggler_search
from .linalg import as_matrix, partition, spectral_norm, to_real
from .rng import substream
from .sketch import block_leverage_distribution


class DelayLaw(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    SHIFTED_EXPONENTIAL = "shifted-exponential"
    EMPIRICAL = "empirical"


@dataclasses.dataclass(frozen=True)
class ServerModel:
    n: int
    delay: DelayLaw = DelayLaw.SHIFTED_EXPONENTIAL
    shift: float = 1.0
    rate: float = 1.0
    delays: tuple = ()
    scales: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "delay", DelayLaw(self.delay))
        if self.shift < 0 or self.rate <= 0:
            raise InvalidParameterError("need shift >= 0 and rate > 0")
        if self.scales and (len(self.scales) != self.n or min(self.scales) <= 0):
            raise InvalidParameterError("need one positive scale factor per server")
        if self.delay is DelayLaw.DETERMINISTIC and len(self.delays) not in (0, self.n):
            raise InvalidParameterError("deterministic delays need one value per server")
        if self.delay is DelayLaw.EMPIRICAL and not self.delays:
            raise InvalidParameterError("empirical delay law needs a sample list")

    def sample(self, rng, work) -> np.ndarray:
        """Finishing times for tasks of relative cost ``work`` (length n)."""
        work = np.asarray(work, dtype=float)
        if self.delay is DelayLaw.DETERMINISTIC:
            base = np.asarray(self.delays, dtype=float) if self.delays else np.ones(self.n)
        elif self.delay is DelayLaw.SHIFTED_EXPONENTIAL:
            base = self.shift + rng.exponential(1.0 / self.rate, size=self.n)
        else:
            base = rng.choice(np.asarray(self.delays, dtype=float), size=self.n)
        scale = np.asarray(self.scales, dtype=float) if self.scales else np.ones(self.n)
        return work * scale * base


class PolicyMode(str, enum.Enum):
    DELAY_ORDER = "delay-order"
    FIXED_SET = "fixed-set"
    ADVERSARIAL = "adversarial"


@dataclasses.dataclass(frozen=True)
class StragglerPolicy:
    """Which servers fail to respond.

    delay-order: nobody is removed; the slowest servers simply lose the race.
    fixed-set: ``stragglers`` never respond.
    adversarial: the worst set of size ``s`` for a GC job, found exhaustively.
    """

    mode: PolicyMode = PolicyMode.DELAY_ORDER
    stragglers: tuple = ()
    s: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", PolicyMode(self.mode))
        object.__setattr__(self, "stragglers", tuple(sorted(int(i) for i in self.stragglers)))
        if self.mode is PolicyMode.FIXED_SET and self.s and self.s != len(self.stragglers):
            raise InvalidParameterError("fixed-set policy: s must equal the straggler count")


class GradientJob:
    """A GC scheme bound to the partial gradients of one iteration."""

    def __init__(self, scheme: GCScheme, partial_grads, target=None):
        self.scheme = scheme
        self.partial_grads = np.asarray(partial_grads)
        self.outputs = scheme.encode(self.partial_grads)
        if target is None:
            target = scheme.decode_target @ self.partial_grads
        self.target = target
        self.n = scheme.n
        self.f = scheme.n - scheme.s
        self.exact = scheme.decoder in (Decoder.EXACT_BRS, Decoder.EXACT_FRC, Decoder.WEIGHTED)

    def work(self) -> np.ndarray:
        return np.maximum(self.scheme.row_weights, 1).astype(float)

    def decodable(self, ids) -> bool:
        return len(set(ids)) >= self.f

    def decode(self, ids) -> np.ndarray:
        I = np.array(sorted(set(ids))[: self.f])
        return to_real(self.scheme.decode(I, self.outputs[I]))


class MatMulJob:
    def __init__(self, scheme: CMMScheme, target=None):
        self.scheme = scheme
        self.n = scheme.n
        self.f = scheme.f
        self.target = target
        self.exact = scheme.exactness is Exactness.EXACT
        self._outputs = {}

    def work(self) -> np.ndarray:
        return np.array([self.scheme.task_flops(i) for i in range(self.n)], dtype=float)

    def decodable(self, ids) -> bool:
        return self.scheme.decodable(ids)

    def decode(self, ids) -> np.ndarray:
        outs = []
        for i in ids:
            if i not in self._outputs:
                self._outputs[i] = self.scheme.compute(i)
            outs.append(self._outputs[i])
        return self.scheme.decode(outs)


def as_job(job):
    if isinstance(job, CMMScheme):
        return MatMulJob(job)
    if all(hasattr(job, attr) for attr in ("n", "f", "work", "decodable", "decode")):
        return job
    raise InvalidParameterError("run_round expects a CMMScheme or a job object")


@dataclasses.dataclass
class RoundTrace:
    arrivals: list  # (server_id, time), in arrival order, consumed by the decoder
    late: list  # arrivals discarded after decoding
    stragglers: tuple
    decode_time: float | None
    threshold: int
    output: np.ndarray | None
    error: float | None
    unrecoverable: bool = False

    def to_record(self) -> dict:
        out = None
        if self.output is not None:
            o = np.asarray(self.output)
            out = {"real": o.real.tolist(), "imag": o.imag.tolist()} if np.iscomplexobj(o) else o.tolist()
        return {
            "arrivals": [[int(i), float(t)] for i, t in self.arrivals],
            "late": [[int(i), float(t)] for i, t in self.late],
            "stragglers": list(self.stragglers),
            "decode_time": self.decode_time,
            "threshold": self.threshold,
            "output": out,
            "error": self.error,
            "unrecoverable": self.unrecoverable,
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_record(), sort_keys=True).encode("utf-8")


def relative_error(estimate, target) -> float:
    diff = float(np.linalg.norm(np.asarray(estimate) - np.asarray(target)))
    scale = float(np.linalg.norm(target))
    return diff / scale if scale > 0 else diff


def _normalized_work(job) -> np.ndarray:
    work = job.work()
    mean = work.mean()
    return work / mean if mean > 0 else np.ones_like(work)


def run_round(job, server_model: ServerModel, policy: StragglerPolicy | None = None, seed=0) -> RoundTrace:
    """One encode/compute/decode round.

    Arrivals are replayed from a priority queue in time order (ties by
    server id); decoding fires at the first prefix that is decodable.
    """
    job = as_job(job)
    policy = StragglerPolicy() if policy is None else policy
    if server_model.n != job.n:
        raise InvalidParameterError(f"server model has {server_model.n} servers, job needs {job.n}")
    times = server_model.sample(substream(seed, "delays"), _normalized_work(job))
    stragglers = _straggler_set(job, policy)
    queue = [(float(times[i]), i) for i in range(job.n) if i not in stragglers]
    heapq.heapify(queue)
    arrivals = []
    while queue:
        t, i = heapq.heappop(queue)
        arrivals.append((i, t))
        if job.decodable([a for a, _ in arrivals]):
            break
    else:
        return RoundTrace(arrivals, [], stragglers, None, job.f, None, None, unrecoverable=True)
    late = sorted(((i, t) for t, i in queue), key=lambda it: (it[1], it[0]))
    decode_time = arrivals[-1][1]
    output = job.decode([i for i, _ in arrivals])
    err = None if job.target is None else relative_error(output, job.target)
    return RoundTrace(arrivals, late, stragglers, decode_time, job.f, output, err)


def _straggler_set(job, policy) -> tuple:
    if policy.mode is PolicyMode.FIXED_SET:
        bad = [i for i in policy.stragglers if not 0 <= i < job.n]
        if bad:
            raise InvalidParameterError(f"straggler ids {bad} out of range")
        return policy.stragglers
    if policy.mode is PolicyMode.ADVERSARIAL:
        if not isinstance(job, GradientJob):
            raise InvalidParameterError("adversarial stragglers are defined for gradient coding")
        worst, _ = adversarial_straggler_search(job.scheme, policy.s or job.scheme.s)
        return tuple(worst)
    return ()


def partial_gradients(A, b, k, x) -> np.ndarray:
    """Rows g_j = 2 A_j^T (A_j x - b_j) over k equal row blocks; they sum to the gradient."""
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if b.size != A.shape[0] or x.size != A.shape[1]:
        raise InvalidParameterError(f"shape mismatch: A {A.shape}, b {b.shape}, x {x.shape}")
    A_blocks = partition(A, k, "rows")
    b_blocks = np.split(b, k)
    return np.stack([2 * Aj.T @ (Aj @ x - bj) for Aj, bj in zip(A_blocks, b_blocks)])


def least_squares_loss(A, b, x) -> float:
    r = np.asarray(A) @ np.asarray(x) - np.asarray(b)
    return float(r @ r)


@dataclasses.dataclass(frozen=True)
class GDConfig:
    step: float
    iterations: int
    scheme: GCScheme | None = None
    x0: tuple | None = None

    def __post_init__(self):
        if self.step <= 0:
            raise InvalidParameterError("step size must be positive")
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")


@dataclasses.dataclass
class History:
    iterates: list
    losses: list
    grad_errors: list
    decode_times: list
    aborted: bool = False
    arrival_sets: list = dataclasses.field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1]

    def averaged_iterate(self, burn_in=0) -> np.ndarray:
        return np.mean(self.iterates[1 + burn_in:], axis=0)


def _check_step(A, step):
    # the loss ||Ax - b||^2 is 2||A^T A||-smooth; contraction needs step < 2 / L
    A = np.asarray(A)
    limit = 1.0 / spectral_norm(A.T @ A)
    if step >= limit:
        warnings.warn(f"step {step:g} >= {limit:g}: gradient descent may diverge", RuntimeWarning, stacklevel=3)


def gradient_descent(A, b, gd: GDConfig, server_model=None, policy=None, seed=0) -> History:
    """Distributed GD on ||Ax - b||^2 with the GC scheme in ``gd`` (None means centralized)."""
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=float).ravel()
    _check_step(A, gd.step)
    x = np.zeros(A.shape[1]) if gd.x0 is None else np.asarray(gd.x0, dtype=float).copy()
    hist = History([x.copy()], [least_squares_loss(A, b, x)], [], [])
    for t in range(gd.iterations):
        if gd.scheme is None:
            grad, err, when = 2 * A.T @ (A @ x - b), 0.0, 0.0
        else:
            g_parts = partial_gradients(A, b, gd.scheme.k, x)
            job = GradientJob(gd.scheme, g_parts)
            model = server_model or ServerModel(gd.scheme.n)
            trace = run_round(job, model, policy, substream(seed, "gd-round", t))
            if trace.unrecoverable:
                hist.aborted = True
                break
            grad = np.real(np.asarray(trace.output)).ravel()
            err = float(np.linalg.norm(grad - g_parts.sum(axis=0)))
            when = trace.decode_time
        x = x - gd.step * grad
        hist.iterates.append(x.copy())
        hist.losses.append(least_squares_loss(A, b, x))
        hist.grad_errors.append(err)
        hist.decode_times.append(when)
    return hist


def largest_remainder(shares, total) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``shares``, each at least 1."""
    shares = np.asarray(shares, dtype=float)
    k = shares.size
    if total < k:
        raise InvalidParameterError(f"cannot give each of {k} blocks a server with only {total}")
    counts = np.ones(k, dtype=int)
    spare = total - k
    if spare:
        quota = shares / shares.sum() * spare
        extra = np.floor(quota).astype(int)
        order = np.lexsort((np.arange(k), -(quota - extra)))
        extra[order[: spare - extra.sum()]] += 1
        counts += extra
    return counts


@dataclasses.dataclass(frozen=True)
class ReplicationPlan:
    """Which block each server holds and the per-block gradient scale.

    Block i sits on m_i servers. Each arriving server returns its block's
    partial gradient times 1/(f * pi_i) with pi_i = m_i / n, so the sum of any
    uniformly random f responses is an unbiased gradient estimate.
    """

    server_block: np.ndarray
    multiplicity: np.ndarray
    scores: np.ndarray
    f: int

    @property
    def n(self) -> int:
        return self.server_block.size

    @property
    def pi(self) -> np.ndarray:
        return self.multiplicity / self.n

    @property
    def block_scale(self) -> np.ndarray:
        return 1.0 / (self.f * self.pi)


def replication_plan(A, k, n, s) -> ReplicationPlan:
    scores = block_leverage_distribution(A, k).probs
    mult = largest_remainder(scores, n)
    server_block = np.repeat(np.arange(k), mult)
    return ReplicationPlan(server_block, mult, scores, n - s)


def sketched_gradient(A, b, k, plan: ReplicationPlan, servers, x) -> np.ndarray:
    """Gradient of sum over ``servers`` of ||(A_j x - b_j)||^2 / (f pi_j), recomputed directly."""
    A_blocks = partition(as_matrix(A), k, "rows")
    b_blocks = np.split(np.asarray(b, dtype=float).ravel(), k)
    grad = np.zeros(A_blocks[0].shape[1])
    for srv in servers:
        j = plan.server_block[srv]
        w = plan.block_scale[j]
        grad += 2 * w * A_blocks[j].T @ (A_blocks[j] @ x - b_blocks[j])
    return grad


class _SketchedAggregateJob:
    """Servers return rescaled block gradients; the first f are summed, no decoding."""

    exact = False

    def __init__(self, plan, g_parts):
        self.plan = plan
        self.n = plan.n
        self.f = plan.f
        self.outputs = g_parts[plan.server_block] * plan.block_scale[plan.server_block][:, None]
        self.target = g_parts.sum(axis=0)

    def work(self):
        return np.ones(self.n)

    def decodable(self, ids):
        return len(set(ids)) >= self.f

    def decode(self, ids):
        return self.outputs[sorted(set(ids))[: self.f]].sum(axis=0)


def iterative_sketching_gc(A, b, k, n, s, gd: GDConfig, server_model=None, plan=None, seed=0) -> History:
    """Decoding-free GD: every round sums the first f = n - s responses.

    Fresh delay draws give a fresh random subset, hence a fresh sketched
    gradient, at every iteration.
    """
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=float).ravel()
    _check_step(A, gd.step)
    plan = replication_plan(A, k, n, s) if plan is None else plan
    model = server_model or ServerModel(n)
    x = np.zeros(A.shape[1]) if gd.x0 is None else np.asarray(gd.x0, dtype=float).copy()
    hist = History([x.copy()], [least_squares_loss(A, b, x)], [], [])
    for t in range(gd.iterations):
        g_parts = partial_gradients(A, b, k, x)
        trace = run_round(_SketchedAggregateJob(plan, g_parts), model, None, substream(seed, "is-round", t))
        if trace.unrecoverable:
            hist.aborted = True
            break
        grad = np.asarray(trace.output)
        hist.arrival_sets.append(tuple(i for i, _ in trace.arrivals))
        x = x - gd.step * grad
        hist.iterates.append(x.copy())
        hist.losses.append(least_squares_loss(A, b, x))
        hist.grad_errors.append(float(np.linalg.norm(grad - g_parts.sum(axis=0))))
        hist.decode_times.append(trace.decode_time)
    return hist


def sketch_and_solve_baseline(A, b, S) -> np.ndarray:
    """argmin_x ||S (A x - b)||^2 from one fixed sketch."""
    A = as_matrix(A, "A")
    Sm = S.matrix if hasattr(S, "matrix") else as_matrix(S, "S")
    SA = Sm @ A
    if np.linalg.matrix_rank(SA) < A.shape[1]:
        raise RankDeficiencyError("sketched matrix S A is rank deficient")
    x, *_ = np.linalg.lstsq(SA, Sm @ np.asarray(b, dtype=float).ravel(), rcond=None)
    return x
