"""Sampling distributions, sketching operators and their error meters.

Conventions: a sketch ``S`` is q x N and acts on the left of an N-row
matrix. For a product ``A @ B`` with A of shape L x N the sketched product is
``A @ S.T @ S @ B``.
"""
from __future__ import annotations

import dataclasses
import enum
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateDistributionError,
    InvalidInputError,
    InvalidParameterError,
    UnreachableTargetError,
)
from .linalg import as_matrix, orthonormal_basis, partition, spectral_norm
from .rng import substream


class DistKind(str, enum.Enum):
    CR_ROWS = "cr-rows"
    LEVERAGE = "leverage"
    BLOCK_CR = "block-cr"
    BLOCK_LEVERAGE = "block-leverage"
    UNIFORM = "uniform"
    USER = "user-supplied"


@dataclasses.dataclass(frozen=True)
class SamplingDistribution:
    probs: np.ndarray
    kind: DistKind = DistKind.USER
    beta: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DegenerateDistributionError("probabilities must be finite and nonnegative")
        total = p.sum()
        if total <= 0:
            raise DegenerateDistributionError("probabilities sum to zero")
        if abs(total - 1.0) > 1e-12:
            p = p / total
        if not 0 < self.beta <= 1:
            raise InvalidParameterError(f"beta must lie in (0, 1], got {self.beta}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "kind", DistKind(self.kind))

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


def uniform_distribution(N: int) -> SamplingDistribution:
    return SamplingDistribution(np.full(N, 1.0 / N), DistKind.UNIFORM)


def _normalize(weights, kind) -> SamplingDistribution:
    phi = float(np.sum(weights))
    if phi <= 0:
        raise DegenerateDistributionError(f"{kind.value} distribution is undefined for zero inputs")
    return SamplingDistribution(np.asarray(weights, dtype=float) / phi, kind)


def cr_distribution(A, B) -> SamplingDistribution:
    """p_i proportional to ||A[:, i]|| * ||B[i, :]|| for A (L x N), B (N x M)."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise InvalidInputError(f"A has {A.shape[1]} columns but B has {B.shape[0]} rows")
    return _normalize(np.linalg.norm(A, axis=0) * np.linalg.norm(B, axis=1), DistKind.CR_ROWS)


def block_cr_distribution(A, B, k: int, squared: bool = False) -> SamplingDistribution:
    """Distribution over the k inner block pairs (A^i, B_i).

    ``squared=False`` weights by ||A^i||_F * ||B_i||_F; ``squared=True`` uses
    the squared Frobenius product favoured by weighted CR-CMM.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise InvalidInputError(f"A has {A.shape[1]} columns but B has {B.shape[0]} rows")
    a = np.array([np.linalg.norm(blk) for blk in partition(A, k, "cols")])
    b = np.array([np.linalg.norm(blk) for blk in partition(B, k, "rows")])
    w = a * b
    return _normalize(w**2 if squared else w, DistKind.BLOCK_CR)


def leverage_scores(A) -> np.ndarray:
    U = orthonormal_basis(A)
    return np.sum(np.abs(U) ** 2, axis=1)


def leverage_distribution(A) -> SamplingDistribution:
    ell = leverage_scores(A)
    return SamplingDistribution(ell / ell.sum(), DistKind.LEVERAGE)


def block_leverage_distribution(A, k: int) -> SamplingDistribution:
    """Pi_i = ||U_i||_F^2 / d over k equal row blocks of an orthonormal basis U."""
    A = as_matrix(A, "A")
    if A.shape[0] % k:
        raise InvalidParameterError(f"k={k} does not divide N={A.shape[0]}")
    ell = leverage_scores(A)
    blocks = ell.reshape(k, -1).sum(axis=1)
    return SamplingDistribution(blocks / blocks.sum(), DistKind.BLOCK_LEVERAGE)


def mix_with_uniform(dist: SamplingDistribution, beta: float) -> SamplingDistribution:
    """beta*p + (1-beta)*uniform, which satisfies p_tilde >= beta*p entrywise."""
    if not 0 < beta <= 1:
        raise InvalidParameterError(f"beta must lie in (0, 1], got {beta}")
    mixed = beta * dist.probs + (1 - beta) / dist.size
    return SamplingDistribution(mixed, DistKind.USER, beta=beta)


class SketchVariant(str, enum.Enum):
    ROW_SAMPLING = "row-sampling"
    COUNTSKETCH = "countsketch"
    GAUSSIAN = "gaussian"
    SRHT = "srht"


@dataclasses.dataclass(frozen=True)
class SketchOperator:
    """A materialized q x N sketch plus the randomness that produced it."""

    variant: SketchVariant
    matrix: np.ndarray
    indices: np.ndarray | None = None
    scales: np.ndarray | None = None
    signs: np.ndarray | None = None
    seed: object = None

    @property
    def q(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    def apply(self, A) -> np.ndarray:
        A = as_matrix(A)
        if A.shape[0] != self.N:
            raise InvalidInputError(f"sketch expects {self.N} rows, got {A.shape[0]}")
        return self.matrix @ A


def _check_q(q):
    if int(q) != q or q < 1:
        raise InvalidParameterError(f"sketch size q must be a positive integer, got {q}")
    return int(q)


def row_sampling_sketch(dist: SamplingDistribution, q: int, seed=0) -> SketchOperator:
    """q draws with replacement; row j is 1/sqrt(q*pi_i) at the drawn column i."""
    q = _check_q(q)
    rng = substream(seed, "row-sampling")
    idx = rng.choice(dist.size, size=q, p=dist.probs)
    scales = 1.0 / np.sqrt(q * dist.probs[idx])
    S = np.zeros((q, dist.size))
    S[np.arange(q), idx] = scales
    return SketchOperator(SketchVariant.ROW_SAMPLING, S, indices=idx, scales=scales, seed=seed)


def countsketch_operator(N: int, q: int, seed=0) -> SketchOperator:
    q = _check_q(q)
    rng = substream(seed, "countsketch")
    buckets = rng.integers(0, q, size=N)
    signs = rng.choice(np.array([-1.0, 1.0]), size=N)
    S = np.zeros((q, N))
    S[buckets, np.arange(N)] = signs
    return SketchOperator(SketchVariant.COUNTSKETCH, S, indices=buckets, signs=signs, seed=seed)


def countsketch(A, q: int, seed=0) -> tuple[np.ndarray, SketchOperator]:
    """Hash each row of A into one of q buckets with a random sign and sum."""
    A = as_matrix(A, "A")
    op = countsketch_operator(A.shape[0], q, seed)
    out = np.zeros((op.q, A.shape[1]), dtype=A.dtype)
    np.add.at(out, op.indices, op.signs[:, None] * A)
    return out, op


def gaussian_sketch(q: int, N: int, seed=0) -> SketchOperator:
    q = _check_q(q)
    rng = substream(seed, "gaussian")
    return SketchOperator(SketchVariant.GAUSSIAN, rng.standard_normal((q, N)) / np.sqrt(q), seed=seed)


def srht(q: int, N: int, seed=0) -> SketchOperator:
    """Subsampled randomized Hadamard transform S = Omega * H_hat * D.

    Non power-of-two N is zero padded to the next power of two P; S is the
    first N columns of the padded q x P operator, which keeps E[S^T S] = I_N.
    Rows are sampled without replacement, so q = N = P gives an orthogonal S.
    """
    q = _check_q(q)
    if q > N:
        raise InvalidParameterError(f"q={q} exceeds N={N}")
    P = 1 << max(0, int(N - 1).bit_length())
    rng = substream(seed, "srht")
    signs = rng.choice(np.array([-1.0, 1.0]), size=P)
    rows = np.sort(rng.choice(P, size=q, replace=False))
    H = sla.hadamard(P).astype(float) / np.sqrt(P)
    S = np.sqrt(P / q) * H[rows] * signs
    return SketchOperator(SketchVariant.SRHT, S[:, :N], indices=rows, signs=signs[:N], seed=seed)


def basic_matrix_multiplication(A, B, q: int, seed=0) -> np.ndarray:
    """CR sampling estimate of A^H B for A (N x L), B (N x M).

    Rows are drawn with probabilities proportional to ||A_(i)|| * ||B_(i)||
    and the result is (S A)^H (S B).
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise InvalidInputError(f"A and B must share their row count, got {A.shape} and {B.shape}")
    dist = cr_distribution(A.conj().T, B)
    S = row_sampling_sketch(dist, q, seed)
    return (S.apply(A)).conj().T @ S.apply(B)


def cr_multiply(A, B, q: int, seed=0) -> np.ndarray:
    """Same estimator in product orientation: approximates A @ B for A (L x N)."""
    A = as_matrix(A, "A")
    return basic_matrix_multiplication(A.conj().T, B, q, seed)


@dataclasses.dataclass(frozen=True)
class WeightedSample:
    indices: np.ndarray
    weights: np.ndarray
    trials: int

    @property
    def r(self) -> int:
        return self.indices.size


def sample_until_r_distinct(dist: SamplingDistribution, r: int, seed=0) -> WeightedSample:
    """Draw with replacement until r distinct indices appear.

    Indices are reported in order of first appearance; weights count draws.
    """
    if r < 1:
        raise InvalidParameterError("r must be >= 1")
    if dist.support.size < r:
        raise UnreachableTargetError(
            f"only {dist.support.size} indices have positive probability, cannot reach r={r}"
        )
    rng = substream(seed, "until-distinct")
    counts: dict[int, int] = {}
    trials = 0
    batch = max(4 * r, 16)
    while len(counts) < r:
        for i in rng.choice(dist.size, size=batch, p=dist.probs):
            trials += 1
            i = int(i)
            counts[i] = counts.get(i, 0) + 1
            if len(counts) == r:
                break
    return WeightedSample(
        np.fromiter(counts.keys(), dtype=int, count=r),
        np.fromiter(counts.values(), dtype=int, count=r),
        trials,
    )


def expected_trials_until_distinct(dist: SamplingDistribution, r: int) -> float:
    """E[T] for :func:`sample_until_r_distinct`, by recursion over seen sets.

    Dividing the summed importance weights by E[T] (rather than the realized
    T) keeps the weighted estimator unbiased by Wald's identity.
    """
    p = tuple(float(x) for x in dist.probs)
    if sum(1 for x in p if x > 0) < r:
        raise UnreachableTargetError(f"cannot reach r={r} distinct indices")
    support = [i for i, x in enumerate(p) if x > 0]

    @lru_cache(maxsize=None)
    def expect(seen: frozenset) -> float:
        if len(seen) == r:
            return 0.0
        stay = sum(p[i] for i in seen)
        acc = 1.0
        for i in support:
            if i not in seen:
                acc += p[i] * expect(seen | {i})
        return acc / (1.0 - stay)

    return expect(frozenset())


def _sketch_matrix(S):
    return S.matrix if isinstance(S, SketchOperator) else as_matrix(S, "S")


def se_error(S, A) -> float:
    """||I_d - (S U)^H (S U)||_2 for an orthonormal basis U of col(A)."""
    U = orthonormal_basis(A)
    Sm = _sketch_matrix(S)
    if Sm.shape[1] != U.shape[0]:
        raise InvalidInputError(f"sketch has {Sm.shape[1]} columns, A has {U.shape[0]} rows")
    Uh = Sm @ U
    return spectral_norm(np.eye(U.shape[1]) - Uh.conj().T @ Uh)


def amm_error(A, B, S, norm: str = "frobenius") -> float:
    """||A B - A S^T S B|| in the spectral or Frobenius norm."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    Sm = _sketch_matrix(S)
    if A.shape[1] != B.shape[0] or Sm.shape[1] != A.shape[1]:
        raise InvalidInputError("shape mismatch between A, S and B")
    R = A @ B - (A @ Sm.T) @ (Sm @ B)
    if norm in ("spectral", "2"):
        return spectral_norm(R)
    if norm in ("frobenius", "fro"):
        return float(np.linalg.norm(R))
    raise InvalidParameterError(f"unknown norm {norm!r}")


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Two-sided Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1 + z**2 / trials
    centre = (phat + z**2 / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclasses.dataclass
class Theorem1Row:
    q: int
    successes: int
    trials: int
    frequency: float
    low: float
    high: float
    median_error: float


@dataclasses.dataclass
class Theorem1Report:
    epsilon: float
    delta: float
    rows: list[Theorem1Row]

    @property
    def monotone(self) -> bool:
        """No grid step drops below the previous step's confidence band."""
        return all(b.high >= a.low for a, b in zip(self.rows, self.rows[1:]))

    @property
    def crossing_q(self) -> int | None:
        for row in self.rows:
            if row.frequency >= 1 - self.delta:
                return row.q
        return None


def theorem1_validate(A, B, epsilon, delta, q_grid, trials=200, seed=0) -> Theorem1Report:
    """Empirical frequency of ||AB - A S^T S B||_2 <= eps ||A||_2 ||B||_2 per q.

    S comes from CR row sampling. The guarantee's constant is not modelled,
    so the report is read for its trend in q.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    grid = [int(q) for q in q_grid]
    if grid != sorted(grid):
        raise InvalidParameterError("q_grid must be ascending")
    C = A @ B
    scale = spectral_norm(A) * spectral_norm(B)
    dist = cr_distribution(A, B)
    rows = []
    for q in grid:
        errs = np.empty(trials)
        for t in range(trials):
            S = row_sampling_sketch(dist, q, substream(seed, "theorem1", q, t))
            errs[t] = spectral_norm(C - (A @ S.matrix.T) @ (S.matrix @ B)) / scale
        hits = int(np.sum(errs <= epsilon))
        lo, hi = wilson_interval(hits, trials)
        rows.append(Theorem1Row(q, hits, trials, hits / trials, lo, hi, float(np.median(errs))))
    return Theorem1Report(float(epsilon), float(delta), rows)
