"""Coded matrix multiplication: exact polynomial codes and sampled/sketched
approximations of them.

Every scheme materializes its per-server task pairs at construction.
``compute(i)`` runs server i's product and ``decode(responses)`` turns any
``f`` distinct responses into the estimate of ``A @ B``. Decoding sorts
responses by server id and drops duplicates, so arrival order never matters.
"""
from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .errors import (
    InfeasibleParametersError,
    InsufficientResponsesError,
    InvalidExponentsError,
    InvalidInputError,
    InvalidParameterError,
)
from .linalg import (
    _lu_solve,
    as_matrix,
    check_points,
    lagrange_interpolate,
    partition,
    roots_of_unity,
    to_real,
)
from .rng import substream
from .sketch import (
    SamplingDistribution,
    block_cr_distribution,
    countsketch_operator,
    expected_trials_until_distinct,
    sample_until_r_distinct,
    uniform_distribution,
)


class Exactness(str, enum.Enum):
    EXACT = "exact"
    UNBIASED = "unbiased-approximate"
    SKETCH = "sketch-approximate"


@dataclasses.dataclass(frozen=True)
class ServerOutput:
    server_id: int
    W: np.ndarray
    point: complex | None = None


class CMMScheme:
    """Shared encode/compute/decode plumbing for threshold-f schemes."""

    exactness = Exactness.EXACT

    def __init__(self, tasks, f, points=None, shape=None):
        self.tasks = list(tasks)
        self.n = len(self.tasks)
        self.f = int(f)
        self.points = points
        self.shape = shape

    def compute(self, i) -> ServerOutput:
        A_i, B_i = self.tasks[i]
        point = None if self.points is None else complex(self.points[i])
        return ServerOutput(i, A_i @ B_i, point)

    def compute_all(self) -> list[ServerOutput]:
        return [self.compute(i) for i in range(self.n)]

    def task_flops(self, i) -> int:
        A_i, B_i = self.tasks[i]
        return 2 * A_i.shape[0] * A_i.shape[1] * B_i.shape[1]

    def decodable(self, server_ids) -> bool:
        return len(set(server_ids)) >= self.f

    def _select(self, responses) -> list[ServerOutput]:
        unique = {}
        for r in responses:
            unique.setdefault(r.server_id, r)
        if len(unique) < self.f:
            raise InsufficientResponsesError(f"need {self.f} distinct responses, got {len(unique)}")
        return [unique[i] for i in sorted(unique)][: self.f]

    def decode(self, responses) -> np.ndarray:
        raise NotImplementedError


class PolynomialFamilyScheme(CMMScheme):
    """Server outputs are evaluations of a matrix polynomial with known exponents.

    Decoding solves the (generalized) Vandermonde system on any f points and
    hands the coefficients to ``_assemble``.
    """

    def __init__(self, tasks, points, exponents, shape):
        self.exponents = np.asarray(exponents, dtype=int)
        super().__init__(tasks, len(self.exponents), points, shape)

    def coefficients(self, responses) -> list[np.ndarray]:
        chosen = self._select(responses)
        ids = [r.server_id for r in chosen]
        pts = self.points[ids]
        values = [r.W for r in chosen]
        if np.array_equal(self.exponents, np.arange(self.f)):
            return lagrange_interpolate(pts, values)
        V = pts[:, None] ** self.exponents[None, :]
        rhs = np.stack([v.reshape(-1) for v in values]).astype(complex)
        coeffs = _lu_solve(V, rhs)
        return [c.reshape(values[0].shape) for c in coeffs]

    def decode(self, responses) -> np.ndarray:
        return to_real(self._assemble(self.coefficients(responses)))

    def _assemble(self, coeffs):
        raise NotImplementedError


class MatDotScheme(PolynomialFamilyScheme):
    """p_A(x) = sum_j A^j x^(j-1), p_B(x) = sum_j B_j x^(k-j); AB is the x^(k-1) coefficient."""

    def __init__(self, a_blocks, b_blocks, points, weights=None):
        k = len(a_blocks)
        pts = check_points(points)
        if pts.size < 2 * k - 1:
            raise InfeasibleParametersError(f"MatDot with k={k} needs n >= {2 * k - 1}, got {pts.size}")
        sw = np.ones(k) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
        tasks = []
        for x in pts:
            pa = sum(sw[j] * a_blocks[j] * x**j for j in range(k))
            pb = sum(sw[j] * b_blocks[j] * x ** (k - 1 - j) for j in range(k))
            tasks.append((pa, pb))
        self.k = k
        shape = (a_blocks[0].shape[0], b_blocks[0].shape[1])
        super().__init__(tasks, pts, np.arange(2 * k - 1), shape)

    def _assemble(self, coeffs):
        return coeffs[self.k - 1]

    def ambiguity_witness(self, responses) -> tuple[list, list]:
        """Two coefficient lists, both consistent with 2k-2 responses, whose
        x^(k-1) coefficients (the decoded products) differ.

        The degree 2k-2 polynomial vanishing on the received points can be
        added to any consistent fit without changing a received value; its
        x^(k-1) coefficient shifts the product.
        """
        unique = {r.server_id: r for r in responses}
        if len(unique) != 2 * self.k - 2:
            raise InvalidParameterError(f"witness needs exactly {2 * self.k - 2} responses")
        ids = sorted(unique)
        pts = self.points[ids]
        vanish = np.polynomial.polynomial.polyfromroots(pts)
        if abs(vanish[self.k - 1]) < 1e-12:
            raise InsufficientResponsesError("received points determine the product")
        V = pts[:, None] ** np.arange(2 * self.k - 1)[None, :]
        rhs = np.stack([unique[i].W.reshape(-1) for i in ids]).astype(complex)
        fit, *_ = np.linalg.lstsq(V, rhs, rcond=None)
        first = [c.reshape(self.shape) for c in fit]
        second = [c + v * np.ones(self.shape) for c, v in zip(first, vanish)]
        return first, second


def matdot(A, B, k: int, n=None, points=None) -> MatDotScheme:
    """MatDot code over the inner dimension; threshold f = 2k - 1."""
    a_blocks, b_blocks = _inner_blocks(A, B, k)
    pts = _default_points(n, points, 2 * k - 1)
    return MatDotScheme(a_blocks, b_blocks, pts)


def _inner_blocks(A, B, k):
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise InvalidInputError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    return partition(A, k, "cols"), partition(B, k, "rows")


def _default_points(n, points, minimum):
    if points is not None:
        return check_points(points, n)
    return roots_of_unity(minimum if n is None else n)


class PolynomialCodeScheme(PolynomialFamilyScheme):
    """(a, b)-polynomial code over the outer dimensions; threshold f = k^2."""

    def __init__(self, a_blocks, b_blocks, points, a_exp, b_exp):
        k = len(a_blocks)
        exps = np.array([j * a_exp + l * b_exp for l in range(k) for j in range(k)])
        if np.unique(exps).size != exps.size:
            raise InvalidExponentsError(f"exponents (a, b)=({a_exp}, {b_exp}) collide for k={k}")
        pts = check_points(points)
        if pts.size < k * k:
            raise InfeasibleParametersError(f"polynomial code with k={k} needs n >= {k * k}")
        tasks = []
        for x in pts:
            At = sum(a_blocks[j] * x ** (j * a_exp) for j in range(k))
            Bt = sum(b_blocks[l] * x ** (l * b_exp) for l in range(k))
            tasks.append((At, Bt))
        self.k = k
        order = np.argsort(exps)
        # coefficient slot t (sorted exponent order) holds block (j, l)
        self._block_of = [(int(order[t] % k), int(order[t] // k)) for t in range(k * k)]
        shape = (a_blocks[0].shape[0] * k, b_blocks[0].shape[1] * k)
        super().__init__(tasks, pts, exps[order], shape)

    def _assemble(self, coeffs):
        grid = [[None] * self.k for _ in range(self.k)]
        for t, (j, l) in enumerate(self._block_of):
            grid[j][l] = coeffs[t]
        return np.block(grid)


def polynomial_code(A, B, k: int, a_exp=1, b_exp=None, n=None, points=None) -> PolynomialCodeScheme:
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise InvalidInputError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    a_blocks, b_blocks = partition(A, k, "rows"), partition(B, k, "cols")
    pts = _default_points(n, points, k * k)
    return PolynomialCodeScheme(a_blocks, b_blocks, pts, a_exp, k if b_exp is None else b_exp)


class EntangledExampleScheme(PolynomialFamilyScheme):
    """A~_i = A_0 + x A_1, B~_i = x B^0 + B^1; AB is the degree-1 coefficient."""

    def __init__(self, A, B, points):
        (A0, A1), (B0, B1) = _inner_blocks(A, B, 2)
        pts = check_points(points)
        if pts.size < 3:
            raise InfeasibleParametersError("the entangled example needs n >= 3")
        tasks = [(A0 + x * A1, x * B0 + B1) for x in pts]
        super().__init__(tasks, pts, np.arange(3), (A0.shape[0], B0.shape[1]))

    def _assemble(self, coeffs):
        return coeffs[1]


def entangled_example(A, B, n=None, points=None) -> EntangledExampleScheme:
    return EntangledExampleScheme(A, B, _default_points(n, points, 3))


class SampledMatDotScheme(MatDotScheme):
    """MatDot over sampled, importance-rescaled block pairs."""

    exactness = Exactness.UNBIASED

    def __init__(self, a_blocks, b_blocks, points, weights=None, indices=None, scales=None):
        super().__init__(a_blocks, b_blocks, points, weights)
        self.indices = indices
        self.scales = scales


def _check_threshold(n, r):
    if n is not None and n < 2 * r - 1:
        raise InfeasibleParametersError(f"need n >= 2r-1 = {2 * r - 1}, got {n}")


def coded_independent_sampling(A, B, k, r, dist=None, n=None, points=None, seed=0):
    """r iid block indices; blocks scaled by 1/sqrt(r P_i); decode at 2r - 1."""
    _check_threshold(n, r)
    a_all, b_all = _inner_blocks(A, B, k)
    dist = uniform_distribution(k) if dist is None else dist
    if not isinstance(dist, SamplingDistribution):
        dist = SamplingDistribution(dist)
    if dist.size != k:
        raise InvalidParameterError(f"distribution has {dist.size} atoms, expected k={k}")
    rng = substream(seed, "independent-sampling")
    idx = rng.choice(k, size=r, p=dist.probs)
    scale = 1.0 / np.sqrt(r * dist.probs[idx])
    a_blocks = [a_all[i] * c for i, c in zip(idx, scale)]
    b_blocks = [b_all[i] * c for i, c in zip(idx, scale)]
    return SampledMatDotScheme(a_blocks, b_blocks, _default_points(n, points, 2 * r - 1),
                               indices=idx, scales=scale**2)


def coded_setwise_sampling(A, B, k, r, n=None, points=None, seed=0):
    """Uniform r-subset without replacement; estimate (k/r) * sum of its block products."""
    if r > k or r < 1:
        raise InvalidParameterError(f"need 1 <= r <= k, got r={r}, k={k}")
    _check_threshold(n, r)
    a_all, b_all = _inner_blocks(A, B, k)
    rng = substream(seed, "setwise-sampling")
    idx = np.sort(rng.choice(k, size=r, replace=False))
    # c * P_I = C(k,r) * r/k * 1/C(k,r) = r/k
    c = math.sqrt(k / r)
    a_blocks = [a_all[i] * c for i in idx]
    b_blocks = [b_all[i] * c for i in idx]
    return SampledMatDotScheme(a_blocks, b_blocks, _default_points(n, points, 2 * r - 1),
                               indices=idx, scales=np.full(r, k / r))


def weighted_cr_cmm(A, B, k, r, n=None, points=None, seed=0, normalization="expected"):
    """Weighted CR-CMM: sample block pairs until r are distinct, encode with sqrt weights.

    Pairs are drawn with probability proportional to ||A^i||_F^2 ||B_i||_F^2.
    With ``normalization="expected"`` the assembled blocks carry
    1/sqrt(E[T] p_i), which makes the decoded estimate unbiased. ``"realized"``
    uses the realized trial count T instead.
    """
    _check_threshold(n, r)
    a_all, b_all = _inner_blocks(A, B, k)
    dist = block_cr_distribution(A, B, k, squared=True)
    sample = sample_until_r_distinct(dist, r, substream(seed, "weighted-cr-cmm"))
    if normalization == "expected":
        trials = expected_trials_until_distinct(dist, r)
    elif normalization == "realized":
        trials = float(sample.trials)
    else:
        raise InvalidParameterError(f"unknown normalization {normalization!r}")
    scale = 1.0 / np.sqrt(trials * dist.probs[sample.indices])
    a_blocks = [a_all[i] * c for i, c in zip(sample.indices, scale)]
    b_blocks = [b_all[i] * c for i, c in zip(sample.indices, scale)]
    scheme = SampledMatDotScheme(a_blocks, b_blocks, _default_points(n, points, 2 * r - 1),
                                 weights=sample.weights, indices=sample.indices,
                                 scales=sample.weights * scale**2)
    scheme.sample = sample
    scheme.normalizer = trials
    return scheme


def sampled_estimate(A, B, k, indices, scales) -> np.ndarray:
    """Uncoded estimator sum_t scales[t] * A^{I_t} B_{I_t}."""
    a_all, b_all = _inner_blocks(A, B, k)
    return sum(c * (a_all[i] @ b_all[i]) for i, c in zip(indices, scales))


class OverSketchScheme(CMMScheme):
    """Blockwise sketched product with e redundant sketch bands per output block.

    The q x N sketch stacks d = q/b independent width-b CountSketches, scaled
    by 1/sqrt(d - e). Output block (u, v) is the sum of d tasks
    A_sk[u, t] @ B_sk[t, v], one task per server, and any d - e of them decode
    it. The survivors form an estimator of effective width (d - e) * b.
    """

    exactness = Exactness.SKETCH

    def __init__(self, A_sk, B_sk, b, e, sketch):
        L, q = A_sk.shape
        M = B_sk.shape[1]
        self.b, self.e, self.d = b, e, q // b
        self.grid = (L // b, M // b)
        self.sketch = sketch
        self.A_sketched, self.B_sketched = A_sk, B_sk
        tasks, self.task_index = [], []
        for u in range(self.grid[0]):
            for v in range(self.grid[1]):
                for t in range(self.d):
                    tasks.append((A_sk[u * b:(u + 1) * b, t * b:(t + 1) * b],
                                  B_sk[t * b:(t + 1) * b, v * b:(v + 1) * b]))
                    self.task_index.append((u, v, t))
        super().__init__(tasks, self.d - e, shape=(L, M))

    @property
    def effective_width(self) -> int:
        return (self.d - self.e) * self.b

    def _per_block(self, server_ids):
        seen = {}
        for i in sorted(set(server_ids)):
            u, v, t = self.task_index[i]
            seen.setdefault((u, v), []).append(i)
        return seen

    def decodable(self, server_ids) -> bool:
        seen = self._per_block(server_ids)
        return all(len(seen.get((u, v), [])) >= self.f
                   for u in range(self.grid[0]) for v in range(self.grid[1]))

    def decode(self, responses) -> np.ndarray:
        unique = {}
        for r in responses:
            unique.setdefault(r.server_id, r)
        seen = self._per_block(unique)
        out = np.zeros(self.shape, dtype=self.A_sketched.dtype)
        b = self.b
        for u in range(self.grid[0]):
            for v in range(self.grid[1]):
                ids = seen.get((u, v), [])
                if len(ids) < self.f:
                    raise InsufficientResponsesError(
                        f"block ({u}, {v}) has {len(ids)} of the {self.f} tasks it needs"
                    )
                out[u * b:(u + 1) * b, v * b:(v + 1) * b] = sum(unique[i].W for i in ids[: self.f])
        return out


def oversketch_operator(N, q, b, e, seed=0) -> np.ndarray:
    d = q // b
    bands = [countsketch_operator(N, b, substream(seed, "oversketch", t)).matrix for t in range(d)]
    return np.vstack(bands) / math.sqrt(d - e)


def oversketch(A, B, q, b, e=0, seed=0, sketch=None) -> OverSketchScheme:
    """OverSketch product; ``sketch`` may supply an explicit q x N operator."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    L, N = A.shape
    if B.shape[0] != N:
        raise InvalidInputError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    M = B.shape[1]
    if b < 1 or q % b or L % b or M % b:
        raise InvalidParameterError(f"b={b} must divide q={q}, L={L} and M={M}")
    if not 0 <= e < q // b:
        raise InvalidParameterError(f"need 0 <= e < q/b = {q // b}, got e={e}")
    S = oversketch_operator(N, q, b, e, seed) if sketch is None else as_matrix(sketch, "sketch")
    if S.shape != (q, N):
        raise InvalidInputError(f"sketch must be {q} x {N}, got {S.shape}")
    return OverSketchScheme(A @ S.T, S @ B, b, e, S)
