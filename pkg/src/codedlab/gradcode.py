"""Gradient coding schemes.

A scheme is an n x k encoding matrix G plus a rule that turns a responding
server set I into a decoding vector a (length n, zero off I). Server i sends
row i of ``G @ g`` where the rows of g are the k partial gradients, and the
master forms ``a @ (G @ g)``. Exact schemes achieve ``a^T G = 1`` on every
I of size n - s; approximate schemes are scored by ``||a^T G - 1||_2``.

Servers and partitions are 0-indexed throughout.
"""
from __future__ import annotations

import dataclasses
import enum
import itertools
import math

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    BudgetExceededError,
    DegreeOverflowError,
    EvaluationPointError,
    InfeasibleParametersError,
    InvalidDesignError,
    InvalidGraphError,
    InvalidParameterError,
)
from .linalg import (
    as_matrix,
    check_points,
    decoding_row,
    roots_of_unity,
    sym_eigenvalues,
    vandermonde,
)
from .rng import substream
from .sketch import block_leverage_distribution, sample_until_r_distinct

EXHAUSTIVE_LIMIT = 100_000
SAMPLED_SETS = 10_000


class Decoder(str, enum.Enum):
    EXACT_BRS = "exact-brs"
    EXACT_FRC = "exact-frc"
    ONE_STEP = "one-step"
    OPTIMAL = "optimal-lsq"
    EXPANDER = "expander"
    WEIGHTED = "weighted"


@dataclasses.dataclass(frozen=True)
class GCScheme:
    n: int
    k: int
    s: int
    G: np.ndarray
    decoder: Decoder
    points: np.ndarray | None = None
    P: np.ndarray | None = None
    H: np.ndarray | None = None
    rho: float | None = None
    target: np.ndarray | None = None
    info: dict = dataclasses.field(default_factory=dict)

    @property
    def f(self) -> int:
        return self.n - self.s

    @property
    def assignments(self) -> list[np.ndarray]:
        return [np.flatnonzero(np.abs(row) > 1e-10) for row in self.G]

    @property
    def row_weights(self) -> np.ndarray:
        return (np.abs(self.G) > 1e-10).sum(axis=1)

    @property
    def column_weights(self) -> np.ndarray:
        return (np.abs(self.G) > 1e-10).sum(axis=0)

    @property
    def decode_target(self) -> np.ndarray:
        return np.ones(self.k) if self.target is None else self.target

    def with_decoder(self, decoder, rho=None) -> "GCScheme":
        return dataclasses.replace(self, decoder=Decoder(decoder), rho=rho)

    def decoding_vector(self, I, subset=None) -> np.ndarray:
        """Length-n decoding vector for responders ``I``.

        ``subset`` picks which k responders the exact BRS decoder inverts on;
        by default the k lowest-indexed ones.
        """
        I = _as_index_set(I, self.n)
        a = np.zeros(self.n, dtype=complex if np.iscomplexobj(self.G) else float)
        if self.decoder in (Decoder.EXACT_BRS, Decoder.WEIGHTED):
            use = I[: self.k] if subset is None else _as_index_set(subset, self.n)
            if use.size != self.k or not np.all(np.isin(use, I)):
                raise InvalidParameterError(f"BRS decoding needs k={self.k} responders from I")
            a = a.astype(complex)
            a[use] = decoding_row(self.points[use])
        elif self.decoder is Decoder.EXACT_FRC:
            for j in range(self.k):
                holders = I[self.G[I, j] != 0]
                if holders.size:
                    a[holders[0]] = 1.0
        elif self.decoder is Decoder.ONE_STEP:
            a[I] = self.rho
        elif self.decoder is Decoder.EXPANDER:
            a[I] = self.n / (self.n - self.s)
        elif self.decoder is Decoder.OPTIMAL:
            a = optimal_decoder(self.G, I, self.decode_target)
        return a

    def decode(self, I, outputs) -> np.ndarray:
        """Combine server outputs (rows for servers in I, in I's sorted order)."""
        I = _as_index_set(I, self.n)
        a = self.decoding_vector(I)
        return a[I] @ np.asarray(outputs)

    def encode(self, partial_grads) -> np.ndarray:
        """All n server outputs ``G @ g`` for partial gradients g (k x d)."""
        g = np.asarray(partial_grads)
        if g.shape[0] != self.k:
            raise InvalidParameterError(f"expected {self.k} partial gradients, got {g.shape[0]}")
        return self.G @ g


def _as_index_set(I, n) -> np.ndarray:
    idx = np.unique(np.asarray(list(I), dtype=int))
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise InvalidParameterError(f"server indices must lie in [0, {n})")
    return idx


def responders_from_stragglers(stragglers, n) -> np.ndarray:
    return np.setdiff1d(np.arange(n), _as_index_set(stragglers, n))


def gc_error(scheme: GCScheme, I) -> float:
    """||a_I^T G_I - target||_2 for the responding set I (|I| must be n - s)."""
    I = _as_index_set(I, scheme.n)
    if I.size != scheme.n - scheme.s:
        raise InvalidParameterError(f"|I| = {I.size}, expected n - s = {scheme.n - scheme.s}")
    a = scheme.decoding_vector(I)
    return float(np.linalg.norm(a[I] @ scheme.G[I] - scheme.decode_target))


@dataclasses.dataclass(frozen=True)
class MaxErrorReport:
    max_error: float
    worst_stragglers: tuple
    sets_checked: int
    mode: str  # "exhaustive" or "sampled"


def straggler_sets(n, s, seed=0, limit=EXHAUSTIVE_LIMIT, samples=SAMPLED_SETS):
    """All s-subsets of range(n) in lexicographic order, or a seeded sample."""
    total = math.comb(n, s)
    if total <= limit:
        return "exhaustive", itertools.combinations(range(n), s)
    rng = substream(seed, "straggler-sets")
    sets = (tuple(sorted(rng.choice(n, size=s, replace=False).tolist())) for _ in range(samples))
    return "sampled", sets


def gc_max_error(scheme: GCScheme, s=None, seed=0) -> MaxErrorReport:
    """Worst gc_error over straggler sets of size s (exhaustive up to 1e5 sets)."""
    if s is not None and s != scheme.s:
        scheme = dataclasses.replace(scheme, s=s)
    mode, sets = straggler_sets(scheme.n, scheme.s, seed)
    worst, worst_set, count = -1.0, (), 0
    for stragglers in sets:
        err = gc_error(scheme, responders_from_stragglers(stragglers, scheme.n))
        count += 1
        if err > worst:
            worst, worst_set = err, tuple(stragglers)
    return MaxErrorReport(worst, worst_set, count, mode)


def adversarial_straggler_search(scheme: GCScheme, s=None) -> tuple[tuple, float]:
    """Exact worst straggler set by exhaustive enumeration; no heuristics."""
    s = scheme.s if s is None else s
    if math.comb(scheme.n, s) > EXHAUSTIVE_LIMIT:
        raise BudgetExceededError(
            f"C({scheme.n},{s}) = {math.comb(scheme.n, s)} sets exceeds the {EXHAUSTIVE_LIMIT} budget"
        )
    report = gc_max_error(scheme, s)
    return report.worst_stragglers, report.max_error


def frc_scheme(n: int, s: int) -> GCScheme:
    """Fractional repetition: partition j lives on servers j(s+1) .. j(s+1)+s."""
    if s < 0 or n < 1 or n % (s + 1):
        raise InvalidParameterError(f"s+1={s + 1} must divide n={n}")
    k = n // (s + 1)
    G = np.kron(np.eye(k), np.ones((s + 1, 1)))
    return GCScheme(n, k, s, G, Decoder.EXACT_FRC)


def balanced_mask(n: int, k: int, d: int) -> np.ndarray:
    """Cyclic 0/1 mask: column j covers rows j*d .. j*d + d - 1 (mod n).

    Consecutive windows tile the circle k*d/n times, so every row has weight
    w = k*d/n and every column weight d.
    """
    if not 1 <= d <= n or (k * d) % n:
        raise InvalidParameterError(f"need 1 <= d <= n and n | k*d (n={n}, k={k}, d={d})")
    M = np.zeros((n, k), dtype=int)
    for j in range(k):
        M[(j * d + np.arange(d)) % n, j] = 1
    return M


def brs_scheme(n: int, k: int, s: int, points=None) -> GCScheme:
    """Balanced Reed-Solomon gradient code with G = H P.

    Column j of G evaluates p_j(x) = prod_{i: M_ij = 0} (x - gamma_i),
    normalised so p_j(0) = 1; a subset of k responders then decodes with the
    first row of the inverse of its Vandermonde block.
    """
    if s < 0 or s >= n:
        raise InvalidParameterError(f"need 0 <= s < n, got s={s}, n={n}")
    if s > k - 1:
        raise DegreeOverflowError(f"s={s} exceeds k-1={k - 1}: p_j has degree s")
    if n - s < k:
        raise InfeasibleParametersError(f"only n-s={n - s} responders, decoding needs k={k}")
    mask = balanced_mask(n, k, n - s)
    pts = roots_of_unity(n) if points is None else points
    pts = check_points(pts, n)
    P = np.zeros((k, k), dtype=complex)
    for j in range(k):
        roots = pts[mask[:, j] == 0]
        coeffs = npoly.polyfromroots(roots) if roots.size else np.ones(1, dtype=complex)
        if abs(coeffs[0]) < 1e-12:
            raise EvaluationPointError(f"p_{j}(0) = 0; choose different evaluation points")
        P[: coeffs.size, j] = coeffs / coeffs[0]
    H = vandermonde(pts, k)
    G = H @ P
    G[mask == 0] = 0.0
    return GCScheme(n, k, s, G, Decoder.EXACT_BRS, points=pts, P=P, H=H, info={"mask": mask})


def optimal_decoder(G, I, target=None) -> np.ndarray:
    """argmin_a ||a^T G_I - target||_2 via the pseudoinverse, embedded to length n."""
    G = as_matrix(G, "G")
    I = _as_index_set(I, G.shape[0])
    tgt = np.ones(G.shape[1]) if target is None else np.asarray(target)
    a = np.zeros(G.shape[0], dtype=np.result_type(G, tgt, float))
    a[I] = tgt @ np.linalg.pinv(G[I])
    return a


def one_step_decoder(G, rho):
    """Fixed-coefficient rule a_I = rho on I."""
    n = as_matrix(G, "G").shape[0]

    def decode(I):
        a = np.zeros(n)
        a[_as_index_set(I, n)] = rho
        return a

    return decode


def bernoulli_scheme(n: int, k: int, s: int, seed=0, decoder=Decoder.OPTIMAL, rho=None) -> GCScheme:
    """G_ij iid Bernoulli(s/k), 0/1 entries."""
    if not 0 < s <= k:
        raise InvalidParameterError(f"s/k must be a probability in (0, 1], got {s}/{k}")
    if s >= n:
        raise InvalidParameterError(f"need s < n, got s={s}, n={n}")
    rng = substream(seed, "bernoulli-gc")
    G = (rng.random((n, k)) < s / k).astype(float)
    return GCScheme(n, k, s, G, Decoder(decoder), rho=rho)


def adjacency_lambda(adjacency) -> tuple[int, float]:
    """(degree, second largest eigenvalue magnitude) of a regular graph."""
    Adj = as_matrix(adjacency, "adjacency")
    eig = sym_eigenvalues(Adj)
    deg = int(round(eig[0]))
    mags = np.sort(np.abs(eig[1:]))[::-1]
    return deg, float(mags[0]) if mags.size else 0.0


def _validate_regular_graph(Adj) -> int:
    n = Adj.shape[0]
    if Adj.shape != (n, n) or not np.all((Adj == 0) | (Adj == 1)):
        raise InvalidGraphError("adjacency must be a square 0/1 matrix")
    if not np.array_equal(Adj, Adj.T) or np.any(np.diag(Adj)):
        raise InvalidGraphError("adjacency must be symmetric without self-loops")
    degrees = Adj.sum(axis=1)
    if not np.all(degrees == degrees[0]) or degrees[0] == 0:
        raise InvalidGraphError("graph is not regular")
    eig = sym_eigenvalues(Adj)
    if n > 1 and eig[1] > degrees[0] - 1e-9:
        raise InvalidGraphError("graph is disconnected")
    return int(degrees[0])


def expander_scheme(adjacency, s: int) -> GCScheme:
    """G = adjacency / degree with the constant decoder n/(n-s) on I.

    ``info`` carries the degree, lambda (second largest |eigenvalue| of the
    unnormalised adjacency) and the error bound (lambda/deg) sqrt(ns/(n-s)).
    """
    Adj = as_matrix(adjacency, "adjacency")
    deg = _validate_regular_graph(Adj)
    n = Adj.shape[0]
    if not 0 <= s < n:
        raise InvalidParameterError(f"need 0 <= s < n, got s={s}")
    _, lam = adjacency_lambda(Adj)
    return GCScheme(
        n, n, s, Adj / deg, Decoder.EXPANDER,
        info={"degree": deg, "lambda": lam, "bound": expander_bound(lam, deg, n, s)},
    )


def expander_bound(lam, deg, n, s) -> float:
    return (lam / deg) * math.sqrt(n * s / (n - s))


def petersen_graph() -> np.ndarray:
    Adj = np.zeros((10, 10), dtype=int)
    for i in range(5):
        for a, b in ((i, (i + 1) % 5), (i, i + 5), (i + 5, (i + 2) % 5 + 5)):
            Adj[a, b] = Adj[b, a] = 1
    return Adj


def complete_graph(n: int) -> np.ndarray:
    return np.ones((n, n), dtype=int) - np.eye(n, dtype=int)


def random_regular_graph(n: int, degree: int, seed=0, max_tries=1000) -> np.ndarray:
    """Connected simple degree-regular graph from the configuration model."""
    if (n * degree) % 2 or degree >= n:
        raise InvalidParameterError(f"no simple {degree}-regular graph on {n} nodes")
    rng = substream(seed, "regular-graph")
    for _ in range(max_tries):
        stubs = rng.permutation(np.repeat(np.arange(n), degree)).reshape(-1, 2)
        if np.any(stubs[:, 0] == stubs[:, 1]):
            continue
        Adj = np.zeros((n, n), dtype=int)
        np.add.at(Adj, (stubs[:, 0], stubs[:, 1]), 1)
        Adj = Adj + Adj.T
        if Adj.max() > 1:
            continue
        try:
            _validate_regular_graph(Adj)
        except InvalidGraphError:
            continue
        return Adj
    raise InvalidParameterError("failed to draw a connected simple regular graph")


def validate_bibd(design) -> dict:
    """Check a v x b incidence matrix; return its (v, b, r, block_size, lambda)."""
    D = as_matrix(design, "design")
    if not np.all((D == 0) | (D == 1)):
        raise InvalidDesignError("incidence matrix must be 0/1")
    v, b = D.shape
    reps = D.sum(axis=1)
    sizes = D.sum(axis=0)
    if not np.all(reps == reps[0]) or not np.all(sizes == sizes[0]):
        raise InvalidDesignError("replication numbers and block sizes must be constant")
    inter = D @ D.T
    off = inter[~np.eye(v, dtype=bool)]
    if off.size and not np.all(off == off[0]):
        raise InvalidDesignError("pairs of points do not share a constant number of blocks")
    lam = int(off[0]) if off.size else 0
    return {"v": v, "b": b, "r": int(reps[0]), "block_size": int(sizes[0]), "lambda": lam}


def bibd_rho(row_weight, lam, n, s) -> float:
    return row_weight / (row_weight + lam * (n - s - 1))


def bibd_scheme(design, lam=None, s: int = 1) -> GCScheme:
    """BIBD incidence encoding with the closed-form one-step coefficient.

    rho = r / (r + lambda (n - s - 1)) where r is each server's row weight
    (the design's replication number).
    """
    params = validate_bibd(design)
    if lam is not None and lam != params["lambda"]:
        raise InvalidDesignError(f"design has lambda={params['lambda']}, not {lam}")
    n = params["v"]
    if not 0 <= s < n:
        raise InvalidParameterError(f"need 0 <= s < n, got s={s}")
    G = as_matrix(design).astype(float)
    rho = bibd_rho(params["r"], params["lambda"], n, s)
    return GCScheme(n, params["b"], s, G, Decoder.ONE_STEP, rho=rho, info=params)


def fano_plane() -> np.ndarray:
    lines = [(0, 1, 2), (0, 3, 4), (0, 5, 6), (1, 3, 5), (1, 4, 6), (2, 3, 6), (2, 4, 5)]
    D = np.zeros((7, 7), dtype=int)
    for j, line in enumerate(lines):
        D[list(line), j] = 1
    return D


def complete_design(v: int) -> np.ndarray:
    """All 2-subsets of v points: a (v, C(v,2), 2, v-1, 1) design."""
    pairs = list(itertools.combinations(range(v), 2))
    D = np.zeros((v, len(pairs)), dtype=int)
    for j, (a, b) in enumerate(pairs):
        D[[a, b], j] = 1
    return D


@dataclasses.dataclass(frozen=True)
class WeightedGC:
    scheme: GCScheme
    A_tilde: np.ndarray
    b_tilde: np.ndarray
    weights: np.ndarray
    blocks: np.ndarray
    trials: int
    block_rows: int

    def sketched_partial_gradients(self, x) -> np.ndarray:
        """Partial gradients 2 A_j^T (A_j x - b_j) of the r compressed blocks."""
        x = np.asarray(x, dtype=float).ravel()
        r = self.weights.size
        Ab = self.A_tilde.reshape(r, self.block_rows, -1)
        bb = self.b_tilde.reshape(r, self.block_rows)
        return 2 * np.einsum("jti,jt->ji", Ab, np.einsum("jti,i->jt", Ab, x) - bb)


def weighted_gc(A, b, k: int, r: int, n: int, s: int, points=None, seed=0) -> WeightedGC:
    """Block-leverage sampling until r distinct blocks, encoded with G diag(w).

    Each sampled block is rescaled by 1/sqrt(r Pi_j). The BRS code runs with
    k <- r and decodes to the weight vector instead of all-ones.
    """
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=float).ravel()
    if b.size != A.shape[0]:
        raise InvalidParameterError("b must have one entry per row of A")
    if r > k:
        raise InvalidParameterError(f"r={r} exceeds k={k}")
    dist = block_leverage_distribution(A, k)
    sample = sample_until_r_distinct(dist, r, substream(seed, "weighted-gc"))
    tau = A.shape[0] // k
    scale = 1.0 / np.sqrt(r * dist.probs[sample.indices])
    rows = (sample.indices[:, None] * tau + np.arange(tau)).ravel()
    row_scale = np.repeat(scale, tau)
    A_t = A[rows] * row_scale[:, None]
    b_t = b[rows] * row_scale
    base = brs_scheme(n, r, s, points)
    w = sample.weights.astype(float)
    scheme = dataclasses.replace(base, G=base.G * w, decoder=Decoder.WEIGHTED, target=w)
    return WeightedGC(scheme, A_t, b_t, sample.weights, sample.indices, sample.trials, tau)
