import itertools

import numpy as np
import pytest

from codedlab.codedmm import (
    Exactness,
    coded_independent_sampling,
    coded_setwise_sampling,
    entangled_example,
    matdot,
    oversketch,
    oversketch_operator,
    polynomial_code,
    sampled_estimate,
    weighted_cr_cmm,
)
from codedlab.errors import InfeasibleParametersError, InsufficientResponsesError, InvalidExponentsError
from codedlab.rng import substream


def rand(shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def decode_all_subsets(scheme, size, target, tol=1e-8):
    outs = scheme.compute_all()
    worst = 0.0
    for sub in itertools.combinations(outs, size):
        worst = max(worst, np.abs(scheme.decode(list(sub)) - target).max())
    assert worst <= tol
    return worst


# MatDot

def test_matdot_hand_example():
    A, B = np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])
    scheme = matdot(A, B, 2)
    coeffs = scheme.coefficients(scheme.compute_all())
    assert np.allclose([complex(c.ravel()[0]) for c in coeffs], [4, 11, 6])
    assert np.allclose(scheme.decode(scheme.compute_all()), 11)


def test_matdot_k1_and_threshold():
    A, B = rand((3, 4)), rand((4, 2), 1)
    scheme = matdot(A, B, 1)
    assert scheme.f == 1 and np.allclose(scheme.decode([scheme.compute(0)]), A @ B)
    assert matdot(A, B, 2, n=5).f == 3


def test_matdot_every_threshold_subset():
    A, B = rand((4, 8)), rand((8, 4), 1)
    decode_all_subsets(matdot(A, B, 4, n=9), 7, A @ B)


def test_matdot_below_threshold():
    A, B = rand((4, 8)), rand((8, 4), 1)
    scheme = matdot(A, B, 4, n=9)
    outs = scheme.compute_all()
    assert not scheme.decodable([o.server_id for o in outs[:6]])
    with pytest.raises(InsufficientResponsesError):
        scheme.decode(outs[:6])
    first, second = scheme.ambiguity_witness(outs[:6])
    assert np.abs(first[3] - second[3]).max() > 1e-3
    for o in outs[:6]:
        p1 = sum(c * o.point**j for j, c in enumerate(first))
        p2 = sum(c * o.point**j for j, c in enumerate(second))
        assert np.allclose(p1, o.W) and np.allclose(p2, o.W)


def test_duplicate_responses_do_not_count_twice():
    A, B = rand((2, 4)), rand((4, 2), 1)
    scheme = matdot(A, B, 2, n=4)
    out = scheme.compute(0)
    assert not scheme.decodable([0, 0, 0])
    with pytest.raises(InsufficientResponsesError):
        scheme.decode([out, out, out])


def test_matdot_infeasible_n():
    with pytest.raises(InfeasibleParametersError):
        matdot(rand((2, 4)), rand((4, 2)), 4, n=6)


# polynomial and entangled codes

def test_polynomial_code_hand_example():
    A, B = np.array([[1.0], [2.0]]), np.array([[3.0, 4.0]])
    scheme = polynomial_code(A, B, 2)
    coeffs = scheme.coefficients(scheme.compute_all())
    assert np.allclose([complex(c.ravel()[0]) for c in coeffs], [3, 6, 4, 8])
    assert np.allclose(scheme.decode(scheme.compute_all()), [[3, 4], [6, 8]])


def test_polynomial_code_k1_and_subsets():
    A, B = rand((4, 3)), rand((3, 4), 1)
    scheme = polynomial_code(A, B, 1)
    assert scheme.f == 1 and np.allclose(scheme.decode([scheme.compute(0)]), A @ B)
    decode_all_subsets(polynomial_code(A, B, 2, n=5), 4, A @ B)


def test_polynomial_code_exponent_collision():
    with pytest.raises(InvalidExponentsError):
        polynomial_code(rand((4, 2)), rand((2, 4)), 2, a_exp=1, b_exp=1)


def test_entangled_examples():
    A, B = np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])
    scheme = entangled_example(A, B)
    coeffs = scheme.coefficients(scheme.compute_all())
    assert np.allclose([complex(c.ravel()[0]) for c in coeffs], [4, 11, 6])
    A, B = rand((4, 4)), rand((4, 4), 1)
    decode_all_subsets(entangled_example(A, B, n=5), 3, A @ B)


def test_entangled_zero_blocks():
    A = np.hstack([rand((2, 1)), np.zeros((2, 1))])
    B = np.vstack([np.zeros((1, 2)), rand((1, 2), 1)])
    scheme = entangled_example(A, B, n=3)
    assert np.allclose(scheme.decode(scheme.compute_all()), 0)


# sampled schemes

def coded_decode(scheme):
    return np.real(scheme.decode(scheme.compute_all()[: scheme.f]))


def test_independent_sampling_k1_exact():
    A, B = rand((3, 4)), rand((4, 2), 1)
    assert np.allclose(coded_decode(coded_independent_sampling(A, B, 1, 1, seed=3)), A @ B)


@pytest.mark.parametrize("seed", range(5))
def test_sampled_schemes_match_uncoded_path(seed):
    A, B = rand((4, 8)), rand((8, 4), 1)
    for make in (coded_independent_sampling, coded_setwise_sampling, weighted_cr_cmm):
        scheme = make(A, B, 4, 2, seed=seed)
        assert scheme.exactness is Exactness.UNBIASED
        direct = sampled_estimate(A, B, 4, scheme.indices, scheme.scales)
        assert np.abs(coded_decode(scheme) - direct).max() <= 1e-8


def test_setwise_full_set_is_exact():
    A, B = rand((4, 8)), rand((8, 4), 1)
    assert np.allclose(coded_decode(coded_setwise_sampling(A, B, 4, 4, seed=1)), A @ B)


def test_weighted_k1_exact():
    A, B = rand((3, 4)), rand((4, 2), 1)
    scheme = weighted_cr_cmm(A, B, 1, 1, seed=0)
    assert list(scheme.sample.weights) == [1]
    assert np.allclose(coded_decode(scheme), A @ B)


@pytest.mark.slow
@pytest.mark.parametrize("make", [coded_independent_sampling, coded_setwise_sampling, weighted_cr_cmm])
def test_sampled_schemes_unbiased(make):
    A = substream(11, "A").standard_normal((4, 8))
    B = substream(11, "B").standard_normal((8, 4))
    X = np.array([coded_decode(make(A, B, 4, 2, seed=t)) for t in range(10_000)])
    se = X.std(axis=0, ddof=1) / 100
    assert np.all(np.abs(X.mean(axis=0) - A @ B) <= 3 * se + 1e-12)


def test_realized_normalization_is_available():
    A, B = rand((4, 8)), rand((8, 4), 1)
    s = weighted_cr_cmm(A, B, 4, 2, seed=0, normalization="realized")
    assert s.normalizer == s.sample.trials


# OverSketch

def test_oversketch_identity_sketch_is_exact():
    A, B = rand((4, 6)), rand((6, 4), 1)
    scheme = oversketch(A, B, 6, 2, 0, sketch=np.eye(6))
    assert np.allclose(scheme.decode(scheme.compute_all()), A @ B)


def test_oversketch_all_responses_match_monolithic():
    A, B = rand((4, 16)), rand((16, 4), 1)
    scheme = oversketch(A, B, 8, 2, 0, seed=5)
    S = scheme.sketch
    assert np.abs(scheme.decode(scheme.compute_all()) - A @ S.T @ S @ B).max() <= 1e-10
    assert scheme.effective_width == 8


def test_oversketch_redundancy_tolerates_one_loss_per_block():
    A, B = rand((4, 16)), rand((16, 4), 1)
    scheme = oversketch(A, B, 8, 2, 1, seed=5)
    assert scheme.f == 3 and scheme.effective_width == 6
    kept = [o for o in scheme.compute_all() if scheme.task_index[o.server_id][2] != 0]
    assert scheme.decodable([o.server_id for o in kept])
    dropped = [o for o in kept if scheme.task_index[o.server_id][2] != 1]
    with pytest.raises(InsufficientResponsesError):
        scheme.decode(dropped)


def test_oversketch_reduced_width_equivalence():
    A, B = rand((4, 32), 2), rand((32, 4), 3)
    C = A @ B
    err_e1, err_e0 = [], []
    for t in range(200):
        sch = oversketch(A, B, 16, 4, 1, seed=substream(t, "e1"))
        rng = substream(t, "lost")
        lost = {(u, v): rng.integers(sch.d) for u in range(sch.grid[0]) for v in range(sch.grid[1])}
        outs = [o for o in sch.compute_all() if sch.task_index[o.server_id][2] != lost[sch.task_index[o.server_id][:2]]]
        err_e1.append(np.linalg.norm(sch.decode(outs) - C))
        ref = oversketch(A, B, 12, 4, 0, seed=substream(t, "e0"))
        err_e0.append(np.linalg.norm(ref.decode(ref.compute_all()) - C))
    ratio = np.median(err_e1) / np.median(err_e0)
    assert 1 / 1.5 <= ratio <= 1.5


def test_oversketch_operator_isotropic():
    G = sum(oversketch_operator(4, 8, 2, 0, seed=t).T @ oversketch_operator(4, 8, 2, 0, seed=t)
            for t in range(4000)) / 4000
    assert np.abs(G - np.eye(4)).max() < 0.08


def test_decode_is_order_and_surplus_invariant():
    A, B = rand((4, 8)), rand((8, 4), 1)
    scheme = matdot(A, B, 4, n=9)
    outs = scheme.compute_all()
    base = scheme.decode(outs[:7])
    shuffled = [outs[i] for i in np.random.default_rng(0).permutation(7)]
    assert np.array_equal(scheme.decode(shuffled), base)
    assert np.abs(scheme.decode(outs) - A @ B).max() <= 1e-8


def test_matdot_k2_anchor():
    A, B = rand((3, 4)), rand((4, 3), 1)
    scheme = matdot(A, B, 2)
    outs = scheme.compute_all()
    assert scheme.f == 3 and np.abs(scheme.decode(outs) - A @ B).max() <= 1e-8
    for pair in itertools.combinations(outs, 2):
        first, second = scheme.ambiguity_witness(list(pair))
        assert np.abs(first[1] - second[1]).max() > 1e-6
