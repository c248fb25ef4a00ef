import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from codedlab.errors import InvalidInputError, RankDeficiencyError, SingularSystemError
from codedlab.linalg import (
    Scheme,
    check_points,
    decoding_row,
    evaluate_poly,
    lagrange_interpolate,
    orthonormal_basis,
    partition,
    partition_pair,
    pseudoinverse,
    reassemble,
    roots_of_unity,
    spectral_norm,
    sym_eigenvalues,
    to_real,
    vandermonde,
)
from codedlab.rng import substream


def test_roots_of_unity_are_distinct_and_on_circle():
    pts = roots_of_unity(8)
    assert np.allclose(np.abs(pts), 1)
    assert len(set(np.round(pts, 12))) == 8
    assert np.isclose(pts[-1], 1)


def test_duplicate_points_are_singular():
    with pytest.raises(SingularSystemError):
        check_points([1.0, 2.0, 1.0])


def test_decoding_row_picks_constant_term():
    pts = np.array([0.5, -1.0, 2.0, 3.0])
    a = decoding_row(pts)
    # a^T V = e_1 means sum_i a_i p(x_i) = p(0) for every cubic p
    coeffs = np.array([1.5, -2.0, 0.25, 4.0])
    values = np.polynomial.polynomial.polyval(pts, coeffs)
    assert np.isclose(a @ values, coeffs[0])
    assert np.allclose(a @ vandermonde(pts, 4), [1, 0, 0, 0])


def test_lagrange_interpolation_recovers_matrix_coefficients():
    rng = np.random.default_rng(3)
    coeffs = [rng.standard_normal((2, 3)) for _ in range(4)]
    pts = roots_of_unity(4)
    values = [evaluate_poly(coeffs, x) for x in pts]
    rec = lagrange_interpolate(pts, values)
    for c, r in zip(coeffs, rec):
        assert np.allclose(c, to_real(r), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4))
def test_partition_pair_sums_to_product(k, L, M):
    rng = np.random.default_rng(k * 100 + L * 10 + M)
    N = 2 * k
    A, B = rng.standard_normal((L * k, N)), rng.standard_normal((N, M * k))
    a, b = partition_pair(A, B, k, Scheme.INNER)
    assert np.allclose(sum(x @ y for x, y in zip(a, b)), A @ B)
    a, b = partition_pair(A, B, k, Scheme.OUTER)
    blocks = [[x @ y for y in b] for x in a]
    assert np.allclose(np.block(blocks), A @ B)


def test_partition_reassemble_roundtrip():
    M = np.arange(24.0).reshape(6, 4)
    assert np.array_equal(reassemble(partition(M, 3, "rows"), "rows"), M)
    assert np.array_equal(reassemble(partition(M, 2, "cols"), "cols"), M)


def test_to_real_keeps_genuine_imaginary_part():
    assert np.isrealobj(to_real(np.array([1 + 1e-15j])))
    assert np.iscomplexobj(to_real(np.array([1 + 0.5j])))


def test_spectral_and_basis():
    D = np.diag([3.0, 1.0, 0.5])
    assert np.isclose(spectral_norm(D), 3.0)
    U = orthonormal_basis(np.random.default_rng(0).standard_normal((10, 3)))
    assert np.allclose(U.T @ U, np.eye(3))
    with pytest.raises(RankDeficiencyError):
        orthonormal_basis(np.ones((5, 2)))


def test_sym_eigenvalues_sorted_and_validated():
    ev = sym_eigenvalues(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(ev, [3.0, 1.0])
    with pytest.raises(InvalidInputError):
        sym_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_substreams_are_reproducible_and_independent():
    a = substream(7, "x", 1).random(4)
    assert np.array_equal(a, substream(7, "x", 1).random(4))
    assert not np.array_equal(a, substream(7, "x", 2).random(4))
    assert not np.array_equal(a, substream(8, "x", 1).random(4))
    g = np.random.default_rng(0)
    assert substream(g, "anything") is g
    with pytest.raises(ValueError):
        substream(-1)


def test_small_roots_of_unity():
    assert np.allclose(roots_of_unity(1), [1])
    assert np.allclose(sorted(roots_of_unity(2).real), [-1, 1])
    pts = roots_of_unity(4)
    assert np.allclose(pts, [1j, -1, -1j, 1])
    d = np.abs(pts[:, None] - pts[None, :])
    assert d[~np.eye(4, dtype=bool)].min() > 0


def test_vandermonde_examples():
    assert np.array_equal(vandermonde([1.0], 1), [[1.0]])
    assert np.array_equal(vandermonde([1.0, -1.0], 2), [[1, 1], [1, -1]])
    V = vandermonde([1, -1, 1j], 3)
    assert abs(np.linalg.det(V)) > 1e-8


def test_decoding_row_examples():
    assert np.allclose(decoding_row([1.0]), [1.0])
    assert np.allclose(decoding_row([1.0, -1.0]), [0.5, 0.5])
    pts = np.array([1, -1, 1j])
    a = decoding_row(pts)
    assert np.abs(a @ vandermonde(pts, 3) - [1, 0, 0]).max() < 1e-12


def test_lagrange_examples():
    pts = np.exp(2j * np.pi * np.arange(3) / 3)
    coeffs = lagrange_interpolate(pts, [4 + 11 * x + 6 * x**2 for x in pts])
    assert np.allclose([complex(np.ravel(c)[0]) for c in coeffs], [4, 11, 6])
    const = lagrange_interpolate(pts, [np.array([[2.5]])] * 3)
    assert np.allclose(const[0], 2.5) and np.allclose(const[1:], 0)
    assert np.allclose(lagrange_interpolate([3.0], [np.array([[7.0]])])[0], 7.0)


def test_partition_shapes():
    M = np.arange(8.0).reshape(2, 4)
    assert len(partition(M, 1, "cols")) == 1
    assert [b.shape for b in partition(M, 2, "cols")] == [(2, 2), (2, 2)]
    A, B = np.ones((4, 2)), np.ones((2, 4))
    a, b = partition_pair(A, B, 2, Scheme.OUTER)
    assert [x.shape for x in a] == [(2, 2)] * 2 and [y.shape for y in b] == [(2, 2)] * 2


def test_norm_eigen_pinv_examples():
    assert np.isclose(spectral_norm(np.eye(3)), 1) and np.allclose(sym_eigenvalues(np.eye(3)), 1)
    D = np.diag([3.0, -2.0])
    assert np.isclose(spectral_norm(D), 3) and np.allclose(sym_eigenvalues(D), [3, -2])
    M = np.random.default_rng(1).standard_normal((20, 5))
    assert np.linalg.norm(M @ pseudoinverse(M) @ M - M) < 1e-8
