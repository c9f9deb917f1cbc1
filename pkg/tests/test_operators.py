import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebitspice.operators import (DenseDictionary, Fourier2D, Kronecker, adjoint_matvec,
                                   column_norm_sq, matvec)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def fourier_dense(n1, n2, kr, kd):
    # column (kr, kd) = psi_N2(2 pi kd / Kd) kron psi_N1(2 pi kr / Kr), kr fastest
    w = 2 * np.pi * np.arange(kr) / kr
    wd = 2 * np.pi * np.arange(kd) / kd
    B = np.empty((n1 * n2, kr * kd), dtype=complex)
    for j in range(kd):
        for i in range(kr):
            B[:, i + kr * j] = np.kron(np.exp(1j * wd[j] * np.arange(n2)),
                                       np.exp(1j * w[i] * np.arange(n1)))
    return B


def test_dc_column():
    d = Fourier2D(2, 1, 2, 1)
    np.testing.assert_allclose(matvec(d, [1, 0]), [1, 1])
    np.testing.assert_allclose(adjoint_matvec(d, [1, 1]), [2, 0], atol=1e-15)


def test_dense_identity():
    d = DenseDictionary(np.eye(2))
    np.testing.assert_allclose(matvec(d, [3 + 1j, 0]), [3 + 1j, 0])
    np.testing.assert_allclose(adjoint_matvec(d, [1j, 1]), [1j, 1])


@pytest.mark.parametrize("dims", [(4, 2, 8, 4), (5, 3, 10, 6), (7, 1, 21, 1), (3, 4, 3, 4),
                                  (8, 8, 16, 16), (6, 2, 4, 2)])
def test_fourier_matches_dense(dims):
    rng = np.random.default_rng(1)
    d = Fourier2D(*dims)
    B = fourier_dense(*dims)
    x = crandn(rng, d.n_cols)
    y = crandn(rng, d.n_rows)
    np.testing.assert_allclose(d.matvec(x), B @ x, atol=1e-12 * np.abs(B @ x).max())
    np.testing.assert_allclose(d.adjoint_matvec(y), B.conj().T @ y, atol=1e-11)
    np.testing.assert_allclose(d.to_dense(), B, atol=1e-12)


def test_fourier_largest_desk_size():
    rng = np.random.default_rng(2)
    d = Fourier2D(16, 4, 64, 4)
    B = fourier_dense(16, 4, 64, 4)
    x = crandn(rng, 256)
    np.testing.assert_allclose(d.matvec(x), B @ x, atol=1e-11)


def test_kronecker_matches_dense():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((3, 4))
    Phi = crandn(rng, 2, 3)
    d = Kronecker(S, Phi)
    B = np.kron(Phi, S)
    y = crandn(rng, 6)
    x = crandn(rng, 12)
    np.testing.assert_allclose(d.adjoint_matvec(y), B.conj().T @ y, atol=1e-12)
    np.testing.assert_allclose(d.matvec(x), B @ x, atol=1e-12)
    for k in range(12):
        assert d.column_norm_sq(k) == pytest.approx(np.linalg.norm(B[:, k]) ** 2, rel=1e-12)


def test_kronecker_reshape_identity():
    rng = np.random.default_rng(4)
    S = rng.standard_normal((5, 7))
    Phi = crandn(rng, 4, 6)
    G = crandn(rng, 7, 6)
    d = Kronecker(S, Phi)
    np.testing.assert_allclose(d.matvec(G.ravel(order="F")), (S @ G @ Phi.T).ravel(order="F"),
                               atol=1e-10)


def test_column_norms():
    d = Fourier2D(16, 4, 32, 8)
    assert all(column_norm_sq(d, k) == 64 for k in (0, 5, 255))
    np.testing.assert_array_equal(d.column_norms_sq(), np.full(256, 64.0))
    assert DenseDictionary(np.array([[1], [2j]])).column_norm_sq(0) == pytest.approx(5)


def test_errors():
    d = Fourier2D(4, 2, 8, 4)
    with pytest.raises(ValueError):
        d.matvec(np.zeros(5))
    with pytest.raises(ValueError):
        d.adjoint_matvec(np.zeros(9))
    with pytest.raises(IndexError):
        d.column_norm_sq(32)
    with pytest.raises(IndexError):
        d.column(-33)


def _random_dictionary(kind, seed):
    rng = np.random.default_rng(seed)
    if kind == "dense":
        return DenseDictionary(crandn(rng, 5, 9))
    if kind == "fourier":
        return Fourier2D(*rng.integers(1, 6, 2), *rng.integers(1, 9, 2))
    return Kronecker(rng.standard_normal((4, 6)), crandn(rng, 3, 5))


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["dense", "fourier", "kron"]), seed=st.integers(0, 2**32 - 1))
def test_adjoint_consistency(kind, seed):
    d = _random_dictionary(kind, seed)
    rng = np.random.default_rng(seed + 1)
    x = crandn(rng, d.n_cols)
    y = crandn(rng, d.n_rows)
    lhs = np.vdot(y, d.matvec(x))
    rhs = np.vdot(d.adjoint_matvec(y), x)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(["dense", "fourier", "kron"]), seed=st.integers(0, 2**32 - 1))
def test_structured_products_match_dense(kind, seed):
    d = _random_dictionary(kind, seed)
    B = d.to_dense()
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.1, 2.0, d.n_cols)
    np.testing.assert_allclose(d.gram(p), (B * p) @ B.conj().T, atol=1e-10)
    Q = crandn(rng, d.n_rows, d.n_rows)
    Q = Q + Q.conj().T
    ref = np.einsum("nk,nm,mk->k", B.conj(), Q, B).real
    np.testing.assert_allclose(d.quad_diag(Q), ref, atol=1e-9)
    np.testing.assert_allclose(d.quad_diag_lower(np.tril(Q)), ref, atol=1e-9)
    for k in (0, d.n_cols - 1):
        np.testing.assert_allclose(d.column(k), B[:, k], atol=1e-12)
    for n in (0, d.n_rows - 1):
        np.testing.assert_allclose(d.row(n), B[n], atol=1e-12)
