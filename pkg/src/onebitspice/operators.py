"""Dictionary matrices as structured linear operators.

Three kinds are provided:

``DenseDictionary``
    An explicit ``N x M`` complex matrix. Universal fallback and test oracle.
``Fourier2D``
    Columns ``psi_N2(wd) kron psi_N1(wr)`` on uniform DFT grids
    ``wr = 2 pi kr / Kr`` and ``wd = 2 pi kd / Kd`` (0-based). Products go
    through 2-D FFTs.
``Kronecker``
    ``B = Phi kron S`` with ``S`` of size ``N1 x Kr`` (real code steering
    matrix) and ``Phi`` of size ``N2 x Kd`` (Doppler steering).

Vectors are stacked column-major everywhere: the data index is
``n = n1 + N1 * n2`` and the grid index is ``k = kr + Kr * kd``, so ``kr``
(range) varies fastest, matching ``vec`` of the ``Kr x Kd`` coefficient
matrix.

Besides products, each kind knows how to form ``B diag(p) B^H`` and how to
evaluate the quadratic forms ``b_k^H Q b_k`` for all columns at once; those
two kernels dominate the weighted SPICE iterations.
"""

from functools import cached_property

import numpy as np

__all__ = [
    "Dictionary",
    "DenseDictionary",
    "Fourier2D",
    "Kronecker",
    "dft_grid",
    "matvec",
    "adjoint_matvec",
    "column_norm_sq",
]


def dft_grid(K):
    """Uniform grid ``2 pi k / K``, ``k = 0..K-1``."""
    return 2.0 * np.pi * np.arange(K) / K


class Dictionary:
    """Abstract ``N x M`` dictionary."""

    n_rows: int
    n_cols: int

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def _check(self, v, n, what):
        v = np.asarray(v)
        if v.ndim != 1 or v.shape[0] != n:
            raise ValueError(f"{what}: expected a vector of length {n}, got shape {v.shape}")
        return v

    def matvec(self, x):
        """Return ``B x``."""
        x = self._check(x, self.n_cols, "matvec")
        return self._matvec(x.astype(complex, copy=False))

    def adjoint_matvec(self, y):
        """Return ``B^H y``."""
        y = self._check(y, self.n_rows, "adjoint_matvec")
        return self._rmatvec(y.astype(complex, copy=False))

    def column(self, k):
        """k-th column of ``B`` (0-based)."""
        if not 0 <= k < self.n_cols:
            raise IndexError(f"column index {k} out of range [0, {self.n_cols})")
        e = np.zeros(self.n_cols, dtype=complex)
        e[k] = 1.0
        return self._matvec(e)

    def row(self, n):
        """n-th row of ``B`` as a length-M vector (``b_n`` with ``(B x)_n = b_n^T x``)."""
        if not 0 <= n < self.n_rows:
            raise IndexError(f"row index {n} out of range [0, {self.n_rows})")
        e = np.zeros(self.n_rows, dtype=complex)
        e[n] = 1.0
        return self._rmatvec(e).conj()

    def column_norm_sq(self, k):
        """``||b_k||^2`` for a single column."""
        if not 0 <= k < self.n_cols:
            raise IndexError(f"column index {k} out of range [0, {self.n_cols})")
        return float(self.column_norms_sq()[k])

    def column_norms_sq(self):
        raise NotImplementedError

    def to_dense(self):
        eye = np.eye(self.n_cols, dtype=complex)
        return np.stack([self._matvec(eye[k]) for k in range(self.n_cols)], axis=1)

    def gram(self, p):
        """Dense ``B diag(p) B^H`` for a length-M weight vector."""
        raise NotImplementedError

    def quad_diag(self, Q):
        """``Re(b_k^H Q b_k)`` for every column, Q Hermitian ``N x N``."""
        return self._quad(np.asarray(Q)).real

    def quad_diag_lower(self, Ql):
        """Same as :meth:`quad_diag` given only the lower triangle of Q.

        Entries above the diagonal are ignored, which saves forming the
        full Hermitian matrix after a triangular inversion.
        """
        Ql = np.asarray(Ql)
        dg = np.diag(Ql).real
        return 2.0 * self._quad(np.tril(Ql, -1)).real + self._abs2_rmatvec(dg)

    def _quad(self, Q):
        # sum_{m,n} conj(b_k[m]) Q[m,n] b_k[n] for a general square Q
        raise NotImplementedError

    def _abs2_rmatvec(self, v):
        # |B|^T v (elementwise squared magnitudes)
        raise NotImplementedError


class DenseDictionary(Dictionary):
    def __init__(self, B):
        B = np.array(B, dtype=complex)
        if B.ndim != 2:
            raise ValueError("dense dictionary must be a 2-D matrix")
        B.setflags(write=False)
        self.B = B
        self.n_rows, self.n_cols = B.shape

    def _matvec(self, x):
        return self.B @ x

    def _rmatvec(self, y):
        return self.B.conj().T @ y

    def column(self, k):
        if not 0 <= k < self.n_cols:
            raise IndexError(f"column index {k} out of range [0, {self.n_cols})")
        return self.B[:, k].copy()

    def column_norms_sq(self):
        return np.sum(np.abs(self.B) ** 2, axis=0)

    def to_dense(self):
        return self.B.copy()

    def gram(self, p):
        return (self.B * p) @ self.B.conj().T

    def _quad(self, Q):
        return np.einsum("nk,nk->k", self.B.conj(), Q @ self.B)

    def _abs2_rmatvec(self, v):
        return (np.abs(self.B) ** 2).T @ v


class Fourier2D(Dictionary):
    """Two-dimensional DFT-grid dictionary applied with FFTs.

    Parameters
    ----------
    n1, n2 : int
        Fast-time and slow-time sample counts.
    kr, kd : int
        Range and Doppler grid sizes.
    """

    def __init__(self, n1, n2, kr, kd):
        for name, v in (("n1", n1), ("n2", n2), ("kr", kr), ("kd", kd)):
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer")
        self.n1, self.n2, self.kr, self.kd = int(n1), int(n2), int(kr), int(kd)
        self.n_rows = self.n1 * self.n2
        self.n_cols = self.kr * self.kd

    def __repr__(self):
        return f"Fourier2D(n1={self.n1}, n2={self.n2}, kr={self.kr}, kd={self.kd})"

    @property
    def _fits(self):
        return self.n1 <= self.kr and self.n2 <= self.kd

    def _matvec(self, x):
        X = x.reshape((self.kr, self.kd), order="F")
        Y = np.fft.ifft2(X) * (self.kr * self.kd)
        if self._fits:
            Y = Y[: self.n1, : self.n2]
        else:
            Y = Y[np.ix_(np.arange(self.n1) % self.kr, np.arange(self.n2) % self.kd)]
        return Y.ravel(order="F")

    def _rmatvec(self, y):
        Y = y.reshape((self.n1, self.n2), order="F")
        if self._fits:
            X = np.fft.fft2(Y, s=(self.kr, self.kd))
        else:
            F = np.zeros((self.kr, self.kd), dtype=complex)
            i1 = np.arange(self.n1) % self.kr
            i2 = np.arange(self.n2) % self.kd
            np.add.at(F, (i1[:, None], i2[None, :]), Y)
            X = np.fft.fft2(F)
        return X.ravel(order="F")

    def column(self, k):
        if not 0 <= k < self.n_cols:
            raise IndexError(f"column index {k} out of range [0, {self.n_cols})")
        kr, kd = k % self.kr, k // self.kr
        a = np.exp(2j * np.pi * kr * np.arange(self.n1) / self.kr)
        b = np.exp(2j * np.pi * kd * np.arange(self.n2) / self.kd)
        return np.kron(b, a)

    def column_norms_sq(self):
        return np.full(self.n_cols, float(self.n_rows))

    def column_norm_sq(self, k):
        if not 0 <= k < self.n_cols:
            raise IndexError(f"column index {k} out of range [0, {self.n_cols})")
        return float(self.n_rows)

    def to_dense(self):
        a = np.exp(1j * np.outer(np.arange(self.n1), dft_grid(self.kr)))
        b = np.exp(1j * np.outer(np.arange(self.n2), dft_grid(self.kd)))
        return np.kron(b, a)

    @cached_property
    def _lag_index(self):
        # folded (m - n) lag of every entry of an N x N matrix, as a flat
        # index into the Kr x Kd grid (column-major)
        m1 = np.tile(np.arange(self.n1), self.n2)
        m2 = np.repeat(np.arange(self.n2), self.n1)
        d1 = (m1[:, None] - m1[None, :]) % self.kr
        d2 = (m2[:, None] - m2[None, :]) % self.kd
        idx = d1 + self.kr * d2
        idx.setflags(write=False)
        return idx

    def gram(self, p):
        P = np.asarray(p, dtype=complex).reshape((self.kr, self.kd), order="F")
        r = (np.fft.ifft2(P) * (self.kr * self.kd)).ravel(order="F")
        return r[self._lag_index]

    def _quad(self, Q):
        # lag sums of Q, then one 2-D FFT evaluates every column's form
        idx = self._lag_index.ravel()
        Q = np.asarray(Q).ravel()
        n = self.n_cols
        q = np.bincount(idx, weights=Q.real, minlength=n) + 1j * np.bincount(
            idx, weights=Q.imag, minlength=n)
        w = np.fft.fft2(q.reshape((self.kr, self.kd), order="F"))
        return w.ravel(order="F")

    def _abs2_rmatvec(self, v):
        return np.full(self.n_cols, float(np.sum(v)))


class Kronecker(Dictionary):
    """``B = Phi kron S``.

    ``matvec`` uses ``vec(S Gamma Phi^T)``; nothing of size ``N x M`` is
    ever formed.
    """

    def __init__(self, S, Phi):
        S = np.array(S)
        Phi = np.array(Phi, dtype=complex)
        if S.ndim != 2 or Phi.ndim != 2:
            raise ValueError("S and Phi must be 2-D matrices")
        S.setflags(write=False)
        Phi.setflags(write=False)
        self.S, self.Phi = S, Phi
        self.n1, self.kr = S.shape
        self.n2, self.kd = Phi.shape
        self.n_rows = self.n1 * self.n2
        self.n_cols = self.kr * self.kd

    def __repr__(self):
        return f"Kronecker(S={self.S.shape}, Phi={self.Phi.shape})"

    def _matvec(self, x):
        G = x.reshape((self.kr, self.kd), order="F")
        return (self.S @ G @ self.Phi.T).ravel(order="F")

    def _rmatvec(self, y):
        Y = y.reshape((self.n1, self.n2), order="F")
        return (self.S.conj().T @ Y @ self.Phi.conj()).ravel(order="F")

    def column(self, k):
        if not 0 <= k < self.n_cols:
            raise IndexError(f"column index {k} out of range [0, {self.n_cols})")
        return np.kron(self.Phi[:, k // self.kr], self.S[:, k % self.kr])

    def column_norms_sq(self):
        s = np.sum(np.abs(self.S) ** 2, axis=0)
        f = np.sum(np.abs(self.Phi) ** 2, axis=0)
        return np.outer(s, f).ravel(order="F")

    def to_dense(self):
        return np.kron(self.Phi, self.S)

    @cached_property
    def _khatri_rao(self):
        # KR[k, m1*N1 + n1] = S[m1, k] * conj(S[n1, k])
        S = self.S
        kr = np.einsum("ak,bk->kab", S, S.conj()).reshape(self.kr, self.n1 * self.n1)
        kr.setflags(write=False)
        return kr

    def gram(self, p):
        P = np.asarray(p).reshape((self.kr, self.kd), order="F")
        # C[r, m2, n2] = sum_kd Phi[m2, kd] P[r, kd] conj(Phi[n2, kd])
        C = (self.Phi[None, :, :] * P[:, None, :]) @ self.Phi.conj().T
        R4 = C.reshape(self.kr, -1).T @ self._khatri_rao  # [m2 n2, m1 n1]
        R4 = R4.reshape(self.n2, self.n2, self.n1, self.n1).transpose(0, 2, 1, 3)
        return R4.reshape(self.n_rows, self.n_rows)

    def _quad(self, Q):
        n1, n2 = self.n1, self.n2
        Q4 = np.asarray(Q).reshape(n2, n1, n2, n1).transpose(0, 2, 1, 3).reshape(n2 * n2, n1 * n1)
        T = (Q4 @ self._khatri_rao.conj().T).reshape(n2, n2, self.kr)  # [m2, n2, r]
        U = np.einsum("mk,mnr->rkn", self.Phi.conj(), T, optimize=True)
        W = np.einsum("rkn,nk->rk", U, self.Phi)
        return W.ravel(order="F")

    def _abs2_rmatvec(self, v):
        V = np.asarray(v).reshape((self.n1, self.n2), order="F")
        return ((np.abs(self.S) ** 2).T @ V @ (np.abs(self.Phi) ** 2)).ravel(order="F")


def matvec(d, x):
    return d.matvec(x)


def adjoint_matvec(d, y):
    return d.adjoint_matvec(y)


def column_norm_sq(d, k):
    return d.column_norm_sq(k)
