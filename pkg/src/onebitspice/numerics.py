"""Shared numerical kernels.

Gaussian tail functions (log-CDF, hazard, and the ``x + phi/Phi`` term used by
the one-bit majorizer), a conjugate-gradient solver for Hermitian positive
definite systems given only through matrix-vector products, and a thin
Cholesky wrapper used for desk-scale dense solves.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import special

__all__ = [
    "ConvergenceError",
    "CglsOptions",
    "HermitianFactor",
    "cgls_solve",
    "log_std_normal_cdf",
    "std_normal_hazard",
    "mills_excess",
    "TAIL_SWITCH",
]

# below this point the direct formulas lose digits; continued fractions take over
TAIL_SWITCH = -8.0
_CF_DEPTH = 80
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration cap.

    Attributes
    ----------
    residual : float
        Relative residual norm at the last iterate.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _tail_cf(t):
    # 1/(t + 2/(t + 3/(t + ...))), evaluated bottom-up; t >= 8 converges well
    # before _CF_DEPTH terms.
    f = np.array(t, dtype=float, copy=True)
    for k in range(_CF_DEPTH, 1, -1):
        f = t + k / f
    return 1.0 / f


def mills_excess(x):
    """Return ``x + phi(x)/Phi(x)`` for real ``x``.

    For ``x < -8`` the sum is evaluated as a continued fraction in ``t = -x``,
    which never forms the two nearly-cancelling terms. Elsewhere the hazard
    is computed directly.

    Parameters
    ----------
    x : array_like
        Real arguments. NaN is rejected.

    Returns
    -------
    ndarray or float
        Same shape as ``x``; always finite and strictly positive.
    """
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any():
        raise ValueError("mills_excess: NaN input")
    out = np.empty_like(x)
    tail = x < TAIL_SWITCH
    if tail.any():
        out[tail] = _tail_cf(-x[tail])
    body = ~tail
    if body.any():
        xb = x[body]
        out[body] = xb + std_normal_hazard(xb)
    return out if out.ndim else float(out)


def std_normal_hazard(x):
    """phi(x)/Phi(x), the inverse Mills ratio of the standard normal."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    tail = x < TAIL_SWITCH
    if tail.any():
        t = -x[tail]
        out[tail] = t + _tail_cf(t)
    body = ~tail
    if body.any():
        xb = x[body]
        out[body] = np.exp(-0.5 * xb * xb - _LOG_SQRT_2PI) / special.ndtr(xb)
    return out if out.ndim else float(out)


def log_std_normal_cdf(x):
    """Natural log of the standard normal CDF.

    Uses ``log(Phi(x))`` on ``[-8, 0]``, ``log1p(-Phi(-x))`` on ``(0, 8]``
    and the continued-fraction Mills ratio beyond ``|x| = 8`` (for large
    positive ``x`` the upper tail ``Q = Phi(-x)`` is formed from its log so
    the result stays accurate down to the subnormal range).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    tail = x < TAIL_SWITCH
    if tail.any():
        t = -x[tail]
        out[tail] = -0.5 * t * t - _LOG_SQRT_2PI - np.log(t + _tail_cf(t))
    mid = (~tail) & (x <= 0)
    if mid.any():
        out[mid] = np.log(special.ndtr(x[mid]))
    pos = (x > 0) & (x <= -TAIL_SWITCH)
    if pos.any():
        out[pos] = np.log1p(-special.ndtr(-x[pos]))
    far = x > -TAIL_SWITCH
    if far.any():
        t = x[far]
        out[far] = np.log1p(-np.exp(-0.5 * t * t - _LOG_SQRT_2PI - np.log(t + _tail_cf(t))))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CglsOptions:
    """Stopping rule for :func:`cgls_solve`.

    ``max_iter=None`` means five times the system size.
    """

    tol: float = 1e-8
    max_iter: int | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _as_matvec(op):
    if callable(op):
        return op
    mat = np.asarray(op)
    return lambda v: mat @ v


def cgls_solve(op, rhs, x0=None, options=None, return_iterations=False):
    """Solve ``R x = rhs`` for Hermitian positive definite ``R``.

    Plain conjugate gradients on the square system; ``R`` is only touched
    through products, so structured covariances never need to be formed.

    Parameters
    ----------
    op : ndarray or callable
        Dense matrix or a function ``v -> R v``.
    rhs : ndarray
        Right-hand side.
    x0 : ndarray, optional
        Warm start.
    options : CglsOptions, optional
    return_iterations : bool
        Also return the number of iterations used.

    Raises
    ------
    ConvergenceError
        If the relative residual is still above ``tol`` after ``max_iter``
        iterations.
    """
    options = options or CglsOptions()
    matvec = _as_matvec(op)
    rhs = np.asarray(rhs, dtype=complex)
    n = rhs.shape[0]
    max_iter = options.max_iter if options.max_iter is not None else 5 * n
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        x = np.zeros_like(rhs)
        return (x, 0) if return_iterations else x

    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=complex, copy=True)
        r = rhs - matvec(x)
    d = r.copy()
    rho = np.vdot(r, r).real
    target = (options.tol * bnorm) ** 2
    it = 0
    while rho > target:
        if it >= max_iter:
            res = np.sqrt(rho) / bnorm
            raise ConvergenceError(
                f"CG did not reach tol={options.tol:g} in {max_iter} iterations "
                f"(relative residual {res:.3e})", res, it)
        q = matvec(d)
        alpha = rho / np.vdot(d, q).real
        x += alpha * d
        r -= alpha * q
        rho_new = np.vdot(r, r).real
        d = r + (rho_new / rho) * d
        rho = rho_new
        it += 1
    return (x, it) if return_iterations else x


class HermitianFactor:
    """Cholesky factorization of a Hermitian positive definite matrix."""

    def __init__(self, R):
        R = np.asarray(R)
        try:
            self._cf = sla.cho_factor(R, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"covariance is not positive definite: {exc}")
        self.n = R.shape[0]

    def solve(self, b):
        return sla.cho_solve(self._cf, b, check_finite=False)

    def logdet(self):
        return 2.0 * np.sum(np.log(np.diag(self._cf[0]).real))

    def inverse_lower(self):
        """Lower triangle of the inverse; entries above the diagonal are
        unspecified."""
        c = self._cf[0]
        potri = sla.get_lapack_funcs("potri", (c,))
        inv, info = potri(c, lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"potri failed (info={info})")
        return inv

    def inverse(self):
        """Full Hermitian inverse (both triangles filled)."""
        inv = self.inverse_lower()
        return np.tril(inv) + np.tril(inv, -1).conj().T
