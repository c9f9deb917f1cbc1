"""Weighted SPICE estimators for high-precision data.

The data model is ``y = B gamma + e`` with covariance
``R = A diag(p) A^H``, ``A = [B I]``; ``p`` holds ``M`` signal powers
followed by ``N`` per-sample noise powers. All four methods iterate

    p_k <- p_k |a_k^H R^{-1} y| / sqrt(w_k)

and differ only in the weights ``w_k``:

=======  ==========================================
SPICE    ``||a_k||^2``
LIKES    ``a_k^H R^{-1} a_k`` (frozen for L inner steps)
SLIM     ``1 / p_k``
IAA      ``p_k (a_k^H R^{-1} a_k)^2``
=======  ==========================================

Step functions return the raw update; :func:`estimate` applies the
positivity floor and the stopping rule.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import CglsOptions, HermitianFactor, cgls_solve

__all__ = [
    "VARIANTS",
    "POWER_FLOOR",
    "HPResult",
    "build_covariance",
    "spice_step",
    "likes_step",
    "slim_step",
    "iaa_step",
    "weighted_step",
    "slim_amplitude_step",
    "lmmse_amplitudes",
    "periodogram",
    "spice_objective",
    "likes_objective",
    "slim_objective",
    "objective",
    "estimate",
    "inverse_bound",
]

VARIANTS = ("spice", "likes", "slim", "iaa")
POWER_FLOOR = 1e-16


def _split(d, p):
    p = np.asarray(p, dtype=float)
    M, N = d.n_cols, d.n_rows
    if p.shape != (M + N,):
        raise ValueError(f"augmented powers must have length M+N={M + N}, got {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("powers must be finite and nonnegative")
    return p[:M], p[M:]


def build_covariance(d, p, dense=True):
    """``R = B diag(p1) B^H + diag(p2)``.

    With ``dense=False`` a function ``v -> R v`` is returned instead, for use
    with :func:`cgls_solve`.
    """
    p1, p2 = _split(d, p)
    if dense:
        R = d.gram(p1)
        R[np.diag_indices_from(R)] += p2
        return R
    return lambda v: d.matvec(p1 * d.adjoint_matvec(v)) + p2 * v


class _Solved:
    """Factorization of R plus the products every step needs."""

    def __init__(self, d, p, y, solver="dense", x0=None, cgls=None):
        self.d = d
        self.p = np.asarray(p, dtype=float)
        self.y = np.asarray(y, dtype=complex)
        if self.y.shape != (d.n_rows,):
            raise ValueError(f"data length {self.y.shape} does not match dictionary rows {d.n_rows}")
        if solver == "dense":
            self.factor = HermitianFactor(build_covariance(d, p))
            self.r = self.factor.solve(self.y)
        elif solver == "cgls":
            self.factor = None
            self.r = cgls_solve(build_covariance(d, p, dense=False), self.y, x0=x0, options=cgls)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        self._c = None
        self._q = None

    @property
    def c(self):
        """``A^H R^{-1} y``."""
        if self._c is None:
            self._c = np.concatenate([self.d.adjoint_matvec(self.r), self.r])
        return self._c

    @property
    def q(self):
        """``a_k^H R^{-1} a_k`` for all M+N columns."""
        if self._q is None:
            if self.factor is None:
                raise ValueError("quadratic forms need the dense solver")
            Ri = self.factor.inverse_lower()
            q = np.concatenate([self.d.quad_diag_lower(Ri), np.diag(Ri).real])
            if not (np.all(np.isfinite(q)) and np.all(q > 0)):
                raise np.linalg.LinAlgError("covariance is numerically singular")
            self._q = q
        return self._q

    def fit(self):
        return float(np.vdot(self.y, self.r).real)


def _column_norms(d):
    return np.concatenate([d.column_norms_sq(), np.ones(d.n_rows)])


def _tie(new, s, w, N):
    # common noise power: minimizer of sum_n |gbar_n|^2/sigma + sigma sum_n w_n
    sig = s.p[-N:]
    gbar2 = np.sum((sig * np.abs(s.r)) ** 2)
    new[-N:] = np.sqrt(gbar2 / np.sum(w[-N:]))
    return new


def weighted_step(p, d, y, w, tied_noise=False, _s=None):
    """One SPICE-type update with arbitrary positive weights ``w``."""
    s = _s or _Solved(d, p, y)
    w = np.asarray(w, dtype=float)
    new = s.p * np.abs(s.c) / np.sqrt(w)
    return _tie(new, s, w, d.n_rows) if tied_noise else new


def spice_step(p, d, y, tied_noise=False, _s=None):
    """``p_k' = p_k |a_k^H R^{-1} y| / ||a_k||``."""
    return weighted_step(p, d, y, _column_norms(d), tied_noise, _s)


def likes_step(p, d, y, L=1, tied_noise=False, _s=None):
    """Freeze ``w_k = a_k^H R^{-1} a_k`` at the current ``p`` and run ``L``
    weighted SPICE updates with them."""
    if L < 1:
        raise ValueError("L must be at least 1")
    s = _s or _Solved(d, p, y)
    w = s.q.copy()
    q = weighted_step(p, d, y, w, tied_noise, s)
    for _ in range(L - 1):
        q = weighted_step(q, d, y, w, tied_noise, _Solved(d, np.maximum(q, POWER_FLOOR), y))
    return q


def slim_step(p, d, y, tied_noise=False, _s=None):
    """``p_k' = p_k^{3/2} |a_k^H R^{-1} y|``."""
    s = _s or _Solved(d, p, y)
    new = s.p ** 1.5 * np.abs(s.c)
    if tied_noise:
        new = _tie(new, s, 1.0 / s.p, d.n_rows)
    return new


def iaa_step(p, d, y, tied_noise=False, _s=None):
    """``p_k' = p_k^{1/2} |a_k^H R^{-1} y| / (a_k^H R^{-1} a_k)``."""
    s = _s or _Solved(d, p, y)
    q = s.q
    new = np.sqrt(s.p) * np.abs(s.c) / q
    if tied_noise:
        new = _tie(new, s, s.p * q * q, d.n_rows)
    return new


_STEPS = {"spice": spice_step, "slim": slim_step, "iaa": iaa_step}


def inverse_bound(A, p, p_hat):
    """Tangent majorizer of ``R^{-1}`` for ``R = A diag(p) A^H``.

    Returns ``Rh^{-1} A Ph P^{-1} Ph A^H Rh^{-1}`` with ``Rh`` built from
    ``p_hat``; it dominates ``R^{-1}`` in the Loewner order and touches it
    at ``p = p_hat``. Dense, for checking small problems.
    """
    A = np.asarray(A, dtype=complex)
    p = np.asarray(p, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    if np.any(p <= 0) or np.any(p_hat <= 0):
        raise ValueError("powers must be positive")
    Rh = (A * p_hat) @ A.conj().T
    G = np.linalg.solve(Rh, A * p_hat)  # Rh^{-1} A Ph
    B = (G / p) @ G.conj().T
    return 0.5 * (B + B.conj().T)


def slim_amplitude_step(p, d, y, noise_var=2.0, eps=0.0):
    """SLIM-style amplitude and power update with a known white noise level.

    ``beta = P B^H (B P B^H + noise_var I)^{-1} y`` and
    ``p' = |beta|^2 + eps``, with ``p`` of length M.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (d.n_cols,):
        raise ValueError(f"powers must have length M={d.n_cols}")
    R = d.gram(p)
    R[np.diag_indices_from(R)] += noise_var
    r = HermitianFactor(R).solve(np.asarray(y, dtype=complex))
    beta = p * d.adjoint_matvec(r)
    return beta, np.abs(beta) ** 2 + eps


def lmmse_amplitudes(p, d, y, _s=None):
    """``gamma = P1 B^H R^{-1} y``."""
    s = _s or _Solved(d, p, y)
    return s.p[: d.n_cols] * s.c[: d.n_cols]


def periodogram(d, y):
    """Matched-filter spectrum ``|b_k^H y|^2 / ||b_k||^4``."""
    c = d.adjoint_matvec(np.asarray(y, dtype=complex))
    n2 = d.column_norms_sq()
    return np.abs(c) ** 2 / n2 ** 2


def spice_objective(p, d, y, _s=None):
    """``y^H R^{-1} y + sum_k ||a_k||^2 p_k``."""
    s = _s or _Solved(d, p, y)
    return s.fit() + float(np.dot(_column_norms(d), s.p))


def likes_objective(p, d, y, _s=None):
    """``y^H R^{-1} y + ln|R|``."""
    s = _s or _Solved(d, p, y)
    return s.fit() + s.factor.logdet()


def slim_objective(p, d, y, _s=None):
    """``y^H R^{-1} y + sum_k ln p_k`` over all M+N entries."""
    s = _s or _Solved(d, p, y)
    return s.fit() + float(np.sum(np.log(s.p)))


_OBJECTIVES = {"spice": spice_objective, "likes": likes_objective, "slim": slim_objective}


def objective(variant, p, d, y):
    """Criterion minimized by ``variant``; IAA has none and gives NaN."""
    if variant == "iaa":
        return float("nan")
    return _OBJECTIVES[variant](p, d, y)


@dataclass
class HPResult:
    """Output of :func:`estimate`."""

    p: np.ndarray
    gamma: np.ndarray
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def signal_powers(self):
        return self.p[: self.gamma.shape[0]]


def initial_powers(d, y):
    """Periodogram start for the signal powers and ``||y||^2/N`` for noise."""
    y = np.asarray(y, dtype=complex)
    p1 = periodogram(d, y)
    p2 = np.full(d.n_rows, np.vdot(y, y).real / d.n_rows)
    return np.maximum(np.concatenate([p1, p2]), POWER_FLOOR)


def estimate(d, y, variant="spice", max_iter=150, rel_tol=1e-3, L=1, tied_noise=False,
             p0=None, solver="dense", record_objective=True, cgls=None):
    """Run a weighted SPICE method to convergence.

    Parameters
    ----------
    d : Dictionary
    y : ndarray
        High-precision data, length N.
    variant : {"spice", "likes", "slim", "iaa"}
    max_iter : int
    rel_tol : float
        Stop when ``||p_new - p|| / ||p|| < rel_tol``.
    L : int
        Inner iterations per weight refresh (LIKES only).
    tied_noise : bool
        Force all noise powers equal.
    p0 : ndarray, optional
        Initial augmented powers; defaults to :func:`initial_powers`.
    solver : {"dense", "cgls"}
        ``"cgls"`` is available for SPICE and SLIM, which never need
        ``R^{-1}`` explicitly.

    Returns
    -------
    HPResult
        ``objective_trace[t]`` is the criterion at iterate ``t``
        (``t = 0`` is the initial point).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if solver == "cgls" and variant in ("likes", "iaa"):
        raise ValueError(f"{variant} needs the dense solver")
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex)
    p = initial_powers(d, y) if p0 is None else np.maximum(np.asarray(p0, dtype=float), POWER_FLOOR)
    _split(d, p)
    trace = []
    track = record_objective and variant != "iaa" and solver == "dense"
    converged = False
    it = 0
    r_prev = None
    while it < max_iter:
        s = _Solved(d, p, y, solver=solver, x0=r_prev, cgls=cgls)
        r_prev = s.r
        if track:
            trace.append(_OBJECTIVES[variant](p, d, y, _s=s))
        if variant == "likes":
            new = likes_step(p, d, y, L, tied_noise, _s=s)
        else:
            new = _STEPS[variant](p, d, y, tied_noise, _s=s)
        new = np.maximum(new, POWER_FLOOR)
        it += 1
        change = np.linalg.norm(new - p) / np.linalg.norm(p)
        p = new
        if change < rel_tol:
            converged = True
            break
    s = _Solved(d, p, y, solver=solver, x0=r_prev, cgls=cgls)
    if track:
        trace.append(_OBJECTIVES[variant](p, d, y, _s=s))
    gamma = lmmse_amplitudes(p, d, y, _s=s)
    return HPResult(p, gamma, it, converged, trace, time.perf_counter() - t0)
