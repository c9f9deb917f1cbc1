"""One-bit weighted SPICE: 1bSPICE, 1bLIKES, 1bSLIM and 1bIAA.

With ``eta = sqrt(2)/sigma`` and ``beta = eta * gamma`` the one-bit
negative log-likelihood is

    L(beta, eta) = -sum_n log Phi(x_R(n)) - sum_n log Phi(x_I(n)),
    x_R(n) = z_R(n) (Re[b_n^T beta] - eta h_R(n)),

and similarly for the imaginary part. Each iteration majorizes ``L`` by a
least-squares term on the modified data ``eta h + g`` and solves the
resulting weighted SPICE problem in closed form:

    R    = B diag(p) B^H + 2 I
    eta' = max(0, -Re[h^H R^-1 g] / h^H R^-1 h)
    beta'= p * B^H R^-1 (eta' h + g)
    p'   = |beta'|^2 + eps          (1bSLIM)
           |beta'| / sqrt(w)        (others)

The four variants differ only in the weights ``w``.
"""

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import (CglsOptions, ConvergenceError, HermitianFactor, cgls_solve,
                       log_std_normal_cdf, mills_excess)
from .quantizer import SignedMeasurements, Threshold

__all__ = [
    "VARIANTS",
    "POWER_FLOOR",
    "OneBitConfig",
    "OneBitState",
    "canonical_variant",
    "mills_u",
    "compute_g",
    "build_onebit_R",
    "eta_update",
    "beta_update",
    "weight",
    "power_update",
    "onebit_objective",
    "neg_log_likelihood",
    "run",
    "periodogram_surrogate",
    "write_result_csv",
    "read_result_csv",
    "write_trace_csv",
]

VARIANTS = ("1bspice", "1blikes", "1bslim", "1biaa")
POWER_FLOOR = 1e-16
NOISE_DIAG = 2.0

_ALIASES = {v: v for v in VARIANTS}
_ALIASES.update({v[2:]: v for v in VARIANTS})


def canonical_variant(name):
    """Normalize ``"1bSLIM"``, ``"slim"`` etc. to ``"1bslim"``."""
    key = str(name).lower().replace("-", "").replace("_", "")
    if key not in _ALIASES:
        raise ValueError(f"unknown one-bit variant {name!r}; choose from {VARIANTS}")
    return _ALIASES[key]


@dataclass(frozen=True)
class OneBitConfig:
    """Settings for :func:`run`.

    ``solver="cgls"`` solves the two systems per iteration with conjugate
    gradients (warm-started) and never forms ``R``; it is only valid for
    1bSLIM and 1bSPICE since the other two need ``R^-1`` explicitly.
    """

    variant: str = "1bslim"
    epsilon: float = 1e-4
    rel_tol: float = 1e-3
    max_iter: int = 150
    solver: str = "dense"
    cgls_tol: float = 1e-8
    cgls_max_iter: int | None = None
    record_objective: bool = True
    beta0: complex = (1 + 1j) * 1e-3
    eta0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.solver not in ("dense", "cgls"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.solver == "cgls" and self.variant in ("1blikes", "1biaa"):
            raise ValueError(f"{self.variant} needs R^-1 and cannot use the cgls solver")
        if self.eta0 < 0:
            raise ValueError("eta0 must be nonnegative")


@dataclass
class OneBitState:
    """Estimator output.

    ``objective_trace[t]`` is the variant's criterion at iterate ``t``
    (``t = 0`` is the starting point); it is empty for 1bIAA.
    ``cgls_iterations`` totals the inner conjugate-gradient steps (0 for
    the dense solver).
    """

    beta: np.ndarray
    p: np.ndarray
    eta: float
    iter: int = 0
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    runtime_s: float = 0.0
    change_trace: list = field(default_factory=list)
    eta_trace: list = field(default_factory=list)
    cgls_iterations: int = 0

    @property
    def scale_resolved(self):
        """False when ``eta = 0`` leaves the amplitude scale undetermined."""
        return self.eta > 0

    @property
    def gamma(self):
        """Amplitudes ``beta/eta``; ``beta`` itself when the scale is unresolved."""
        return self.beta / self.eta if self.eta > 0 else self.beta.copy()


def mills_u(x):
    """``x + phi(x)/Phi(x)``, stable in both tails."""
    return mills_excess(x)


def _z(z):
    return z.z if isinstance(z, SignedMeasurements) else np.asarray(z, dtype=complex)


def _h(h, n):
    if h is None:
        return np.zeros(n, dtype=complex)
    return h.values if isinstance(h, Threshold) else np.asarray(h, dtype=complex)


def _margins(z, d, beta, eta, h):
    z = _z(z)
    h = _h(h, z.shape[0])
    if z.shape != (d.n_rows,) or h.shape != z.shape:
        raise ValueError(f"signed data ({z.shape}) and threshold ({h.shape}) must have length N={d.n_rows}")
    s = d.matvec(beta) - eta * h
    return z, z.real * s.real, z.imag * s.imag


def compute_g(z, d, beta, eta, h):
    """Modified-data offset ``g(n) = z_R u(x_R) + j z_I u(x_I)``."""
    z, xr, xi = _margins(z, d, beta, eta, h)
    return z.real * mills_u(xr) + 1j * z.imag * mills_u(xi)


def build_onebit_R(d, p, dense=True):
    """``B diag(p) B^H + 2 I`` as a matrix or, with ``dense=False``, a matvec."""
    p = np.asarray(p, dtype=float)
    if dense:
        R = d.gram(p)
        R[np.diag_indices_from(R)] += NOISE_DIAG
        return R
    return lambda v: d.matvec(p * d.adjoint_matvec(v)) + NOISE_DIAG * v


class _Solver:
    def __init__(self, R):
        if isinstance(R, HermitianFactor):
            self.factor, self.op = R, None
        elif callable(R):
            self.factor, self.op = None, R
        else:
            self.factor, self.op = HermitianFactor(R), None

    def solve(self, b, x0=None, options=None):
        if self.factor is not None:
            return self.factor.solve(b)
        return cgls_solve(self.op, b, x0=x0, options=options)


def _eta_from(h, v1, v2):
    den = np.vdot(h, v1).real
    if den <= 0:
        return 0.0
    return max(0.0, -np.vdot(h, v2).real / den)


def eta_update(R, h, g):
    """Nonnegative minimizer ``max(0, -Re[h^H R^-1 g] / h^H R^-1 h)``.

    ``R`` may be a matrix, a :class:`HermitianFactor` or a matvec callable.
    Returns 0 when ``h`` is identically zero.
    """
    h = np.asarray(h, dtype=complex)
    if not np.any(h):
        return 0.0
    s = _Solver(R)
    return _eta_from(h, s.solve(h), s.solve(np.asarray(g, dtype=complex)))


def beta_update(R, d, p, h, g, eta):
    """``beta = p * B^H R^-1 (eta h + g)``."""
    s = _Solver(R)
    v = s.solve(eta * np.asarray(h, dtype=complex) + np.asarray(g, dtype=complex))
    return np.asarray(p, dtype=float) * d.adjoint_matvec(v)


def _rinv_quad(d, R):
    F = R if isinstance(R, HermitianFactor) else HermitianFactor(R)
    return d.quad_diag_lower(F.inverse_lower())


def weight(variant, d, R=None, p=None, epsilon=0.0, _quad=None):
    """Per-column weights.

    1bSPICE ``||b_k||^2``; 1bLIKES ``b_k^H R^-1 b_k``; 1bIAA
    ``p_k (b_k^H R^-1 b_k)^2``; 1bSLIM ``1/(p_k + epsilon)`` (the weight
    implied by its log penalty).
    """
    variant = canonical_variant(variant)
    if variant == "1bspice":
        return d.column_norms_sq()
    if variant == "1bslim":
        return 1.0 / (np.asarray(p, dtype=float) + epsilon)
    q = _rinv_quad(d, R) if _quad is None else _quad
    if variant == "1blikes":
        return q
    return np.asarray(p, dtype=float) * q * q


def power_update(variant, beta, w=None, epsilon=1e-4):
    """``|beta|^2 + eps`` for 1bSLIM, ``|beta|/sqrt(w)`` otherwise; floored."""
    variant = canonical_variant(variant)
    a = np.abs(np.asarray(beta))
    if variant == "1bslim":
        p = a * a + epsilon
    else:
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        p = a / np.sqrt(w)
    return np.maximum(p, POWER_FLOOR)


def neg_log_likelihood(z, d, beta, eta, h):
    """``-sum log Phi(x_R) - sum log Phi(x_I)``."""
    _, xr, xi = _margins(z, d, beta, eta, h)
    return -float(np.sum(log_std_normal_cdf(xr)) + np.sum(log_std_normal_cdf(xi)))


def onebit_objective(variant, beta, p, eta, z, d, h, epsilon=1e-4, logdet=None):
    """Criterion decreased by ``variant`` (NaN for 1bIAA).

    * 1bSLIM: ``L + sum ln(|beta|^2 + eps)``
    * 1bSPICE: ``L + sum |beta|^2/p + tr R`` with ``tr R = sum ||b_k||^2 p_k + 2N``
    * 1bLIKES: ``L + sum |beta|^2/p + ln|R|``

    ``logdet`` may carry a precomputed ``ln|R|``. Non-finite values are
    reported as ``+inf``.
    """
    variant = canonical_variant(variant)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if variant == "1biaa":
        return float("nan")
    beta = np.asarray(beta)
    val = neg_log_likelihood(z, d, beta, eta, h)
    a2 = np.abs(beta) ** 2
    if variant == "1bslim":
        val += float(np.sum(np.log(a2 + epsilon)))
    else:
        p = np.asarray(p, dtype=float)
        val += float(np.sum(a2 / p))
        if variant == "1bspice":
            val += float(np.dot(d.column_norms_sq(), p)) + NOISE_DIAG * d.n_rows
        else:
            if logdet is None:
                logdet = HermitianFactor(build_onebit_R(d, p)).logdet()
            val += logdet
    return val if np.isfinite(val) else float("inf")


def run(z, d, h, config=None, **overrides):
    """Iterate a one-bit weighted SPICE method until ``p`` settles.

    Parameters
    ----------
    z : SignedMeasurements or ndarray
    d : Dictionary
    h : Threshold or ndarray or None
    config : OneBitConfig, optional
        Keyword overrides are applied on top of it.

    Returns
    -------
    OneBitState

    Raises
    ------
    ConvergenceError
        If a conjugate-gradient solve stalls.
    FloatingPointError
        If the objective or the iterates become non-finite.
    """
    cfg = config or OneBitConfig()
    if overrides:
        cfg = OneBitConfig(**{**asdict(cfg), **overrides})
    t_start = time.perf_counter()
    var = cfg.variant
    zz = _z(z)
    hh = _h(h, zz.shape[0])
    if zz.shape != (d.n_rows,) or hh.shape != zz.shape:
        raise ValueError(f"data and threshold must have length N={d.n_rows}")
    M = d.n_cols
    beta = np.full(M, cfg.beta0, dtype=complex)
    p = np.abs(beta) ** 2
    if var == "1bslim":
        p = p + cfg.epsilon  # tangent point of the log penalty
    eta = float(cfg.eta0)
    dense = cfg.solver == "dense"
    cg_opts = CglsOptions(cfg.cgls_tol, cfg.cgls_max_iter)
    track = cfg.record_objective and var != "1biaa"
    colnorm = d.column_norms_sq() if var == "1bspice" else None

    trace, changes, etas = [], [], []
    v1 = v2 = None
    converged = False
    it = n_cg = 0
    while it < cfg.max_iter:
        g = compute_g(zz, d, beta, eta, hh)
        if dense:
            F = HermitianFactor(build_onebit_R(d, p))
            v1, v2 = F.solve(hh), F.solve(g)
        else:
            F = None
            op = build_onebit_R(d, p, dense=False)
            v1, k1 = cgls_solve(op, hh, x0=v1, options=cg_opts, return_iterations=True)
            v2, k2 = cgls_solve(op, g, x0=v2, options=cg_opts, return_iterations=True)
            n_cg += k1 + k2
        if track:
            ld = F.logdet() if (var == "1blikes") else None
            trace.append(onebit_objective(var, beta, p, eta, zz, d, hh, cfg.epsilon, logdet=ld))
            if not np.isfinite(trace[-1]):
                raise FloatingPointError(f"objective became non-finite at iteration {it}")

        if var == "1bspice":
            w = colnorm
        elif var in ("1blikes", "1biaa"):
            w = weight(var, d, F, p)
        else:
            w = None
        eta = float(_eta_from(hh, v1, v2)) if np.any(hh) else 0.0
        beta = p * d.adjoint_matvec(eta * v1 + v2)
        new_p = power_update(var, beta, w, cfg.epsilon)
        if not (np.all(np.isfinite(new_p)) and np.all(np.isfinite(beta))):
            raise FloatingPointError(f"non-finite iterate at iteration {it + 1}")
        it += 1
        change = float(np.linalg.norm(new_p - p) / np.linalg.norm(p))
        p = new_p
        changes.append(change)
        etas.append(eta)
        if change < cfg.rel_tol:
            converged = True
            break

    if track:
        ld = None
        if var == "1blikes":
            ld = HermitianFactor(build_onebit_R(d, p)).logdet()
        trace.append(onebit_objective(var, beta, p, eta, zz, d, hh, cfg.epsilon, logdet=ld))
    return OneBitState(beta, p, eta, it, trace, converged, time.perf_counter() - t_start,
                       changes, etas, n_cg)


def periodogram_surrogate(d, z, h=None, power=None):
    """Matched-filter amplitudes of the signed data, rescaled to data units.

    ``B^H z / ||b_k||^2`` is divided by the Bussgang gain
    ``sqrt(2/pi) / s`` of a sign comparator whose input components have
    standard deviation ``s``; ``s^2 = power/2 + var(h_R)`` accounts for the
    data power and the threshold spread. Without ``power`` the raw
    matched-filter output is returned.
    """
    zz = _z(z)
    a = d.adjoint_matvec(zz) / d.column_norms_sq()
    if power is None:
        return a
    hh = _h(h, zz.shape[0])
    var_h = 0.5 * (np.var(hh.real) + np.var(hh.imag))
    s = np.sqrt(0.5 * power + var_h)
    return a * s / np.sqrt(2.0 / np.pi)


def write_result_csv(path, state, variant, d, epsilon):
    """Estimator output: ``#`` header lines then ``k,beta_re,beta_im,p`` rows."""
    with open(path, "w", newline="") as fh:
        label = "1bper" if variant == "1bper" else canonical_variant(variant)
        fh.write(f"# variant={label}\n")
        fh.write(f"# n_rows={d.n_rows} n_cols={d.n_cols}\n")
        fh.write(f"# epsilon={epsilon!r}\n")
        fh.write(f"# iterations={state.iter}\n")
        fh.write(f"# eta={float(state.eta)!r}\n")
        fh.write(f"# scale_resolved={str(state.scale_resolved).lower()}\n")
        w = csv.writer(fh)
        w.writerow(["k", "beta_re", "beta_im", "p"])
        for k in range(state.beta.shape[0]):
            b = state.beta[k]
            w.writerow([k, repr(float(b.real)), repr(float(b.imag)), repr(float(state.p[k]))])


def read_result_csv(path):
    """Inverse of :func:`write_result_csv`; returns ``(meta, beta, p)``."""
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    k, _, v = item.partition("=")
                    meta[k] = v
            else:
                rows.append(line)
    r = list(csv.reader(rows))
    data = np.array([[float(x) for x in row] for row in r[1:]]).reshape(-1, 4)
    return meta, data[:, 1] + 1j * data[:, 2], data[:, 3]


def write_trace_csv(path, state):
    """Per-iteration ``iteration,objective,rel_change,eta`` rows.

    The objective column holds the criterion after the iteration (NaN for
    1bIAA); the starting value is written as a comment.
    """
    with open(path, "w", newline="") as fh:
        if state.objective_trace:
            fh.write(f"# initial_objective={float(state.objective_trace[0])!r}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "rel_change", "eta"])
        for t in range(state.iter):
            obj = state.objective_trace[t + 1] if len(state.objective_trace) > t + 1 else float("nan")
            w.writerow([t + 1, repr(float(obj)), repr(float(state.change_trace[t])), repr(float(state.eta_trace[t]))])
