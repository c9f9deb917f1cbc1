"""Scene generation and high-precision radar measurements.

Two receivers are modelled:

* LFMCW, where a target at frequency pair ``(w, wd)`` contributes a 2-D
  complex sinusoid ``gamma * exp(j(w n1 + wd n2))`` with ``n1, n2``
  counted from 1 (after dechirping),
* PMCW, where a periodic +-1 code shaped by a raised-cosine pulse is
  delayed (possibly by a fraction of a chip) and Doppler-rotated once per
  PRI, ``Y = S Gamma Phi^T`` with PRI index ``n2`` counted from 0.

Everything is vectorised column-major (fast time fastest).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .operators import Fourier2D, Kronecker, dft_grid

__all__ = [
    "RadarParams",
    "Scene",
    "ROLL_OFF",
    "PULSE_SPAN",
    "mls_generate",
    "raised_cosine",
    "pmcw_steering_matrix",
    "synthesize_lfmcw",
    "synthesize_pmcw",
    "add_noise",
    "freq_to_range_doppler",
    "range_doppler_to_freq",
    "lfmcw_dictionary",
    "pmcw_dictionary",
    "pmcw_delay_grid",
    "lfmcw_benchmark_scene",
    "pmcw_benchmark_scene",
    "write_scene",
    "read_scene",
    "MLS_TAPS",
]

ROLL_OFF = 0.25
PULSE_SPAN = 5  # pulse support is (-5 Ts, 5 Ts]

# a primitive polynomial per register length, as exponent tuples (x^r + ... + 1)
MLS_TAPS = {
    2: (2, 1, 0),
    3: (3, 1, 0),
    4: (4, 1, 0),
    5: (5, 2, 0),
    6: (6, 1, 0),
    7: (7, 1, 0),
    8: (8, 4, 3, 2, 0),
    9: (9, 4, 0),
    10: (10, 3, 0),
}


@dataclass(frozen=True)
class RadarParams:
    """Physical radar constants.

    ``mu`` is half the chirp rate (the chirp sweeps at ``2 mu`` Hz/s).
    Defaults describe a 77 GHz automotive LFMCW front end and are only
    used for unit conversions.
    """

    mu: float = 0.5 * 25e6 / 80e-6
    c: float = 299_792_458.0
    fs: float = 10e6
    f0: float = 77e9
    Tc: float = 80e-6
    Ts: float = 1e-8
    Tp: float = 31e-8

    def __post_init__(self):
        for name in ("mu", "c", "fs", "f0", "Tc", "Ts", "Tp"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"radar parameter {name} must be positive and finite, got {v}")


@dataclass
class Scene:
    """Ground-truth point targets.

    Attributes
    ----------
    coord : ndarray
        Range coordinate of each target: angular frequency ``w`` in
        ``[0, 2 pi)`` for LFMCW, round-trip delay in seconds for PMCW.
    doppler : ndarray
        Doppler angular frequency ``wd`` in ``[0, 2 pi)``.
    amplitude : ndarray
        Complex reflection coefficients.
    on_grid : ndarray of bool
    model : str
        ``"lfmcw"`` or ``"pmcw"``.
    """

    coord: np.ndarray
    doppler: np.ndarray
    amplitude: np.ndarray
    on_grid: np.ndarray = None
    model: str = "lfmcw"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coord = np.atleast_1d(np.asarray(self.coord, dtype=float))
        self.doppler = np.atleast_1d(np.asarray(self.doppler, dtype=float))
        self.amplitude = np.atleast_1d(np.asarray(self.amplitude, dtype=complex))
        n = self.coord.shape[0]
        if self.on_grid is None:
            self.on_grid = np.zeros(n, dtype=bool)
        self.on_grid = np.atleast_1d(np.asarray(self.on_grid, dtype=bool))
        if not (self.doppler.shape[0] == self.amplitude.shape[0] == self.on_grid.shape[0] == n):
            raise ValueError("scene fields must have equal length")
        if self.model not in ("lfmcw", "pmcw"):
            raise ValueError(f"unknown model {self.model!r}")
        if not np.all(np.isfinite(self.amplitude)):
            raise ValueError("scene amplitudes must be finite")
        two_pi = 2 * np.pi
        if np.any((self.doppler < 0) | (self.doppler >= two_pi)):
            raise ValueError("Doppler frequencies must lie in [0, 2 pi)")
        if self.model == "lfmcw" and np.any((self.coord < 0) | (self.coord >= two_pi)):
            raise ValueError("LFMCW range frequencies must lie in [0, 2 pi)")
        if self.model == "pmcw" and np.any(self.coord < 0):
            raise ValueError("delays must be nonnegative")

    def __len__(self):
        return self.coord.shape[0]

    @property
    def signal_power(self):
        """Sum of squared target magnitudes."""
        return float(np.sum(np.abs(self.amplitude) ** 2))


def _taps_to_exponents(taps, r):
    if isinstance(taps, (int, np.integer)):
        exps = tuple(k for k in range(r + 1) if (int(taps) >> k) & 1)
    else:
        exps = tuple(int(e) for e in taps)
    exps = set(exps) | {r, 0}
    if max(exps) != r:
        raise ValueError(f"polynomial degree {max(exps)} does not match register length {r}")
    return exps


def mls_generate(r, taps=None):
    """Maximum-length +-1 sequence of period ``2**r - 1``.

    Parameters
    ----------
    r : int
        Register length, at least 2.
    taps : int or sequence of int, optional
        Feedback polynomial over GF(2), either as a bit mask (bit ``k`` set
        for the ``x**k`` term, e.g. ``0b100101`` for ``x^5 + x^2 + 1``) or as
        a sequence of exponents. Defaults to a tabulated primitive
        polynomial.

    Raises
    ------
    ValueError
        If the register does not cycle through all ``2**r - 1`` nonzero
        states, i.e. the polynomial is not primitive.
    """
    r = int(r)
    if r < 2:
        raise ValueError("register length must be at least 2")
    if taps is None:
        if r not in MLS_TAPS:
            raise ValueError(f"no default polynomial for r={r}; pass taps")
        taps = MLS_TAPS[r]
    exps = _taps_to_exponents(taps, r)
    coeffs = [k for k in exps if k < r]  # a[n+r] = xor of a[n+k]
    period = (1 << r) - 1

    state = [1] * r
    start = tuple(state)
    bits = np.empty(period, dtype=np.int8)
    for n in range(period):
        bits[n] = state[0]
        fb = 0
        for k in coeffs:
            fb ^= state[k]
        state = state[1:] + [fb]
        if tuple(state) == start and n < period - 1:
            raise ValueError(f"taps {sorted(exps, reverse=True)} are not primitive (period {n + 1})")
    if tuple(state) != start:
        raise ValueError(f"taps {sorted(exps, reverse=True)} are not primitive")
    return 1.0 - 2.0 * bits


def raised_cosine(t, Ts, beta=ROLL_OFF):
    """Raised-cosine impulse response truncated to ``(-5 Ts, 5 Ts]``.

    At the removable singularities ``t = +-Ts/(2 beta)`` the limit
    ``(pi/4) sinc(1/(2 beta))`` is used.
    """
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    t = np.asarray(t, dtype=float)
    x = t / Ts
    den = 1.0 - (2.0 * beta * x) ** 2
    sing = np.isclose(den, 0.0, atol=1e-12)
    safe = np.where(sing, 1.0, den)
    out = np.sinc(x) * np.cos(np.pi * beta * x) / safe
    out = np.where(sing, 0.25 * np.pi * np.sinc(1.0 / (2.0 * beta)), out)
    out = np.where((x > -PULSE_SPAN) & (x <= PULSE_SPAN), out, 0.0)
    return out if out.ndim else float(out)


def pmcw_steering_matrix(s, delays, Ts):
    """Delayed, pulse-shaped copies of the code, one column per delay.

    Column ``k`` samples the periodic transmitted waveform at
    ``n1 Ts - tau_k``, ``n1 = 0..N1-1``. A delay ``l Ts + frac`` shifts the
    code circularly by ``l`` chips and blends neighbouring chips through the
    pulse shape evaluated at ``i Ts + frac``, ``i = -5..4``.
    """
    s = np.asarray(s, dtype=float)
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    if delays.size == 0:
        raise ValueError("delay list is empty")
    if np.any(delays < 0):
        raise ValueError("delays must be nonnegative")
    n1 = s.shape[0]
    steps = delays / Ts
    lag = np.floor(steps)
    frac = steps - lag
    # snap fractions that are integers up to rounding
    whole = np.isclose(frac, 1.0, rtol=0, atol=1e-12)
    lag[whole] += 1
    frac[whole] = 0.0
    frac[np.isclose(frac, 0.0, rtol=0, atol=1e-12)] = 0.0
    lag = lag.astype(int)

    i = np.arange(-PULSE_SPAN, PULSE_SPAN)
    taps = raised_cosine((i[None, :] + frac[:, None]) * Ts, Ts)  # (K, 10)
    idx = (np.arange(n1)[:, None, None] + i[None, None, :] - lag[None, :, None]) % n1
    return np.einsum("nki,ki->nk", s[idx], taps)


def synthesize_lfmcw(scene, N1, N2=1):
    """Noiseless dechirped LFMCW samples (``n1, n2`` counted from 1)."""
    n1 = np.arange(1, N1 + 1)
    n2 = np.arange(1, N2 + 1)
    y = np.zeros((N1, N2), dtype=complex)
    for w, wd, g in zip(scene.coord, scene.doppler, scene.amplitude):
        y += g * np.outer(np.exp(1j * w * n1), np.exp(1j * wd * n2))
    return y.ravel(order="F")


def synthesize_pmcw(scene, s, N2, Ts):
    """Noiseless PMCW samples ``vec(S Gamma Phi^T)`` for a continuous scene."""
    s = np.asarray(s, dtype=float)
    N1 = s.shape[0]
    Y = np.zeros((N1, N2), dtype=complex)
    if len(scene) == 0:
        return Y.ravel(order="F")
    if np.any(scene.coord >= N1 * Ts):
        raise ValueError("target delay exceeds the PRI")
    cols = pmcw_steering_matrix(s, scene.coord, Ts)
    n2 = np.arange(N2)
    for k in range(len(scene)):
        Y += scene.amplitude[k] * np.outer(cols[:, k], np.exp(1j * scene.doppler[k] * n2))
    return Y.ravel(order="F")


def add_noise(y, snr_db, signal_power, rng=None):
    """Add circularly-symmetric white Gaussian noise at a given SNR.

    ``sigma2 = signal_power * 10**(-snr_db/10)``; real and imaginary parts
    each have variance ``sigma2/2``. ``snr_db = inf`` returns ``y``
    unchanged with ``sigma2 = 0``.

    Returns
    -------
    (ndarray, float)
    """
    y = np.asarray(y, dtype=complex)
    if np.isposinf(snr_db):
        return y.copy(), 0.0
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    if not signal_power > 0:
        raise ValueError("signal_power must be positive")
    rng = np.random.default_rng(rng)
    sigma2 = float(signal_power) * 10.0 ** (-snr_db / 10.0)
    e = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + math.sqrt(sigma2 / 2.0) * e, sigma2


def freq_to_range_doppler(w, wd, params):
    """Map LFMCW frequencies to (range in m, radial velocity in m/s)."""
    if not params.mu > 0:
        raise ValueError("chirp parameter mu must be positive")
    v = np.asarray(wd) * params.c / (4 * np.pi * params.f0 * params.Tc)
    r = (np.asarray(w) * params.c * params.fs / (2 * np.pi) - 2 * params.f0 * v) / (4 * params.mu)
    return r, v


def range_doppler_to_freq(r, v, params):
    """Inverse of :func:`freq_to_range_doppler`."""
    r = np.asarray(r)
    v = np.asarray(v)
    w = 2 * np.pi * (4 * params.mu * r / (params.c * params.fs) + 2 * params.f0 * v / (params.c * params.fs))
    wd = 4 * np.pi * params.f0 * v * params.Tc / params.c
    return w, wd


def lfmcw_dictionary(N1, N2, Kr, Kd):
    return Fourier2D(N1, N2, Kr, Kd)


def pmcw_delay_grid(N1, Kr, Ts):
    """Uniform delay grid covering one PRI, ``tau_k = k N1 Ts / Kr``."""
    return np.arange(Kr) * (N1 * Ts / Kr)


def pmcw_dictionary(s, N2, Kr, Kd, Ts=1.0):
    """Kronecker dictionary on the uniform delay and Doppler grids."""
    s = np.asarray(s, dtype=float)
    S = pmcw_steering_matrix(s, pmcw_delay_grid(s.shape[0], Kr, Ts), Ts)
    Phi = np.exp(1j * np.outer(np.arange(N2), dft_grid(Kd)))
    return Kronecker(S, Phi)


def lfmcw_benchmark_scene(rng=None, N=1024, grid_factor=5):
    """Five sinusoids, two of them one Rayleigh cell apart.

    Amplitudes ``1, .8, .8, .6, .4`` with independent uniform phases.
    """
    rng = np.random.default_rng(rng)
    mags = np.array([1.0, 0.8, 0.8, 0.6, 0.4])
    f = np.array([0.150, 0.216, 0.216 + 1.0 / N, 0.375, 0.450])
    phases = rng.uniform(0, 2 * np.pi, size=5)
    bins = f * grid_factor * N
    on_grid = np.isclose(bins, np.round(bins), rtol=0, atol=1e-9)
    return Scene(2 * np.pi * f, np.zeros(5), mags * np.exp(1j * phases), on_grid, "lfmcw",
                 meta={"N": N, "grid_factor": grid_factor})


def pmcw_benchmark_scene(rng=None, N1=31, N2=64, Kr=None, Kd=None, Ts=1.0, n_targets=30,
                     n_off_grid=4, min_sep=3, off_range=(0.2, 0.5)):
    """Random range-Doppler scene on the PMCW grid.

    Targets sit on distinct cells with Chebyshev separation of at least
    ``min_sep`` bins (range index taken circularly). The last
    ``n_off_grid`` targets are displaced by a fraction of a bin in one
    randomly chosen dimension. Magnitudes are uniform on ``[0.1, 1]`` with
    uniform phases.
    """
    rng = np.random.default_rng(rng)
    Kr = 4 * N1 if Kr is None else Kr
    Kd = 5 * N2 if Kd is None else Kd
    cells = []
    tries = 0
    while len(cells) < n_targets:
        tries += 1
        if tries > 100_000:
            raise RuntimeError("could not place targets with the requested separation")
        kr, kd = int(rng.integers(Kr)), int(rng.integers(Kd))
        ok = True
        for (a, b) in cells:
            dr = min(abs(kr - a), Kr - abs(kr - a))
            dd = min(abs(kd - b), Kd - abs(kd - b))
            if max(dr, dd) < min_sep:
                ok = False
                break
        if ok:
            cells.append((kr, kd))
    cells = np.array(cells, dtype=float)
    on_grid = np.ones(n_targets, dtype=bool)
    for t in range(n_targets - n_off_grid, n_targets):
        dim = int(rng.integers(2))
        delta = rng.uniform(*off_range)
        if dim == 0:
            # keep the delay nonnegative and inside the PRI
            delta = delta if cells[t, 0] + delta < Kr else -delta
        else:
            delta = delta * (1 if rng.random() < 0.5 else -1)
        cells[t, dim] += delta
        on_grid[t] = False
    cells[:, 1] %= Kd
    mags = rng.uniform(0.1, 1.0, n_targets)
    phases = rng.uniform(0, 2 * np.pi, n_targets)
    delay = cells[:, 0] * (N1 * Ts / Kr)
    wd = 2 * np.pi * cells[:, 1] / Kd
    return Scene(delay, wd, mags * np.exp(1j * phases), on_grid, "pmcw",
                 meta={"N1": N1, "N2": N2, "Kr": Kr, "Kd": Kd, "Ts": Ts})


def write_scene(path, scene):
    """Write a scene as a whitespace table.

    One target per line: ``coord doppler amp_re amp_im on_grid``. The first
    line is a comment naming the model.
    """
    table = np.column_stack([scene.coord, scene.doppler, scene.amplitude.real,
                             scene.amplitude.imag, scene.on_grid.astype(int)])
    header = f"model={scene.model}\ncoord doppler amp_re amp_im on_grid"
    np.savetxt(path, table.reshape(-1, 5), fmt=["%.17g"] * 4 + ["%d"], header=header)


def read_scene(path):
    model = "lfmcw"
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") and "model=" in line:
                model = line.split("model=", 1)[1].strip()
                break
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # an empty scene is valid
        t = np.loadtxt(path, ndmin=2)
    if t.size == 0:
        t = np.zeros((0, 5))
    return Scene(t[:, 0], t[:, 1], t[:, 2] + 1j * t[:, 3], t[:, 4].astype(bool), model)
