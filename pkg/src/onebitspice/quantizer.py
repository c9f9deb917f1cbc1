"""One-bit comparators with known, time-varying thresholds.

Also holds the flat file formats for complex vectors shared by the
command line tools:

* CSV: one sample per line, ``re,im``;
* binary: little-endian IEEE-754 float64, interleaved
  ``re0 im0 re1 im1 ...`` with no header (numpy dtype ``<f8``).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Threshold",
    "SignedMeasurements",
    "signc",
    "eight_level_threshold",
    "pri_varying_threshold",
    "threshold_levels",
    "h_max_from_power",
    "write_complex",
    "read_complex",
]

N_LEVELS = 8


@dataclass(frozen=True)
class Threshold:
    """Comparator reference ``h``.

    ``scheme`` is ``"per_sample"`` or ``"per_pri"``; for the latter
    ``block`` holds the PRI length N1 and ``values`` is constant on every
    block of N1 consecutive samples.
    """

    values: np.ndarray
    scheme: str = "per_sample"
    block: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        object.__setattr__(self, "values", v)
        if self.scheme not in ("per_sample", "per_pri"):
            raise ValueError(f"unknown threshold scheme {self.scheme!r}")
        if self.scheme == "per_pri":
            if self.block < 1 or v.shape[0] % self.block:
                raise ValueError("per-PRI threshold length must be a multiple of the PRI length")
            blocks = v.reshape(-1, self.block)
            if np.any(blocks != blocks[:, :1]):
                raise ValueError("per-PRI threshold must be constant within each PRI")

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n, dtype=complex))


@dataclass(frozen=True)
class SignedMeasurements:
    """Complex sign pattern ``z`` with every entry in ``{+-1 +- 1j}``."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex).ravel()
        if not (np.all(np.abs(z.real) == 1) and np.all(np.abs(z.imag) == 1)):
            raise ValueError("signed measurements must have entries in {+-1 +- 1j}")
        object.__setattr__(self, "z", z)

    def __len__(self):
        return self.z.shape[0]


def _sign(x):
    return np.where(x >= 0, 1.0, -1.0)


def signc(y, h=None):
    """Complex one-bit quantizer ``sign(Re(y-h)) + j sign(Im(y-h))``.

    ``sign(0)`` is taken as +1.

    Parameters
    ----------
    y : array_like
        High-precision samples.
    h : Threshold or array_like, optional
        Threshold; zero when omitted.
    """
    y = np.asarray(y, dtype=complex).ravel()
    if h is None:
        hv = np.zeros_like(y)
    else:
        hv = h.values if isinstance(h, Threshold) else np.asarray(h, dtype=complex).ravel()
    if hv.shape != y.shape:
        raise ValueError(f"threshold length {hv.shape[0]} does not match data length {y.shape[0]}")
    d = y - hv
    return SignedMeasurements(_sign(d.real) + 1j * _sign(d.imag))


def threshold_levels(h_max):
    """The eight equally spaced levels ``-h_max + k*Delta``, ``Delta = 2 h_max / 7``."""
    if not h_max > 0:
        raise ValueError("h_max must be positive")
    delta = 2.0 * h_max / (N_LEVELS - 1)
    return -h_max + delta * np.arange(N_LEVELS)


def h_max_from_power(power):
    """``sqrt(power)/2``, with ``power`` the received signal-plus-noise power."""
    if not power > 0:
        raise ValueError("power must be positive")
    return float(np.sqrt(power)) / 2.0


def _draw(n, h_max, rng):
    levels = threshold_levels(h_max)
    re = levels[rng.integers(N_LEVELS, size=n)]
    im = levels[rng.integers(N_LEVELS, size=n)]
    return re + 1j * im


def eight_level_threshold(n, h_max, rng=None):
    """Per-sample threshold with independent uniform levels in Re and Im."""
    rng = np.random.default_rng(rng)
    return Threshold(_draw(n, h_max, rng), "per_sample")


def pri_varying_threshold(n1, n2, h_max, rng=None):
    """One eight-level draw per PRI, held for its ``n1`` samples."""
    if n1 < 1 or n2 < 1:
        raise ValueError("n1 and n2 must be positive")
    rng = np.random.default_rng(rng)
    return Threshold(np.repeat(_draw(n2, h_max, rng), n1), "per_pri", n1)


def write_complex(path, v, fmt=None):
    """Write a complex vector as CSV (``re,im`` per line) or raw ``<f8`` pairs.

    The format follows the file suffix (``.csv`` or anything else for
    binary) unless ``fmt`` is given.
    """
    path = Path(path)
    v = np.asarray(v, dtype=complex).ravel()
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")
    if fmt == "csv":
        np.savetxt(path, np.column_stack([v.real, v.imag]), delimiter=",", fmt="%.17g")
    elif fmt == "bin":
        np.column_stack([v.real, v.imag]).astype("<f8").tofile(path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_complex(path, fmt=None):
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")
    if fmt == "csv":
        a = np.loadtxt(path, delimiter=",", ndmin=2)
        if a.size == 0:
            return np.zeros(0, dtype=complex)
        if a.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (re,im)")
        return a[:, 0] + 1j * a[:, 1]
    if fmt == "bin":
        a = np.fromfile(path, dtype="<f8")
        if a.size % 2:
            raise ValueError(f"{path}: odd number of float64 values")
        return a[0::2] + 1j * a[1::2]
    raise ValueError(f"unknown format {fmt!r}")
