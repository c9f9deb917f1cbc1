"""Metrics, Monte Carlo harness and range-Doppler image export.

Target matching: every true target is assigned to its nearest grid cell
and its estimated amplitude is the largest ``|gamma|`` within +-1 cell
(circularly). NMSE and sidelobe power are computed from those matched
amplitudes.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import onebit
from .numerics import ConvergenceError
from .quantizer import eight_level_threshold, h_max_from_power, pri_varying_threshold, signc
from .waveforms import (add_noise, lfmcw_dictionary, lfmcw_benchmark_scene, mls_generate,
                        pmcw_dictionary, pmcw_benchmark_scene, synthesize_lfmcw, synthesize_pmcw)

__all__ = [
    "ALGORITHMS",
    "ScenarioConfig",
    "TrialResult",
    "Trial",
    "target_cells",
    "matched_amplitudes",
    "nmse",
    "sidelobe_power",
    "support_size",
    "power_spectrum",
    "two_peaks",
    "localization_hits",
    "simulate_trial",
    "run_algorithm",
    "monte_carlo",
    "write_results_csv",
    "export_rd_image",
    "read_rd_csv",
    "RESULT_COLUMNS",
]

ALGORITHMS = ("1bslim", "1bspice", "1blikes", "1biaa", "1bper")
RESULT_COLUMNS = ("algorithm", "snr_db", "n_runs", "nmse", "sidelobe_power", "mean_runtime_s", "mean_iters")
DB_FLOOR = -80.0


def canonical_algorithm(name):
    key = str(name).lower().replace("-", "").replace("_", "")
    if key in ("1bper", "per"):
        return "1bper"
    return onebit.canonical_variant(key)


@dataclass
class ScenarioConfig:
    """Everything needed to regenerate a Monte Carlo experiment.

    ``kr_factor``/``kd_factor`` set the grid sizes as multiples of N1 and
    N2. ``threshold`` is ``"per_sample"`` or ``"per_pri"``.
    ``power_scale`` multiplies the true signal-plus-noise power before it
    sets ``h_max`` (1.0 means an exact power estimate). ``solver="auto"``
    uses conjugate gradients for 1bSLIM and 1bSPICE and dense
    factorizations for the others.
    """

    model: str = "lfmcw"
    N1: int = 1024
    N2: int = 1
    kr_factor: int = 5
    kd_factor: int = 1
    snr_db: list = field(default_factory=lambda: [20.0])
    threshold: str = "per_sample"
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    epsilon: float = 1e-4
    rel_tol: float = 1e-3
    max_iter: int = 150
    solver: str = "auto"
    n_runs: int = 50
    seed: int = 0
    power_scale: float = 1.0
    Ts: float = 1.0

    def __post_init__(self):
        if self.model not in ("lfmcw", "pmcw"):
            raise ValueError(f"model must be 'lfmcw' or 'pmcw', got {self.model!r}")
        if self.threshold not in ("per_sample", "per_pri"):
            raise ValueError(f"unknown threshold scheme {self.threshold!r}")
        if self.solver not in ("auto", "dense", "cgls"):
            raise ValueError(f"unknown solver {self.solver!r}")
        for name in ("N1", "N2", "kr_factor", "kd_factor", "n_runs", "max_iter"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ValueError("seed must be an integer")
        self.snr_db = [float(s) for s in np.atleast_1d(self.snr_db)]
        self.algorithms = [canonical_algorithm(a) for a in self.algorithms]
        if not self.algorithms:
            raise ValueError("algorithm list is empty")
        if not (self.epsilon > 0 and self.rel_tol > 0 and self.power_scale > 0 and self.Ts > 0):
            raise ValueError("epsilon, rel_tol, power_scale and Ts must be positive")
        if self.model == "pmcw" and (self.N1 + 1) & self.N1:
            raise ValueError("PMCW code length N1 must be 2**r - 1")

    @property
    def Kr(self):
        return self.kr_factor * self.N1

    @property
    def Kd(self):
        return self.kd_factor * self.N2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def lfmcw_benchmark(cls, **kw):
        """Five-sinusoid range scene: N = 1024, M = 5N, per-sample threshold."""
        return cls(**{"model": "lfmcw", "N1": 1024, "N2": 1, "kr_factor": 5, "kd_factor": 1,
                      "threshold": "per_sample", **kw})

    @classmethod
    def pmcw_benchmark(cls, **kw):
        """30-target PMCW scene: 31-chip code, 64 PRIs, Kr = 4 N1, Kd = 5 N2."""
        return cls(**{"model": "pmcw", "N1": 31, "N2": 64, "kr_factor": 4, "kd_factor": 5,
                      "threshold": "per_pri", "snr_db": [15.0], **kw})


@dataclass
class Trial:
    """One simulated realization shared by every algorithm."""

    scene: object
    y: np.ndarray
    sigma2: float
    h: object
    z: object
    power: float
    seed: tuple


@dataclass
class TrialResult:
    algorithm: str
    snr_db: float
    seed: tuple
    estimates: np.ndarray
    power: np.ndarray
    runtime: float
    iterations: int
    truth_cells: np.ndarray
    truth_amplitudes: np.ndarray
    grid: tuple
    error: str = None
    support: np.ndarray = None


def _dictionary(cfg):
    if cfg.model == "lfmcw":
        return lfmcw_dictionary(cfg.N1, cfg.N2, cfg.Kr, cfg.Kd)
    return pmcw_dictionary(mls_generate(int(np.log2(cfg.N1 + 1))), cfg.N2, cfg.Kr, cfg.Kd, cfg.Ts)


def target_cells(scene, Kr, Kd, N1=None, Ts=1.0):
    """Continuous (range, Doppler) grid coordinates of each target."""
    if scene.model == "lfmcw":
        r = scene.coord / (2 * np.pi) * Kr
    else:
        r = scene.coord / (N1 * Ts / Kr)
    dd = scene.doppler / (2 * np.pi) * Kd
    return np.column_stack([r, dd])


def _nearest(cells, Kr, Kd):
    return np.column_stack([np.round(cells[:, 0]).astype(int) % Kr,
                            np.round(cells[:, 1]).astype(int) % Kd])


def _window(grid, cell, Kr, Kd):
    rr = (cell[0] + np.arange(-1, 2)) % Kr
    dd = (cell[1] + np.arange(-1, 2)) % Kd
    if Kd == 1:
        dd = np.array([0])
    if Kr == 1:
        rr = np.array([0])
    return grid[np.ix_(np.unique(rr), np.unique(dd))]


def matched_amplitudes(gamma, cells, Kr, Kd):
    """Largest ``|gamma|`` within +-1 cell of each target's nearest cell."""
    G = np.abs(np.asarray(gamma)).reshape((Kr, Kd), order="F")
    near = _nearest(np.atleast_2d(cells), Kr, Kd)
    return np.array([_window(G, c, Kr, Kd).max() for c in near])


def _check(trials):
    trials = [t for t in trials if t.error is None]
    if not trials:
        raise ValueError("no successful trials")
    return trials


def nmse(trials):
    """Mean over trials and targets of ``|a_hat - a|^2 / a^2`` (magnitudes)."""
    trials = _check(trials)
    errs = []
    for t in trials:
        a = np.abs(t.truth_amplitudes)
        ah = matched_amplitudes(t.estimates, t.truth_cells, *t.grid)
        errs.append(np.mean((ah - a) ** 2 / a ** 2))
    return float(np.mean(errs))


def sidelobe_power(trials):
    """Mean of ``||gamma_hat||^2 - sum_k a_hat_k^2``."""
    trials = _check(trials)
    vals = []
    for t in trials:
        ah = matched_amplitudes(t.estimates, t.truth_cells, *t.grid)
        vals.append(np.sum(np.abs(t.estimates) ** 2) - np.sum(ah ** 2))
    return float(np.mean(vals))


def support_size(beta, rel=1e-6):
    """Number of cells whose power ``|beta|^2`` exceeds ``rel`` times the peak."""
    a2 = np.abs(np.asarray(beta)) ** 2
    m = a2.max()
    return int(np.sum(a2 > rel * m)) if m > 0 else 0


def power_spectrum(state, variant, epsilon=1e-4):
    """Power per grid cell in data units.

    1bLIKES and 1bIAA carry a power estimate ``p`` (at their fixed point
    ``p`` is the squared amplitude seen through the adaptive filter), so
    ``p / eta^2`` is used. For 1bSLIM ``p - eps = |beta|^2`` and for
    1bSPICE ``p`` is not in power units; both use ``|gamma|^2``.
    """
    variant = onebit.canonical_variant(variant)
    if variant in ("1blikes", "1biaa") and state.eta > 0:
        return state.p / state.eta ** 2
    return np.abs(state.gamma) ** 2


def two_peaks(spectrum, t1, t2, window=2, valley_db=3.0):
    """True when the 1-D spectrum resolves two targets.

    Requires a local maximum of ``|spectrum|^2`` within ``window`` bins of
    each continuous target position ``t1 < t2``, and a dip between them at
    least ``valley_db`` below the smaller of the two peaks.
    """
    P = np.abs(np.asarray(spectrum)) ** 2
    n = P.shape[0]
    lo = max(int(np.floor(t1 - window)), 1)
    hi = min(int(np.ceil(t2 + window)), n - 2)
    loc = [k for k in range(lo, hi + 1) if P[k] > P[k - 1] and P[k] >= P[k + 1]]
    c1 = [k for k in loc if abs(k - t1) <= window]
    c2 = [k for k in loc if abs(k - t2) <= window]
    ratio = 10 ** (-valley_db / 10)
    for a in c1:
        for b in c2:
            if a < b and P[a:b + 1].min() <= ratio * min(P[a], P[b]):
                return True
    return False


def localization_hits(power, cells, amplitudes, Kr, Kd, tol_db=3.0):
    """Per-target flags for "found within +-1 cell with power within tol_db".

    A target counts when the 3x3 neighbourhood (circular) of its nearest
    cell contains a local maximum of the power map and the power summed
    over that neighbourhood is within ``tol_db`` of ``|amplitude|^2``.
    Summing keeps off-grid targets, whose energy straddles two cells,
    comparable with on-grid ones.
    """
    P = np.asarray(power, dtype=float).reshape((Kr, Kd), order="F")
    near = _nearest(np.atleast_2d(cells), Kr, Kd)
    hits = []
    for c, a in zip(near, np.abs(amplitudes) ** 2):
        rr = (c[0] + np.arange(-1, 2)) % Kr
        dd = (c[1] + np.arange(-1, 2)) % Kd
        has_max = False
        for i in rr:
            for j in dd:
                nb = P[np.ix_((i + np.arange(-1, 2)) % Kr, (j + np.arange(-1, 2)) % Kd)]
                if P[i, j] > 0 and P[i, j] >= nb.max():
                    has_max = True
        total = P[np.ix_(rr, dd)].sum()
        hits.append(bool(has_max and total > 0 and abs(10 * np.log10(total / a)) <= tol_db))
    return np.array(hits)


def _trial_seed(cfg, snr_idx, run_idx):
    return np.random.SeedSequence(cfg.seed, spawn_key=(snr_idx, run_idx))


def simulate_trial(cfg, snr_idx, run_idx):
    """Scene, noisy data, threshold and signs for one (SNR, run) pair."""
    ss = _trial_seed(cfg, snr_idx, run_idx)
    rng = np.random.default_rng(ss)
    snr = cfg.snr_db[snr_idx]
    if cfg.model == "lfmcw":
        if cfg.N2 != 1:
            raise ValueError("the LFMCW benchmark scene is one-dimensional (N2 = 1)")
        scene = lfmcw_benchmark_scene(rng, cfg.N1, cfg.kr_factor)
        y0 = synthesize_lfmcw(scene, cfg.N1, cfg.N2)
    else:
        scene = pmcw_benchmark_scene(rng, cfg.N1, cfg.N2, cfg.Kr, cfg.Kd, cfg.Ts)
        s = mls_generate(int(np.log2(cfg.N1 + 1)))
        y0 = synthesize_pmcw(scene, s, cfg.N2, cfg.Ts)
    y, sigma2 = add_noise(y0, snr, scene.signal_power, rng)
    power = (scene.signal_power + sigma2) * cfg.power_scale
    hm = h_max_from_power(power)
    if cfg.threshold == "per_sample":
        h = eight_level_threshold(y.shape[0], hm, rng)
    else:
        h = pri_varying_threshold(cfg.N1, cfg.N2, hm, rng)
    return Trial(scene, y, sigma2, h, signc(y, h), power, (cfg.seed, snr_idx, run_idx))


def _solver_for(cfg, alg):
    if cfg.solver == "auto":
        return "cgls" if alg in ("1bslim", "1bspice") else "dense"
    return cfg.solver


def run_algorithm(alg, trial, d, cfg, record_objective=False):
    """Run one estimator on a trial; returns ``(gamma, power, iters, seconds, state)``."""
    alg = canonical_algorithm(alg)
    t0 = time.perf_counter()
    if alg == "1bper":
        # plain matched filter of the signs, B^H z / ||b_k||^2, with no rescaling
        g = onebit.periodogram_surrogate(d, trial.z)
        return g, np.abs(g) ** 2, 0, time.perf_counter() - t0, None
    conf = onebit.OneBitConfig(variant=alg, epsilon=cfg.epsilon, rel_tol=cfg.rel_tol,
                               max_iter=cfg.max_iter, solver=_solver_for(cfg, alg),
                               record_objective=record_objective)
    st = onebit.run(trial.z, d, trial.h, conf)
    return st.gamma, power_spectrum(st, alg, cfg.epsilon), st.iter, time.perf_counter() - t0, st


def _one_trial(args):
    cfg, si, ri = args
    d = _dictionary(cfg)
    tr = simulate_trial(cfg, si, ri)
    cells = target_cells(tr.scene, cfg.Kr, cfg.Kd, cfg.N1, cfg.Ts)
    out = []
    for alg in cfg.algorithms:
        try:
            g, pw, iters, secs, st = run_algorithm(alg, tr, d, cfg)
            out.append(TrialResult(alg, cfg.snr_db[si], tr.seed, g, pw, secs, iters, cells,
                                   tr.scene.amplitude, (cfg.Kr, cfg.Kd),
                                   support=None if st is None else st.beta))
        except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
            out.append(TrialResult(alg, cfg.snr_db[si], tr.seed, None, None, 0.0, 0, cells,
                                   tr.scene.amplitude, (cfg.Kr, cfg.Kd), error=repr(exc)))
    return out


def monte_carlo(cfg, algorithms=None, n_runs=None, jobs=1):
    """Run every (SNR, run) trial and aggregate per (algorithm, SNR).

    Trial ``(i, r)`` draws everything from
    ``SeedSequence(cfg.seed, spawn_key=(i, r))`` so results do not depend
    on ``jobs`` or execution order. Failed trials are kept with their error
    message and excluded from the averages.

    Returns
    -------
    rows : list of dict
        One row per (algorithm, SNR) with the ``RESULT_COLUMNS`` keys.
    results : list of TrialResult
    """
    if algorithms is not None or n_runs is not None:
        d = cfg.to_dict()
        if algorithms is not None:
            d["algorithms"] = list(algorithms)
        if n_runs is not None:
            d["n_runs"] = n_runs
        cfg = ScenarioConfig.from_dict(d)
    tasks = [(cfg, si, ri) for si in range(len(cfg.snr_db)) for ri in range(cfg.n_runs)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_one_trial, tasks))
    else:
        chunks = [_one_trial(t) for t in tasks]
    results = [r for c in chunks for r in c]
    rows = []
    for alg in cfg.algorithms:
        for snr in cfg.snr_db:
            sel = [r for r in results if r.algorithm == alg and r.snr_db == snr]
            ok = [r for r in sel if r.error is None]
            rows.append({
                "algorithm": alg,
                "snr_db": snr,
                "n_runs": len(ok),
                "nmse": nmse(ok) if ok else float("nan"),
                "sidelobe_power": sidelobe_power(ok) if ok else float("nan"),
                "mean_runtime_s": float(np.mean([r.runtime for r in ok])) if ok else float("nan"),
                "mean_iters": float(np.mean([r.iterations for r in ok])) if ok else float("nan"),
            })
    return rows, results


def write_results_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in RESULT_COLUMNS})


def export_rd_image(values, Kr, Kd, path):
    """Write a range-Doppler magnitude map as a dB CSV grid and a PGM image.

    Parameters
    ----------
    values : array_like
        Length ``Kr*Kd`` magnitudes (or complex amplitudes), range fastest.
    path : str or Path
        Output prefix; ``<path>.csv`` holds ``Kd`` rows by ``Kr`` columns of
        ``20 log10|x|`` floored at -80 dB, and ``<path>.pgm`` is an 8-bit
        binary greyscale image mapping [-80, 0] dB linearly onto 0..255
        (values above 0 dB saturate).

    Returns
    -------
    (Path, Path)
    """
    v = np.abs(np.asarray(values)).ravel()
    if v.shape[0] != Kr * Kd:
        raise ValueError(f"expected {Kr * Kd} values, got {v.shape[0]}")
    with np.errstate(divide="ignore"):
        db = np.maximum(20 * np.log10(v), DB_FLOOR)
    grid = db.reshape(Kd, Kr)
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    pgm_path = path.with_suffix(".pgm")
    np.savetxt(csv_path, grid, delimiter=",", fmt="%.6f")
    img = np.round((np.clip(grid, DB_FLOOR, 0.0) - DB_FLOOR) / -DB_FLOOR * 255).astype(np.uint8)
    with open(pgm_path, "wb") as fh:
        fh.write(f"P5\n{Kr} {Kd}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return csv_path, pgm_path


def read_rd_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def dump_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
