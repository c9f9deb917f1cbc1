"""Command line entry point: ``onebitspice {simulate,quantize,estimate,bench}``.

Each subcommand has a JSON-serializable config dataclass. Values come from
the dataclass defaults, then an optional ``--config`` JSON file (unknown
keys are rejected), then explicit flags. The resolved config is written to
``<out>/<command>_config.json`` before any computation.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bench, onebit
from .numerics import ConvergenceError
from .quantizer import (Threshold, eight_level_threshold, h_max_from_power, pri_varying_threshold,
                        read_complex, signc, write_complex)
from .waveforms import (Scene, add_noise, lfmcw_dictionary, lfmcw_benchmark_scene, mls_generate,
                        pmcw_dictionary, pmcw_benchmark_scene, synthesize_lfmcw, synthesize_pmcw,
                        write_scene)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class SimulateConfig:
    model: str = "lfmcw"
    N1: int = 1024
    N2: int = 1
    kr_factor: int = 5
    kd_factor: int = 1
    snr_db: float = 20.0
    seed: int = 0
    n_targets: int = None  # None: the standard benchmark scene
    noise_var: float = 1.0  # used when the scene is empty
    Ts: float = 1.0
    format: str = "csv"
    out: str = "."


@dataclass
class QuantizeConfig:
    input: str = None
    scheme: str = "per_sample"  # zero, per_sample or per_pri
    N1: int = None  # PRI length for per_pri
    power: float = None  # defaults to the mean power of the input
    seed: int = 0
    format: str = "csv"
    out: str = "."


@dataclass
class EstimateConfig:
    z: str = None
    h: str = None
    model: str = "lfmcw"
    N1: int = None  # defaults to the data length (one PRI)
    N2: int = 1
    kr_factor: int = 5
    kd_factor: int = 1
    Ts: float = 1.0
    algorithm: str = "1bslim"
    epsilon: float = 1e-4
    rel_tol: float = 1e-3
    max_iter: int = 150
    solver: str = "dense"
    power: float = None  # signal+noise power, used to scale 1bPER
    image: bool = False
    out: str = "."


@dataclass
class BenchConfig:
    scenario: dict = field(default_factory=dict)
    jobs: int = 1
    images: bool = True
    out: str = "."


def _load_json(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _resolve(cls, args):
    """Defaults < config file < explicit flags."""
    data = {}
    if getattr(args, "config", None):
        data = _load_json(args.config)
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    return cls(**data)


def _echo(cfg, name):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}_config.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n")
    return out


def _ext(fmt):
    if fmt not in ("csv", "bin"):
        raise ConfigError(f"format must be 'csv' or 'bin', got {fmt!r}")
    return "." + fmt


def cmd_simulate(cfg):
    if cfg.model not in ("lfmcw", "pmcw"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.N1 < 1 or cfg.N2 < 1:
        raise ConfigError("N1 and N2 must be positive")
    ext = _ext(cfg.format)
    out = _echo(cfg, "simulate")
    rng = np.random.default_rng(cfg.seed)
    Kr, Kd = cfg.kr_factor * cfg.N1, cfg.kd_factor * cfg.N2
    if cfg.n_targets == 0:
        scene = Scene([], [], [], model=cfg.model)
    elif cfg.model == "lfmcw":
        if cfg.n_targets not in (None, 5) or cfg.N2 != 1:
            raise ConfigError("the LFMCW scene has five targets and N2 = 1")
        scene = lfmcw_benchmark_scene(rng, cfg.N1, cfg.kr_factor)
    else:
        n = 30 if cfg.n_targets is None else cfg.n_targets
        scene = pmcw_benchmark_scene(rng, cfg.N1, cfg.N2, Kr, Kd, cfg.Ts, n_targets=n,
                                 n_off_grid=min(4, n))
    if cfg.model == "lfmcw":
        y0 = synthesize_lfmcw(scene, cfg.N1, cfg.N2)
    else:
        y0 = synthesize_pmcw(scene, mls_generate(int(np.log2(cfg.N1 + 1))), cfg.N2, cfg.Ts)
    if len(scene):
        y, sigma2 = add_noise(y0, cfg.snr_db, scene.signal_power, rng)
    else:
        sigma2 = float(cfg.noise_var)
        y = np.sqrt(sigma2 / 2) * (rng.standard_normal(y0.shape) + 1j * rng.standard_normal(y0.shape))
    write_scene(out / "scene.txt", scene)
    write_complex(out / ("y" + ext), y)
    (out / "noise.json").write_text(json.dumps(
        {"sigma2": sigma2, "signal_power": scene.signal_power,
         "power": scene.signal_power + sigma2}, indent=2) + "\n")
    return EXIT_OK


def cmd_quantize(cfg):
    if not cfg.input:
        raise ConfigError("quantize needs an input file")
    ext = _ext(cfg.format)
    out = _echo(cfg, "quantize")
    try:
        y = read_complex(cfg.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(cfg.seed)
    power = cfg.power if cfg.power is not None else float(np.mean(np.abs(y) ** 2))
    if cfg.scheme == "zero":
        h = Threshold.zeros(y.shape[0])
    elif cfg.scheme == "per_sample":
        h = eight_level_threshold(y.shape[0], h_max_from_power(power), rng)
    elif cfg.scheme == "per_pri":
        if not cfg.N1 or y.shape[0] % cfg.N1:
            raise ConfigError("per_pri needs N1 dividing the data length")
        h = pri_varying_threshold(cfg.N1, y.shape[0] // cfg.N1, h_max_from_power(power), rng)
    else:
        raise ConfigError(f"unknown threshold scheme {cfg.scheme!r}")
    write_complex(out / ("z" + ext), signc(y, h).z)
    write_complex(out / ("h" + ext), h.values)
    return EXIT_OK


def _estimate_dictionary(cfg, n):
    N1 = cfg.N1 or n // cfg.N2
    if N1 * cfg.N2 != n:
        raise ConfigError(f"N1*N2 = {N1 * cfg.N2} does not match data length {n}")
    Kr, Kd = cfg.kr_factor * N1, cfg.kd_factor * cfg.N2
    if cfg.model == "lfmcw":
        return lfmcw_dictionary(N1, cfg.N2, Kr, Kd), Kr, Kd
    if cfg.model == "pmcw":
        if (N1 + 1) & N1:
            raise ConfigError("PMCW code length must be 2**r - 1")
        return pmcw_dictionary(mls_generate(int(np.log2(N1 + 1))), cfg.N2, Kr, Kd, cfg.Ts), Kr, Kd
    raise ConfigError(f"unknown model {cfg.model!r}")


def cmd_estimate(cfg):
    if not cfg.z:
        raise ConfigError("estimate needs signed data (--z)")
    try:
        alg = bench.canonical_algorithm(cfg.algorithm)
        z = read_complex(cfg.z)
        h = read_complex(cfg.h) if cfg.h else np.zeros_like(z)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    d, Kr, Kd = _estimate_dictionary(cfg, z.shape[0])
    out = _echo(cfg, "estimate")
    if alg == "1bper":
        g = onebit.periodogram_surrogate(d, z, h, cfg.power)
        state = onebit.OneBitState(g, np.abs(g) ** 2, 1.0)
    else:
        try:
            conf = onebit.OneBitConfig(variant=alg, epsilon=cfg.epsilon, rel_tol=cfg.rel_tol,
                                       max_iter=cfg.max_iter, solver=cfg.solver)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        state = onebit.run(z, d, h, conf)
    onebit.write_result_csv(out / "spectrum.csv", state, alg, d, cfg.epsilon)
    onebit.write_trace_csv(out / "trace.csv", state)
    if cfg.image:
        bench.export_rd_image(state.gamma, Kr, Kd, out / "image")
    return EXIT_OK


def cmd_bench(cfg):
    if "seed" not in cfg.scenario:
        raise ConfigError("bench configs must set scenario.seed")
    try:
        sc = bench.ScenarioConfig.from_dict(cfg.scenario)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg.scenario = sc.to_dict()
    out = _echo(cfg, "bench")
    rows, results = bench.monte_carlo(sc, jobs=cfg.jobs)
    bench.write_results_csv(out / "results.csv", rows)
    if cfg.images:
        for r in results:
            if r.seed[2] == 0 and r.error is None:
                name = f"rd_{r.algorithm}_snr{r.snr_db:g}"
                bench.export_rd_image(np.sqrt(r.power), sc.Kr, sc.Kd, out / name)
    failed = [r for r in results if r.error is not None]
    for r in failed:
        print(f"trial {r.seed} {r.algorithm}: {r.error}", file=sys.stderr)
    return EXIT_OK


def _parser():
    p = argparse.ArgumentParser(prog="onebitspice", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a scene and high-precision data")
    s.add_argument("--config")
    s.add_argument("--model", choices=("lfmcw", "pmcw"))
    s.add_argument("--N1", type=int)
    s.add_argument("--N2", type=int)
    s.add_argument("--kr-factor", dest="kr_factor", type=int)
    s.add_argument("--kd-factor", dest="kd_factor", type=int)
    s.add_argument("--snr-db", dest="snr_db", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-targets", dest="n_targets", type=int)
    s.add_argument("--noise-var", dest="noise_var", type=float)
    s.add_argument("--Ts", type=float)
    s.add_argument("--format", choices=("csv", "bin"))
    s.add_argument("--out")

    q = sub.add_parser("quantize", help="one-bit quantize data against a threshold")
    q.add_argument("--config")
    q.add_argument("--input")
    q.add_argument("--scheme", choices=("zero", "per_sample", "per_pri"))
    q.add_argument("--N1", type=int)
    q.add_argument("--power", type=float)
    q.add_argument("--seed", type=int)
    q.add_argument("--format", choices=("csv", "bin"))
    q.add_argument("--out")

    e = sub.add_parser("estimate", help="run a one-bit estimator")
    e.add_argument("--config")
    e.add_argument("--z")
    e.add_argument("--h")
    e.add_argument("--model", choices=("lfmcw", "pmcw"))
    e.add_argument("--N1", type=int)
    e.add_argument("--N2", type=int)
    e.add_argument("--kr-factor", dest="kr_factor", type=int)
    e.add_argument("--kd-factor", dest="kd_factor", type=int)
    e.add_argument("--Ts", type=float)
    e.add_argument("--algorithm", choices=("1bslim", "1bspice", "1blikes", "1biaa", "1bper"),
                   type=str.lower)
    e.add_argument("--epsilon", type=float)
    e.add_argument("--rel-tol", dest="rel_tol", type=float)
    e.add_argument("--max-iter", dest="max_iter", type=int)
    e.add_argument("--solver", choices=("dense", "cgls"))
    e.add_argument("--power", type=float)
    e.add_argument("--image", action="store_const", const=True)
    e.add_argument("--out")

    b = sub.add_parser("bench", help="Monte Carlo experiment")
    b.add_argument("--config")
    b.add_argument("--jobs", type=int)
    b.add_argument("--n-runs", dest="n_runs", type=int)
    b.add_argument("--max-iter", dest="max_iter", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--snr-db", dest="snr_db", type=float, nargs="+")
    b.add_argument("--algorithms", nargs="+")
    b.add_argument("--no-images", dest="images", action="store_const", const=False)
    b.add_argument("--out")
    return p


def _bench_config(args):
    data = _load_json(args.config) if args.config else {}
    unknown = set(data) - {f.name for f in fields(BenchConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    scen = dict(data.get("scenario", {}))
    for name in ("n_runs", "max_iter", "seed", "snr_db", "algorithms"):
        v = getattr(args, name)
        if v is not None:
            scen[name] = v
    data["scenario"] = scen
    for name in ("jobs", "images", "out"):
        v = getattr(args, name)
        if v is not None:
            data[name] = v
    return BenchConfig(**data)


_COMMANDS = {
    "simulate": (SimulateConfig, cmd_simulate),
    "quantize": (QuantizeConfig, cmd_quantize),
    "estimate": (EstimateConfig, cmd_estimate),
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "bench":
            cfg = _bench_config(args)
            return cmd_bench(cfg)
        cls, fn = _COMMANDS[args.command]
        return fn(_resolve(cls, args))
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
