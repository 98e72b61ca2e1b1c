"""Batch driver: config parsing, cached Lanczos runs, temperature sweeps,
CSV output and critical-temperature analysis.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 cache mismatch.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import hashlib
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import lanczos, models, oracle, thermal
from .lanczos import LanczosConfig, NumericalError
from .models import ModelSpec
from .thermal import BetaGrid

CACHE_VERSION = 1

BASE_COLUMNS = ["model", "L", "param", "T", "logZ", "energy_density", "s", "c", "F_T", "D_T"]
KNOWN_OUTPUTS = ("s", "c", "F_T", "D_T", "Czz")


class ConfigError(ValueError):
    """Invalid configuration file or flag combination."""


class CacheMismatchError(RuntimeError):
    """Cached run does not match the requested configuration."""


class PeakOnBoundaryError(ValueError):
    """The discrete extremum sits on the grid boundary; no refinement possible."""

    def __init__(self, location):
        super().__init__(f"extremum on grid boundary at T={location}")
        self.location = location


@dataclass(frozen=True)
class PeakEstimate:
    """Refined extremum location with an uncertainty."""

    location: float
    uncertainty: float
    value: float


@dataclass(frozen=True)
class TcEstimate:
    """Extrapolated critical temperature; uncertainty is the change when the
    third-largest size is added to the fit (nan if only two sizes exist)."""

    t_c: float
    uncertainty: float


@dataclass
class RunStats:
    """Counts of Lanczos executions performed during a sweep."""

    identity_runs: int = 0
    projector_runs: int = 0
    cache_hits: int = 0

    def merge(self, other):
        self.identity_runs += other.identity_runs
        self.projector_runs += other.projector_runs
        self.cache_hits += other.cache_hits


@dataclass(frozen=True)
class RunConfig:
    family: str
    lengths: tuple
    j_coupling: float = 0.0
    g_field: float = 0.0
    h_fields: tuple = ()
    tmin: float = 0.1
    tmax: float = 1.0
    tstep: float = 0.1
    delta_t: float = None
    k_max: int = 70
    d_max: int = 60
    breakdown_tol: float = 1e-12
    reorthogonalize: bool = False
    outputs: tuple = ("s", "c", "F_T", "D_T")
    czz_pairs: tuple = ()
    czz_symmetry: str = "none"
    out_path: str = None
    cache_dir: str = None
    workers: int = 1

    def validate(self):
        if self.family not in ("ising", "lmg"):
            raise ConfigError(f"model.family must be ising or lmg, got {self.family!r}")
        if not self.lengths:
            raise ConfigError("model.L must list at least one system size")
        if any(length < 2 for length in self.lengths):
            raise ConfigError("system sizes must be >= 2")
        if self.family == "lmg" and not self.h_fields:
            raise ConfigError("model.h must list at least one field value for lmg")
        if not (self.tmin > 0 and self.tmax >= self.tmin and self.tstep > 0):
            raise ConfigError("grid requires 0 < tmin <= tmax and tstep > 0")
        if self.delta_t is not None and not self.delta_t > 0:
            raise ConfigError("grid.delta_t must be positive")
        if self.k_max < 1 or self.d_max < 1:
            raise ConfigError("lanczos.kmax and lanczos.dmax must be >= 1")
        if not 0.0 < self.breakdown_tol < 1.0:
            raise ConfigError("lanczos.breakdown_tol must lie in (0, 1)")
        if not self.outputs:
            raise ConfigError("output.quantities must not be empty")
        unknown = [o for o in self.outputs if o not in KNOWN_OUTPUTS]
        if unknown:
            raise ConfigError(f"unknown output quantities: {unknown}")
        if "Czz" in self.outputs and not self.czz_pairs:
            raise ConfigError("Czz requested but no site pairs given")
        if self.czz_symmetry not in ("none", "spin-flip"):
            raise ConfigError("czz_symmetry must be none or spin-flip")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def model_specs(self):
        specs = []
        for length in sorted(self.lengths):
            if self.family == "ising":
                specs.append(ModelSpec("ising", length,
                                       j_coupling=self.j_coupling, g_field=self.g_field))
            else:
                for h in self.h_fields:
                    specs.append(ModelSpec("lmg", length, h_field=h))
        return specs

    def temperatures(self):
        n = int(math.floor((self.tmax - self.tmin) / self.tstep + 1e-9)) + 1
        return np.array([self.tmin + k * self.tstep for k in range(n)])

    def effective_delta_t(self):
        if self.delta_t is not None:
            return self.delta_t
        return self.tstep


# ---------------------------------------------------------------------------
# configuration file + flags

_CONFIG_SCHEMA = {
    "model": {"family", "l", "j", "g", "h"},
    "grid": {"tmin", "tmax", "tstep", "delta_t"},
    "lanczos": {"kmax", "dmax", "breakdown_tol", "reorthogonalize"},
    "output": {"quantities", "czz", "czz_symmetry", "path", "cache", "workers"},
}


def _parse_floats(text, what):
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse {text!r} as float list") from exc


def _parse_ints(text, what):
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse {text!r} as integer list") from exc


def _parse_pairs(text, what):
    pairs = []
    for token in str(text).split(","):
        token = token.strip()
        if not token:
            continue
        bits = token.split(":")
        if len(bits) != 2:
            raise ConfigError(f"{what}: expected i:j pairs, got {token!r}")
        try:
            pairs.append((int(bits[0]), int(bits[1])))
        except ValueError as exc:
            raise ConfigError(f"{what}: cannot parse pair {token!r}") from exc
    return tuple(pairs)


def _parse_bool(text, what):
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{what}: cannot parse {text!r} as boolean")


def parse_config_file(path):
    """Read the INI-style run configuration into a plain dict of settings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    settings = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _CONFIG_SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in _CONFIG_SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            settings[f"{sec}.{key}"] = value
    return settings


def build_run_config(settings, args=None):
    """Merge file settings and CLI flags (flags win) into a RunConfig."""

    def flag(name):
        return getattr(args, name, None) if args is not None else None

    def pick(setting_key, flag_name):
        value = flag(flag_name)
        if value is not None:
            return value
        return settings.get(setting_key)

    family = pick("model.family", "model")
    if family is None:
        raise ConfigError("model.family is required (use --model or a config file)")
    lengths_raw = pick("model.l", "L")
    if lengths_raw is None:
        raise ConfigError("model.L is required")
    lengths = _parse_ints(lengths_raw, "model.L")
    h_raw = pick("model.h", "h")
    cfg = RunConfig(
        family=str(family).lower(),
        lengths=lengths,
        j_coupling=float(pick("model.j", "J") or 0.0),
        g_field=float(pick("model.g", "g") or 0.0),
        h_fields=_parse_floats(h_raw, "model.h") if h_raw is not None else (),
        tmin=float(pick("grid.tmin", "tmin") or 0.1),
        tmax=float(pick("grid.tmax", "tmax") or 1.0),
        tstep=float(pick("grid.tstep", "tstep") or 0.1),
        delta_t=(float(pick("grid.delta_t", "delta_t"))
                 if pick("grid.delta_t", "delta_t") is not None else None),
        k_max=int(pick("lanczos.kmax", "kmax") or 70),
        d_max=int(pick("lanczos.dmax", "dmax") or 60),
        breakdown_tol=float(pick("lanczos.breakdown_tol", "breakdown_tol") or 1e-12),
        reorthogonalize=(_parse_bool(pick("lanczos.reorthogonalize", "reorthogonalize"),
                                     "lanczos.reorthogonalize")
                         if pick("lanczos.reorthogonalize", "reorthogonalize") is not None
                         else False),
        outputs=(tuple(str(pick("output.quantities", "outputs")).split(","))
                 if pick("output.quantities", "outputs") is not None
                 else ("s", "c", "F_T", "D_T")),
        czz_pairs=_parse_pairs(pick("output.czz", "czz") or "", "output.czz"),
        czz_symmetry=str(pick("output.czz_symmetry", "czz_symmetry") or "none"),
        out_path=pick("output.path", "out"),
        cache_dir=pick("output.cache", "cache"),
        workers=int(pick("output.workers", "workers") or 1),
    )
    cfg = replace(cfg, outputs=tuple(o.strip() for o in cfg.outputs if o.strip()))
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# cached Lanczos execution

def _cache_key(model_label, start_label, lcfg):
    return (f"v{CACHE_VERSION}|{model_label}|start={start_label}"
            f"|kmax={lcfg.k_max}|dmax={lcfg.d_max}"
            f"|tol={lcfg.breakdown_tol!r}|reorth={int(lcfg.reorthogonalize)}")


def _cache_path(cache_dir, key):
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:32]
    return os.path.join(cache_dir, f"{digest}.lrun")


def _load_cached(path, key):
    try:
        run, header = lanczos.load_run(path)
    except ValueError as exc:
        raise CacheMismatchError(f"{path}: {exc}") from exc
    if header.get("cache_version") != CACHE_VERSION:
        raise CacheMismatchError(
            f"{path}: cache version {header.get('cache_version')} != {CACHE_VERSION}")
    if header.get("cache_key") != key:
        raise CacheMismatchError(f"{path}: cached key does not match request")
    return run


def _make_runner(cache_dir, stats):
    """Wrap run_lanczos with execution counters and an optional run cache."""

    def runner(h, start, lcfg, model_label=""):
        key = _cache_key(model_label, start.label, lcfg)
        if cache_dir:
            path = _cache_path(cache_dir, key)
            if os.path.exists(path):
                run = _load_cached(path, key)
                stats.cache_hits += 1
                return run
        run = lanczos.run_lanczos(h, start, lcfg, model_label)
        if start.label == "identity":
            stats.identity_runs += 1
        else:
            stats.projector_runs += 1
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)
            path = _cache_path(cache_dir, key)
            tmp = f"{path}.tmp.{os.getpid()}"
            lanczos.save_run(run, tmp,
                             extra_header={"cache_version": CACHE_VERSION, "cache_key": key})
            os.replace(tmp, path)
        return run

    return runner


def _combo_job(payload):
    """Compute one (model, L, param) sweep point; used by the worker pool."""
    spec, cfg = payload
    stats = RunStats()
    runner = _make_runner(cfg.cache_dir, stats)
    lcfg = LanczosConfig(cfg.k_max, cfg.d_max, cfg.breakdown_tol, cfg.reorthogonalize)
    h = spec.build()
    z_run = runner(h, models.identity_block(spec.length), lcfg, spec.label())
    temps = cfg.temperatures()
    grid = BetaGrid.from_temperatures(temps, cfg.effective_delta_t())
    result = thermal.sweep_observables(z_run, grid, spec.length)
    if "Czz" in cfg.outputs:
        betas = 1.0 / temps
        for (i, j) in cfg.czz_pairs:
            result.czz[(i, j)] = thermal.correlation_zz(
                h, i, j, betas, lcfg, symmetry=cfg.czz_symmetry,
                z_run=z_run, model_label=spec.label(), runner=runner)
    result.check_bounds()
    return spec, result, stats


@dataclass
class SweepOutcome:
    results: list  # [(ModelSpec, ThermalSweepResult)]
    stats: RunStats
    csv_path: str = None


def run_sweep(cfg):
    """Execute all sweep points of a configuration and write the CSV.

    Exactly one identity-start Lanczos execution happens per sweep point,
    shared across the whole temperature grid and every requested observable;
    projector-start runs are added only for correlators.
    """
    cfg.validate()
    specs = cfg.model_specs()
    payloads = [(spec, cfg) for spec in specs]
    stats = RunStats()
    results = []
    if cfg.workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for spec, result, job_stats in pool.map(_combo_job, payloads):
                results.append((spec, result))
                stats.merge(job_stats)
    else:
        for payload in payloads:
            spec, result, job_stats = _combo_job(payload)
            results.append((spec, result))
            stats.merge(job_stats)
    results.sort(key=lambda item: (item[0].length, item[0].param_text()))
    outcome = SweepOutcome(results, stats)
    if cfg.out_path:
        write_sweep_csv(cfg.out_path, results, cfg.czz_pairs if "Czz" in cfg.outputs else ())
        outcome.csv_path = cfg.out_path
    return outcome


def _fmt(x):
    return format(float(x), ".17g")


def write_sweep_csv(path, results, czz_pairs=()):
    """Write sweep rows atomically (temp file + rename); 17 significant digits."""
    columns = BASE_COLUMNS + [f"Czz_{i}_{j}" for (i, j) in czz_pairs]
    lines = [",".join(columns)]
    for spec, result in results:
        for idx, t in enumerate(result.temperatures):
            row = [
                spec.family,
                str(spec.length),
                spec.param_text(),
                _fmt(t),
                _fmt(result.log_z[idx]),
                _fmt(result.energy_density[idx]),
                _fmt(result.entropy[idx]),
                _fmt(result.heat_capacity[idx]),
                _fmt(result.fidelity[idx]),
                _fmt(result.trace_distance[idx]),
            ]
            for pair in czz_pairs:
                row.append(_fmt(result.czz[pair][idx]))
            lines.append(",".join(row))
    payload = "\n".join(lines) + "\n"
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# peak finding and critical-temperature extrapolation

def find_peak(ts, values, kind="max"):
    """Discrete extremum refined by a quadratic fit through its neighbors.

    Uncertainty is the larger of half the local grid step and the shift the
    fit applied to the discrete extremum.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.size != values.size or ts.size < 3:
        raise ValueError("need at least 3 (T, value) points")
    if kind not in ("max", "min"):
        raise ValueError("kind must be 'max' or 'min'")
    idx = int(np.argmax(values) if kind == "max" else np.argmin(values))
    if idx == 0 or idx == ts.size - 1:
        raise PeakOnBoundaryError(float(ts[idx]))
    t3 = ts[idx - 1: idx + 2]
    v3 = values[idx - 1: idx + 2]
    a, b, c = np.polyfit(t3, v3, 2)
    if a == 0.0:
        vertex = float(ts[idx])
    else:
        vertex = float(-b / (2.0 * a))
    if not t3[0] <= vertex <= t3[2]:
        vertex = float(ts[idx])
    half_step = 0.5 * float(t3[2] - t3[0]) / 2.0
    unc = max(half_step, abs(vertex - float(ts[idx])))
    height = float(np.polyval([a, b, c], vertex))
    return PeakEstimate(vertex, unc, height)


def extrapolate_tc(sizes, peaks):
    """Linear fit of peak locations against 1/L through the two largest sizes.

    The uncertainty is the difference to the same fit including the
    third-largest size, when available.
    """
    pts = sorted(zip(sizes, peaks), key=lambda p: -p[0])
    if len(pts) < 2:
        raise ValueError("need at least two system sizes")

    def fit(points):
        x = np.array([1.0 / length for length, _ in points])
        y = np.array([peak for _, peak in points])
        slope, intercept = np.polyfit(x, y, 1)
        return float(intercept)

    t_c = fit(pts[:2])
    unc = abs(t_c - fit(pts[:3])) if len(pts) >= 3 else float("nan")
    return TcEstimate(t_c, unc)


def exact_tc(h):
    """Closed-form critical temperature h / (2 atanh h) of the LMG model."""
    if not 0.0 < h < 1.0:
        raise ValueError("the thermal transition exists only for 0 < h < 1")
    return h / (2.0 * math.atanh(h))


# ---------------------------------------------------------------------------
# subcommands

def _cmd_sweep(args):
    settings = parse_config_file(args.config) if args.config else {}
    cfg = build_run_config(settings, args)
    if cfg.out_path is None:
        raise ConfigError("an output path is required (--out or output.path)")
    outcome = run_sweep(cfg)
    rows = sum(len(result.temperatures) for _, result in outcome.results)
    print(f"wrote {rows} rows to {outcome.csv_path}")
    print(f"lanczos executions: identity={outcome.stats.identity_runs} "
          f"projector={outcome.stats.projector_runs} cache_hits={outcome.stats.cache_hits}")
    return 0


def _cmd_exact(args):
    settings = parse_config_file(args.config) if args.config else {}
    cfg = build_run_config(settings, args)
    if cfg.out_path is None:
        raise ConfigError("an output path is required (--out or output.path)")
    temps = cfg.temperatures()
    grid = BetaGrid.from_temperatures(temps, cfg.effective_delta_t())
    pairs = cfg.czz_pairs if "Czz" in cfg.outputs else ()
    results = []
    for spec in cfg.model_specs():
        spectrum = oracle.exact_spectrum(spec.build(), guard=args.guard)
        results.append((spec, oracle.exact_observables(spectrum, grid, pairs)))
    results.sort(key=lambda item: (item[0].length, item[0].param_text()))
    write_sweep_csv(cfg.out_path, results, pairs)
    rows = sum(len(result.temperatures) for _, result in results)
    print(f"wrote {rows} oracle rows to {cfg.out_path}")
    return 0


def _read_series(paths, observable):
    """Collect (model,param) -> {L: (T array, value array)} from sweep CSVs."""
    groups = {}
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or observable not in reader.fieldnames:
                raise ConfigError(f"{path}: no column {observable!r}")
            for row in reader:
                key = (row["model"], row["param"])
                length = int(row["L"])
                bucket = groups.setdefault(key, {}).setdefault(length, [])
                bucket.append((float(row["T"]), float(row[observable])))
    for key in groups:
        for length in groups[key]:
            pts = sorted(groups[key][length])
            groups[key][length] = (np.array([p[0] for p in pts]),
                                   np.array([p[1] for p in pts]))
    return groups


def _cmd_tc(args):
    kind = "min" if args.observable == "F_T" else "max"
    groups = _read_series(args.csv, args.observable)
    status = 0
    for (model, param), by_length in sorted(groups.items()):
        print(f"# {model} {param}, observable {args.observable}")
        sizes, peaks = [], []
        for length in sorted(by_length):
            ts, vals = by_length[length]
            try:
                peak = find_peak(ts, vals, kind=kind)
            except PeakOnBoundaryError as exc:
                print(f"L={length}: extremum on grid boundary at T={exc.location}; skipped")
                continue
            print(f"L={length}: T_peak={peak.location:.6f} +- {peak.uncertainty:.6f}")
            sizes.append(length)
            peaks.append(peak.location)
        if len(sizes) < 2:
            print("not enough interior peaks to extrapolate")
            status = 3
            continue
        est = extrapolate_tc(sizes, peaks)
        print(f"extrapolated T_c = {est.t_c:.6f} +- {est.uncertainty:.6f}")
        if model == "lmg" and param.startswith("h="):
            h = float(param[2:])
            if 0.0 < h < 1.0:
                print(f"closed-form T_c(h={h}) = {exact_tc(h):.6f}")
    return status


def _cmd_inspect_run(args):
    run, header = lanczos.load_run(args.path)
    print(f"model: {run.model_label or '(unlabeled)'}")
    print(f"start: {run.start_label or '(unlabeled)'}")
    print(f"termination: {run.projection.termination} after k={run.projection.k}")
    print(f"beta1: {_fmt(run.projection.beta1)}")
    for name, arr in (("alphas", run.projection.alphas),
                      ("betas", run.projection.betas),
                      ("nodes", run.quadrature.nodes),
                      ("weights", run.quadrature.weights),
                      ("compression", run.compression_log)):
        print(f"{name}: " + " ".join(_fmt(x) for x in arr))
    extras = {k: v for k, v in header.items()
              if k not in ("format_version", "model_label", "start_label",
                           "termination", "k")}
    if extras:
        print(f"header: {extras}")
    return 0


def _add_sweep_flags(sub):
    sub.add_argument("--config", help="INI config file; flags override its values")
    sub.add_argument("--model", choices=["ising", "lmg"], help="model family")
    sub.add_argument("--L", help="comma-separated system sizes")
    sub.add_argument("--J", type=float, help="Ising coupling")
    sub.add_argument("--g", type=float, help="Ising transverse field")
    sub.add_argument("--h", help="comma-separated LMG fields")
    sub.add_argument("--tmin", type=float)
    sub.add_argument("--tmax", type=float)
    sub.add_argument("--tstep", type=float)
    sub.add_argument("--delta-t", dest="delta_t", type=float,
                     help="temperature offset for F_T/D_T (default: tstep)")
    sub.add_argument("--kmax", type=int, help="maximal Krylov dimension")
    sub.add_argument("--dmax", type=int, help="maximal bond dimension")
    sub.add_argument("--breakdown-tol", dest="breakdown_tol", type=float)
    sub.add_argument("--reorthogonalize", dest="reorthogonalize",
                     action="store_const", const="true")
    sub.add_argument("--outputs", help="comma list from s,c,F_T,D_T,Czz")
    sub.add_argument("--czz", help="comma list of site pairs i:j")
    sub.add_argument("--czz-symmetry", dest="czz_symmetry", choices=["none", "spin-flip"])
    sub.add_argument("--out", help="CSV output path")
    sub.add_argument("--cache", help="directory for cached Lanczos runs")
    sub.add_argument("--workers", type=int, help="parallel sweep-point workers")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mpotrace",
        description="Thermal observables of spin chains via MPO Lanczos quadrature",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sweep = subs.add_parser("sweep", help="run a temperature sweep and write CSV")
    _add_sweep_flags(sweep)
    sweep.set_defaults(handler=_cmd_sweep)

    exact = subs.add_parser("exact", help="dense-oracle sweep for small systems")
    _add_sweep_flags(exact)
    exact.add_argument("--guard", type=int, default=oracle.SPECTRUM_GUARD,
                       help="max L for the dense eigensolve")
    exact.set_defaults(handler=_cmd_exact)

    tc = subs.add_parser("tc", help="peak finding + finite-size extrapolation")
    tc.add_argument("csv", nargs="+", help="sweep CSV files")
    tc.add_argument("--observable", default="c", choices=["s", "c", "F_T", "D_T"])
    tc.set_defaults(handler=_cmd_tc)

    inspect = subs.add_parser("inspect-run", help="dump a cached Lanczos run")
    inspect.add_argument("path", help="path to a .lrun file")
    inspect.set_defaults(handler=_cmd_inspect_run)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CacheMismatchError as exc:
        print(f"cache mismatch: {exc}", file=sys.stderr)
        return 4
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
