"""Study harness: convergence, moment, chaos, and corruption experiments.

Every command maps a StudyConfig to a list of ResultRows, sorted canonically
before CSV assembly so the output bytes never depend on the thread count.
Grid cells are pure functions of the config and seed; a worker pool only
changes when they are computed, not what they compute.
"""
from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .brownian import BrownianDriver
from .model import AssumptionReport, ModelSpec, check_assumptions, make_model, max_step
from .schemes import SchemeConfig
from .simulator import BlowupError, RunOutput, SimConfig, mean_square_distance, rmse, run

__all__ = [
    "StudyConfig",
    "ResultRow",
    "ConfigError",
    "CSV_HEADER",
    "converge_cmd",
    "moments_cmd",
    "chaos_cmd",
    "corrupt_cmd",
    "validate_cmd",
    "fit_rate",
    "write_csv",
    "read_csv",
    "load_config",
    "parse_config_file",
    "sort_rows",
]

CSV_HEADER = ("experiment", "model", "scheme", "h", "N", "T", "seed", "metric", "value")


class ConfigError(ValueError):
    """Bad usage or configuration; maps to exit code 1 at the CLI."""


@dataclass(frozen=True)
class StudyConfig:
    """Knobs shared by the experiment commands.

    Defaults are desk scale: minutes of runtime on one machine. schemes=None
    lets each command pick its natural set (converge/moments: pem+bem,
    chaos: pem, corrupt: em+pem+bem).
    """

    model: str = "example-4.1"
    schemes: Optional[tuple[str, ...]] = None
    h_values: tuple[float, ...] = (2**-10, 2**-9, 2**-8, 2**-7, 2**-6)
    h_ref: float = 2**-13
    T: float = 4.0
    N: int = 500
    seed: int = 20240819
    replicas: int = 1
    threads: int = 1
    out: Optional[str] = None
    allow_unsafe_h: bool = False
    x0: Optional[float] = None
    n_values: tuple[int, ...] = (32, 64, 128, 256, 512)
    n_max: int = 2048
    moment_orders: tuple[int, ...] = (2, 4)
    record_stride: int = 64
    samples: int = 10_000

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ConfigError(f"need N >= 1, got {self.N}")
        if self.replicas < 1:
            raise ConfigError(f"need replicas >= 1, got {self.replicas}")
        if self.threads < 1:
            raise ConfigError(f"need threads >= 1, got {self.threads}")
        if not self.h_values:
            raise ConfigError("need at least one step size h")


@dataclass(frozen=True)
class ResultRow:
    """One cell of study output; exactly the CSV schema."""

    experiment: str
    model: str
    scheme: str
    h: float
    N: int
    T: float
    seed: int
    metric: str
    value: float


def sort_rows(rows: list[ResultRow]) -> list[ResultRow]:
    """Canonical order, so parallel assembly always writes identical bytes."""
    return sorted(rows, key=lambda r: (r.experiment, r.model, r.scheme, r.h,
                                       r.N, r.T, r.seed, r.metric))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(rows: list[ResultRow], path) -> None:
    """Write rows under the canonical header, 17 significant digits, LF endings."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.experiment, r.model, r.scheme, _fmt(r.h), str(r.N),
                        _fmt(r.T), str(r.seed), r.metric, _fmt(r.value)])


def read_csv(path) -> list[ResultRow]:
    """Parse a harness CSV back into rows (inverse of write_csv)."""
    rows: list[ResultRow] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ConfigError(f"{path}: missing or wrong CSV header")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ConfigError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            try:
                rows.append(ResultRow(rec[0], rec[1], rec[2], float(rec[3]), int(rec[4]),
                                      float(rec[5]), int(rec[6]), rec[7], float(rec[8])))
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: {err}") from None
    return rows


def fit_rate(points) -> tuple[float, float]:
    """Ordinary least-squares slope and intercept through (log2 h, log2 rmse)."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 2:
        raise ValueError(f"rate fit needs at least 2 points, got {len(pts)}")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if float(xs.max() - xs.min()) == 0.0:
        raise ValueError("rate fit needs distinct abscissae")
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept)


# -- config files -------------------------------------------------------------

_LIST_KEYS = {"scheme", "h", "n-list", "orders"}
_BOOL_KEYS = {"allow-unsafe-h"}


def _parse_number(text: str, key: str, lineno: int):
    """Floats, plus 2^-k / 2**-k shorthand for dyadic grids."""
    t = text.strip()
    for sep in ("^", "**"):
        if t.startswith("2" + sep):
            try:
                return float(2.0 ** float(t[1 + len(sep):]))
            except ValueError:
                break
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"line {lineno}: key {key!r} has non-numeric value {text!r}") from None


def parse_config_file(path) -> dict:
    """`key = value` lines with # comments; returns raw typed values by key."""
    known_scalar = {"model": str, "n": int, "t": float, "href": float, "seed": int,
                    "replicas": int, "threads": int, "out": str, "x0": float,
                    "n-max": int, "stride": int, "samples": int}
    values: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        if not val:
            raise ConfigError(f"line {lineno}: key {key!r} has no value")
        if key in _BOOL_KEYS:
            low = val.lower()
            if low in ("1", "true", "yes", "on"):
                values[key] = True
            elif low in ("0", "false", "no", "off"):
                values[key] = False
            else:
                raise ConfigError(f"line {lineno}: key {key!r} wants a boolean, got {val!r}")
        elif key in _LIST_KEYS:
            parts = [p for chunk in val.split(",") for p in chunk.split()] if val else []
            if key == "scheme":
                values[key] = tuple(p.lower() for p in parts)
            elif key == "orders" or key == "n-list":
                values[key] = tuple(int(_parse_number(p, key, lineno)) for p in parts)
            else:
                values[key] = tuple(_parse_number(p, key, lineno) for p in parts)
        elif key in known_scalar:
            typ = known_scalar[key]
            if typ is str:
                values[key] = val
            elif typ is int:
                values[key] = int(_parse_number(val, key, lineno))
            else:
                values[key] = float(_parse_number(val, key, lineno))
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return values


_KEY_TO_FIELD = {
    "model": "model", "scheme": "schemes", "h": "h_values", "href": "h_ref",
    "n": "N", "t": "T", "seed": "seed", "replicas": "replicas", "threads": "threads",
    "out": "out", "allow-unsafe-h": "allow_unsafe_h", "x0": "x0", "n-max": "n_max",
    "n-list": "n_values", "orders": "moment_orders", "stride": "record_stride",
    "samples": "samples",
}


def config_from_values(values: dict, base: Optional[StudyConfig] = None) -> StudyConfig:
    base = base or StudyConfig()
    fields = {_KEY_TO_FIELD[k]: v for k, v in values.items()}
    return dataclasses.replace(base, **fields)


def load_config(path) -> StudyConfig:
    """Parse a config file and validate the resulting study."""
    cfg = config_from_values(parse_config_file(path))
    validate_study(cfg)
    return cfg


def validate_study(cfg: StudyConfig, guard_p: float = 1.0,
                   enforce_guard: bool = True) -> ModelSpec:
    """Check the grid against the model; returns the model for reuse."""
    try:
        model = make_model(cfg.model)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    probe = BrownianDriver(seed=0, h_ref=cfg.h_ref, m=model.m)
    ceiling = max_step(model, guard_p)
    for h in cfg.h_values:
        # ceiling first: an oversized h should be reported as inadmissible
        # even when it is also misaligned with the reference grid
        if enforce_guard and not cfg.allow_unsafe_h and h > ceiling:
            raise ConfigError(
                f"h={h} exceeds the admissible ceiling {ceiling:.6g} for model "
                f"{cfg.model}; lower h or set allow-unsafe-h"
            )
        try:
            probe.level_of(h)
        except ValueError as err:
            raise ConfigError(str(err)) from None
        steps = cfg.T / h
        if cfg.T > 0 and abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"T={cfg.T} is not an integer multiple of h={h}")
    for s in cfg.schemes or ():
        if s not in ("pem", "bem", "em"):
            raise ConfigError(f"unknown scheme {s!r}; expected pem, bem, or em")
    return model


def _run_cells(tasks: dict, threads: int) -> dict:
    """Evaluate keyed thunks, possibly on a pool; results keyed identically."""
    if threads <= 1 or len(tasks) <= 1:
        return {key: fn() for key, fn in tasks.items()}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {key: pool.submit(fn) for key, fn in tasks.items()}
        return {key: fut.result() for key, fut in futures.items()}


def _scheme_cfg(variant: str, cfg: StudyConfig) -> SchemeConfig:
    return SchemeConfig(variant=variant, enforce_step_guard=not cfg.allow_unsafe_h)


# -- converge -----------------------------------------------------------------

def converge_cmd(cfg: StudyConfig) -> list[ResultRow]:
    """Coupled coarse-vs-reference RMSE over the h grid, plus fitted rates.

    The reference-solution run is computed once per (scheme, replica) and
    shared by every h cell; a blow-up aborts only its own cell, leaving a
    blowup_step row in place of rmse.
    """
    schemes = cfg.schemes or ("pem", "bem")
    model = validate_study(dataclasses.replace(cfg, schemes=schemes))
    driver = BrownianDriver(seed=cfg.seed, h_ref=cfg.h_ref, m=model.m)

    def cell(variant: str, h: float, path: int) -> Callable:
        def thunk():
            sim = SimConfig(N=cfg.N, h=h, T=cfg.T)
            try:
                out = run(model, _scheme_cfg(variant, cfg), sim, driver, path_id=path)
                return ("ok", out.final_states)
            except BlowupError as err:
                return ("blowup", err.step)
        return thunk

    tasks = {}
    for s in schemes:
        for r in range(cfg.replicas):
            tasks[("ref", s, r)] = cell(s, cfg.h_ref, r)
            for h in cfg.h_values:
                tasks[("coarse", s, r, h)] = cell(s, h, r)
    results = _run_cells(tasks, cfg.threads)

    rows: list[ResultRow] = []

    def make_row(scheme: str, h: float, metric: str, value: float) -> ResultRow:
        return ResultRow("converge", cfg.model, scheme, h, cfg.N, cfg.T, cfg.seed,
                         metric, float(value))

    for s in schemes:
        fit_points = []
        ref_blown = [results[("ref", s, r)] for r in range(cfg.replicas)
                     if results[("ref", s, r)][0] == "blowup"]
        if ref_blown:
            rows.append(make_row(s, cfg.h_ref, "blowup_step", ref_blown[0][1]))
            continue
        for h in cfg.h_values:
            per_replica = []
            blown = None
            for r in range(cfg.replicas):
                status, payload = results[("coarse", s, r, h)]
                if status == "blowup":
                    blown = payload
                    break
                per_replica.append(rmse(payload, results[("ref", s, r)][1]))
            if blown is not None:
                rows.append(make_row(s, h, "blowup_step", blown))
                continue
            aggregate = float(np.sqrt(np.mean(np.square(per_replica))))
            rows.append(make_row(s, h, "rmse", aggregate))
            if cfg.replicas > 1:
                for r, e in enumerate(per_replica):
                    rows.append(make_row(s, h, f"rmse_rep{r}", e))
            if aggregate > 0.0:
                fit_points.append((np.log2(h), np.log2(aggregate)))
        if len(fit_points) >= 2:
            slope, intercept = fit_rate(fit_points)
            rows.append(make_row(s, 0.0, "fit_rate", slope))
            rows.append(make_row(s, 0.0, "fit_intercept", intercept))
    return sort_rows(rows)


# -- moments ------------------------------------------------------------------

def moments_cmd(cfg: StudyConfig) -> list[ResultRow]:
    """Moment trajectories and their running sup on a long horizon."""
    schemes = cfg.schemes or ("pem", "bem")
    p_max = max(cfg.moment_orders) / 2.0
    model = validate_study(dataclasses.replace(cfg, schemes=schemes), guard_p=p_max)

    def cell(variant: str, h: float) -> Callable:
        def thunk():
            driver = BrownianDriver(seed=cfg.seed, h_ref=h, m=model.m)
            sim = SimConfig(N=cfg.N, h=h, T=cfg.T,
                            record_moments=tuple(cfg.moment_orders),
                            record_stride=cfg.record_stride)
            return run(model, _scheme_cfg(variant, cfg), sim, driver,
                       path_id=0, corruption_mode=True)
        return thunk

    tasks = {(s, h): cell(s, h) for s in schemes for h in cfg.h_values}
    results = _run_cells(tasks, cfg.threads)

    rows: list[ResultRow] = []
    for (s, h), out in results.items():
        sups: dict[int, float] = {}
        for t, order, value in out.moments:
            rows.append(ResultRow("moments", cfg.model, s, h, cfg.N, cfg.T, cfg.seed,
                                  f"moment_{order}@t={_fmt(t)}", value))
            sups[order] = max(sups.get(order, 0.0), value)
        for order, sup in sorted(sups.items()):
            rows.append(ResultRow("moments", cfg.model, s, h, cfg.N, cfg.T, cfg.seed,
                                  f"sup_moment_{order}", sup))
        if out.blowup_step is not None:
            rows.append(ResultRow("moments", cfg.model, s, h, cfg.N, cfg.T, cfg.seed,
                                  "blowup_step", float(out.blowup_step)))
    return sort_rows(rows)


# -- chaos --------------------------------------------------------------------

def chaos_cmd(cfg: StudyConfig) -> list[ResultRow]:
    """Mean-square gap between the N-system and a large-N proxy at T.

    The proxy (the first N particles of the n_max-system) stands in for the
    unavailable law-driven system; per-particle noise is shared across system
    sizes by construction of the counter-based driver. The proxy_n row labels
    the approximation explicitly.
    """
    schemes = cfg.schemes or ("pem",)
    model = validate_study(dataclasses.replace(cfg, schemes=schemes))
    if not all(a < b for a, b in zip(cfg.n_values, cfg.n_values[1:])):
        raise ConfigError(f"chaos particle counts must be ascending, got {cfg.n_values}")
    if cfg.n_max <= max(cfg.n_values):
        raise ConfigError(f"proxy size {cfg.n_max} must exceed every compared N")
    h = min(cfg.h_values)

    def cell(variant: str, n: int) -> Callable:
        def thunk():
            driver = BrownianDriver(seed=cfg.seed, h_ref=h, m=model.m)
            sim = SimConfig(N=n, h=h, T=cfg.T)
            return run(model, _scheme_cfg(variant, cfg), sim, driver, path_id=0).final_states
        return thunk

    sizes = tuple(cfg.n_values) + (cfg.n_max,)
    tasks = {(s, n): cell(s, n) for s in schemes for n in sizes}
    results = _run_cells(tasks, cfg.threads)

    rows: list[ResultRow] = []
    for s in schemes:
        proxy = results[(s, cfg.n_max)]
        for n in cfg.n_values:
            dist = mean_square_distance(results[(s, n)], proxy[:n])
            rows.append(ResultRow("chaos", cfg.model, s, h, n, cfg.T, cfg.seed,
                                  "msd_vs_proxy", dist))
        rows.append(ResultRow("chaos", cfg.model, s, h, cfg.n_max, cfg.T, cfg.seed,
                              "proxy_n", float(cfg.n_max)))
    return sort_rows(rows)


# -- corrupt ------------------------------------------------------------------

def corrupt_cmd(cfg: StudyConfig) -> list[ResultRow]:
    """Side-by-side second moments: explicit Euler against the guarded schemes.

    Runs with the step guard off and blow-up flagging on; the explicit-Euler
    cell is expected to flag, the others to stay bounded. Defaults push the
    system into the unstable regime (large initial value, coarse step).
    """
    schemes = cfg.schemes or ("em", "pem", "bem")
    cfg = dataclasses.replace(cfg, allow_unsafe_h=True, schemes=schemes)
    model = validate_study(cfg, enforce_guard=False)
    x0 = 10.0 if cfg.x0 is None else float(cfg.x0)
    model = dataclasses.replace(model, initial_value=np.full(model.d, x0))
    h = min(cfg.h_values)

    def cell(variant: str) -> Callable:
        def thunk():
            driver = BrownianDriver(seed=cfg.seed, h_ref=h, m=model.m)
            sim = SimConfig(N=cfg.N, h=h, T=cfg.T, record_moments=(2,), record_stride=1)
            return run(model, _scheme_cfg(variant, cfg), sim, driver,
                       path_id=0, corruption_mode=True)
        return thunk

    tasks = {s: cell(s) for s in schemes}
    results = _run_cells(tasks, cfg.threads)

    rows: list[ResultRow] = []
    for s, out in results.items():
        if out.blowup_step is not None:
            rows.append(ResultRow("corrupt", cfg.model, s, h, cfg.N, cfg.T, cfg.seed,
                                  "blowup_step", float(out.blowup_step)))
            rows.append(ResultRow("corrupt", cfg.model, s, h, cfg.N, cfg.T, cfg.seed,
                                  "moment_2_at_blowup", float(out.final_moment2)))
        else:
            sup = max((v for _, order, v in out.moments if order == 2), default=0.0)
            rows.append(ResultRow("corrupt", cfg.model, s, h, cfg.N, cfg.T, cfg.seed,
                                  "sup_moment_2", sup))
    return sort_rows(rows)


# -- validate -----------------------------------------------------------------

def validate_cmd(model_name: str, sample_count: int = 10_000, seed: int = 0) -> AssumptionReport:
    """Spot-check the model's coefficient inequalities; report, don't raise."""
    try:
        model = make_model(model_name)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return check_assumptions(model, sample_count=sample_count, seed=seed)
