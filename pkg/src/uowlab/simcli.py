"""Declarative experiment runner for connectivity and localization sweeps.

A plain-text config (``key = value`` lines, ``#`` comments) describes a
cartesian sweep grid; running it appends CSV rows in a canonical order
so that identical (config, seed) pairs reproduce byte-identical files
regardless of worker count, and interrupted runs resume by grid key.

Config grammar, CSV schemas, and the CLI are documented in the README.
Exit codes: 0 success, 1 config validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .channel import OpticalLink, WaterModel, default_water_presets, received_power
from .connectivity import (ConnectivityParams, monte_carlo_p_connected,
                           p_connected, p_connected_k)
from .localization import AnchorSet, localize, observe_distances
from .netgraph import deploy

OUTPUT_DIR_ENV = "UOWLAB_OUTPUT_DIR"

_KINDS = ("connectivity_sweep", "localization_sweep", "channel_table")
_METHODS = ("proposed", "mds_map", "dv_hop")

CONNECTIVITY_COLUMNS = "phi,R,M,k,mode,p_analytic,p_mc,stderr,trials,seed"
LOCALIZATION_COLUMNS = "method,M,anchors,phi,R,noise_pct,seed,rmse,unlocalized,iterations,residual"
CHANNEL_COLUMNS = "preset,extinction,distance_m,received_power_w"


class ConfigError(Exception):
    """Aggregated, line-numbered config validation failures."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg
                                   for ln, msg in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated sweep description (lists are canonical tuples)."""

    kind: str
    output: str
    area_side: float = 100.0
    seed: int = 0
    workers: int = 1
    # connectivity / localization grid axes
    m_values: tuple = ()
    r_values: tuple = ()
    phi_values: tuple = ()
    k_values: tuple = (1,)
    trials: int = 1000
    border_mode: str = "bounded"
    # localization axes
    anchors_values: tuple = (5,)
    noise_values: tuple = (0.05,)
    methods: tuple = _METHODS
    seeds: int = 100
    rmse_norm: str = "normalized"
    # channel table
    presets: tuple = ()
    distances: tuple = ()
    tx_power: float = 0.1
    tx_efficiency: float = 0.9
    rx_efficiency: float = 0.9
    rx_aperture: float = 0.01
    divergence: float = math.pi / 6


# ---------------------------------------------------------------------------
# parsing / validation
# ---------------------------------------------------------------------------

def _parse_number_list(value: str, kind: type):
    """Comma list or ``start:stop:count`` range of numbers."""
    value = value.strip()
    if ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:count, got {value!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError(f"range count must be >= 1, got {count}")
        items = np.linspace(start, stop, count)
        return tuple(kind(x) for x in items)
    items = [p.strip() for p in value.split(",") if p.strip()]
    if not items:
        raise ValueError("list must not be empty")
    out = []
    for item in items:
        number = float(item)
        if kind is int and not number.is_integer():
            raise ValueError(f"expected integer, got {item!r}")
        out.append(kind(number))
    return tuple(out)


def _parse_name_list(value: str):
    items = tuple(p.strip() for p in value.split(",") if p.strip())
    if not items:
        raise ValueError("list must not be empty")
    return items


# config key -> ExperimentConfig field (phi_unit is consumed at parse time)
_KEY_FIELDS = {
    "kind": "kind", "output": "output", "area_side": "area_side",
    "seed": "seed", "workers": "workers", "M": "m_values", "R": "r_values",
    "phi": "phi_values", "phi_unit": None, "k": "k_values", "trials": "trials",
    "border_mode": "border_mode", "anchors": "anchors_values",
    "noise_pct": "noise_values", "methods": "methods", "seeds": "seeds",
    "rmse_norm": "rmse_norm", "presets": "presets", "distances": "distances",
    "tx_power": "tx_power", "tx_efficiency": "tx_efficiency",
    "rx_efficiency": "rx_efficiency", "rx_aperture": "rx_aperture",
    "divergence": "divergence",
}


def validate(config_text: str) -> ExperimentConfig:
    """Parse and fully validate a config; raises ConfigError on any fault.

    Unknown keys are rejected, defaults are filled in, and angle lists
    given with ``phi_unit = deg`` come back converted to radians.
    """
    errors = []
    seen: dict[str, tuple[int, str]] = {}

    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'key = value', got {line!r}"))
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_FIELDS:
            errors.append((lineno, f"unknown key {key!r}"))
            continue
        if key in seen:
            errors.append((lineno, f"duplicate key {key!r} (first on line {seen[key][0]})"))
            continue
        if not value:
            errors.append((lineno, f"empty value for {key!r}"))
            continue
        seen[key] = (lineno, value)

    def take(key, parser, default=None):
        if key not in seen:
            return default
        lineno, value = seen[key]
        try:
            return parser(value)
        except (ValueError, TypeError) as exc:
            errors.append((lineno, f"{key}: {exc}"))
            return default

    kind = take("kind", str)
    if kind is None:
        errors.append((0, f"missing required key 'kind' (one of {', '.join(_KINDS)})"))
    elif kind not in _KINDS:
        errors.append((seen["kind"][0], f"kind must be one of {', '.join(_KINDS)}"))

    output = take("output", str)
    if output is None:
        errors.append((0, "missing required key 'output'"))

    values = {"kind": kind or "", "output": output or ""}
    values["area_side"] = take("area_side", float, 100.0)
    values["seed"] = take("seed", lambda v: int(float(v)), 0)
    values["workers"] = take("workers", lambda v: int(float(v)), 1)
    values["trials"] = take("trials", lambda v: int(float(v)), 1000)
    values["seeds"] = take("seeds", lambda v: int(float(v)), 100)
    values["m_values"] = take("M", lambda v: _parse_number_list(v, int), ())
    values["r_values"] = take("R", lambda v: _parse_number_list(v, float), ())
    values["phi_values"] = take("phi", lambda v: _parse_number_list(v, float), ())
    values["k_values"] = take("k", lambda v: _parse_number_list(v, int), (1,))
    values["anchors_values"] = take("anchors", lambda v: _parse_number_list(v, int), (5,))
    values["noise_values"] = take("noise_pct", lambda v: _parse_number_list(v, float), (0.05,))
    values["methods"] = take("methods", _parse_name_list, _METHODS)
    values["border_mode"] = take("border_mode", str, "bounded")
    values["rmse_norm"] = take("rmse_norm", str, "normalized")
    values["presets"] = take("presets", _parse_name_list,
                             tuple(sorted(default_water_presets())))
    values["distances"] = take("distances", lambda v: _parse_number_list(v, float),
                               tuple(float(d) for d in range(1, 101)))
    for key in ("tx_power", "tx_efficiency", "rx_efficiency", "rx_aperture", "divergence"):
        values[key] = take(key, float, getattr(ExperimentConfig, key))

    phi_unit = take("phi_unit", str, "rad")
    if phi_unit not in ("rad", "deg"):
        errors.append((seen["phi_unit"][0], "phi_unit must be 'rad' or 'deg'"))
    elif phi_unit == "deg":
        values["phi_values"] = tuple(math.radians(p) for p in values["phi_values"])

    def complain(key, message):
        errors.append((seen[key][0] if key in seen else 0, f"{key}: {message}"))

    # cross-field checks
    if kind in ("connectivity_sweep", "localization_sweep"):
        for key, field_name in (("M", "m_values"), ("R", "r_values"), ("phi", "phi_values")):
            if not values[field_name]:
                complain(key, "required non-empty list for this kind")
        if any(m < 1 for m in values["m_values"]):
            complain("M", "node counts must be >= 1")
        if any(r < 0 for r in values["r_values"]):
            complain("R", "ranges must be >= 0")
        if any(not 0 < p <= 2 * math.pi + 1e-12 for p in values["phi_values"]):
            complain("phi", "scanning angles must be in (0, 2pi] radians")
    if values["area_side"] <= 0:
        complain("area_side", "must be > 0")
    if values["trials"] < 1:
        complain("trials", "must be >= 1")
    if values["seeds"] < 1:
        complain("seeds", "must be >= 1")
    if values["workers"] < 1:
        complain("workers", "must be >= 1")
    if values["border_mode"] not in ("bounded", "torus"):
        complain("border_mode", "must be 'bounded' or 'torus'")
    if values["rmse_norm"] not in ("normalized", "conventional"):
        complain("rmse_norm", "must be 'normalized' or 'conventional'")
    if any(k < 1 for k in values["k_values"]):
        complain("k", "connectivity degrees must be >= 1")
    if any(a < 3 for a in values["anchors_values"]):
        complain("anchors", "anchor counts must be >= 3")
    if any(n < 0 for n in values["noise_values"]):
        complain("noise_pct", "noise fractions must be >= 0")
    for method in values["methods"]:
        if method not in _METHODS:
            complain("methods", f"unknown method {method!r}")
    if kind == "channel_table":
        known = set(default_water_presets())
        for preset in values["presets"]:
            if preset not in known:
                complain("presets", f"unknown preset {preset!r}; have {sorted(known)}")
        if any(d <= 0 for d in values["distances"]):
            complain("distances", "distances must be > 0")

    if errors:
        raise ConfigError(sorted(errors))
    return ExperimentConfig(**values)


_ECHO_KEYS = {
    "connectivity_sweep": ("kind", "output", "area_side", "seed", "workers",
                           "M", "R", "phi", "k", "trials", "border_mode"),
    "localization_sweep": ("kind", "output", "area_side", "seed", "workers",
                           "M", "R", "phi", "anchors", "noise_pct", "methods",
                           "seeds", "border_mode", "rmse_norm"),
    "channel_table": ("kind", "output", "seed", "workers", "presets", "distances",
                      "tx_power", "tx_efficiency", "rx_efficiency", "rx_aperture",
                      "divergence"),
}


def render_config(config: ExperimentConfig) -> str:
    """Canonical echo of a validated config (re-validates to itself)."""
    def fmt(value):
        if isinstance(value, tuple):
            return ", ".join(fmt(v) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    lines = []
    for key in _ECHO_KEYS[config.kind]:
        field_name = _KEY_FIELDS[key]
        lines.append(f"{key} = {fmt(getattr(config, field_name))}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """Digest of the scientific content (grid + seed); ignores output/workers."""
    lines = [line for line in render_config(config).splitlines()
             if not line.startswith(("output =", "workers ="))]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    """Outcome of one run: canonical rows plus artifact metadata."""

    path: Path
    columns: str
    rows: tuple[str, ...]
    config_hash: str
    tool_version: str
    written: int
    skipped: int


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _connectivity_grid(cfg: ExperimentConfig):
    grid = []
    for phi in cfg.phi_values:
        for r in cfg.r_values:
            for m in cfg.m_values:
                for k in cfg.k_values:
                    grid.append((phi, r, m, k))
    return grid


def _connectivity_task(cfg: ExperimentConfig, index: int):
    phi, r, m, k = _connectivity_grid(cfg)[index]
    params = ConnectivityParams.from_meters(M=m, radius_m=r,
                                            area_side=cfg.area_side, scan_angle=phi)
    if k == 1:
        analytic = p_connected(params)
    elif k == 2 and m >= 3:
        analytic = p_connected_k(params, 2)
    else:
        analytic = float("nan")
    estimate = monte_carlo_p_connected(
        M=m, area_side=cfg.area_side, scan_angle=phi, radius=r, k=k,
        trials=cfg.trials, border_mode=cfg.border_mode,
        rng=np.random.SeedSequence(cfg.seed, spawn_key=(index,)))
    row = ",".join(_fmt(v) for v in (
        phi, r, m, k, cfg.border_mode, analytic,
        estimate.probability, estimate.stderr, cfg.trials, cfg.seed))
    return [row]


def _localization_grid(cfg: ExperimentConfig):
    grid = []
    for m in cfg.m_values:
        for r in cfg.r_values:
            for phi in cfg.phi_values:
                for anchors in cfg.anchors_values:
                    for noise in cfg.noise_values:
                        for seed_index in range(cfg.seeds):
                            grid.append((m, r, phi, anchors, noise, seed_index))
    return grid


def _localization_task(cfg: ExperimentConfig, index: int):
    m, r, phi, n_anchors, noise, seed_index = _localization_grid(cfg)[index]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(index,)))
    graph = deploy(m, cfg.area_side, phi, r, rng,
                   torus=cfg.border_mode == "torus")
    obs = observe_distances(graph, noise, rng)
    anchors = AnchorSet.random(graph, n_anchors, rng)
    rows = []
    for method in cfg.methods:
        # sweeps stop the completion at the noise plateau to stay fast
        result = localize(graph, obs, anchors, method=method,
                          stall_tol=1e-4, rmse_norm=cfg.rmse_norm)
        rows.append(",".join(_fmt(v) for v in (
            method, m, n_anchors, phi, r, noise, seed_index, result.rmse,
            result.unlocalized, result.iterations, result.completion_residual)))
    return rows


def _channel_grid(cfg: ExperimentConfig):
    return [(preset, d) for preset in cfg.presets for d in cfg.distances]


def _channel_task(cfg: ExperimentConfig, index: int):
    preset_name, distance = _channel_grid(cfg)[index]
    water = WaterModel.preset(preset_name)
    link = OpticalLink(tx_power=cfg.tx_power, tx_efficiency=cfg.tx_efficiency,
                       rx_efficiency=cfg.rx_efficiency, rx_aperture=cfg.rx_aperture,
                       divergence=cfg.divergence, distance=distance)
    power = received_power(link, water)
    row = ",".join(_fmt(v) for v in (preset_name, water.extinction, distance, power))
    return [row]


_RUNNERS = {
    "connectivity_sweep": (_connectivity_grid, _connectivity_task, CONNECTIVITY_COLUMNS),
    "localization_sweep": (_localization_grid, _localization_task, LOCALIZATION_COLUMNS),
    "channel_table": (_channel_grid, _channel_task, CHANNEL_COLUMNS),
}

# column indices identifying a row within its sweep, for resume matching
_KEY_COLS = {
    "connectivity_sweep": (0, 1, 2, 3, 4),      # phi, R, M, k, mode
    "localization_sweep": (0, 1, 2, 3, 4, 5, 6),  # method..seed
    "channel_table": (0, 2),                     # preset, distance
}


def _row_key(kind: str, row: str) -> tuple:
    parts = row.split(",")
    return tuple(parts[i] for i in _KEY_COLS[kind])


def _expected_keys(cfg: ExperimentConfig, point) -> list[tuple]:
    """Identifying keys of every row a grid point will emit."""
    if cfg.kind == "connectivity_sweep":
        phi, r, m, k = point
        return [tuple(_fmt(v) for v in (phi, r, m, k, cfg.border_mode))]
    if cfg.kind == "localization_sweep":
        m, r, phi, anchors, noise, seed_index = point
        return [tuple(_fmt(v) for v in (method, m, anchors, phi, r, noise, seed_index))
                for method in cfg.methods]
    preset, d = point
    return [(str(preset), _fmt(d))]


def resolve_output(cfg: ExperimentConfig) -> Path:
    """Output path, honoring the UOWLAB_OUTPUT_DIR default directory."""
    path = Path(cfg.output)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def run(config: ExperimentConfig, workers: Optional[int] = None) -> SweepResult:
    """Execute the sweep, appending missing grid rows in canonical order.

    Rows already present in the output (matched by their identifying
    columns) are skipped, making interrupted runs resumable; fresh runs
    are byte-identical for a fixed (config, seed) regardless of the
    worker count because every task derives its own RNG substream and
    rows are flushed in canonical grid order.
    """
    grid_fn, task_fn, columns = _RUNNERS[config.kind]
    grid = grid_fn(config)
    workers = workers or config.workers
    path = resolve_output(config)
    digest = config_hash(config)

    done_keys = set()
    needs_header = True
    if path.exists():
        for line in path.read_text().splitlines():
            if not line:
                continue
            if line.startswith("#") or line == columns:
                needs_header = False
                continue
            done_keys.add(_row_key(config.kind, line))
    else:
        path.parent.mkdir(parents=True, exist_ok=True)

    pending = [index for index, point in enumerate(grid)
               if any(key not in done_keys for key in _expected_keys(config, point))]

    results: dict[int, list] = {}
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, rows in zip(pending, pool.map(
                    _run_task, [(config, i) for i in pending], chunksize=1)):
                results[index] = rows
    else:
        for index in pending:
            results[index] = task_fn(config, index)

    written = []
    with path.open("a") as handle:
        if needs_header:
            handle.write(f"# uowlab {__version__} config_hash={digest}\n")
            handle.write(columns + "\n")
        for index in pending:
            for row in results[index]:
                if _row_key(config.kind, row) in done_keys:
                    continue
                handle.write(row + "\n")
                written.append(row)
            handle.flush()

    return SweepResult(
        path=path, columns=columns, rows=tuple(written), config_hash=digest,
        tool_version=__version__, written=len(written), skipped=len(done_keys),
    )


def _run_task(payload):
    config, index = payload
    return _RUNNERS[config.kind][1](config, index)


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uowlab",
        description="Seeded connectivity / localization experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--output", type=Path, default=None, help="override output path")
    p_run.add_argument("--workers", type=int, default=None, help="worker process count")

    p_val = sub.add_parser("validate", help="validate a config and echo it")
    p_val.add_argument("config", type=Path)

    p_fig = sub.add_parser("figures", help="render figures from sweep CSVs")
    p_fig.add_argument("csv_dir", type=Path)
    p_fig.add_argument("--out", type=Path, default=None)
    p_fig.add_argument("--figure", action="append", default=None,
                       help="figure id (repeatable); default: all renderable")

    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            config = validate(args.config.read_text())
        except ConfigError as exc:
            print(f"invalid config:\n{exc}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(render_config(config))
        return 0

    if args.command == "run":
        try:
            config = validate(args.config.read_text())
        except ConfigError as exc:
            print(f"invalid config:\n{exc}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.output is not None:
            config = replace(config, output=str(args.output))
        try:
            result = run(config, workers=args.workers)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            print(f"run failed: {exc}", file=sys.stderr)
            return 2
        print(f"{result.path}: wrote {result.written} rows "
              f"(config {result.config_hash})")
        return 0

    if args.command == "figures":
        try:
            import uowplots
        except ImportError:
            print("figure rendering requires the uowplots package", file=sys.stderr)
            return 2
        out_dir = args.out or args.csv_dir
        try:
            rendered = uowplots.render_directory(args.csv_dir, out_dir,
                                                 figures=args.figure)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            print(f"figure rendering failed: {exc}", file=sys.stderr)
            return 2
        for path in rendered:
            print(path)
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
