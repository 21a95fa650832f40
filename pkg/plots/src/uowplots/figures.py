"""Render sweep CSVs into deterministic SVG figures.

Each figure id maps to a default CSV filename, a set of required columns,
and a builder. Rendering never calls the simulator and never mutates its
inputs; for a fixed CSV the emitted SVG is byte-identical across runs
(pinned hash salt, no timestamp metadata).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "uowplots"

_MARKERS = ("o", "s", "^", "d", "v", "*")


class FigureDataError(ValueError):
    """The input CSV cannot support the requested figure."""


class MissingColumnsError(FigureDataError):
    """Required columns are absent; the message names every one."""

    def __init__(self, columns, path):
        self.columns = tuple(columns)
        super().__init__(f"{path}: missing required columns: {', '.join(columns)}")


@dataclass(frozen=True)
class FigureSpec:
    """One renderable figure: id, input CSV, output image path."""

    figure_id: str
    csv_path: Path
    output_path: Path


@dataclass(frozen=True)
class Table:
    """Parsed CSV: column names and per-column float/str arrays."""

    columns: tuple
    data: dict

    def __len__(self):
        return len(next(iter(self.data.values()))) if self.data else 0

    def unique(self, column):
        return sorted(set(self.data[column]))

    def select(self, **criteria):
        keep = np.ones(len(self), dtype=bool)
        for column, value in criteria.items():
            keep &= np.asarray([v == value for v in self.data[column]])
        return {c: np.asarray(self.data[c], dtype=object)[keep] for c in self.columns}


def read_table(path: Path) -> Table:
    """Read a sweep CSV (``#`` comments skipped, numbers parsed as floats)."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FigureDataError(f"{path}: no header line")
    columns = tuple(c.strip() for c in lines[0].split(","))
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(columns):
            raise FigureDataError(
                f"{path}: row has {len(parts)} fields, expected {len(columns)}")
        rows.append(parts)
    data = {}
    for idx, column in enumerate(columns):
        values = []
        for parts in rows:
            raw = parts[idx]
            try:
                values.append(float(raw))
            except ValueError:
                values.append(raw)
        data[column] = values
    return Table(columns=columns, data=data)


def _require_columns(table: Table, required, path):
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise MissingColumnsError(missing, path)
    if len(table) == 0:
        raise FigureDataError(f"{path}: no data rows")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _connectivity_panel(table: Table, phi_rank: int, path) -> plt.Figure:
    """Analytic lines plus Monte Carlo error bars vs range, one scan angle."""
    _require_columns(table, ("phi", "R", "M", "k", "p_analytic",
                             "p_mc", "stderr"), path)
    phis = table.unique("phi")
    if phi_rank >= len(phis):
        raise FigureDataError(
            f"{path}: figure needs {phi_rank + 1} distinct phi values, "
            f"found {len(phis)}")
    phi = phis[phi_rank]

    fig, ax = plt.subplots(figsize=(6, 4.2))
    groups = sorted(set(zip(table.data["M"], table.data["k"])))
    for idx, (m, k) in enumerate(groups):
        rows = table.select(phi=phi, M=m, k=k)
        if len(rows["R"]) == 0:
            continue
        order = np.argsort(rows["R"].astype(float))
        radii = rows["R"].astype(float)[order]
        label = f"M={m:g}, k={k:g}"
        ax.plot(radii, rows["p_analytic"].astype(float)[order], "-",
                color=f"C{idx}", label=f"{label} analytic")
        ax.errorbar(radii, rows["p_mc"].astype(float)[order],
                    yerr=rows["stderr"].astype(float)[order],
                    fmt=_MARKERS[idx % len(_MARKERS)], color=f"C{idx}",
                    linestyle="none", capsize=2.5, markersize=4.5,
                    label=f"{label} simulated")
    ax.set_xlabel("transmission range (m)")
    ax.set_ylabel("probability of a connected network")
    ax.set_title(f"scan angle = {phi:.4g} rad")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return fig


def _connectivity_vs_angle(table: Table, path) -> plt.Figure:
    """Connectivity vs scan angle, one curve pair per (M, R)."""
    _require_columns(table, ("phi", "R", "M", "k", "p_analytic",
                             "p_mc", "stderr"), path)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    groups = sorted({(m, r) for m, r in zip(table.data["M"], table.data["R"])})
    for idx, (m, r) in enumerate(groups):
        rows = table.select(M=m, R=r)
        order = np.argsort(rows["phi"].astype(float))
        angles = rows["phi"].astype(float)[order]
        color = f"C{idx % 10}"
        ax.plot(angles, rows["p_analytic"].astype(float)[order], "-",
                color=color, label=f"R={r:g} m, M={m:g} analytic")
        ax.errorbar(angles, rows["p_mc"].astype(float)[order],
                    yerr=rows["stderr"].astype(float)[order],
                    fmt=_MARKERS[idx % len(_MARKERS)], color=color,
                    linestyle="none", capsize=2.5, markersize=4.5,
                    label=f"R={r:g} m, M={m:g} simulated")
    ax.set_xlabel("beam scanning angle (rad)")
    ax.set_ylabel("probability of a connected network")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    return fig


def _rmse_study(table: Table, axis_column: str, xlabel: str, path) -> plt.Figure:
    """Mean RMSE per method against one sweep axis."""
    _require_columns(table, ("method", "rmse", axis_column), path)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    methods = [m for m in ("proposed", "mds_map", "dv_hop")
               if m in set(table.data["method"])]
    methods += sorted(set(table.data["method"]) - set(methods))
    for idx, method in enumerate(methods):
        rows = table.select(method=method)
        axis_values = np.asarray(rows[axis_column], dtype=float)
        rmse = np.asarray(rows["rmse"], dtype=float)
        xs = np.array(sorted(set(axis_values)))
        means = np.array([rmse[axis_values == x].mean() for x in xs])
        spread = np.array([rmse[axis_values == x].std(ddof=0)
                           / max(np.sqrt((axis_values == x).sum()), 1.0)
                           for x in xs])
        ax.errorbar(xs, means, yerr=spread, fmt=_MARKERS[idx % len(_MARKERS)] + "-",
                    color=f"C{idx}", capsize=2.5, label=method)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("mean RMSE (m)")
    ax.grid(alpha=0.3)
    ax.legend()
    return fig


def _channel_curves(table: Table, path) -> plt.Figure:
    """Received power (dB re 1 W) vs distance, one curve per water preset."""
    _require_columns(table, ("preset", "distance_m", "received_power_w"), path)
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for idx, preset in enumerate(sorted(set(table.data["preset"]))):
        rows = table.select(preset=preset)
        order = np.argsort(rows["distance_m"].astype(float))
        distances = rows["distance_m"].astype(float)[order]
        power = rows["received_power_w"].astype(float)[order]
        ax.plot(distances, 10.0 * np.log10(power), "-",
                marker=_MARKERS[idx % len(_MARKERS)], markersize=3.5,
                color=f"C{idx}", label=preset)
    ax.set_xlabel("distance (m)")
    ax.set_ylabel("received power (dB re 1 W)")
    ax.grid(alpha=0.3)
    ax.legend()
    return fig


_FIGURES = {
    "fig7": ("connectivity.csv", lambda t, p: _connectivity_panel(t, 0, p)),
    "fig8": ("connectivity.csv", lambda t, p: _connectivity_panel(t, 1, p)),
    "fig9": ("connectivity.csv", lambda t, p: _connectivity_panel(t, 2, p)),
    "fig10": ("connectivity.csv", lambda t, p: _connectivity_panel(t, 3, p)),
    "fig11": ("connectivity.csv", _connectivity_vs_angle),
    "fig12": ("loc_connectivity.csv",
              lambda t, p: _rmse_study(t, "R", "transmission range (m)", p)),
    "fig13": ("loc_noise.csv",
              lambda t, p: _rmse_study(t, "noise_pct", "ranging noise (fraction of range)", p)),
    "fig14": ("loc_anchors.csv",
              lambda t, p: _rmse_study(t, "anchors", "number of anchors", p)),
    "channel": ("channel.csv", _channel_curves),
}

FIGURE_IDS = tuple(_FIGURES)


def default_csv_name(figure_id: str) -> str:
    _check_id(figure_id)
    return _FIGURES[figure_id][0]


def _check_id(figure_id: str) -> None:
    if figure_id not in _FIGURES:
        raise KeyError(f"unknown figure id {figure_id!r}; have {', '.join(_FIGURES)}")


def build_figure(spec: FigureSpec) -> plt.Figure:
    """Build (but do not save) the matplotlib figure for a spec."""
    _check_id(spec.figure_id)
    table = read_table(spec.csv_path)
    return _FIGURES[spec.figure_id][1](table, spec.csv_path)


def render(spec: FigureSpec) -> Path:
    """Render a spec to its output path (SVG, deterministic bytes).

    Validation failures (missing columns, empty data) raise before any
    file is written.
    """
    figure = build_figure(spec)
    try:
        output = Path(spec.output_path)
        output.parent.mkdir(parents=True, exist_ok=True)
        figure.savefig(output, format="svg", metadata={"Date": None})
    finally:
        plt.close(figure)
    return output


def render_directory(csv_dir, out_dir, figures: Optional[Sequence[str]] = None):
    """Render figures from a directory of sweep CSVs.

    With ``figures=None``, renders every figure whose default CSV exists
    in ``csv_dir``; an explicit list demands those CSVs to be present.

    Returns the list of written image paths.
    """
    csv_dir, out_dir = Path(csv_dir), Path(out_dir)
    if figures is None:
        selected = [fid for fid in FIGURE_IDS
                    if (csv_dir / default_csv_name(fid)).exists()]
        if not selected:
            raise FigureDataError(f"{csv_dir}: no renderable CSV files found")
    else:
        selected = list(figures)
        for fid in selected:
            _check_id(fid)
    written = []
    for fid in selected:
        spec = FigureSpec(figure_id=fid,
                          csv_path=csv_dir / default_csv_name(fid),
                          output_path=out_dir / f"{fid}.svg")
        written.append(render(spec))
    return written
