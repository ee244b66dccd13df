"""Figure rendering for cgsde experiment CSVs.

Rendering never recomputes science: every curve and point is read from CSV
columns written by the experiment drivers.  One function per figure kind plus
a dispatcher; no plotting state is shared between invocations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("mean-variance", "histogram-with-curve", "trajectory-fan",
         "loglog-sweep", "residual-bars")

FIGSIZE = (8.0, 5.0)
DPI = 120


class SchemaError(ValueError):
    """The CSV does not match the schema of the requested figure kind."""


@dataclass(frozen=True)
class PlotSpec:
    """What to render: input CSV(s), figure kind, output path, labels."""

    kind: str
    csv_paths: tuple[str, ...]
    out: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind '{self.kind}' "
                              f"(valid: {', '.join(KINDS)})")
        if not self.csv_paths:
            raise SchemaError("at least one input CSV is required")

    @staticmethod
    def from_dict(data: dict) -> "PlotSpec":
        paths = data.get("csv", ())
        if isinstance(paths, str):
            paths = (paths,)
        return PlotSpec(
            kind=str(data.get("kind", "")),
            csv_paths=tuple(str(p) for p in paths),
            out=str(data.get("out", "")),
            title=str(data.get("title", "")),
            xlabel=str(data.get("xlabel", "")),
            ylabel=str(data.get("ylabel", "")),
        )


@dataclass(frozen=True)
class RenderResult:
    out: str
    overlay_mass: float | None = None      # histogram kind: sum(ref density * width)
    density_mass: float | None = None


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise SchemaError(f"{path}: empty CSV (no data rows)")
    header = rows[0]
    return header, rows[1:]


def _column(header, rows, name, path):
    if name not in header:
        raise SchemaError(f"{path}: missing column '{name}'")
    i = header.index(name)
    try:
        return np.array([float(r[i]) for r in rows])
    except ValueError:
        raise SchemaError(f"{path}: column '{name}' is not numeric") from None


def _new_axes(spec, nrows=1):
    fig, axes = plt.subplots(nrows, 1, figsize=FIGSIZE, dpi=DPI, squeeze=False,
                             sharex=True)
    if spec.title:
        fig.suptitle(spec.title)
    return fig, axes[:, 0]


def _finish(fig, spec) -> RenderResult:
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return RenderResult(out=spec.out)


def render_mean_variance(spec: PlotSpec) -> RenderResult:
    path = spec.csv_paths[0]
    header, rows = _read_table(path)
    t = _column(header, rows, "t", path)
    fig, (ax1, ax2) = _new_axes(spec, nrows=2)
    ax1.plot(t, _column(header, rows, "mean_mc", path), "o", ms=3,
             label="ensemble mean")
    ax1.plot(t, _column(header, rows, "mean_exact", path), "-",
             label="closed form")
    ax1.set_ylabel("mean")
    ax1.legend()
    ax2.plot(t, _column(header, rows, "var_mc", path), "o", ms=3,
             label="ensemble variance")
    ax2.plot(t, _column(header, rows, "var_exact", path), "-",
             label="closed form")
    ax2.set_ylabel("variance")
    ax2.set_xlabel(spec.xlabel or "t")
    ax2.legend()
    return _finish(fig, spec)


def render_histogram_with_curve(spec: PlotSpec) -> RenderResult:
    path = spec.csv_paths[0]
    header, rows = _read_table(path)
    left = _column(header, rows, "bin_left", path)
    right = _column(header, rows, "bin_right", path)
    dens = _column(header, rows, "density", path)
    ref = _column(header, rows, "ref_density", path)
    centers = 0.5 * (left + right)
    widths = right - left
    fig, (ax,) = _new_axes(spec)
    ax.bar(centers, dens, width=widths, align="center", alpha=0.6,
           edgecolor="none", label="empirical")
    ax.plot(centers, ref, "r-", lw=2, label="reference density")
    ax.set_xlabel(spec.xlabel or "x")
    ax.set_ylabel(spec.ylabel or "density")
    ax.legend()
    result = _finish(fig, spec)
    return RenderResult(out=result.out,
                        overlay_mass=float(np.sum(ref * widths)),
                        density_mass=float(np.sum(dens * widths)))


def render_trajectory_fan(spec: PlotSpec) -> RenderResult:
    path = spec.csv_paths[0]
    header, rows = _read_table(path)
    t = _column(header, rows, "t", path)
    gcols = [h for h in header if h.startswith("g") and h[1:].isdigit()]
    pcols = [h for h in header if h.startswith("p") and h[1:].isdigit()]
    if not gcols or not pcols:
        raise SchemaError(f"{path}: missing column 'g0'/'p0' (trajectory fans)")
    fig, (ax,) = _new_axes(spec)
    cmap = plt.get_cmap("tab10")
    for i, (g, p) in enumerate(zip(sorted(gcols), sorted(pcols))):
        color = cmap(i % 10)
        ax.plot(t, _column(header, rows, g, path), "-", color=color, lw=1)
        ax.plot(t, _column(header, rows, p, path), "--", color=color, lw=1)
    ax.set_xlabel(spec.xlabel or "t")
    ax.set_ylabel(spec.ylabel or "x")
    ax.plot([], [], "k-", label="mimicking reduction")
    ax.plot([], [], "k--", label="projected reduction")
    ax.legend()
    return _finish(fig, spec)


def render_loglog_sweep(spec: PlotSpec) -> RenderResult:
    fig, (ax,) = _new_axes(spec)
    for path in spec.csv_paths:
        header, rows = _read_table(path)
        eps = _column(header, rows, "eps", path)
        for name in header:
            if name == "eps":
                continue
            vals = _column(header, rows, name, path)
            if np.all(vals > 0):
                ax.loglog(eps, vals, "o-", label=name)
    ax.set_xlabel(spec.xlabel or "eps")
    ax.set_ylabel(spec.ylabel or "distance")
    ax.legend()
    return _finish(fig, spec)


def render_residual_bars(spec: PlotSpec) -> RenderResult:
    path = spec.csv_paths[0]
    header, rows = _read_table(path)
    for col in ("part", "norm", "fine", "coarse_2h"):
        if col not in header:
            raise SchemaError(f"{path}: missing column '{col}'")
    ip, inorm = header.index("part"), header.index("norm")
    sup_rows = [r for r in rows if r[inorm] == "sup"]
    parts = [r[ip] for r in sup_rows]
    fine = np.array([float(r[header.index("fine")]) for r in sup_rows])
    coarse = np.array([float(r[header.index("coarse_2h")]) for r in sup_rows])
    xpos = np.arange(len(parts))
    fig, (ax,) = _new_axes(spec)
    ax.bar(xpos - 0.2, coarse, width=0.4, label="grid spacing 2h")
    ax.bar(xpos + 0.2, fine, width=0.4, label="grid spacing h")
    ax.set_yscale("log")
    ax.set_xticks(xpos, parts)
    ax.set_ylabel(spec.ylabel or "sup-norm residual")
    ax.legend()
    return _finish(fig, spec)


_RENDERERS = {
    "mean-variance": render_mean_variance,
    "histogram-with-curve": render_histogram_with_curve,
    "trajectory-fan": render_trajectory_fan,
    "loglog-sweep": render_loglog_sweep,
    "residual-bars": render_residual_bars,
}


def render(spec: PlotSpec) -> RenderResult:
    """Render one figure; raises SchemaError before writing anything on a
    schema mismatch (no partial images)."""
    for path in spec.csv_paths:
        if not Path(path).exists():
            raise SchemaError(f"input CSV not found: {path}")
    if not spec.out:
        raise SchemaError("output image path is required")
    return _RENDERERS[spec.kind](spec)
