"""Figure generation for harness CSV output.

This package talks to the simulation harness only through its published
CSV contract: header ``experiment,model,scheme,h,N,T,seed,metric,value``,
decimal values, LF line endings.  Nothing here imports the harness; the
reader below is an independent implementation of that contract, so the
two packages can disagree only by breaking the interface both document.

Figures are rendered headless through the Agg canvas and written as PNG.
Input files are opened read-only and never modified.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from matplotlib.figure import Figure

__all__ = [
    "CSV_HEADER",
    "CsvRow",
    "PlotError",
    "PlotSpec",
    "ConvergeResult",
    "MomentsResult",
    "read_rows",
    "fit_line",
    "plot_converge",
    "plot_moments",
]

CSV_HEADER = ("experiment", "model", "scheme", "h", "N", "T", "seed", "metric", "value")

# Stable marker per scheme so re-renders of the same data look the same
# regardless of which schemes happen to be present.
_MARKERS = {"pem": "o", "bem": "s", "em": "^"}
_MOMENT_RE = re.compile(r"^moment_(\d+)@t=(.+)$")


class PlotError(ValueError):
    """Unusable input: bad CSV shape, empty selection, or a spec violation."""


@dataclass(frozen=True)
class CsvRow:
    """One harness result row, types already parsed."""

    experiment: str
    model: str
    scheme: str
    h: float
    N: int
    T: float
    seed: int
    metric: str
    value: float


@dataclass(frozen=True)
class PlotSpec:
    """What to read, what to draw, where to write it.

    ``experiment`` filters CSV rows by their experiment column; None means
    the plotting operation's natural experiment ("converge" or "moments").
    ``reference_slope`` sets the dashed guide line in convergence figures.
    """

    csv_path: Path
    out_path: Path
    experiment: Optional[str] = None
    title: Optional[str] = None
    reference_slope: float = 0.5
    dpi: int = 150

    def __post_init__(self) -> None:
        object.__setattr__(self, "csv_path", Path(self.csv_path))
        object.__setattr__(self, "out_path", Path(self.out_path))
        if not math.isfinite(self.reference_slope):
            raise PlotError(f"reference slope must be finite, got {self.reference_slope}")
        if self.dpi <= 0:
            raise PlotError(f"dpi must be positive, got {self.dpi}")


@dataclass(frozen=True)
class ConvergeResult:
    """Structured record of a convergence figure.

    ``slopes``/``intercepts`` are this package's own least-squares fit of
    log2(rmse) against log2(h), one entry per scheme; ``harness_rates``
    echoes any fit_rate rows found in the CSV so callers can cross-check
    the two fits.  ``reference_anchor`` is the (log2 h, log2 rmse) point
    the dashed guide line passes through.
    """

    out_path: Path
    schemes: tuple[str, ...]
    slopes: dict[str, float] = field(compare=False)
    intercepts: dict[str, float] = field(compare=False)
    harness_rates: dict[str, float] = field(compare=False)
    points: dict[str, int] = field(compare=False)
    reference_slope: float = 0.5
    reference_anchor: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class MomentsResult:
    """Structured record of a moment-trajectory figure.

    ``series`` maps (scheme, order) to the number of plotted points after
    masking values a log axis cannot show; ``blowups`` lists (scheme, time)
    markers taken from blowup_step rows.
    """

    out_path: Path
    schemes: tuple[str, ...]
    orders: tuple[int, ...]
    series: dict[tuple[str, int], int] = field(compare=False)
    blowups: tuple[tuple[str, float], ...] = ()


# -- CSV contract --------------------------------------------------------------


def read_rows(path) -> list[CsvRow]:
    """Parse a harness CSV, enforcing the canonical header and field types."""
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{path}:1: file is empty, expected header "
                            f"{','.join(CSV_HEADER)}") from None
        if tuple(header) != CSV_HEADER:
            raise PlotError(f"{path}:1: unexpected header {','.join(header)!r}, "
                            f"expected {','.join(CSV_HEADER)!r}")
        rows: list[CsvRow] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_HEADER):
                raise PlotError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, "
                                f"got {len(rec)}")
            try:
                rows.append(CsvRow(
                    experiment=rec[0],
                    model=rec[1],
                    scheme=rec[2],
                    h=float(rec[3]),
                    N=int(rec[4]),
                    T=float(rec[5]),
                    seed=int(rec[6]),
                    metric=rec[7],
                    value=float(rec[8]),
                ))
            except ValueError as exc:
                raise PlotError(f"{path}:{lineno}: {exc}") from exc
    return rows


def fit_line(xs, ys) -> tuple[float, float]:
    """Least-squares slope and intercept through the given coordinates."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    if len(xs) != len(ys):
        raise PlotError(f"coordinate lists differ in length: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise PlotError(f"line fit needs at least 2 points, got {len(xs)}")
    xbar = math.fsum(xs) / len(xs)
    ybar = math.fsum(ys) / len(ys)
    sxx = math.fsum((x - xbar) ** 2 for x in xs)
    if sxx == 0.0:
        raise PlotError("line fit needs distinct abscissae")
    sxy = math.fsum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, ybar - slope * xbar


# -- figures -------------------------------------------------------------------


def _selection(spec: PlotSpec, default_experiment: str) -> tuple[str, list[CsvRow]]:
    experiment = spec.experiment if spec.experiment is not None else default_experiment
    rows = [r for r in read_rows(spec.csv_path) if r.experiment == experiment]
    if not rows:
        raise PlotError(f"{spec.csv_path}: no rows with experiment={experiment!r}")
    return experiment, rows


def _save(fig: Figure, spec: PlotSpec) -> Path:
    out = spec.out_path
    if out.suffix == "":
        out = out.with_suffix(".png")
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi)
    return out


def plot_converge(spec: PlotSpec) -> ConvergeResult:
    """Render a log2-log2 strong-error figure: scatter plus fitted line per
    scheme and a dashed reference line of slope ``spec.reference_slope``
    anchored at the smallest plotted step size."""
    experiment, rows = _selection(spec, "converge")

    # Zero rmse has no logarithm; such rows (coarse run identical to the
    # reference) are excluded exactly as the harness excludes them from
    # its own rate fit.
    by_scheme: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        if r.metric == "rmse" and r.value > 0.0 and r.h > 0.0:
            by_scheme.setdefault(r.scheme, []).append((math.log2(r.h), math.log2(r.value)))
    if not by_scheme:
        raise PlotError(f"{spec.csv_path}: no positive rmse rows to plot")
    for scheme, pts in by_scheme.items():
        if len(pts) < 2:
            raise PlotError(f"{spec.csv_path}: scheme {scheme!r} has {len(pts)} "
                            f"usable rmse row(s), need at least 2")

    harness_rates = {r.scheme: r.value for r in rows if r.metric == "fit_rate"}

    fig = Figure(figsize=(7.0, 5.0))
    ax = fig.subplots()
    slopes: dict[str, float] = {}
    intercepts: dict[str, float] = {}
    points: dict[str, int] = {}
    all_pts: list[tuple[float, float]] = []
    for scheme in sorted(by_scheme):
        pts = sorted(by_scheme[scheme])
        all_pts.extend(pts)
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        slope, intercept = fit_line(xs, ys)
        slopes[scheme] = slope
        intercepts[scheme] = intercept
        points[scheme] = len(pts)
        marker = _MARKERS.get(scheme, "d")
        dots, = ax.plot(xs, ys, marker, linestyle="none", label=f"{scheme} (slope {slope:.4f})")
        ax.plot([xs[0], xs[-1]],
                [slope * xs[0] + intercept, slope * xs[-1] + intercept],
                "-", color=dots.get_color(), linewidth=1.0)

    # Anchor the guide line at the smallest step size; with several schemes
    # sharing that h, use the lowest point so the guide sits on the data.
    x_min = min(p[0] for p in all_pts)
    x_max = max(p[0] for p in all_pts)
    anchor_y = min(p[1] for p in all_pts if p[0] == x_min)
    s0 = spec.reference_slope
    ax.plot([x_min, x_max], [anchor_y, anchor_y + s0 * (x_max - x_min)],
            "--", color="black", linewidth=1.0, label=f"slope {s0:g} reference")

    ax.set_xlabel("log2 step size h")
    ax.set_ylabel("log2 RMSE")
    ax.set_title(spec.title or "strong error vs step size")
    ax.grid(True, alpha=0.3)
    ax.legend()
    out = _save(fig, spec)
    return ConvergeResult(
        out_path=out,
        schemes=tuple(sorted(by_scheme)),
        slopes=slopes,
        intercepts=intercepts,
        harness_rates=harness_rates,
        points=points,
        reference_slope=s0,
        reference_anchor=(x_min, anchor_y),
    )


def plot_moments(spec: PlotSpec) -> MomentsResult:
    """Render moment trajectories: time on x, moment value on a log y axis,
    one curve per (scheme, order), dashed vertical markers at blow-ups."""
    experiment, rows = _selection(spec, "moments")

    series: dict[tuple[str, int], list[tuple[float, float]]] = {}
    blowups: list[tuple[str, float]] = []
    for r in rows:
        m = _MOMENT_RE.match(r.metric)
        if m is not None:
            try:
                t = float(m.group(2))
            except ValueError:
                raise PlotError(f"{spec.csv_path}: malformed metric {r.metric!r}") from None
            series.setdefault((r.scheme, int(m.group(1))), []).append((t, r.value))
        elif r.metric == "blowup_step":
            blowups.append((r.scheme, r.value * r.h))
    if not series:
        raise PlotError(f"{spec.csv_path}: no moment series with experiment={experiment!r}")

    fig = Figure(figsize=(7.0, 5.0))
    ax = fig.subplots()
    plotted: dict[tuple[str, int], int] = {}
    for key in sorted(series):
        scheme, order = key
        # A log axis cannot show zeros; drop them rather than distorting
        # the curve with a floor value.
        pts = sorted((t, v) for t, v in series[key] if v > 0.0)
        plotted[key] = len(pts)
        if not pts:
            continue
        marker = _MARKERS.get(scheme, "d")
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker=marker, markersize=3, linewidth=1.0,
                label=f"{scheme} moment {order}")
    for scheme, t in sorted(blowups):
        ax.axvline(t, linestyle="--", color="red", linewidth=1.0)
        ax.annotate(f"blow-up ({scheme})", xy=(t, 0.98), xycoords=("data", "axes fraction"),
                    rotation=90, va="top", ha="right", fontsize=8, color="red")

    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("empirical moment")
    ax.set_title(spec.title or "moment trajectories")
    ax.grid(True, alpha=0.3)
    if any(n > 0 for n in plotted.values()) or blowups:
        ax.legend()
    out = _save(fig, spec)
    return MomentsResult(
        out_path=out,
        schemes=tuple(sorted({s for s, _ in series})),
        orders=tuple(sorted({o for _, o in series})),
        series=plotted,
        blowups=tuple(sorted(blowups)),
    )
