"""Rich-based formatters for freespec output."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from rich.markup import escape
from rich.table import Table
from rich.text import Text

from freespec.detect import ordering_check
from freespec.models import (
    DetectionReport,
    LocationReport,
    MpCheckResult,
    ProductSpectrum,
    SpectralDensity,
    Verdict,
)

_MAX_LISTED = 8


def _num(value: float) -> str:
    if math.isinf(value):
        return "∞"
    return f"{value:.4g}"


def _verdict_text(verdict: Verdict) -> Text:
    if verdict is Verdict.ANOMALY:
        return Text(verdict.value, style="bold red")
    return Text(verdict.value, style="bold green")


def _s_text(report: DetectionReport) -> Text:
    return Text(_num(report.s), style="bold red" if report.is_anomaly else "")


def _listing(values: Sequence[float]) -> str:
    shown = ", ".join(_num(v) for v in values[:_MAX_LISTED])
    if len(values) > _MAX_LISTED:
        shown += f", … (+{len(values) - _MAX_LISTED})"
    return shown or "-"


def _intervals(intervals: Sequence[tuple[float, float]]) -> str:
    return " ∪ ".join(f"[{_num(lo)}, {_num(hi)}]" for lo, hi in intervals) or "-"


def render_detection(report: DetectionReport) -> Table:
    """Two-column summary of a detection report."""
    title = f"Detection ({report.polynomial.value.upper()})"
    if report.label:
        title += f": {escape(report.label)}"
    table = Table(title=title, show_header=False)
    table.add_column("Field", style="bold cyan")
    table.add_column("Value")
    table.add_row("N", str(report.n_channels))
    table.add_row("Support", _intervals(report.support_used))
    table.add_row("Margin ε", _num(report.margin_eps))
    table.add_row("Outliers", f"{len(report.outliers)}: {_listing(list(report.outliers))}")
    table.add_row("s", _num(report.s))
    table.add_row("Verdict", _verdict_text(report.verdict))
    if report.degenerate_denominator:
        table.caption = "Bulk eigenvalues vanish; s is reported as ∞."
    return table


def render_location(
    location: LocationReport, channel_labels: Sequence[str] | None = None, top: int = 5
) -> Table:
    """The *top* channels ranked by indicator value."""
    title = "Location"
    if location.t_index is not None:
        title += f" at t={location.t_index}"
    table = Table(title=title)
    table.add_column("Rank", justify="right", style="dim")
    table.add_column("Channel", style="bold")
    table.add_column("L", justify="right")

    order = np.argsort(-location.indicator, kind="stable")[:top]
    for rank, idx in enumerate(order, start=1):
        name = str(idx) if channel_labels is None else f"{idx} ({escape(channel_labels[idx])})"
        style = "bold red" if location.loc is not None and idx == location.loc else ""
        table.add_row(str(rank), Text(name, style=style), _num(float(location.indicator[idx])))
    if location.loc is None:
        table.caption = "No outliers; location undefined."
    else:
        table.caption = f"{location.outlier_count} outlier eigenpair(s) used"
    return table


def render_density(density: SpectralDensity, title: str = "Asymptotic spectral density") -> Table:
    table = Table(title=escape(title), show_header=False)
    table.add_column("Field", style="bold cyan")
    table.add_column("Value")
    grid = density.grid
    table.add_row("Grid", f"[{_num(grid[0])}, {_num(grid[-1])}] × {grid.size}")
    table.add_row("Support", _intervals(density.support_intervals))
    table.add_row("Total mass", _num(density.total_mass()))
    table.add_row("Smoothing offset", _num(density.smoothing_offset))
    if density.clipped_mass:
        table.add_row("Clipped mass", _num(density.clipped_mass))
    if density.invalid_points:
        table.add_row("Invalid points", Text(str(density.invalid_points), style="yellow"))
    return table


def render_mp_check(result: MpCheckResult) -> Table:
    lo, hi = result.params.support
    table = Table(title="Marchenko–Pastur check", show_header=False)
    table.add_column("Field", style="bold cyan")
    table.add_column("Value")
    table.add_row("c", _num(result.params.ratio_c))
    table.add_row("σ²", _num(result.params.variance))
    table.add_row("Support", f"[{_num(lo)}, {_num(hi)}]")
    table.add_row("Bins", str(result.histogram.n_bins))
    table.add_row("KS statistic", _num(result.ks_statistic))
    table.add_row("L1 distance", _num(result.l1_distance))
    return table


def render_product(spectrum: ProductSpectrum) -> Table:
    table = Table(title="Product spectrum")
    table.add_column("#", justify="right", style="dim")
    table.add_column("λ", justify="right")
    table.add_column("|λ|", justify="right", style="bold")
    for i, z in enumerate(spectrum.outliers[:_MAX_LISTED], start=1):
        table.add_row(str(i), f"{z.real:.4g}{z.imag:+.4g}j", _num(abs(z)))
    table.caption = (
        f"{spectrum.outliers.size} outlier(s) of {spectrum.eigenvalues.size}; "
        f"radius {_num(spectrum.threshold)} = "
        f"(1+{_num(spectrum.delta)})·{_num(spectrum.bulk_radius)}"
    )
    return table


def render_cases(p1: Sequence[DetectionReport], p2: Sequence[DetectionReport]) -> Table:
    """Side-by-side P1/P2 statistics per case, with both s orderings in the caption.

    *p1* and *p2* hold one report per case in the same order, labelled by case.
    """
    table = Table(title="Case comparison", show_lines=False)
    table.add_column("Case", style="bold")
    table.add_column("P1 outliers", justify="right")
    table.add_column("P1 s", justify="right")
    table.add_column("P2 outliers", justify="right")
    table.add_column("P2 s", justify="right")
    for r1, r2 in zip(p1, p2, strict=True):
        table.add_row(
            escape(r1.label or "?"),
            str(len(r1.outliers)),
            _s_text(r1),
            str(len(r2.outliers)),
            _s_text(r2),
        )
    rank1 = " < ".join(r.label or "?" for r in ordering_check(p1))
    rank2 = " < ".join(r.label or "?" for r in ordering_check(p2))
    table.caption = f"P1 order: {rank1}\nP2 order: {rank2}"
    return table
