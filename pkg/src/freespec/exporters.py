"""CSV and JSON serialization of freespec artifacts.

CSV floats are written with 17 significant digits; JSON floats use Python's
shortest round-trip representation. Both are exact for doubles, so artifacts
are byte-identical across runs with the same inputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from freespec.models import (
    DetectionReport,
    EsdHistogram,
    FloatArray,
    LocationReport,
    MeasurementWindow,
    ProductSpectrum,
    SpectralDensity,
    WindowResult,
)


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def _floats(values: Iterable[float] | FloatArray) -> list[float]:
    return [float(v) for v in values]


def _write_rows(
    path: Path | str, header: Sequence[str] | None, rows: Iterable[Sequence[Any]]
) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buffer.getvalue(), encoding="utf-8")


def write_json(data: dict[str, Any] | list[Any], path: Path | str) -> None:
    """Write strict JSON; non-finite floats raise instead of emitting ``Infinity``."""
    Path(path).write_text(json.dumps(data, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_window_csv(window: MeasurementWindow, path: Path | str) -> None:
    """One row per channel, preceded by a label row when labels exist."""
    rows = ([format_float(v) for v in row] for row in window.data)
    header = list(window.channel_labels) if window.channel_labels else None
    _write_rows(path, header, rows)


def write_histogram_csv(hist: EsdHistogram, path: Path | str) -> None:
    heights = hist.normalized_heights
    rows = (
        (
            format_float(hist.bin_edges[i]),
            format_float(hist.bin_edges[i + 1]),
            int(hist.counts[i]),
            format_float(heights[i]),
        )
        for i in range(hist.n_bins)
    )
    _write_rows(path, ("bin_left", "bin_right", "count", "normalized_height"), rows)


def write_density_csv(density: SpectralDensity, path: Path | str) -> None:
    support = density.in_support(density.grid)
    rows = (
        (format_float(x), format_float(rho), int(flag))
        for x, rho, flag in zip(density.grid, density.values, support, strict=True)
    )
    _write_rows(path, ("x", "rho", "in_support"), rows)


def density_to_dict(density: SpectralDensity) -> dict[str, Any]:
    return {
        "grid": _floats(density.grid),
        "values": _floats(density.values),
        "support_intervals": [[lo, hi] for lo, hi in density.support_intervals],
        "smoothing_offset": float(density.smoothing_offset),
        "clipped_mass": float(density.clipped_mass),
        "invalid_points": int(density.invalid_points),
        "support_threshold": float(density.support_threshold),
    }


def density_from_dict(data: dict[str, Any]) -> SpectralDensity:
    return SpectralDensity(
        grid=np.asarray(data["grid"], dtype=np.float64),
        values=np.asarray(data["values"], dtype=np.float64),
        support_intervals=tuple((float(lo), float(hi)) for lo, hi in data["support_intervals"]),
        smoothing_offset=float(data["smoothing_offset"]),
        clipped_mass=float(data.get("clipped_mass", 0.0)),
        invalid_points=int(data.get("invalid_points", 0)),
        support_threshold=float(data.get("support_threshold", 0.0)),
    )


def report_to_dict(report: DetectionReport) -> dict[str, Any]:
    data: dict[str, Any] = {
        "polynomial": report.polynomial.value,
        "n": report.n_channels,
        "eigenvalues": _floats(report.eigenvalues),
        "outliers": _floats(report.outliers),
        "support": [[lo, hi] for lo, hi in report.support_used],
        "margin_eps": report.margin_eps,
        "s": report.s if math.isfinite(report.s) else None,
        "verdict": report.verdict.value,
    }
    if report.degenerate_denominator:
        data["degenerate_denominator"] = True
    if report.label is not None:
        data["label"] = report.label
    return data


def location_to_dict(location: LocationReport) -> dict[str, Any]:
    data: dict[str, Any] = {
        "t_index": location.t_index,
        "L": _floats(location.indicator),
        "loc": location.loc,
        "outlier_count": location.outlier_count,
    }
    if location.loc_label is not None:
        data["loc_label"] = location.loc_label
    return data


def write_location_series_csv(results: Sequence[WindowResult], path: Path | str) -> None:
    """One row per window: time index, detection summary, then L_0..L_{N-1}."""
    n = results[0].location.indicator.size if results else 0
    header = ["t_index", "s", "verdict", "outlier_count", "loc"] + [f"L_{i}" for i in range(n)]
    rows = (
        [
            r.t_index,
            format_float(r.detection.s),
            r.detection.verdict.value,
            r.location.outlier_count,
            "" if r.location.loc is None else r.location.loc,
            *(format_float(v) for v in r.location.indicator),
        ]
        for r in results
    )
    _write_rows(path, header, rows)


def spectrum_to_dict(spectrum: ProductSpectrum) -> dict[str, Any]:
    return {
        "n": int(spectrum.eigenvalues.size),
        "bulk_radius": float(spectrum.bulk_radius),
        "delta": float(spectrum.delta),
        "scale_factor": float(spectrum.scale_factor),
        "outliers": [[float(z.real), float(z.imag)] for z in spectrum.outliers],
    }


def write_spectrum_csv(spectrum: ProductSpectrum, path: Path | str) -> None:
    mask = spectrum.outlier_mask
    rows = (
        (format_float(z.real), format_float(z.imag), int(flag))
        for z, flag in zip(spectrum.eigenvalues, mask, strict=True)
    )
    _write_rows(path, ("re", "im", "is_outlier"), rows)
