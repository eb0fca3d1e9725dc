"""Fault location from outlier eigenvectors, plus delocalization diagnostics."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import replace

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from scipy import stats

from freespec.detect import detect
from freespec.errors import InvalidArgumentError, NoAnomalyError, WeightingError
from freespec.models import (
    ComponentDistribution,
    DetectionReport,
    FloatArray,
    LocationReport,
    MeasurementWindow,
    PolynomialKind,
    SpectralDensity,
    WindowResult,
)
from freespec.randmat import DEFAULT_ETA, preprocess, sample_covariance

log = logging.getLogger(__name__)

_ORTHONORMAL_TOL = 1e-8


def _label(labels: Sequence[str] | None, loc: int | None) -> str | None:
    if labels is None or loc is None:
        return None
    return labels[loc]


def locate(
    report: DetectionReport,
    eigenvectors: FloatArray | None = None,
    channel_labels: Sequence[str] | None = None,
) -> LocationReport:
    """Weighted squared eigenvector components over the outliers of *report*.

    Lᵢ = Σ wₖ·vᵢₖ² / Σ wₖ with wₖ = |λₖ| for P1 and wₖ = λₖ for P2.

    Args:
        report:         A detection report with at least one outlier.
        eigenvectors:   Orthonormal eigenvectors, column k paired with
                        ``report.eigenvalues[k]``. Defaults to the ones the
                        report carries.
        channel_labels: Optional names used for ``loc_label``.

    Raises:
        NoAnomalyError:       If the report has no outliers.
        WeightingError:       If P2 outliers have mixed signs or zero total weight.
        InvalidArgumentError: If the eigenvectors are missing or not orthonormal.
    """
    vectors = report.eigenvectors if eigenvectors is None else np.asarray(eigenvectors)
    if vectors is None:
        raise InvalidArgumentError("no eigenvectors supplied for location")
    if not report.outlier_indices:
        raise NoAnomalyError("no outliers: location is undefined under H0")
    n = report.n_channels
    if vectors.shape != (n, n):
        raise InvalidArgumentError(f"eigenvectors must be {n}×{n}, got {vectors.shape}")
    if np.max(np.abs(vectors.T @ vectors - np.eye(n))) >= _ORTHONORMAL_TOL:
        raise InvalidArgumentError("eigenvector columns are not orthonormal")

    idx = np.asarray(report.outlier_indices)
    lam = report.eigenvalues[idx]
    if report.polynomial is PolynomialKind.P1:
        weights = np.abs(lam)
    else:
        if np.any(lam < 0) and np.any(lam > 0):
            raise WeightingError("outlier eigenvalues of mixed sign")
        weights = lam
    total = float(weights.sum())
    if total == 0.0:
        raise WeightingError("outlier weights sum to zero")

    indicator = (vectors[:, idx] ** 2) @ weights / total
    loc = int(np.argmax(indicator))
    return LocationReport(
        indicator=indicator,
        loc=loc,
        outlier_count=int(idx.size),
        eigenpairs_used=tuple((float(lam[j]), vectors[:, k].copy()) for j, k in enumerate(idx)),
        loc_label=_label(channel_labels, loc),
    )


def eigenvector_component_distribution(
    eigenvectors: FloatArray, selection: Sequence[int], bins: int = 30
) -> ComponentDistribution:
    """Pool selected eigenvector components, scaled so Σᵢ vᵢₖ² = N, against N(0, 1)."""
    if len(selection) == 0:
        raise InvalidArgumentError("selection must name at least one eigenvector")
    vectors = np.asarray(eigenvectors, dtype=np.float64)[:, list(selection)]
    norms = np.linalg.norm(vectors, axis=0)
    if np.any(norms == 0):
        raise InvalidArgumentError("selected eigenvectors must be non-zero")
    components = (vectors * np.sqrt(vectors.shape[0]) / norms).ravel()
    ks = stats.kstest(components, "norm")
    counts, edges = np.histogram(components, bins=bins)
    return ComponentDistribution(
        bin_edges=edges,
        counts=counts,
        ks_statistic=float(ks.statistic),
        p_value=float(ks.pvalue),
        n_components=int(components.size),
    )


def lim_baseline(window0: MeasurementWindow, window1: MeasurementWindow) -> LocationReport:
    """Squared components of the top left singular vector of window1 − window0."""
    if window0.data.shape != window1.data.shape:
        raise InvalidArgumentError(
            f"Window shapes differ: {window0.data.shape} vs {window1.data.shape}"
        )
    diff = window1.data - window0.data
    n = diff.shape[0]
    u, singular, _ = np.linalg.svd(diff, full_matrices=False)
    if singular[0] == 0.0:
        return LocationReport(indicator=np.full(n, 1.0 / n), loc=0, outlier_count=0)
    indicator = u[:, 0] ** 2
    loc = int(np.argmax(indicator))
    return LocationReport(
        indicator=indicator,
        loc=loc,
        outlier_count=1,
        eigenpairs_used=((float(singular[0]), u[:, 0].copy()),),
        loc_label=_label(window1.channel_labels, loc),
    )


def sliding_locate(
    reference: MeasurementWindow,
    stream: MeasurementWindow,
    kind: PolynomialKind,
    asd: SpectralDensity,
    margin_eps: float | None = None,
    stride: int = 1,
    eta: float = DEFAULT_ETA,
    seed: int = 0,
    show_progress: bool = False,
) -> list[WindowResult]:
    """Detect and locate over every window of *stream* with the reference's length.

    Σ₀ is computed once from *reference*. Each window is labelled by its
    temporal end edge. Windows without outliers carry an all-zero indicator
    and ``loc=None``.
    """
    if stride < 1:
        raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
    if stream.n_channels != reference.n_channels:
        raise InvalidArgumentError("reference and stream must have the same channels")
    width = reference.n_samples
    if stream.n_samples < width:
        raise InvalidArgumentError("stream is shorter than the reference window")

    sigma0 = sample_covariance(preprocess(reference, eta, np.random.SeedSequence([seed, 0])))
    starts = range(0, stream.n_samples - width + 1, stride)
    labels = stream.channel_labels
    results: list[WindowResult] = []

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=Console(stderr=True),
        transient=True,
        disable=not show_progress,
    ) as progress:
        task = progress.add_task("Scanning windows…", total=len(starts))
        for start in starts:
            t_index = start + width - 1
            window = stream.columns(start, start + width)
            noise_seed = np.random.SeedSequence([seed, 1, start])
            sigma1 = sample_covariance(preprocess(window, eta, noise_seed))
            report = detect(kind, sigma0, sigma1, asd, margin_eps, label=f"t={t_index}")
            if report.is_anomaly:
                location = replace(locate(report, channel_labels=labels), t_index=t_index)
            else:
                location = LocationReport(
                    indicator=np.zeros(stream.n_channels),
                    loc=None,
                    outlier_count=0,
                    t_index=t_index,
                )
            results.append(WindowResult(t_index=t_index, detection=report, location=location))
            progress.advance(task)

    log.info(
        "scanned %d window(s), %d anomalous",
        len(results),
        sum(r.detection.is_anomaly for r in results),
    )
    return results
