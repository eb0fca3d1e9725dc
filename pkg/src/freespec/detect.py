"""Outlier-based hypothesis testing of covariance polynomials against their ASD."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray

from freespec.cache import AsdCache
from freespec.errors import InvalidArgumentError, InvalidAsdError
from freespec.freeprob import (
    DEFAULT_CORNER_EPS,
    DEFAULT_GRID_POINTS,
    asd_p1,
    asd_p2,
    default_grid,
    default_smoothing_offset,
)
from freespec.models import (
    DetectionReport,
    FixedPointConfig,
    FloatArray,
    MpParams,
    PolynomialKind,
    SampleCovariance,
    SpectralDensity,
    Verdict,
)
from freespec.randmat import DEFAULT_ETA, preprocess, sample_covariance, sample_gaussian_matrix

log = logging.getLogger(__name__)

_DEGENERATE_DENOMINATOR = 1e-9


def evaluate_polynomial(
    kind: PolynomialKind, sigma0: SampleCovariance, sigma1: SampleCovariance
) -> FloatArray:
    """Return Σ₁ − Σ₀ (P1) or (Σ₁ − Σ₀)² (P2) as a symmetric matrix."""
    if sigma0.matrix.shape != sigma1.matrix.shape:
        raise InvalidArgumentError(
            f"Covariance shapes differ: {sigma0.matrix.shape} vs {sigma1.matrix.shape}"
        )
    diff = sigma1.matrix - sigma0.matrix
    if kind is PolynomialKind.P1:
        return diff
    square = diff @ diff
    return (square + square.T) / 2.0


def _outlier_mask(
    eigenvalues: FloatArray, support: Sequence[tuple[float, float]], margin_eps: float
) -> NDArray[np.bool_]:
    # Distance to the nearest interval; points on the dilated boundary stay in the bulk.
    distance = np.full(eigenvalues.shape, np.inf)
    for lo, hi in support:
        gap = np.maximum(np.maximum(lo - eigenvalues, eigenvalues - hi), 0.0)
        distance = np.minimum(distance, gap)
    return distance > margin_eps


def signal_statistic(
    eigenvalues: FloatArray, outlier_mask: NDArray[np.bool_]
) -> tuple[float, bool]:
    """Return ``(s, degenerate)`` with s = Σ|λ_out| / Σ|λ_bulk|.

    ``s`` is 0 without outliers and +inf, flagged degenerate, when the bulk
    magnitude vanishes.
    """
    if not np.any(outlier_mask):
        return 0.0, False
    numerator = float(np.abs(eigenvalues[outlier_mask]).sum())
    denominator = float(np.abs(eigenvalues[~outlier_mask]).sum())
    if denominator < _DEGENERATE_DENOMINATOR:
        return float("inf"), True
    return numerator / denominator, False


def edge_fluctuation(asd: SpectralDensity, n_channels: int) -> float:
    """Finite-N spread of the outer support edges.

    Near a square-root edge ρ(x) ≈ C·√|x − E|; one eigenvalue's worth of mass
    then extends (3 / (2·C·N))^(2/3) past the edge.
    """
    lo, hi = asd.support_bounds
    step = 0.05 * (hi - lo)
    if step <= 0:
        return 0.0
    spread = 0.0
    for edge, inward in ((lo, 1.0), (hi, -1.0)):
        rho = float(np.interp(edge + inward * step, asd.grid, asd.values))
        if rho <= 0:
            continue
        constant = rho / np.sqrt(step)
        spread = max(spread, (3.0 / (2.0 * constant * n_channels)) ** (2.0 / 3.0))
    return spread


def default_margin(asd: SpectralDensity, n_channels: int) -> float:
    """Half a grid step plus 2% of the support width plus the edge fluctuation."""
    if not asd.support_intervals:
        raise InvalidAsdError("ASD has empty support")
    return 0.5 * asd.spacing + 0.02 * asd.support_width() + edge_fluctuation(asd, n_channels)


def detect(
    kind: PolynomialKind,
    sigma0: SampleCovariance,
    sigma1: SampleCovariance,
    asd: SpectralDensity,
    margin_eps: float | None = None,
    label: str | None = None,
) -> DetectionReport:
    """Test the spectrum of P(Σ₀, Σ₁) against the support of *asd*.

    Args:
        kind:       Which polynomial to evaluate.
        sigma0:     Reference covariance.
        sigma1:     Covariance under test.
        asd:        Asymptotic density computed for *kind* and matching MP laws.
        margin_eps: Dilation of the support; :func:`default_margin` when omitted.
        label:      Optional name carried into the report.

    Raises:
        InvalidAsdError:      If *asd* has no support.
        InvalidArgumentError: If the covariances differ in shape or the margin is negative.
    """
    if not asd.support_intervals:
        raise InvalidAsdError("ASD has empty support; recompute it on a wider grid")
    if margin_eps is None:
        margin_eps = default_margin(asd, sigma0.n_channels)
    elif margin_eps < 0:
        raise InvalidArgumentError(f"margin_eps must be >= 0, got {margin_eps}")

    matrix = evaluate_polynomial(kind, sigma0, sigma1)
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    mask = _outlier_mask(eigenvalues, asd.support_intervals, margin_eps)
    s, degenerate = signal_statistic(eigenvalues, mask)
    verdict = Verdict.ANOMALY if np.any(mask) else Verdict.H0_RETAINED
    log.info(
        "%s%s: %d outlier(s), s=%.4g, verdict %s",
        kind.value.upper(),
        f" [{label}]" if label else "",
        int(mask.sum()),
        s,
        verdict.value,
    )
    return DetectionReport(
        polynomial=kind,
        eigenvalues=eigenvalues,
        outliers=eigenvalues[mask],
        outlier_indices=tuple(int(i) for i in np.flatnonzero(mask)),
        support_used=asd.support_intervals,
        margin_eps=float(margin_eps),
        s=s,
        verdict=verdict,
        degenerate_denominator=degenerate,
        eigenvectors=eigenvectors,
        label=label,
    )


def ordering_check(reports: Sequence[DetectionReport]) -> list[DetectionReport]:
    """Sort reports ascending by s; ties keep their input order."""
    kinds = {r.polynomial for r in reports}
    if len(kinds) > 1:
        raise InvalidArgumentError("ordering_check needs reports of a single polynomial kind")
    return sorted(reports, key=lambda r: r.s)


def compute_asd(
    kind: PolynomialKind,
    params0: MpParams,
    params1: MpParams,
    grid_points: int = DEFAULT_GRID_POINTS,
    config: FixedPointConfig | None = None,
    smoothing_offset: float | None = None,
    corner_eps: float = DEFAULT_CORNER_EPS,
    cache: AsdCache | None = None,
) -> SpectralDensity:
    """ASD of *kind* on its default grid, served from *cache* when possible."""
    config = config or FixedPointConfig()
    grid = default_grid(kind, params0, params1, grid_points)
    offset = default_smoothing_offset(grid) if smoothing_offset is None else smoothing_offset

    def _compute() -> SpectralDensity:
        if kind is PolynomialKind.P1:
            return asd_p1(params0, params1, grid, config, offset)
        return asd_p2(params0, params1, grid, config, corner_eps, offset)

    if cache is None:
        return _compute()
    key = AsdCache.key(
        kind=kind.value,
        params0=params0.as_dict(),
        params1=params1.as_dict(),
        grid=[float(grid[0]), float(grid[-1]), int(grid.size)],
        smoothing_offset=offset,
        corner_eps=corner_eps if kind is PolynomialKind.P2 else None,
        tolerance=config.tolerance,
        max_iterations=config.max_iterations,
        damping=config.damping,
    )
    return cache.get_or_compute(key, _compute)


def false_alarm_rate(
    kind: PolynomialKind,
    asd: SpectralDensity,
    n: int,
    t: int,
    trials: int = 100,
    seed: int = 0,
    margin_eps: float | None = None,
    eta: float = DEFAULT_ETA,
) -> float:
    """Fraction of noise-only trials that report any outlier."""
    alarms = 0
    for child in np.random.SeedSequence(seed).spawn(trials):
        s0, s1, n0, n1 = child.spawn(4)
        sigma0 = sample_covariance(preprocess(sample_gaussian_matrix(n, t, s0), eta, n0))
        sigma1 = sample_covariance(preprocess(sample_gaussian_matrix(n, t, s1), eta, n1))
        if detect(kind, sigma0, sigma1, asd, margin_eps).is_anomaly:
            alarms += 1
    rate = alarms / trials
    log.info("false-alarm rate for %s over %d trials: %.3f", kind.value, trials, rate)
    return rate
