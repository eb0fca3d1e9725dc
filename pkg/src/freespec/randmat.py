"""Random matrix sampling, preprocessing and the Marchenko–Pastur reference law."""

from __future__ import annotations

import logging
from collections.abc import Callable
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from freespec.errors import DegenerateRowError, InvalidArgumentError
from freespec.models import (
    EsdHistogram,
    FloatArray,
    MeasurementWindow,
    MpCheckResult,
    MpParams,
    SampleCovariance,
)

log = logging.getLogger(__name__)

SeedLike = int | np.random.SeedSequence

DEFAULT_ETA = 1e-5
DEFAULT_REPETITIONS = 10

_CDF_NODES = 4097


def _check_shape(n: int, t: int) -> None:
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    if t < n:
        raise InvalidArgumentError(f"t={t} < n={n}: the aspect ratio N/T must lie in (0, 1]")


def sample_gaussian_matrix(n: int, t: int, seed: SeedLike) -> MeasurementWindow:
    """Draw an n×t window of i.i.d. standard normal entries."""
    _check_shape(n, t)
    rng = np.random.default_rng(seed)
    return MeasurementWindow(rng.standard_normal((n, t)))


def standardize(data: FloatArray) -> FloatArray:
    """Scale each row to empirical mean 0 and variance 1 (ddof=0).

    Raises:
        DegenerateRowError: If a row has zero variance.
    """
    centered = data - data.mean(axis=1, keepdims=True)
    # Second pass removes the rounding left by the first when |mean| >> std.
    centered -= centered.mean(axis=1, keepdims=True)
    std = np.sqrt(np.mean(centered**2, axis=1))
    degenerate = np.flatnonzero(std == 0.0)
    if degenerate.size:
        raise DegenerateRowError(degenerate)
    return centered / std[:, None]


def preprocess(
    window: MeasurementWindow, eta: float = DEFAULT_ETA, seed: SeedLike = 0
) -> MeasurementWindow:
    """Add white noise of scale *eta*, then standardize every channel.

    Args:
        window: Raw measurements.
        eta:    Standard deviation of the regularizing noise. ``0`` skips it.
        seed:   Seed (or seed sequence) for the noise.

    Returns:
        A new window whose rows have mean 0 and variance 1.

    Raises:
        InvalidArgumentError: If *eta* is negative.
        DegenerateRowError:   If a row is constant and *eta* is 0.
    """
    if eta < 0:
        raise InvalidArgumentError(f"eta must be >= 0, got {eta}")
    data = window.data
    if eta > 0:
        rng = np.random.default_rng(seed)
        data = data + eta * rng.standard_normal(data.shape)
    return MeasurementWindow(standardize(data), window.channel_labels)


def sample_covariance(window: MeasurementWindow) -> SampleCovariance:
    """Return Σ = XXᵀ/T for a (preprocessed) window."""
    x = window.data
    sigma = x @ x.T / window.n_samples
    return SampleCovariance((sigma + sigma.T) / 2.0, window.n_samples)


def pooled_eigenvalues(
    window: MeasurementWindow,
    repetitions: int = DEFAULT_REPETITIONS,
    eta: float = DEFAULT_ETA,
    seed: SeedLike = 0,
) -> FloatArray:
    """Eigenvalues of Σ over *repetitions* independent re-noisings of *window*."""
    if repetitions < 1:
        raise InvalidArgumentError(f"repetitions must be >= 1, got {repetitions}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    pooled = [
        sample_covariance(preprocess(window, eta, child)).eigenvalues
        for child in root.spawn(repetitions)
    ]
    return np.concatenate(pooled)


def esd(
    window: MeasurementWindow,
    repetitions: int = DEFAULT_REPETITIONS,
    eta: float = DEFAULT_ETA,
    n_bins: int | None = None,
    seed: SeedLike = 0,
) -> EsdHistogram:
    """Pooled empirical spectral distribution of the preprocessed window.

    Bins follow the Freedman–Diaconis rule unless *n_bins* is given.
    """
    if n_bins is not None and n_bins < 2:
        raise InvalidArgumentError(f"n_bins must be >= 2, got {n_bins}")
    eigs = pooled_eigenvalues(window, repetitions, eta, seed)
    return histogram(eigs, n_bins)


def histogram(eigenvalues: FloatArray, n_bins: int | None = None) -> EsdHistogram:
    bins: int | str = "fd" if n_bins is None else n_bins
    edges = np.histogram_bin_edges(eigenvalues, bins=bins)
    if edges.size < 3:
        edges = np.histogram_bin_edges(eigenvalues, bins=2)
    counts, _ = np.histogram(eigenvalues, bins=edges)
    return EsdHistogram(edges, counts, int(eigenvalues.size))


def mp_support(params: MpParams) -> tuple[float, float]:
    return params.support


def mp_density(params: MpParams, x: FloatArray | float) -> FloatArray:
    """Marchenko–Pastur density ρ(x) = √((b−x)(x−a)) / (2π c σ² x) on [a, b], else 0."""
    a, b = params.support
    xs = np.asarray(x, dtype=np.float64)
    inside = (xs >= a) & (xs <= b) & (xs > 0)
    safe = np.where(inside, xs, 1.0)
    root = np.sqrt(np.clip((b - safe) * (safe - a), 0.0, None))
    return np.where(inside, root / (2.0 * np.pi * params.ratio_c * params.variance * safe), 0.0)


def _angle_integrand(params: MpParams, theta: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Nodes t(θ) = a + (b−a)(1−cos θ)/2 and the smooth integrand ρ(t)·dt/dθ."""
    a, b = params.support
    t = a + (b - a) * (1.0 - np.cos(theta)) / 2.0
    scale = 2.0 * np.pi * params.ratio_c * params.variance
    if a == 0.0:
        # sin²θ / t is bounded at θ = 0 when the law touches the origin.
        integrand = b * (1.0 + np.cos(theta)) / (2.0 * scale)
    else:
        integrand = (b - a) ** 2 * np.sin(theta) ** 2 / (4.0 * scale * t)
    return t, integrand


@lru_cache(maxsize=64)
def mp_quadrature(params: MpParams, nodes: int = 512) -> tuple[FloatArray, FloatArray]:
    """Gauss–Legendre nodes and unit-mass weights for integrals against the MP law."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    theta = np.pi * (x + 1.0) / 2.0
    t, integrand = _angle_integrand(params, theta)
    weights = integrand * w * np.pi / 2.0
    return t, weights / weights.sum()


@lru_cache(maxsize=64)
def _cdf_table(params: MpParams) -> tuple[FloatArray, FloatArray]:
    theta = np.linspace(0.0, np.pi, _CDF_NODES)
    t, integrand = _angle_integrand(params, theta)
    cumulative = cumulative_trapezoid(integrand, theta, initial=0.0)
    return t, cumulative / cumulative[-1]


def mp_cdf(params: MpParams, x: FloatArray | float) -> FloatArray:
    """Marchenko–Pastur distribution function."""
    t, table = _cdf_table(params)
    return np.interp(x, t, table, left=0.0, right=1.0)


def l1_distance(hist: EsdHistogram, cdf: Callable[[FloatArray], FloatArray]) -> float:
    """Binned L1 distance between a histogram and a reference distribution.

    Compares per-bin probability masses and adds the reference mass that falls
    outside the histogram range.
    """
    reference = np.asarray(cdf(hist.bin_edges), dtype=np.float64)
    reference_mass = np.diff(reference)
    empirical_mass = hist.counts / hist.total_eigenvalues
    outside = 1.0 - (reference[-1] - reference[0])
    return float(np.abs(empirical_mass - reference_mass).sum() + max(outside, 0.0))


def mp_check(
    window: MeasurementWindow,
    repetitions: int = DEFAULT_REPETITIONS,
    eta: float = DEFAULT_ETA,
    n_bins: int | None = None,
    seed: SeedLike = 0,
    params: MpParams | None = None,
) -> MpCheckResult:
    """Fit the pooled ESD of *window* against the MP law of matching aspect ratio."""
    params = params or MpParams.for_shape(window.n_channels, window.n_samples)
    eigs = pooled_eigenvalues(window, repetitions, eta, seed)
    hist = histogram(eigs, n_bins)
    ks = stats.kstest(eigs, lambda x: mp_cdf(params, x))
    distance = l1_distance(hist, lambda x: mp_cdf(params, x))
    log.info(
        "MP check over %d eigenvalues: KS=%.4f, L1=%.4f", eigs.size, ks.statistic, distance
    )
    return MpCheckResult(hist, params, float(ks.statistic), distance)
