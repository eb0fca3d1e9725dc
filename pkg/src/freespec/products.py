"""Complex spectra of normalized products of data matrices."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from freespec.errors import InvalidArgumentError
from freespec.models import ComplexArray, FloatArray, MeasurementWindow, ProductSpectrum
from freespec.randmat import SeedLike

log = logging.getLogger(__name__)

DEFAULT_DELTA = 0.15
MAX_SIGNAL_RANK = 5


def _sorted_by_modulus(values: ComplexArray) -> ComplexArray:
    order = np.argsort(-np.abs(values), kind="stable")
    return values[order]


def product_spectrum(
    window0: MeasurementWindow,
    window1: MeasurementWindow,
    delta: float = DEFAULT_DELTA,
    noise_scales: tuple[float, float] = (1.0, 1.0),
) -> ProductSpectrum:
    """Eigenvalues of (V₀/√N)(V₁/√N), with outliers beyond (1+δ)·σ₀σ₁.

    Eigenvalues are ordered by decreasing modulus.

    Raises:
        InvalidArgumentError: If either window is not square, the shapes
            differ, or *delta* or a noise scale is not positive.
    """
    for name, window in (("window0", window0), ("window1", window1)):
        if window.n_channels != window.n_samples:
            raise InvalidArgumentError(
                f"{name} must be square, got {window.n_channels}×{window.n_samples}"
            )
    if window0.n_channels != window1.n_channels:
        raise InvalidArgumentError(
            f"window sizes differ: {window0.n_channels} vs {window1.n_channels}"
        )
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    if any(not scale > 0 for scale in noise_scales):
        raise InvalidArgumentError(f"noise scales must be positive, got {noise_scales}")

    n = window0.n_channels
    product = (window0.data @ window1.data) / n
    eigenvalues = _sorted_by_modulus(np.linalg.eigvals(product).astype(np.complex128))
    bulk_radius = float(np.prod(noise_scales))
    threshold = (1.0 + delta) * bulk_radius
    outliers = eigenvalues[np.abs(eigenvalues) > threshold]
    log.info(
        "product spectrum N=%d: %d outlier(s) beyond radius %.4g", n, outliers.size, threshold
    )
    return ProductSpectrum(
        eigenvalues=eigenvalues,
        bulk_radius=bulk_radius,
        delta=float(delta),
        outliers=outliers,
        scale_factor=1.0 / n,
    )


def rank1_outlier_prediction(
    signal_matrix: FloatArray, bulk_radius: float = 1.0, delta: float = DEFAULT_DELTA
) -> ComplexArray:
    """Eigenvalues of a low-rank deterministic product term outside the bulk disk.

    Large-N product outliers sit at these positions up to o(1).

    Raises:
        InvalidArgumentError: If the matrix is not square or has numerical
            rank above ``MAX_SIGNAL_RANK``.
    """
    matrix = np.asarray(signal_matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError(f"signal matrix must be square, got {matrix.shape}")
    rank = int(np.linalg.matrix_rank(matrix))
    if rank > MAX_SIGNAL_RANK:
        raise InvalidArgumentError(
            f"signal matrix has rank {rank}; at most {MAX_SIGNAL_RANK} is supported"
        )
    eigenvalues = _sorted_by_modulus(np.linalg.eigvals(matrix).astype(np.complex128))
    return eigenvalues[np.abs(eigenvalues) > (1.0 + delta) * bulk_radius]


def spiked_factor_windows(
    perturbations: Sequence[FloatArray], seed: SeedLike = 0
) -> tuple[MeasurementWindow, ...]:
    """Square windows Nₖ + √n·Aₖ with independent standard Gaussian noise Nₖ.

    Passing them to :func:`product_spectrum` evaluates Πₖ(Nₖ/√n + Aₖ).
    """
    if not perturbations:
        raise InvalidArgumentError("at least one perturbation is required")
    shapes = {np.shape(a) for a in perturbations}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"perturbations differ in shape: {sorted(shapes)}")
    n, m = shapes.pop()
    if n != m:
        raise InvalidArgumentError(f"perturbations must be square, got {n}×{m}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    windows = []
    for child, perturbation in zip(root.spawn(len(perturbations)), perturbations, strict=True):
        noise = np.random.default_rng(child).standard_normal((n, n))
        windows.append(MeasurementWindow(noise + np.sqrt(n) * np.asarray(perturbation)))
    return tuple(windows)
