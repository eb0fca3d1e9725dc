"""Data models for freespec."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import cumulative_trapezoid

from freespec.errors import InvalidArgumentError

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

EVENT_KINDS = ("none", "step", "ramp", "chaos")
EventKind = Literal["none", "step", "ramp", "chaos"]

_SYMMETRY_TOL = 1e-12


class PolynomialKind(enum.StrEnum):
    """Test-statistic polynomial in the two sample covariances."""

    P1 = "p1"  # Σ₁ − Σ₀
    P2 = "p2"  # (Σ₁ − Σ₀)²


class Verdict(enum.StrEnum):
    H0_RETAINED = "H0_retained"
    ANOMALY = "anomaly"


@dataclass(frozen=True, eq=False)
class MeasurementWindow:
    """An N×T block of measurements, one row per channel."""

    data: FloatArray
    channel_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidArgumentError(f"Window data must be 2-D, got shape {data.shape}")
        n, t = data.shape
        if n < 2:
            raise InvalidArgumentError(f"Window needs at least 2 channels, got {n}")
        if t < n:
            raise InvalidArgumentError(
                f"Window has T={t} < N={n}; the aspect ratio N/T must lie in (0, 1]"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("Window data contains non-finite values")
        object.__setattr__(self, "data", data)
        if self.channel_labels is not None:
            labels = tuple(str(label) for label in self.channel_labels)
            if len(labels) != n:
                raise InvalidArgumentError(
                    f"Got {len(labels)} channel labels for {n} channels"
                )
            object.__setattr__(self, "channel_labels", labels)

    @property
    def n_channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[1])

    @property
    def aspect_ratio(self) -> float:
        return self.n_channels / self.n_samples

    def columns(self, start: int, stop: int) -> MeasurementWindow:
        """Return the sub-window of samples ``[start, stop)``."""
        return MeasurementWindow(self.data[:, start:stop], self.channel_labels)


@dataclass(frozen=True, eq=False)
class SampleCovariance:
    """Real symmetric sample covariance Σ = XXᵀ/T."""

    matrix: FloatArray
    n_samples_used: int

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError(f"Covariance must be square, got shape {matrix.shape}")
        if np.max(np.abs(matrix - matrix.T), initial=0.0) > _SYMMETRY_TOL:
            raise InvalidArgumentError("Covariance matrix is not symmetric")
        if self.n_samples_used < 1:
            raise InvalidArgumentError("n_samples_used must be positive")
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_channels(self) -> int:
        return int(self.matrix.shape[0])

    @cached_property
    def eigenvalues(self) -> FloatArray:
        """Ascending eigenvalues."""
        return np.linalg.eigvalsh(self.matrix)

    def is_positive_semidefinite(self) -> bool:
        eigs = self.eigenvalues
        return bool(eigs[0] >= -1e-10 * max(float(eigs[-1]), 0.0))

    def scaled(self, factor: float) -> SampleCovariance:
        return SampleCovariance(self.matrix * factor, self.n_samples_used)


@dataclass(frozen=True, eq=False)
class EsdHistogram:
    """Pooled histogram of eigenvalues."""

    bin_edges: FloatArray
    counts: NDArray[np.int64]
    total_eigenvalues: int

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise InvalidArgumentError("bin_edges must be strictly ascending with >= 2 entries")
        if counts.size != edges.size - 1:
            raise InvalidArgumentError("len(counts) must equal len(bin_edges) - 1")
        if np.any(counts < 0) or int(counts.sum()) != self.total_eigenvalues:
            raise InvalidArgumentError("counts must be non-negative and sum to total_eigenvalues")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def normalized_heights(self) -> FloatArray:
        """Heights of a histogram that integrates to 1."""
        return self.counts / (self.total_eigenvalues * np.diff(self.bin_edges))


@dataclass(frozen=True)
class MpParams:
    """Marchenko–Pastur law with ratio c = N/T and entry variance σ²."""

    ratio_c: float = 1.0
    variance: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio_c <= 1.0:
            raise InvalidArgumentError(f"ratio_c must lie in (0, 1], got {self.ratio_c}")
        if not self.variance > 0.0:
            raise InvalidArgumentError(f"variance must be positive, got {self.variance}")

    @classmethod
    def for_shape(cls, n: int, t: int, variance: float = 1.0) -> MpParams:
        return cls(ratio_c=n / t, variance=variance)

    @property
    def lower_edge(self) -> float:
        return self.variance * (1.0 - np.sqrt(self.ratio_c)) ** 2

    @property
    def upper_edge(self) -> float:
        return self.variance * (1.0 + np.sqrt(self.ratio_c)) ** 2

    @property
    def support(self) -> tuple[float, float]:
        return float(self.lower_edge), float(self.upper_edge)

    def as_dict(self) -> dict[str, float]:
        return {"ratio_c": float(self.ratio_c), "variance": float(self.variance)}


@dataclass(frozen=True, eq=False)
class MpCheckResult:
    """Fit of a pooled ESD against its Marchenko–Pastur reference."""

    histogram: EsdHistogram
    params: MpParams
    ks_statistic: float
    l1_distance: float


@dataclass(frozen=True, eq=False)
class OperatorPoint:
    """A k×k complex matrix used as argument or value of an operator-valued transform."""

    entries: ComplexArray

    def __post_init__(self) -> None:
        entries = np.atleast_2d(np.asarray(self.entries, dtype=np.complex128))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgumentError(f"OperatorPoint must be square, got {entries.shape}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def scalar(cls, z: complex) -> OperatorPoint:
        return cls(np.array([[z]], dtype=np.complex128))

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    @property
    def imaginary_part(self) -> ComplexArray:
        """Hermitian matrix (b − bᴴ)/2i."""
        return (self.entries - self.entries.conj().T) / 2j

    def is_upper(self) -> bool:
        """True when the imaginary part is positive definite."""
        return bool(np.linalg.eigvalsh(self.imaginary_part)[0] > 0.0)


@dataclass(frozen=True)
class FixedPointConfig:
    """Numerics of the subordination iteration."""

    tolerance: float = 1e-9
    max_iterations: int = 10000
    damping: float = 1.0

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise InvalidArgumentError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise InvalidArgumentError("damping must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Density recovered by Stieltjes inversion on a real grid."""

    grid: FloatArray
    values: FloatArray
    support_intervals: tuple[tuple[float, float], ...]
    smoothing_offset: float
    clipped_mass: float = 0.0
    invalid_points: int = 0
    support_threshold: float = 0.0

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise InvalidArgumentError("grid must be strictly ascending with >= 2 points")
        if values.shape != grid.shape:
            raise InvalidArgumentError("values must match the grid")
        if np.any(values < 0):
            raise InvalidArgumentError("density values must be non-negative")
        if not self.smoothing_offset > 0:
            raise InvalidArgumentError("smoothing_offset must be positive")
        intervals = tuple((float(lo), float(hi)) for lo, hi in self.support_intervals)
        for lo, hi in intervals:
            if lo > hi:
                raise InvalidArgumentError(f"support interval [{lo}, {hi}] is reversed")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support_intervals", intervals)

    @property
    def spacing(self) -> float:
        return float(np.median(np.diff(self.grid)))

    @property
    def support_bounds(self) -> tuple[float, float]:
        if not self.support_intervals:
            raise InvalidArgumentError("density has empty support")
        return self.support_intervals[0][0], self.support_intervals[-1][1]

    def support_width(self) -> float:
        lo, hi = self.support_bounds
        return hi - lo

    def total_mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def mean_and_std(self) -> tuple[float, float]:
        mass = self.total_mass()
        mean = float(np.trapezoid(self.grid * self.values, self.grid)) / mass
        var = float(np.trapezoid((self.grid - mean) ** 2 * self.values, self.grid)) / mass
        return mean, float(np.sqrt(var))

    def in_support(self, x: FloatArray) -> NDArray[np.bool_]:
        x = np.asarray(x, dtype=np.float64)
        mask = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.support_intervals:
            mask |= (x >= lo) & (x <= hi)
        return mask

    def cdf(self, x: FloatArray | float) -> FloatArray:
        """Distribution function of the density, normalized to unit mass on the grid."""
        cumulative = cumulative_trapezoid(self.values, self.grid, initial=0.0)
        total = cumulative[-1]
        if total > 0:
            cumulative = cumulative / total
        return np.interp(x, self.grid, cumulative, left=0.0, right=1.0)

    def rescaled(self, factor: float) -> SpectralDensity:
        """Density of αX given the density of X, for α > 0."""
        if not factor > 0:
            raise InvalidArgumentError("rescale factor must be positive")
        return SpectralDensity(
            grid=self.grid * factor,
            values=self.values / factor,
            support_intervals=tuple(
                (lo * factor, hi * factor) for lo, hi in self.support_intervals
            ),
            smoothing_offset=self.smoothing_offset * factor,
            clipped_mass=self.clipped_mass,
            invalid_points=self.invalid_points,
            support_threshold=self.support_threshold / factor,
        )


@dataclass(frozen=True, eq=False)
class Linearization:
    """Self-adjoint linear pencil L = c⊗1 + b₀⊗Σ₀ + b₁⊗Σ₁."""

    c: FloatArray
    b0: FloatArray
    b1: FloatArray

    def __post_init__(self) -> None:
        mats = [np.asarray(m, dtype=np.float64) for m in (self.c, self.b0, self.b1)]
        shape = mats[0].shape
        for name, mat in zip(("c", "b0", "b1"), mats, strict=True):
            if mat.ndim != 2 or mat.shape != shape or shape[0] != shape[1]:
                raise InvalidArgumentError(f"coefficient {name} must be square k×k")
            if not np.array_equal(mat, mat.T):
                raise InvalidArgumentError(f"coefficient {name} must be symmetric")
        object.__setattr__(self, "c", mats[0])
        object.__setattr__(self, "b0", mats[1])
        object.__setattr__(self, "b1", mats[2])

    @property
    def dim(self) -> int:
        return int(self.c.shape[0])

    def matrix(self, sigma0: FloatArray, sigma1: FloatArray) -> FloatArray:
        """The kN×kN pencil evaluated at concrete N×N matrices."""
        s0 = np.atleast_2d(np.asarray(sigma0, dtype=np.float64))
        s1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
        if s0.shape != s1.shape:
            raise InvalidArgumentError("Σ₀ and Σ₁ must have matching shapes")
        eye = np.eye(s0.shape[0])
        return np.kron(self.c, eye) + np.kron(self.b0, s0) + np.kron(self.b1, s1)


@dataclass(frozen=True, eq=False)
class DetectionReport:
    """Outcome of testing one covariance pair against its asymptotic spectrum."""

    polynomial: PolynomialKind
    eigenvalues: FloatArray
    outliers: FloatArray
    outlier_indices: tuple[int, ...]
    support_used: tuple[tuple[float, float], ...]
    margin_eps: float
    s: float
    verdict: Verdict
    degenerate_denominator: bool = False
    eigenvectors: FloatArray | None = field(default=None, repr=False)
    label: str | None = None

    def __post_init__(self) -> None:
        if (self.verdict is Verdict.ANOMALY) != bool(self.outlier_indices):
            raise InvalidArgumentError("verdict must be 'anomaly' exactly when outliers exist")
        if not self.outlier_indices and self.s != 0.0:
            raise InvalidArgumentError("s must be 0 when there are no outliers")

    @property
    def n_channels(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def is_anomaly(self) -> bool:
        return self.verdict is Verdict.ANOMALY


@dataclass(frozen=True, eq=False)
class LocationReport:
    """Per-channel contribution indicator L and its argmax."""

    indicator: FloatArray
    loc: int | None
    outlier_count: int
    eigenpairs_used: tuple[tuple[float, FloatArray], ...] = field(default=(), repr=False)
    t_index: int | None = None
    loc_label: str | None = None

    @property
    def max_indicator(self) -> float:
        return float(np.max(self.indicator))


@dataclass(frozen=True, eq=False)
class WindowResult:
    """Detection and location for one position of a sliding window."""

    t_index: int
    detection: DetectionReport
    location: LocationReport


@dataclass(frozen=True, eq=False)
class ComponentDistribution:
    """Pooled eigenvector components against the standard normal."""

    bin_edges: FloatArray
    counts: NDArray[np.int64]
    ks_statistic: float
    p_value: float
    n_components: int


@dataclass(frozen=True)
class ScenarioEvent:
    """One injected disturbance of a synthetic measurement stream."""

    kind: EventKind
    start_t: int
    end_t: int
    amplitude: float = 0.0
    channel: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise InvalidArgumentError(
                f"Invalid event kind {self.kind!r}; expected one of {EVENT_KINDS}"
            )
        if self.start_t < 0 or self.start_t > self.end_t:
            raise InvalidArgumentError(
                f"Event window [{self.start_t}, {self.end_t}] must satisfy 0 <= start <= end"
            )
        if self.kind in ("step", "ramp") and (self.channel is None or self.channel < 0):
            raise InvalidArgumentError(f"A {self.kind} event needs a non-negative channel")
        if self.kind == "chaos" and self.amplitude < 0:
            raise InvalidArgumentError("chaos amplitude is a variance multiplier and must be >= 0")

    @property
    def is_localized(self) -> bool:
        return self.kind in ("step", "ramp")


@dataclass(frozen=True, eq=False)
class GridModel:
    """Linear sensitivity model V = Ξ·ΔP."""

    mixing: FloatArray
    noise_sigma: float = 1.0

    def __post_init__(self) -> None:
        mixing = np.asarray(self.mixing, dtype=np.float64)
        if mixing.ndim != 2 or mixing.shape[0] != mixing.shape[1]:
            raise InvalidArgumentError(f"mixing must be square, got {mixing.shape}")
        if not self.noise_sigma > 0:
            raise InvalidArgumentError("noise_sigma must be positive")
        if np.linalg.cond(mixing) >= 1e10:
            raise InvalidArgumentError("mixing matrix is numerically singular")
        object.__setattr__(self, "mixing", mixing)

    @property
    def n_channels(self) -> int:
        return int(self.mixing.shape[0])


@dataclass(frozen=True)
class Scenario:
    """A simulation request as read from a scenario JSON file."""

    n: int
    total_t: int
    noise_sigma: float = 1.0
    conditioning: float = 0.5
    seed: int = 0
    events: tuple[ScenarioEvent, ...] = ()
    mixing: Literal["linear", "orthogonal"] = "linear"

    def __post_init__(self) -> None:
        if self.n < 2 or self.total_t < self.n:
            raise InvalidArgumentError("scenario needs n >= 2 and total_t >= n")
        if self.mixing not in ("linear", "orthogonal"):
            raise InvalidArgumentError(f"unknown mixing {self.mixing!r}")


@dataclass(frozen=True, eq=False)
class ProductSpectrum:
    """Complex spectrum of a normalized product of two data matrices."""

    eigenvalues: ComplexArray
    bulk_radius: float
    delta: float
    outliers: ComplexArray
    scale_factor: float

    def __post_init__(self) -> None:
        if not self.bulk_radius > 0 or not self.delta > 0:
            raise InvalidArgumentError("bulk_radius and delta must be positive")

    @property
    def threshold(self) -> float:
        return (1.0 + self.delta) * self.bulk_radius

    @property
    def outlier_mask(self) -> NDArray[np.bool_]:
        return np.abs(self.eigenvalues) > self.threshold
