"""Scalar and operator-valued Cauchy transforms, subordination and Stieltjes inversion.

All evaluators work on stacks of k×k matrices with shape ``(..., k, k)`` so a
whole grid is advanced through the fixed-point iteration at once.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal, Protocol

import numpy as np
from numpy.typing import NDArray

from freespec.errors import (
    ConditioningError,
    DomainError,
    HerglotzError,
    InvalidArgumentError,
    NonConvergenceError,
)
from freespec.models import (
    ComplexArray,
    FixedPointConfig,
    FloatArray,
    Linearization,
    MpParams,
    OperatorPoint,
    PolynomialKind,
    SpectralDensity,
)
from freespec.randmat import mp_quadrature

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e14
DEFAULT_CORNER_EPS = 1e-6
DEFAULT_GRID_POINTS = 512

_PENCIL_CONDITION_LIMIT = 1e8
_SMALL_EIGENVALUE = 1e-8

# Per-point status codes of a batched subordination run.
_OK, _ILL_CONDITIONED, _NOT_HERGLOTZ = 0, 1, 2


class CauchyTransform(Protocol):
    """Operator-valued Cauchy transform evaluated on a stack of points."""

    @property
    def dim(self) -> int: ...

    def __call__(self, points: ComplexArray) -> ComplexArray: ...


def _mp_transform(params: MpParams, z: ComplexArray) -> ComplexArray:
    # Cancellation-free closed form, analytic on ℂ∖[a, b].
    a, b = params.support
    root = np.sqrt(z - a) * np.sqrt(z - b)
    return 2.0 / (z - params.variance * (1.0 - params.ratio_c) + root)


def cauchy_mp(params: MpParams, z: complex) -> complex:
    """Cauchy transform G(z) = ∫ ρ(t)/(z − t) dt of the Marchenko–Pastur law.

    Raises:
        DomainError: If ``Im z <= 0``.
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError(f"Cauchy transform needs Im z > 0, got {z}")
    return complex(_mp_transform(params, np.asarray(z, dtype=np.complex128)))


def _as_stack(points: ComplexArray) -> ComplexArray:
    arr = np.asarray(points, dtype=np.complex128)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2]:
        raise InvalidArgumentError(f"points must have shape (..., k, k), got {arr.shape}")
    return arr


def _imaginary_part(mats: ComplexArray) -> ComplexArray:
    return (mats - np.conj(np.swapaxes(mats, -1, -2))) / 2j


def _is_upper(mats: ComplexArray) -> NDArray[np.bool_]:
    """Im part positive definite, up to rounding relative to the matrix scale."""
    lowest = np.linalg.eigvalsh(_imaginary_part(mats))[..., 0]
    scale = np.maximum(np.max(np.abs(mats), axis=(-2, -1)), 1.0)
    return lowest > -1e-12 * scale


def _is_lower(mats: ComplexArray) -> NDArray[np.bool_]:
    highest = np.linalg.eigvalsh(_imaginary_part(mats))[..., -1]
    scale = np.maximum(np.max(np.abs(mats), axis=(-2, -1)), 1.0)
    return highest < 1e-10 * scale


def _quadrature_sum(
    coeff: FloatArray, params: MpParams, points: ComplexArray, nodes: int
) -> ComplexArray:
    t, w = mp_quadrature(params, nodes)
    shifted = points[..., None, :, :] - t[:, None, None] * coeff
    return np.einsum("n,...nij->...ij", w, np.linalg.inv(shifted))


class WishartCauchyTransform:
    """Cauchy transform of ``coeff ⊗ Σ`` with Σ distributed by the MP law.

    ``method="pencil"`` is exact: with ω⁻¹·coeff = W diag(m) W⁻¹,

        G(ω) = W diag(φ(m)) W⁻¹ ω⁻¹,   φ(m) = (1/m)·G_MP(1/m),

    falling back to quadrature wherever W is ill-conditioned. ``coeff = [[1]]``
    gives the scalar MP transform, ``[[-1]]`` the transform of −Σ.
    """

    def __init__(
        self,
        coeff: FloatArray | Sequence[Sequence[float]],
        params: MpParams,
        method: Literal["pencil", "quadrature"] = "pencil",
        nodes: int = 2048,
    ) -> None:
        matrix = np.atleast_2d(np.asarray(coeff, dtype=np.float64))
        if matrix.shape[0] != matrix.shape[1] or not np.array_equal(matrix, matrix.T):
            raise InvalidArgumentError("coefficient must be a real symmetric k×k matrix")
        if method not in ("pencil", "quadrature"):
            raise InvalidArgumentError(f"unknown method {method!r}")
        self.coeff = matrix
        self.params = params
        self.method = method
        self.nodes = nodes

    @property
    def dim(self) -> int:
        return int(self.coeff.shape[0])

    def __call__(self, points: ComplexArray) -> ComplexArray:
        points = _as_stack(points)
        if self.method == "quadrature":
            return _quadrature_sum(self.coeff, self.params, points, self.nodes)
        return self._pencil(points)

    def _phi(self, m: ComplexArray) -> ComplexArray:
        small = np.abs(m) < _SMALL_EIGENVALUE
        inv = 1.0 / np.where(small, 1.0, m)
        exact = inv * _mp_transform(self.params, inv)
        s2, c = self.params.variance, self.params.ratio_c
        series = 1.0 + m * s2 + m**2 * s2**2 * (1.0 + c)
        return np.where(small, series, exact)

    def _pencil(self, points: ComplexArray) -> ComplexArray:
        inv_points = np.linalg.inv(points)
        m, vecs = np.linalg.eig(inv_points @ self.coeff)
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(vecs)
        bad = ~np.isfinite(cond) | (cond > _PENCIL_CONDITION_LIMIT)
        safe_vecs = np.where(bad[..., None, None], np.eye(self.dim), vecs)
        values = safe_vecs @ (self._phi(m)[..., :, None] * np.linalg.inv(safe_vecs))
        values = values @ inv_points
        if np.any(bad):
            log.debug("pencil eigenbasis ill-conditioned at %d point(s); quadrature", bad.sum())
            values[bad] = _quadrature_sum(self.coeff, self.params, points[bad], self.nodes)
        return values


class PointMassTransform:
    """Cauchy transform (b − value)⁻¹ of a deterministic k×k summand."""

    def __init__(self, value: FloatArray | Sequence[Sequence[float]]) -> None:
        self.value = np.atleast_2d(np.asarray(value, dtype=np.complex128))

    @property
    def dim(self) -> int:
        return int(self.value.shape[0])

    def __call__(self, points: ComplexArray) -> ComplexArray:
        return np.linalg.inv(_as_stack(points) - self.value)


def operator_cauchy_wishart(
    coeff: FloatArray | Sequence[Sequence[float]],
    params: MpParams,
    point: OperatorPoint,
    tolerance: float = 1e-8,
    nodes: int = 512,
    max_nodes: int = 16384,
) -> OperatorPoint:
    """∫ (point − t·coeff)⁻¹ ρ_MP(t) dt by Gauss–Legendre quadrature.

    The node count starts at *nodes* and doubles until successive results
    differ by less than *tolerance* in max-norm.

    Raises:
        DomainError:       If *point* is not in the operator upper half-plane.
        ConditioningError: If ``point − t·coeff`` is numerically singular at a node.
    """
    if not point.is_upper():
        raise DomainError("operator Cauchy transform needs a point with Im part > 0")
    matrix = np.atleast_2d(np.asarray(coeff, dtype=np.float64))
    if matrix.shape != (point.dim, point.dim):
        raise InvalidArgumentError("coefficient and point dimensions differ")

    t, _ = mp_quadrature(params, max_nodes)
    cond = np.linalg.cond(point.entries - t[:, None, None] * matrix)
    if np.max(cond) > CONDITION_LIMIT:
        raise ConditioningError("integrand is singular on the support", float(np.max(cond)))

    value = _quadrature_sum(matrix, params, point.entries, nodes)
    while nodes * 2 <= max_nodes:
        nodes *= 2
        refined = _quadrature_sum(matrix, params, point.entries, nodes)
        change = float(np.max(np.abs(refined - value)))
        value = refined
        if change < tolerance:
            log.debug("quadrature converged with %d nodes (change %.2e)", nodes, change)
            break
    else:
        log.warning("quadrature reached %d nodes without meeting tolerance %g", nodes, tolerance)
    return OperatorPoint(value)


def h_transform(g_value: OperatorPoint, point: OperatorPoint) -> OperatorPoint:
    """Return G⁻¹ − b.

    Raises:
        ConditioningError: If *g_value* has condition number >= 1e14.
    """
    cond = float(np.linalg.cond(g_value.entries))
    if not np.isfinite(cond) or cond >= CONDITION_LIMIT:
        raise ConditioningError(f"G is numerically singular (condition {cond:.3e})", cond)
    return OperatorPoint(np.linalg.inv(g_value.entries) - point.entries)


def _h_batch(
    transform: CauchyTransform, points: ComplexArray
) -> tuple[ComplexArray, NDArray[np.bool_]]:
    values = transform(points)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(values)
    ok = np.isfinite(cond) & (cond < CONDITION_LIMIT)
    safe = np.where(ok[..., None, None], values, np.eye(points.shape[-1]))
    return np.linalg.inv(safe) - points, ok


@dataclass(frozen=True, eq=False)
class SubordinationResult:
    """Converged subordination data for a stack of points."""

    value: ComplexArray
    omega1: ComplexArray
    omega2: ComplexArray
    iterations: int
    residual: float
    status: NDArray[np.int8]

    @property
    def valid(self) -> NDArray[np.bool_]:
        return self.status == _OK


def subordinate(
    gx: CauchyTransform,
    gy: CauchyTransform,
    points: ComplexArray,
    config: FixedPointConfig | None = None,
) -> SubordinationResult:
    """Batched fixed point ω ← h_y(h_x(ω) + b) + b, started at ω₀ = b.

    Points are frozen once their step falls below the tolerance. A point whose
    iterate leaves the upper half-plane or whose transform is numerically
    singular is marked invalid rather than failing the whole batch.

    Raises:
        NonConvergenceError: If any point is still moving after ``max_iterations``.
    """
    config = config or FixedPointConfig()
    b = _as_stack(points)
    if b.ndim == 2:
        b = b[None]
    n = b.shape[0]
    omega = b.copy()
    status = np.zeros(n, dtype=np.int8)
    active = np.ones(n, dtype=bool)
    residual = np.zeros(n)

    iteration = 0
    while np.any(active) and iteration < config.max_iterations:
        iteration += 1
        idx = np.flatnonzero(active)
        current, anchor = omega[idx], b[idx]
        hx, ok_x = _h_batch(gx, current)
        hy, ok_y = _h_batch(gy, hx + anchor)
        step = hy + anchor - current
        proposed = current + config.damping * step
        moved = np.max(np.abs(proposed - current), axis=(-2, -1))

        conditioned = ok_x & ok_y & np.isfinite(moved)
        upper = np.zeros_like(conditioned)
        if np.any(conditioned):
            upper[conditioned] = _is_upper(proposed[conditioned])
        status[idx[~conditioned]] = _ILL_CONDITIONED
        status[idx[conditioned & ~upper]] = _NOT_HERGLOTZ
        good = conditioned & upper
        active[idx[~good]] = False

        omega[idx[good]] = proposed[good]
        residual[idx[good]] = moved[good]
        active[idx[good & (moved < config.tolerance)]] = False

    if np.any(active):
        worst = float(np.max(residual[active]))
        raise NonConvergenceError(worst, iteration, int(active.sum()))

    value = np.full_like(b, np.nan)
    omega2 = np.full_like(b, np.nan)
    valid = status == _OK
    if np.any(valid):
        hx, ok = _h_batch(gx, omega[valid])
        value[valid] = gx(omega[valid])
        omega2[valid] = hx + b[valid]
        lower = _is_lower(value[valid])
        bad = np.flatnonzero(valid)[~(ok & lower)]
        status[bad] = _NOT_HERGLOTZ
        value[bad] = np.nan
    if np.any(status != _OK):
        log.warning("%d of %d point(s) marked invalid", int((status != _OK).sum()), n)
    log.debug("subordination converged in %d iterations", iteration)
    final = float(np.max(residual[status == _OK])) if np.any(status == _OK) else float("nan")
    return SubordinationResult(value, omega, omega2, iteration, final, status)


def subordination_sum(
    gx: CauchyTransform,
    gy: CauchyTransform,
    point: OperatorPoint,
    config: FixedPointConfig | None = None,
) -> OperatorPoint:
    """G_{x+y}(point) for free x and y via analytic subordination.

    Raises:
        DomainError:         If *point* is not in the operator upper half-plane.
        ConditioningError:   If a transform value is numerically singular.
        HerglotzError:       If an iterate leaves the upper half-plane.
        NonConvergenceError: If the iteration does not settle.
    """
    if not point.is_upper():
        raise DomainError("subordination needs a point with Im part > 0")
    result = subordinate(gx, gy, point.entries[None], config)
    status = int(result.status[0])
    if status == _ILL_CONDITIONED:
        raise ConditioningError("transform became numerically singular", float("inf"))
    if status == _NOT_HERGLOTZ:
        raise HerglotzError("iterate left the operator upper half-plane")
    return OperatorPoint(result.value[0])


def default_smoothing_offset(grid: FloatArray) -> float:
    return 1e-3 * float(grid[-1] - grid[0])


def _check_grid(grid: Sequence[float] | FloatArray) -> FloatArray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2 or np.any(np.diff(arr) <= 0):
        raise InvalidArgumentError("grid must be strictly ascending with >= 2 points")
    return arr


def _support_runs(grid: FloatArray, above: NDArray[np.bool_]) -> tuple[tuple[float, float], ...]:
    edges = np.diff(np.concatenate(([0], above.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return tuple((float(grid[i]), float(grid[j])) for i, j in zip(starts, stops, strict=True))


def default_support_threshold(rho: FloatArray, grid: FloatArray, smoothing_offset: float) -> float:
    """Density level at which Lorentzian leakage matches a square-root edge.

    With W = 4·std of the density, √(y/2)·W^(−3/2) places support edges
    within about y/2 of their true position.
    """
    mass = float(np.trapezoid(rho, grid))
    if mass <= 0:
        return 0.0
    mean = float(np.trapezoid(grid * rho, grid)) / mass
    std = np.sqrt(float(np.trapezoid((grid - mean) ** 2 * rho, grid)) / mass)
    width = max(4.0 * std, 10.0 * smoothing_offset)
    return float(np.sqrt(smoothing_offset / 2.0) * width**-1.5)


def stieltjes_invert(
    g_on_grid: Sequence[complex] | ComplexArray,
    grid: Sequence[float] | FloatArray,
    support_threshold: float | None = None,
    smoothing_offset: float | None = None,
) -> SpectralDensity:
    """Recover ρ(x) = −Im G(x + iy)/π from transform values on a grid.

    Negative values are clipped to zero and their mass is reported. Values at
    or below *support_threshold* are zeroed; the remaining runs form the
    support. Non-finite transform values count as invalid points.
    """
    xs = _check_grid(grid)
    g = np.asarray(g_on_grid, dtype=np.complex128)
    if g.shape != xs.shape:
        raise InvalidArgumentError("transform values must match the grid")
    y = default_smoothing_offset(xs) if smoothing_offset is None else smoothing_offset

    invalid = ~np.isfinite(g)
    raw = np.where(invalid, 0.0, -np.where(invalid, 0.0, g).imag / np.pi)
    clipped_mass = float(np.trapezoid(np.clip(-raw, 0.0, None), xs))
    rho = np.clip(raw, 0.0, None)
    threshold = (
        default_support_threshold(rho, xs, y) if support_threshold is None else support_threshold
    )
    above = rho > threshold
    rho = np.where(above, rho, 0.0)

    if invalid.any():
        log.warning("%d grid point(s) had no valid transform value", int(invalid.sum()))
    if clipped_mass > 1e-6:
        log.warning("clipped %.3e of negative density mass", clipped_mass)
    return SpectralDensity(
        grid=xs,
        values=rho,
        support_intervals=_support_runs(xs, above),
        smoothing_offset=y,
        clipped_mass=clipped_mass,
        invalid_points=int(invalid.sum()),
        support_threshold=threshold,
    )


def free_sum_density(
    gx: CauchyTransform,
    gy: CauchyTransform,
    grid: Sequence[float] | FloatArray,
    config: FixedPointConfig | None = None,
    smoothing_offset: float | None = None,
    support_threshold: float | None = None,
) -> SpectralDensity:
    """Density of the free sum of two scalar laws on *grid*."""
    xs = _check_grid(grid)
    if gx.dim != 1 or gy.dim != 1:
        raise InvalidArgumentError("free_sum_density works on scalar transforms")
    y = default_smoothing_offset(xs) if smoothing_offset is None else smoothing_offset
    if not y > 0:
        raise InvalidArgumentError("smoothing_offset must be positive")
    result = subordinate(gx, gy, (xs + 1j * y)[:, None, None], config)
    return stieltjes_invert(result.value[:, 0, 0], xs, support_threshold, y)


def asd_p1(
    params0: MpParams,
    params1: MpParams,
    grid: Sequence[float] | FloatArray,
    config: FixedPointConfig | None = None,
    smoothing_offset: float | None = None,
    support_threshold: float | None = None,
) -> SpectralDensity:
    """Asymptotic spectral density of Σ₁ − Σ₀."""
    gx = WishartCauchyTransform([[1.0]], params1)
    gy = WishartCauchyTransform([[-1.0]], params0)
    density = free_sum_density(gx, gy, grid, config, smoothing_offset, support_threshold)
    log.info("P1 density: support %s, mass %.4f", density.support_intervals, density.total_mass())
    return density


def linearize_p2() -> Linearization:
    """Self-adjoint 3×3 linearization of (Σ₁ − Σ₀)²."""
    c = np.zeros((3, 3))
    c[1, 2] = c[2, 1] = -1.0
    b0 = np.zeros((3, 3))
    b0[0, 1] = b0[1, 0] = -1.0
    b0[0, 2] = b0[2, 0] = -0.5
    return Linearization(c=c, b0=b0, b1=-b0)


def lambda_eps(z: ComplexArray | complex, eps: float, dim: int = 3) -> ComplexArray:
    """Stack of diag(z, iε, …, iε) for every entry of *z*."""
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    out = np.zeros((*zs.shape, dim, dim), dtype=np.complex128)
    out[..., 0, 0] = zs
    for i in range(1, dim):
        out[..., i, i] = 1j * eps
    return out


def corner_cauchy(
    lin: Linearization, sigma0: FloatArray, sigma1: FloatArray, z: complex, eps: float
) -> complex:
    """Normalized trace of the (1,1) block of (Λ_ε(z)⊗1 − L)⁻¹ for concrete matrices."""
    s0 = np.atleast_2d(np.asarray(sigma0, dtype=np.float64))
    n = s0.shape[0]
    pencil = np.kron(lambda_eps(z, eps, lin.dim)[0], np.eye(n)) - lin.matrix(s0, sigma1)
    resolvent = np.linalg.inv(pencil)
    return complex(np.trace(resolvent[:n, :n]) / n)


def _p2_transform(
    params0: MpParams,
    params1: MpParams,
    z: ComplexArray,
    config: FixedPointConfig | None,
    corner_eps: float,
) -> ComplexArray:
    lin = linearize_p2()
    b = lambda_eps(z, corner_eps, lin.dim) - lin.c
    gx = WishartCauchyTransform(lin.b0, params0)
    gy = WishartCauchyTransform(lin.b1, params1)
    result = subordinate(gx, gy, b, config)
    return result.value[:, 0, 0]


def asd_p2(
    params0: MpParams,
    params1: MpParams,
    grid: Sequence[float] | FloatArray,
    config: FixedPointConfig | None = None,
    corner_eps: float = DEFAULT_CORNER_EPS,
    smoothing_offset: float | None = None,
    extrapolate: bool = False,
    support_threshold: float | None = None,
) -> SpectralDensity:
    """Asymptotic spectral density of (Σ₁ − Σ₀)² through its linearization.

    With *extrapolate*, the corner value is extrapolated linearly in ε from
    ε and 10·ε to ε → 0.
    """
    xs = _check_grid(grid)
    if not corner_eps > 0:
        raise InvalidArgumentError("corner_eps must be positive")
    y = default_smoothing_offset(xs) if smoothing_offset is None else smoothing_offset
    if not y > 0:
        raise InvalidArgumentError("smoothing_offset must be positive")
    z = xs + 1j * y
    g = _p2_transform(params0, params1, z, config, corner_eps)
    if extrapolate:
        coarse = 10.0 * corner_eps
        g_coarse = _p2_transform(params0, params1, z, config, coarse)
        g = (coarse * g - corner_eps * g_coarse) / (coarse - corner_eps)
    density = stieltjes_invert(g, xs, support_threshold, y)
    log.info("P2 density: support %s, mass %.4f", density.support_intervals, density.total_mass())
    return density


def default_grid(
    kind: PolynomialKind,
    params0: MpParams,
    params1: MpParams,
    points: int = DEFAULT_GRID_POINTS,
) -> FloatArray:
    """Uniform grid covering the theoretical support with 0.5 of padding."""
    if points < 2:
        raise InvalidArgumentError("grid needs at least 2 points")
    if kind is PolynomialKind.P1:
        return np.linspace(-params0.upper_edge - 0.5, params1.upper_edge + 0.5, points)
    top = max(params0.upper_edge, params1.upper_edge) ** 2
    return np.linspace(-0.5, top + 0.5, points)


def empirical_grid(eigenvalues: FloatArray, points: int = DEFAULT_GRID_POINTS) -> FloatArray:
    """Uniform grid spanning the sample eigenvalues with 0.5 of padding."""
    eigs = np.asarray(eigenvalues, dtype=np.float64)
    return np.linspace(float(eigs.min()) - 0.5, float(eigs.max()) + 0.5, points)
