"""Synthetic grid measurements from the linear sensitivity model V = Ξ·ΔP."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from freespec.errors import InvalidArgumentError
from freespec.models import FloatArray, GridModel, MeasurementWindow, Scenario, ScenarioEvent
from freespec.randmat import SeedLike

log = logging.getLogger(__name__)

CASE_LABELS = ("C0", "C1", "C2", "C3", "C4", "C5")


def build_model(
    n: int,
    seed: SeedLike,
    conditioning: float = 0.5,
    orthogonal: bool = False,
    noise_sigma: float = 1.0,
) -> GridModel:
    """Random mixing Ξ = I + conditioning·R/√n, R with i.i.d. standard normal entries.

    With *orthogonal*, Ξ is replaced by its polar (orthogonal) factor so that
    noise stays white after mixing.
    """
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    if conditioning < 0:
        raise InvalidArgumentError(f"conditioning must be >= 0, got {conditioning}")
    if conditioning == 0:
        return GridModel(np.eye(n), noise_sigma)
    rng = np.random.default_rng(seed)
    mixing = np.eye(n) + conditioning * rng.standard_normal((n, n)) / np.sqrt(n)
    if orthogonal:
        u, _, vt = np.linalg.svd(mixing)
        mixing = u @ vt
    return GridModel(mixing, noise_sigma)


def _inject(delta_p: FloatArray, noise: FloatArray, event: ScenarioEvent, sigma: float) -> None:
    n, total_t = delta_p.shape
    if event.end_t >= total_t:
        raise InvalidArgumentError(
            f"{event.kind} event ends at {event.end_t}, beyond the stream length {total_t}"
        )
    if event.is_localized and event.channel is not None and event.channel >= n:
        raise InvalidArgumentError(f"event channel {event.channel} out of range for N={n}")
    span = slice(event.start_t, event.end_t + 1)

    if event.kind == "step":
        delta_p[event.channel, span] += event.amplitude * sigma
    elif event.kind == "ramp":
        # Grows through the event window, then holds its terminal level.
        ramp = event.amplitude * sigma * np.arange(1, event.end_t - event.start_t + 2)
        delta_p[event.channel, span] += ramp
        delta_p[event.channel, event.end_t + 1 :] += ramp[-1]
    elif event.kind == "chaos":
        delta_p[:, span] += (np.sqrt(event.amplitude) - 1.0) * noise[:, span]


def simulate(
    model: GridModel,
    total_t: int,
    events: Sequence[ScenarioEvent] = (),
    seed: SeedLike = 0,
) -> MeasurementWindow:
    """Generate an N×total_t stream with the given events injected.

    Noise is drawn before and independently of the events, so removing an
    event reproduces the noise-only stream exactly.

    Raises:
        InvalidArgumentError: If an event leaves the stream or names a missing channel.
    """
    n = model.n_channels
    rng = np.random.default_rng(seed)
    noise = model.noise_sigma * rng.standard_normal((n, total_t))
    delta_p = noise.copy()
    for event in events:
        _inject(delta_p, noise, event, model.noise_sigma)
    log.debug("simulated %d×%d stream with %d event(s)", n, total_t, len(events))
    return MeasurementWindow(model.mixing @ delta_p)


def run_scenario(scenario: Scenario) -> MeasurementWindow:
    """Build the scenario's model and simulate its stream."""
    model_seed, noise_seed = np.random.SeedSequence(scenario.seed).spawn(2)
    model = build_model(
        scenario.n,
        model_seed,
        scenario.conditioning,
        orthogonal=scenario.mixing == "orthogonal",
        noise_sigma=scenario.noise_sigma,
    )
    return simulate(model, scenario.total_t, scenario.events, noise_seed)


def case_windows(
    model: GridModel,
    n_samples: int | None = None,
    seed: SeedLike = 0,
    bus: int = 22,
    second_bus: int = 52,
    step_height: float = 15.0,
    ramp_height: float = 18.0,
    chaos_amplitude: float = 100.0,
    chaos_fraction: float = 0.125,
) -> dict[str, MeasurementWindow]:
    """One analysis window per reference case.

    C0 reference noise, C1 step at *bus* from mid-window, C2 and C3 full-window
    ramps at *bus* and *second_bus*, C4 chaos over the trailing *chaos_fraction*
    of the window, C5 noise. Heights are in units of ``noise_sigma``.

    Standardization removes any variance change that covers the whole window,
    so the chaos burst is kept short: its samples then carry about
    ``1 / chaos_fraction`` of the variance each and push many eigenvalues out.
    """
    if not 0.0 < chaos_fraction < 1.0:
        raise InvalidArgumentError(f"chaos_fraction must lie in (0, 1), got {chaos_fraction}")
    t = n_samples or model.n_channels
    mid, last = t // 2, t - 1
    chaos_start = t - max(1, int(round(chaos_fraction * t)))
    slope = ramp_height / t
    events: dict[str, list[ScenarioEvent]] = {
        "C0": [],
        "C1": [ScenarioEvent("step", mid, last, step_height, bus)],
        "C2": [ScenarioEvent("ramp", 0, last, slope, bus)],
        "C3": [ScenarioEvent("ramp", 0, last, slope, second_bus)],
        "C4": [ScenarioEvent("chaos", chaos_start, last, chaos_amplitude)],
        "C5": [],
    }
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(len(CASE_LABELS))
    return {
        label: simulate(model, t, events[label], child)
        for label, child in zip(CASE_LABELS, children, strict=True)
    }
