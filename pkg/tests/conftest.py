"""Shared pytest fixtures for freespec tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from freespec.freeprob import asd_p1, asd_p2, default_grid
from freespec.gridsim import build_model, case_windows
from freespec.models import MpParams, PolynomialKind
from freespec.randmat import preprocess, sample_covariance

FIXTURES_DIR = Path(__file__).parent / "fixtures"
CASE_CHANNELS = 118
CASE_BUS = 22


@pytest.fixture(autouse=True)
def cache_dir(tmp_path, monkeypatch):
    """Point the ASD cache at a per-test directory."""
    path = tmp_path / "cache"
    monkeypatch.setenv("FREESPEC_CACHE_DIR", str(path))
    return path


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def unit_params() -> MpParams:
    return MpParams(ratio_c=1.0, variance=1.0)


@pytest.fixture(scope="session")
def p1_asd(unit_params):
    """ASD of Σ₁ − Σ₀ for square unit-variance windows."""
    grid = default_grid(PolynomialKind.P1, unit_params, unit_params)
    return asd_p1(unit_params, unit_params, grid)


@pytest.fixture(scope="session")
def p2_asd(unit_params):
    """ASD of (Σ₁ − Σ₀)² for square unit-variance windows."""
    grid = default_grid(PolynomialKind.P2, unit_params, unit_params)
    return asd_p2(unit_params, unit_params, grid)


@pytest.fixture(scope="session")
def case_covariances():
    """Factory: seed → preprocessed covariances of cases C0–C5 on an orthogonal grid model."""

    def build(seed: int):
        model_seed, case_seed, noise_seed = np.random.SeedSequence(seed).spawn(3)
        model = build_model(CASE_CHANNELS, model_seed, orthogonal=True)
        windows = case_windows(model, seed=case_seed, bus=CASE_BUS)
        children = noise_seed.spawn(len(windows))
        return {
            label: sample_covariance(preprocess(window, seed=child))
            for (label, window), child in zip(windows.items(), children, strict=True)
        }

    return build
