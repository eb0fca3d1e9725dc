"""Tests for freespec.detect."""

from __future__ import annotations

import math

import numpy as np
import pytest

import freespec.detect as detect_module
from freespec.cache import AsdCache
from freespec.detect import (
    _outlier_mask,
    default_margin,
    detect,
    edge_fluctuation,
    evaluate_polynomial,
    false_alarm_rate,
    ordering_check,
    signal_statistic,
)
from freespec.errors import InvalidArgumentError, InvalidAsdError
from freespec.models import (
    DetectionReport,
    MpParams,
    PolynomialKind,
    SampleCovariance,
    SpectralDensity,
    Verdict,
)
from freespec.randmat import preprocess, sample_covariance, sample_gaussian_matrix


def _triangle() -> SpectralDensity:
    grid = np.linspace(-1.0, 1.0, 2001)
    return SpectralDensity(grid, 1.0 - np.abs(grid), ((-1.0, 1.0),), smoothing_offset=0.01)


def _diag_pair(values) -> tuple[SampleCovariance, SampleCovariance]:
    n = len(values)
    return SampleCovariance(np.zeros((n, n)), 10), SampleCovariance(np.diag(values), 10)


def _noise_covariance(n: int, t: int, seed: int) -> SampleCovariance:
    data_seed, noise_seed = np.random.SeedSequence(seed).spawn(2)
    return sample_covariance(preprocess(sample_gaussian_matrix(n, t, data_seed), seed=noise_seed))


def _report(s: float, label: str, kind: PolynomialKind = PolynomialKind.P1) -> DetectionReport:
    return DetectionReport(
        polynomial=kind,
        eigenvalues=np.array([0.0, 5.0]),
        outliers=np.array([5.0]),
        outlier_indices=(1,),
        support_used=((-1.0, 1.0),),
        margin_eps=0.1,
        s=s,
        verdict=Verdict.ANOMALY,
        label=label,
    )


class TestEvaluatePolynomial:
    def test_p1_is_difference(self):
        s0 = SampleCovariance(np.diag([1.0, 2.0]), 10)
        s1 = SampleCovariance(np.diag([3.0, 1.0]), 10)
        np.testing.assert_allclose(
            evaluate_polynomial(PolynomialKind.P1, s0, s1), np.diag([2.0, -1.0])
        )

    def test_p2_is_square_and_symmetric(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 5))
        b = rng.standard_normal((5, 5))
        s0 = SampleCovariance(a @ a.T, 10)
        s1 = SampleCovariance(b @ b.T, 10)
        result = evaluate_polynomial(PolynomialKind.P2, s0, s1)
        diff = s1.matrix - s0.matrix
        np.testing.assert_allclose(result, diff @ diff, atol=1e-12)
        np.testing.assert_array_equal(result, result.T)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError, match="shapes differ"):
            evaluate_polynomial(
                PolynomialKind.P1,
                SampleCovariance(np.eye(2), 5),
                SampleCovariance(np.eye(3), 5),
            )


class TestSignalStatistic:
    def test_zero_without_outliers(self):
        assert signal_statistic(np.array([1.0, 2.0]), np.array([False, False])) == (0.0, False)

    def test_uses_magnitudes(self):
        eigs = np.array([-4.0, 1.0, -1.0])
        s, degenerate = signal_statistic(eigs, np.array([True, False, False]))
        assert s == pytest.approx(2.0)
        assert not degenerate

    def test_degenerate_denominator(self):
        eigs = np.array([0.0, 0.0, 5.0])
        s, degenerate = signal_statistic(eigs, np.array([False, False, True]))
        assert s == float("inf")
        assert degenerate


class TestOutlierMask:
    def test_dilated_boundary_is_bulk(self):
        eigs = np.array([-1.5, 0.0, 1.5, 1.75])
        mask = _outlier_mask(eigs, ((-1.0, 1.0),), 0.5)
        assert mask.tolist() == [False, False, False, True]

    def test_gap_between_intervals(self):
        eigs = np.array([0.5, 2.0, 3.5])
        mask = _outlier_mask(eigs, ((0.0, 1.0), (3.0, 4.0)), 0.25)
        assert mask.tolist() == [False, True, False]


class TestMargin:
    def test_default_margin_exceeds_fixed_terms(self):
        asd = _triangle()
        margin = default_margin(asd, 50)
        assert margin > 0.5 * asd.spacing + 0.02 * 2.0

    def test_edge_fluctuation_shrinks_with_n(self):
        asd = _triangle()
        assert edge_fluctuation(asd, 1000) < edge_fluctuation(asd, 10)

    def test_empty_support_raises(self):
        empty = SpectralDensity(np.array([0.0, 1.0]), np.zeros(2), (), 0.01)
        with pytest.raises(InvalidAsdError):
            default_margin(empty, 10)


class TestDetect:
    def test_outliers_and_statistic(self):
        s0, s1 = _diag_pair([-0.5, 0.2, 1.4, 3.0])
        report = detect(PolynomialKind.P1, s0, s1, _triangle(), margin_eps=0.5)
        assert report.verdict is Verdict.ANOMALY
        np.testing.assert_array_equal(report.outliers, [3.0])
        assert report.outlier_indices == (3,)
        assert report.s == pytest.approx(3.0 / 2.1)

    def test_eigenvectors_pair_with_eigenvalues(self):
        s0, s1 = _diag_pair([0.0, 4.0, 0.0])
        report = detect(PolynomialKind.P1, s0, s1, _triangle(), margin_eps=0.1)
        vec = report.eigenvectors[:, report.outlier_indices[0]]
        assert abs(vec[1]) == pytest.approx(1.0)

    def test_identical_covariances_retain_h0(self, p1_asd):
        sigma = _noise_covariance(40, 40, seed=3)
        report = detect(PolynomialKind.P1, sigma, sigma, p1_asd, label="same")
        assert report.verdict is Verdict.H0_RETAINED
        assert report.s == 0.0
        assert report.outliers.size == 0
        assert report.label == "same"

    def test_spike_is_detected(self, p1_asd):
        sigma0 = _noise_covariance(100, 100, seed=1)
        sigma1 = _noise_covariance(100, 100, seed=2)
        spike = np.zeros((100, 100))
        spike[7, 7] = 20.0
        spiked = SampleCovariance(sigma1.matrix + spike, 100)
        report = detect(PolynomialKind.P1, sigma0, spiked, p1_asd)
        assert report.is_anomaly
        assert (report.n_channels - 1) in report.outlier_indices
        assert report.s > 0

    def test_negative_margin_rejected(self):
        s0, s1 = _diag_pair([0.0, 1.0])
        with pytest.raises(InvalidArgumentError, match="margin_eps"):
            detect(PolynomialKind.P1, s0, s1, _triangle(), margin_eps=-0.1)

    def test_empty_asd_rejected(self):
        s0, s1 = _diag_pair([0.0, 1.0])
        empty = SpectralDensity(np.array([0.0, 1.0]), np.zeros(2), (), 0.01)
        with pytest.raises(InvalidAsdError):
            detect(PolynomialKind.P1, s0, s1, empty)


class TestOrderingCheck:
    def test_sorted_by_s(self):
        reports = [_report(3.0, "a"), _report(1.0, "b"), _report(2.0, "c")]
        assert [r.label for r in ordering_check(reports)] == ["b", "c", "a"]

    def test_ties_keep_input_order(self):
        reports = [_report(1.0, "x"), _report(0.5, "y"), _report(1.0, "z")]
        assert [r.label for r in ordering_check(reports)] == ["y", "x", "z"]

    def test_mixed_kinds_rejected(self):
        reports = [_report(1.0, "a"), _report(2.0, "b", PolynomialKind.P2)]
        with pytest.raises(InvalidArgumentError, match="single polynomial"):
            ordering_check(reports)


class TestComputeAsd:
    def test_cache_reuses_entry(self, tmp_path, monkeypatch):
        calls = []
        original = detect_module.asd_p1

        def counting(*args, **kwargs):
            calls.append(args)
            return original(*args, **kwargs)

        monkeypatch.setattr(detect_module, "asd_p1", counting)
        params = MpParams()
        first = detect_module.compute_asd(
            PolynomialKind.P1, params, params, grid_points=64, cache=AsdCache(tmp_path)
        )
        second = detect_module.compute_asd(
            PolynomialKind.P1, params, params, grid_points=64, cache=AsdCache(tmp_path)
        )
        assert len(calls) == 1
        assert len(list(tmp_path.glob("asd-*.json"))) == 1
        np.testing.assert_array_equal(first.values, second.values)
        assert first.support_intervals == second.support_intervals

    def test_without_cache_computes(self):
        params = MpParams()
        density = detect_module.compute_asd(PolynomialKind.P1, params, params, grid_points=64)
        assert density.grid.size == 64
        assert density.support_intervals


def _case_scores(covariances, kind, asd):
    reference = covariances["C0"]
    return {
        label: detect(kind, reference, sigma, asd, label=label).s
        for label, sigma in covariances.items()
        if label != "C0"
    }


def _separation(scores):
    return scores["C1"] / scores["C2"] if scores["C2"] > 0 else math.inf


@pytest.mark.slow
class TestFalseAlarmRate:
    def test_p1_noise_rarely_alarms(self, p1_asd):
        rate = false_alarm_rate(PolynomialKind.P1, p1_asd, n=118, t=118, trials=100, seed=0)
        assert rate <= 0.05

    def test_p2_noise_rarely_alarms(self, p2_asd):
        rate = false_alarm_rate(PolynomialKind.P2, p2_asd, n=118, t=118, trials=100, seed=1)
        assert rate <= 0.05


@pytest.mark.slow
class TestCaseOrdering:
    def test_p2_full_ordering_holds_in_most_replications(self, case_covariances, p2_asd):
        held = 0
        for seed in range(20):
            s = _case_scores(case_covariances(seed), PolynomialKind.P2, p2_asd)
            ramps = (s["C2"], s["C3"])
            held += s["C5"] < min(ramps) and max(ramps) < s["C1"] < s["C4"]
        assert held >= 18

    def test_ordering_check_matches_scores(self, case_covariances, p2_asd):
        covariances = case_covariances(0)
        reports = [
            detect(PolynomialKind.P2, covariances["C0"], sigma, p2_asd, label=label)
            for label, sigma in covariances.items()
            if label != "C0"
        ]
        ordered = [r.s for r in ordering_check(reports)]
        assert ordered == sorted(ordered)
        assert ordering_check(reports)[-1].label == "C4"

    def test_p2_separates_step_from_ramp_better_than_p1(
        self, case_covariances, p1_asd, p2_asd
    ):
        wins = 0
        for seed in range(20):
            covariances = case_covariances(seed)
            p1 = _separation(_case_scores(covariances, PolynomialKind.P1, p1_asd))
            p2 = _separation(_case_scores(covariances, PolynomialKind.P2, p2_asd))
            wins += p2 > p1
        assert wins >= 18


@pytest.mark.slow
class TestScaleConsistency:
    def test_common_rescale_keeps_p1_verdict_and_outliers(self, case_covariances, p1_asd):
        covariances = case_covariances(3)
        base = detect(PolynomialKind.P1, covariances["C0"], covariances["C1"], p1_asd)
        factor = 2.5
        scaled = detect(
            PolynomialKind.P1,
            covariances["C0"].scaled(factor),
            covariances["C1"].scaled(factor),
            p1_asd.rescaled(factor),
            margin_eps=base.margin_eps * factor,
        )
        assert scaled.verdict is base.verdict
        assert scaled.outlier_indices == base.outlier_indices
        np.testing.assert_allclose(scaled.outliers, factor * base.outliers, rtol=1e-10)
        assert scaled.s == pytest.approx(base.s, rel=1e-10)
