"""Tests for freespec.exporters."""

from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from freespec.exporters import (
    density_from_dict,
    density_to_dict,
    format_float,
    location_to_dict,
    report_to_dict,
    spectrum_to_dict,
    write_density_csv,
    write_histogram_csv,
    write_json,
    write_location_series_csv,
    write_spectrum_csv,
    write_window_csv,
)
from freespec.loader import load_window_csv
from freespec.models import (
    DetectionReport,
    EsdHistogram,
    LocationReport,
    MeasurementWindow,
    PolynomialKind,
    ProductSpectrum,
    SpectralDensity,
    Verdict,
    WindowResult,
)


def _rows(path):
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _report(**kwargs) -> DetectionReport:
    defaults = {
        "polynomial": PolynomialKind.P2,
        "eigenvalues": np.array([0.1, 0.2, 9.0]),
        "outliers": np.array([9.0]),
        "outlier_indices": (2,),
        "support_used": ((0.0, 4.0),),
        "margin_eps": 0.25,
        "s": 30.0,
        "verdict": Verdict.ANOMALY,
    }
    defaults.update(kwargs)
    return DetectionReport(**defaults)


class TestFormatFloat:
    def test_exact_round_trip(self):
        value = 0.1 + 0.2
        assert float(format_float(value)) == value


class TestCsvWriters:
    def test_window_round_trip_with_labels(self, tmp_path):
        window = MeasurementWindow(np.arange(8.0).reshape(2, 4) / 3.0, ("x", "y"))
        path = tmp_path / "w.csv"
        write_window_csv(window, path)
        loaded = load_window_csv(path)
        assert loaded.channel_labels == ("x", "y")
        np.testing.assert_array_equal(loaded.data, window.data)

    def test_histogram(self, tmp_path):
        hist = EsdHistogram(np.array([0.0, 0.5, 1.0]), np.array([1, 3]), 4)
        path = tmp_path / "h.csv"
        write_histogram_csv(hist, path)
        rows = _rows(path)
        assert rows[0] == ["bin_left", "bin_right", "count", "normalized_height"]
        assert rows[2][2] == "3"
        assert float(rows[2][3]) == pytest.approx(1.5)

    def test_density(self, tmp_path):
        density = SpectralDensity(
            np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]), ((0.5, 1.5),), 0.01
        )
        path = tmp_path / "d.csv"
        write_density_csv(density, path)
        rows = _rows(path)
        assert rows[0] == ["x", "rho", "in_support"]
        assert [r[2] for r in rows[1:]] == ["0", "1", "0"]

    def test_spectrum(self, tmp_path):
        eigs = np.array([2.0 + 1.0j, 0.5 + 0.0j])
        spectrum = ProductSpectrum(eigs, 1.0, 0.15, eigs[:1], 0.01)
        path = tmp_path / "s.csv"
        write_spectrum_csv(spectrum, path)
        rows = _rows(path)
        assert rows[0] == ["re", "im", "is_outlier"]
        assert rows[1] == ["2", "1", "1"]
        assert rows[2][2] == "0"

    def test_location_series(self, tmp_path):
        report = _report()
        results = [
            WindowResult(
                t_index=9,
                detection=report,
                location=LocationReport(np.array([0.0, 0.0, 1.0]), 2, 1, t_index=9),
            ),
            WindowResult(
                t_index=10,
                detection=_report(
                    outliers=np.array([]),
                    outlier_indices=(),
                    s=0.0,
                    verdict=Verdict.H0_RETAINED,
                ),
                location=LocationReport(np.zeros(3), None, 0, t_index=10),
            ),
        ]
        path = tmp_path / "series.csv"
        write_location_series_csv(results, path)
        rows = _rows(path)
        assert rows[0] == ["t_index", "s", "verdict", "outlier_count", "loc", "L_0", "L_1", "L_2"]
        assert rows[1][:5] == ["9", "30", "anomaly", "1", "2"]
        assert rows[2][4] == ""


class TestJson:
    def test_density_dict_round_trip(self):
        density = SpectralDensity(
            np.linspace(0.0, 1.0, 5), np.full(5, 0.5), ((0.0, 1.0),), 0.01, invalid_points=2
        )
        restored = density_from_dict(json.loads(json.dumps(density_to_dict(density))))
        np.testing.assert_array_equal(restored.grid, density.grid)
        assert restored.invalid_points == 2

    def test_report_dict(self):
        data = report_to_dict(_report(label="C1", degenerate_denominator=True))
        assert data["polynomial"] == "p2"
        assert data["n"] == 3
        assert data["outliers"] == [9.0]
        assert data["verdict"] == "anomaly"
        assert data["label"] == "C1"
        assert data["degenerate_denominator"] is True

    def test_report_dict_omits_optional_keys(self):
        data = report_to_dict(_report())
        assert "label" not in data
        assert "degenerate_denominator" not in data

    def test_location_dict(self):
        location = LocationReport(np.array([0.25, 0.75]), 1, 2, loc_label="b")
        assert location_to_dict(location) == {
            "t_index": None,
            "L": [0.25, 0.75],
            "loc": 1,
            "outlier_count": 2,
            "loc_label": "b",
        }

    def test_spectrum_dict(self):
        eigs = np.array([0.0 + 2.0j, 0.0 - 2.0j])
        data = spectrum_to_dict(ProductSpectrum(eigs, 1.0, 0.15, eigs, 0.5))
        assert data["outliers"] == [[0.0, 2.0], [0.0, -2.0]]
        assert data["n"] == 2

    def test_write_json_is_stable(self, tmp_path):
        path = tmp_path / "r.json"
        write_json({"b": 1, "a": [0.1]}, path)
        first = path.read_bytes()
        write_json({"b": 1, "a": [0.1]}, path)
        assert path.read_bytes() == first
        assert json.loads(first) == {"b": 1, "a": [0.1]}

    def test_degenerate_s_is_null(self, tmp_path):
        report = _report(s=float("inf"), degenerate_denominator=True)
        path = tmp_path / "r.json"
        write_json(report_to_dict(report), path)
        text = path.read_text(encoding="utf-8")
        assert "Infinity" not in text
        data = json.loads(text)
        assert data["s"] is None
        assert data["degenerate_denominator"] is True

    def test_write_json_rejects_non_finite(self, tmp_path):
        with pytest.raises(ValueError):
            write_json({"s": float("nan")}, tmp_path / "r.json")
