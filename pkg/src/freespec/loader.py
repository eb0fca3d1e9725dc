"""Read measurement windows and scenario files from disk."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from freespec.errors import InvalidArgumentError, LoadError
from freespec.models import MeasurementWindow, Scenario, ScenarioEvent

log = logging.getLogger(__name__)

_SCENARIO_KEYS = {"n", "total_t", "noise_sigma", "conditioning", "seed", "events", "mixing"}
_EVENT_KEYS = {"kind", "channel", "start_t", "end_t", "amplitude"}


def _is_number(field: str) -> bool:
    try:
        float(field)
    except ValueError:
        return False
    return True


def load_window_csv(path: Path | str) -> MeasurementWindow:
    """Load an N×T window, one channel per row.

    A first row whose first field is not numeric is taken as the channel
    labels; it then holds one label per channel (row).

    Raises:
        LoadError: If the file cannot be read, is empty, has ragged rows,
            non-numeric or non-finite values, or does not form a valid window.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row and any(f.strip() for f in row)]
    except OSError as exc:
        raise LoadError(f"Cannot read {path}: {exc}") from exc
    except csv.Error as exc:
        raise LoadError(f"Malformed CSV in {path}: {exc}") from exc
    if not rows:
        raise LoadError(f"{path} is empty")

    labels: tuple[str, ...] | None = None
    if not _is_number(rows[0][0]):
        labels = tuple(field.strip() for field in rows[0])
        rows = rows[1:]
        if not rows:
            raise LoadError(f"{path} has a label row but no data")

    width = len(rows[0])
    for lineno, row in enumerate(rows, start=2 if labels else 1):
        if len(row) != width:
            raise LoadError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
    try:
        data = np.array([[float(field) for field in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise LoadError(f"{path}: non-numeric value ({exc})") from exc
    if not np.all(np.isfinite(data)):
        raise LoadError(f"{path}: contains non-finite values")

    try:
        window = MeasurementWindow(data, labels)
    except InvalidArgumentError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    log.info("loaded %s: N=%d, T=%d", path.name, window.n_channels, window.n_samples)
    return window


def _event_from_dict(item: Any, index: int) -> ScenarioEvent:
    if not isinstance(item, dict):
        raise LoadError(f"event {index} must be an object")
    unknown = set(item) - _EVENT_KEYS
    if unknown:
        raise LoadError(f"event {index} has unknown key(s): {', '.join(sorted(unknown))}")
    try:
        channel = item.get("channel")
        return ScenarioEvent(
            kind=item["kind"],
            start_t=int(item["start_t"]),
            end_t=int(item["end_t"]),
            amplitude=float(item.get("amplitude", 0.0)),
            channel=None if channel is None else int(channel),
        )
    except KeyError as exc:
        raise LoadError(f"event {index} is missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise LoadError(f"event {index}: {exc}") from exc


def load_scenario(path: Path | str) -> Scenario:
    """Parse a scenario JSON document.

    Raises:
        LoadError: If the file is unreadable, not valid JSON, or describes an
            invalid scenario.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadError(f"Cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise LoadError(f"{path}: top level must be an object")
    unknown = set(document) - _SCENARIO_KEYS
    if unknown:
        raise LoadError(f"{path}: unknown key(s): {', '.join(sorted(unknown))}")

    events_raw = document.get("events", [])
    if not isinstance(events_raw, list):
        raise LoadError(f"{path}: events must be a list")
    events = tuple(_event_from_dict(item, i) for i, item in enumerate(events_raw))
    try:
        return Scenario(
            n=int(document["n"]),
            total_t=int(document["total_t"]),
            noise_sigma=float(document.get("noise_sigma", 1.0)),
            conditioning=float(document.get("conditioning", 0.5)),
            seed=int(document.get("seed", 0)),
            events=events,
            mixing=document.get("mixing", "linear"),
        )
    except KeyError as exc:
        raise LoadError(f"{path}: missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise LoadError(f"{path}: {exc}") from exc
