"""CLI entry point for freespec."""

from __future__ import annotations

import logging
import sys
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NoReturn

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from freespec import __version__
from freespec.cache import AsdCache
from freespec.detect import compute_asd, detect, ordering_check
from freespec.errors import FreeSpecError, InvalidArgumentError
from freespec.exporters import (
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
from freespec.formatters import (
    render_cases,
    render_density,
    render_detection,
    render_location,
    render_mp_check,
    render_product,
)
from freespec.gridsim import build_model, case_windows, run_scenario
from freespec.loader import load_scenario, load_window_csv
from freespec.locate import locate, sliding_locate
from freespec.models import (
    DetectionReport,
    FixedPointConfig,
    MeasurementWindow,
    MpParams,
    PolynomialKind,
    SampleCovariance,
    SpectralDensity,
)
from freespec.products import product_spectrum
from freespec.randmat import mp_check, preprocess, sample_covariance

console = Console()
err_console = Console(stderr=True)

log = logging.getLogger(__name__)

DEFAULT_PARAMS: dict[str, Any] = {
    "eta": 1e-5,
    "repetitions": 10,
    "margin_eps": None,
    "grid_points": 512,
    "smoothing_offset": None,
    "corner_eps": 1e-6,
    "delta": 0.15,
    "seed": 0,
    "polynomial": "p2",
    "window_stride": None,
    "ratio_c": 1.0,
    "variance": 1.0,
    "bins": None,
    "n": 118,
    "conditioning": 0.5,
}

_INPUT_COUNTS = {
    "simulate": 1,
    "mp-check": 1,
    "asd": 0,
    "detect": 2,
    "locate": 2,
    "product": 2,
    "cases": 0,
}

_DEFAULT_OUTPUTS = {
    "simulate": "data.csv",
    "mp-check": "histogram.csv",
    "asd": "density.csv",
    "detect": "report.json",
    "locate": "location.json",
    "product": "spectrum.csv",
    "cases": None,
}


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation: command, input files, output path and parameters.

    ``params`` is merged over :data:`DEFAULT_PARAMS`; unknown keys are rejected.
    """

    command: str
    input_paths: tuple[Path, ...] = ()
    output_path: Path | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.command not in _INPUT_COUNTS:
            raise InvalidArgumentError(f"Unknown command {self.command!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS)
        if unknown:
            raise InvalidArgumentError(f"Unknown parameter(s): {', '.join(sorted(unknown))}")
        expected = _INPUT_COUNTS[self.command]
        if len(self.input_paths) != expected:
            raise InvalidArgumentError(
                f"{self.command} takes {expected} input file(s), got {len(self.input_paths)}"
            )
        object.__setattr__(self, "input_paths", tuple(Path(p) for p in self.input_paths))
        object.__setattr__(self, "params", {**DEFAULT_PARAMS, **self.params})
        if self.output_path is None and _DEFAULT_OUTPUTS[self.command] is not None:
            object.__setattr__(self, "output_path", Path(_DEFAULT_OUTPUTS[self.command]))

    @property
    def polynomial(self) -> PolynomialKind:
        value = self.params["polynomial"]
        try:
            return PolynomialKind(value)
        except ValueError:
            raise InvalidArgumentError(f"Unknown polynomial {value!r}; use p1 or p2") from None

    @property
    def output(self) -> Path:
        if self.output_path is None:
            raise InvalidArgumentError(f"{self.command} needs an output path")
        return self.output_path

    @property
    def fixed_point(self) -> FixedPointConfig:
        return FixedPointConfig()


def _abort(exc: FreeSpecError) -> NoReturn:
    err_console.print(f"[bold red]Error:[/] {escape(str(exc))}")
    sys.exit(exc.exit_code)


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


# -- command implementations --------------------------------------------------


def _covariances(
    config: RunConfig, reference: MeasurementWindow, test: MeasurementWindow
) -> tuple[SampleCovariance, SampleCovariance]:
    seed, eta = config.params["seed"], config.params["eta"]
    sigma0 = sample_covariance(preprocess(reference, eta, np.random.SeedSequence([seed, 0])))
    sigma1 = sample_covariance(preprocess(test, eta, np.random.SeedSequence([seed, 1])))
    return sigma0, sigma1


def _asd_for(
    config: RunConfig, kind: PolynomialKind, params0: MpParams, params1: MpParams
) -> SpectralDensity:
    p = config.params
    return compute_asd(
        kind,
        params0,
        params1,
        grid_points=p["grid_points"],
        config=config.fixed_point,
        smoothing_offset=p["smoothing_offset"],
        corner_eps=p["corner_eps"],
        cache=AsdCache(),
    )


def _load_pair(config: RunConfig) -> tuple[MeasurementWindow, MeasurementWindow]:
    reference, test = (load_window_csv(path) for path in config.input_paths)
    if reference.n_channels != test.n_channels:
        raise InvalidArgumentError(
            f"Channel counts differ: {reference.n_channels} vs {test.n_channels}"
        )
    return reference, test


def _run_simulate(config: RunConfig) -> None:
    scenario = load_scenario(config.input_paths[0])
    window = run_scenario(scenario)
    write_window_csv(window, config.output)
    console.print(
        f"[bold green]Simulated[/] {window.n_channels}×{window.n_samples} stream "
        f"with {len(scenario.events)} event(s) → {escape(str(config.output))}"
    )


def _run_mp_check(config: RunConfig) -> None:
    p = config.params
    window = load_window_csv(config.input_paths[0])
    result = mp_check(window, p["repetitions"], p["eta"], p["bins"], p["seed"])
    write_histogram_csv(result.histogram, config.output)
    console.print(render_mp_check(result))


def _run_asd(config: RunConfig) -> None:
    params = MpParams(config.params["ratio_c"], config.params["variance"])
    density = _asd_for(config, config.polynomial, params, params)
    write_density_csv(density, config.output)
    console.print(render_density(density, title=f"ASD ({config.polynomial.value.upper()})"))


def _detect_pair(
    config: RunConfig, reference: MeasurementWindow, test: MeasurementWindow
) -> DetectionReport:
    kind = config.polynomial
    sigma0, sigma1 = _covariances(config, reference, test)
    params0 = MpParams.for_shape(reference.n_channels, reference.n_samples)
    params1 = MpParams.for_shape(test.n_channels, test.n_samples)
    asd = _asd_for(config, kind, params0, params1)
    return detect(kind, sigma0, sigma1, asd, config.params["margin_eps"])


def _run_detect(config: RunConfig) -> None:
    reference, test = _load_pair(config)
    report = _detect_pair(config, reference, test)
    write_json(report_to_dict(report), config.output)
    console.print(render_detection(report))


def _run_locate(config: RunConfig) -> None:
    reference, test = _load_pair(config)
    stride = config.params["window_stride"]
    if stride is None:
        report = _detect_pair(config, reference, test)
        location = locate(report, channel_labels=test.channel_labels)
        write_json(location_to_dict(location), config.output)
        console.print(render_location(location, test.channel_labels))
        return

    kind = config.polynomial
    params = MpParams.for_shape(reference.n_channels, reference.n_samples)
    asd = _asd_for(config, kind, params, params)
    results = sliding_locate(
        reference,
        test,
        kind,
        asd,
        margin_eps=config.params["margin_eps"],
        stride=stride,
        eta=config.params["eta"],
        seed=config.params["seed"],
        show_progress=err_console.is_terminal,
    )
    write_json([location_to_dict(r.location) for r in results], config.output)
    series_path = config.output.with_name(f"{config.output.stem}.series.csv")
    write_location_series_csv(results, series_path)
    anomalous = [r for r in results if r.detection.is_anomaly]
    console.print(
        f"[bold]{len(results)}[/] window(s) scanned, "
        f"[bold red]{len(anomalous)}[/] anomalous → {escape(str(series_path))}"
    )
    if anomalous:
        strongest = max(anomalous, key=lambda r: r.detection.s)
        console.print(render_location(strongest.location, test.channel_labels))


def _run_product(config: RunConfig) -> None:
    reference, test = _load_pair(config)
    seed, eta = config.params["seed"], config.params["eta"]
    window0 = preprocess(reference, eta, np.random.SeedSequence([seed, 0]))
    window1 = preprocess(test, eta, np.random.SeedSequence([seed, 1]))
    spectrum = product_spectrum(window0, window1, config.params["delta"])
    write_spectrum_csv(spectrum, config.output)
    write_json(spectrum_to_dict(spectrum), config.output.with_suffix(".json"))
    console.print(render_product(spectrum))


def _run_cases(config: RunConfig) -> None:
    p = config.params
    model_seed, case_seed = np.random.SeedSequence(p["seed"]).spawn(2)
    model = build_model(p["n"], model_seed, p["conditioning"], orthogonal=True)
    windows = case_windows(model, seed=case_seed)
    reference = windows.pop("C0")
    params = MpParams.for_shape(reference.n_channels, reference.n_samples)

    by_kind: dict[PolynomialKind, list[DetectionReport]] = {}
    for kind in PolynomialKind:
        asd = _asd_for(config, kind, params, params)
        reports = []
        for label, window in windows.items():
            sigma0, sigma1 = _covariances(config, reference, window)
            reports.append(detect(kind, sigma0, sigma1, asd, p["margin_eps"], label=label))
        by_kind[kind] = reports

    p1, p2 = by_kind[PolynomialKind.P1], by_kind[PolynomialKind.P2]
    console.print(render_cases(p1, p2))
    if config.output_path is not None:
        write_json(
            {
                kind.value: {
                    "reports": [report_to_dict(r) for r in reports],
                    "order": [r.label for r in ordering_check(reports)],
                }
                for kind, reports in by_kind.items()
            },
            config.output_path,
        )


_HANDLERS: dict[str, Callable[[RunConfig], None]] = {
    "simulate": _run_simulate,
    "mp-check": _run_mp_check,
    "asd": _run_asd,
    "detect": _run_detect,
    "locate": _run_locate,
    "product": _run_product,
    "cases": _run_cases,
}


def run(config: RunConfig) -> int:
    """Execute *config* and return the process exit status.

    Errors are reported on stderr; nothing here calls ``sys.exit``.
    """
    log.debug("%s %s", config.command, " ".join(str(p) for p in config.input_paths))
    try:
        _HANDLERS[config.command](config)
    except FreeSpecError as exc:
        err_console.print(f"[bold red]Error:[/] {escape(str(exc))}")
        return exc.exit_code
    except OSError as exc:
        err_console.print(f"[bold red]Error:[/] {escape(str(exc))}")
        return 1
    return 0


def _execute(command: str, inputs: tuple[str, ...], out: str | None, **params: Any) -> None:
    try:
        config = RunConfig(
            command,
            tuple(Path(p) for p in inputs),
            Path(out) if out is not None else None,
            params,
        )
    except FreeSpecError as exc:
        _abort(exc)
    code = run(config)
    if code:
        sys.exit(code)


# -- click surface ------------------------------------------------------------


class _ExitCodeGroup(click.Group):
    """Click Group that reports usage errors with exit status 1.

    Click exits with 2 on usage errors, which freespec reserves for numerical
    failures.
    """

    def main(self, *args: Any, **kwargs: Any) -> Any:  # type: ignore[override]
        kwargs["standalone_mode"] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.ClickException as exc:
            exc.show()
            sys.exit(1)
        except click.exceptions.Abort:
            err_console.print("Aborted!")
            sys.exit(1)
        if isinstance(rv, int) and rv:
            sys.exit(rv)
        return rv


_eta = click.option(
    "--eta",
    type=float,
    default=DEFAULT_PARAMS["eta"],
    show_default=True,
    help="Scale of the regularizing white noise.",
)
_seed = click.option(
    "--seed",
    type=int,
    default=DEFAULT_PARAMS["seed"],
    show_default=True,
    help="Seed for every random draw.",
)
_out = click.option("--out", "-o", default=None, help="Output file.")
_polynomial = click.option(
    "--polynomial",
    type=click.Choice([k.value for k in PolynomialKind]),
    default=DEFAULT_PARAMS["polynomial"],
    show_default=True,
    help="Covariance polynomial: p1 = Σ₁−Σ₀, p2 = (Σ₁−Σ₀)².",
)
_margin = click.option(
    "--margin-eps", type=float, default=None, help="Support dilation (default: from the ASD)."
)
_grid_points = click.option(
    "--grid-points",
    type=int,
    default=DEFAULT_PARAMS["grid_points"],
    show_default=True,
    help="ASD grid size.",
)
_smoothing_offset = click.option(
    "--smoothing-offset",
    type=float,
    default=None,
    help="Imaginary offset for Stieltjes inversion (default: 1e-3 of the grid span).",
)
_corner_eps = click.option(
    "--corner-eps",
    type=float,
    default=DEFAULT_PARAMS["corner_eps"],
    show_default=True,
    help="Regularization of the P2 corner recovery.",
)


def _asd_options(func: Callable[..., Any]) -> Callable[..., Any]:
    return _grid_points(_smoothing_offset(_corner_eps(func)))


@click.group(cls=_ExitCodeGroup)
@click.option("--verbose", "-v", count=True, help="Log progress (-v) or details (-vv).")
@click.version_option(__version__, "--version", "-V")
def main(verbose: int) -> None:
    """Free-probability spectral analysis of measurement windows.

    \b
    Examples:
      freespec simulate scenario.json --out data.csv
      freespec asd p2 --grid-points 512
      freespec detect ref.csv test.csv --polynomial p2
      freespec locate ref.csv stream.csv --stride 10
    """
    _configure_logging(verbose)


@main.command("simulate")
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@_out
def simulate_cmd(scenario: str, out: str | None) -> None:
    """Simulate a measurement stream from a SCENARIO JSON file."""
    _execute("simulate", (scenario,), out)


@main.command("mp-check")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@_eta
@click.option(
    "--repetitions",
    type=int,
    default=DEFAULT_PARAMS["repetitions"],
    show_default=True,
    help="Independent re-noisings pooled into the ESD.",
)
@click.option(
    "--bins",
    type=int,
    default=None,
    help="Histogram bins (default: Freedman–Diaconis).",
)
@_seed
@_out
def mp_check_cmd(
    data: str, eta: float, repetitions: int, bins: int | None, seed: int, out: str | None
) -> None:
    """Compare the pooled ESD of DATA with the Marchenko–Pastur law."""
    _execute("mp-check", (data,), out, eta=eta, repetitions=repetitions, bins=bins, seed=seed)


@main.command("asd")
@click.argument("polynomial", type=click.Choice([k.value for k in PolynomialKind]))
@click.option(
    "--ratio-c",
    type=float,
    default=DEFAULT_PARAMS["ratio_c"],
    show_default=True,
    help="Aspect ratio N/T of both windows.",
)
@click.option(
    "--variance",
    type=float,
    default=DEFAULT_PARAMS["variance"],
    show_default=True,
    help="Entry variance σ².",
)
@_asd_options
@_out
def asd_cmd(
    polynomial: str,
    ratio_c: float,
    variance: float,
    grid_points: int,
    smoothing_offset: float | None,
    corner_eps: float,
    out: str | None,
) -> None:
    """Compute (or load from cache) the asymptotic density of POLYNOMIAL."""
    _execute(
        "asd",
        (),
        out,
        polynomial=polynomial,
        ratio_c=ratio_c,
        variance=variance,
        grid_points=grid_points,
        smoothing_offset=smoothing_offset,
        corner_eps=corner_eps,
    )


@main.command("detect")
@click.argument("reference", type=click.Path(exists=True, dir_okay=False))
@click.argument("test", type=click.Path(exists=True, dir_okay=False))
@_polynomial
@_margin
@_eta
@_asd_options
@_seed
@_out
def detect_cmd(
    reference: str,
    test: str,
    polynomial: str,
    margin_eps: float | None,
    eta: float,
    grid_points: int,
    smoothing_offset: float | None,
    corner_eps: float,
    seed: int,
    out: str | None,
) -> None:
    """Test the TEST window against the REFERENCE window."""
    _execute(
        "detect",
        (reference, test),
        out,
        polynomial=polynomial,
        margin_eps=margin_eps,
        eta=eta,
        grid_points=grid_points,
        smoothing_offset=smoothing_offset,
        corner_eps=corner_eps,
        seed=seed,
    )


@main.command("locate")
@click.argument("reference", type=click.Path(exists=True, dir_okay=False))
@click.argument("test", type=click.Path(exists=True, dir_okay=False))
@_polynomial
@_margin
@_eta
@_asd_options
@click.option(
    "--stride",
    type=int,
    default=None,
    help="Slide a reference-sized window over TEST with this step.",
)
@_seed
@_out
def locate_cmd(
    reference: str,
    test: str,
    polynomial: str,
    margin_eps: float | None,
    eta: float,
    grid_points: int,
    smoothing_offset: float | None,
    corner_eps: float,
    stride: int | None,
    seed: int,
    out: str | None,
) -> None:
    """Locate the channel driving the anomaly in TEST.

    \b
    With --stride the per-window series is also written next to the
    JSON output as <stem>.series.csv.
    """
    _execute(
        "locate",
        (reference, test),
        out,
        polynomial=polynomial,
        margin_eps=margin_eps,
        eta=eta,
        grid_points=grid_points,
        smoothing_offset=smoothing_offset,
        corner_eps=corner_eps,
        window_stride=stride,
        seed=seed,
    )


@main.command("product")
@click.argument("reference", type=click.Path(exists=True, dir_okay=False))
@click.argument("test", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--delta",
    type=float,
    default=DEFAULT_PARAMS["delta"],
    show_default=True,
    help="Relative band around the bulk disk.",
)
@_eta
@_seed
@_out
def product_cmd(
    reference: str, test: str, delta: float, eta: float, seed: int, out: str | None
) -> None:
    """Complex spectrum of the normalized product of two square windows.

    Both windows are preprocessed like the detect inputs, so the bulk disk
    has unit radius.
    """
    _execute("product", (reference, test), out, delta=delta, eta=eta, seed=seed)


@main.command("cases")
@click.option(
    "--n",
    "n",
    type=int,
    default=DEFAULT_PARAMS["n"],
    show_default=True,
    help="Number of buses (and samples per window).",
)
@click.option(
    "--conditioning",
    type=float,
    default=DEFAULT_PARAMS["conditioning"],
    show_default=True,
    help="Strength of the random mixing.",
)
@_margin
@_eta
@_asd_options
@_seed
@_out
def cases_cmd(
    n: int,
    conditioning: float,
    margin_eps: float | None,
    eta: float,
    grid_points: int,
    smoothing_offset: float | None,
    corner_eps: float,
    seed: int,
    out: str | None,
) -> None:
    """Run the step, ramp, chaos and noise cases through both polynomials."""
    _execute(
        "cases",
        (),
        out,
        n=n,
        conditioning=conditioning,
        margin_eps=margin_eps,
        eta=eta,
        grid_points=grid_points,
        smoothing_offset=smoothing_offset,
        corner_eps=corner_eps,
        seed=seed,
    )
