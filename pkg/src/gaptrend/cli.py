"""Command-line front end: ingestion, analysis subcommands, report emission.

Every subcommand writes a self-describing JSON report (inputs, parameters,
seed, versions, results) plus CSV data files, so any number in a report can
be regenerated from the command line alone. Reports are byte-identical
across runs and thread counts for a fixed seed; nothing in them depends on
wall-clock time. All numerical work happens in the library modules.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .awb import AwbConfig
from .breaktrend import break_ci, break_test, estimate_break, slope_cis, trimming_set
from .exceptions import NoInteriorExtremumError, SingularDesignError
from .kerneltrend import (
    KernelTrendFit,
    bandwidth_grid,
    confidence_bands,
    mcv_scan,
    nw_estimate,
)
from .mcharness import PANEL_FIELDS, run_panel
from .seasonal import deseasonalize, fit_seasonal
from .series import ObservedSeries, ingest_csv, write_canonical_csv
from .shapetests import (
    extremum_ci,
    linearity_test,
    monotonicity_tests,
    trend_minimum,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# Report helpers


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _clean(obj):
    """Make report values JSON-stable: numpy scalars to Python, arrays to lists."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_report(out_dir: Path, name: str, command: str, params: dict, results: dict) -> Path:
    report = {
        "tool": {"name": "gaptrend", "version": __version__},
        "command": command,
        "parameters": _clean(params),
        "results": _clean(results),
    }
    path = out_dir / name
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


def _write_csv(out_dir: Path, name: str, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else str(v) for v in row))
    path = out_dir / name
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_svg(out_dir: Path, name: str, curves: list[tuple[str, np.ndarray, np.ndarray]]) -> Path:
    """Minimal deterministic SVG: polylines on a fixed 800x400 canvas."""
    width, height, pad = 800.0, 400.0, 40.0
    xs = np.concatenate([c[1] for c in curves])
    ys = np.concatenate([c[2] for c in curves])
    finite = np.isfinite(xs) & np.isfinite(ys)
    x_lo, x_hi = float(xs[finite].min()), float(xs[finite].max())
    y_lo, y_hi = float(ys[finite].min()), float(ys[finite].max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#7f7f7f"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    for i, (label, x, y) in enumerate(curves):
        ok = np.isfinite(x) & np.isfinite(y)
        px = pad + (x[ok] - x_lo) / x_span * (width - 2 * pad)
        py = height - pad - (y[ok] - y_lo) / y_span * (height - 2 * pad)
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = palette[i % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{points}"><title>{label}</title></polyline>')
    parts.append("</svg>")
    path = out_dir / name
    path.write_text("\n".join(parts) + "\n")
    return path


def _load_series_csv(path: str, date_column: str, value_column: str) -> ObservedSeries:
    series, _ = ingest_csv(path, date_column, value_column)
    return series


def _series_payload(series: ObservedSeries) -> dict:
    return {
        "t0": series.t0.isoformat(),
        "grid_step": series.grid_step,
        "values": [float(v) if m else None for v, m in zip(series.values, series.mask)],
        "mask": series.mask.tolist(),
    }


def _series_from_payload(payload: dict) -> ObservedSeries:
    import datetime as dt

    mask = np.asarray(payload["mask"], dtype=np.uint8)
    values = np.array([0.0 if v is None else float(v) for v in payload["values"]])
    return ObservedSeries(values, mask, dt.date.fromisoformat(payload["t0"]), payload["grid_step"])


def _write_fit_artifact(out_dir: Path, eps: ObservedSeries, fit: KernelTrendFit) -> Path:
    payload = {
        "schema": "gaptrend-trend-fit-v1",
        "series": _series_payload(eps),
        "fit": {
            "h": fit.h,
            "kernel": fit.kernel,
            "g_hat": [float(v) if np.isfinite(v) else None for v in fit.g_hat],
        },
    }
    path = out_dir / "trend_fit.json"
    path.write_text(json.dumps(payload, sort_keys=True) + "\n")
    return path


def load_fit_artifact(path: str) -> tuple[ObservedSeries, KernelTrendFit]:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != "gaptrend-trend-fit-v1":
        raise ValueError(f"{path}: not a trend-fit artifact")
    eps = _series_from_payload(payload["series"])
    g = np.array([np.nan if v is None else float(v) for v in payload["fit"]["g_hat"]])
    return eps, KernelTrendFit(g_hat=g, h=payload["fit"]["h"], kernel=payload["fit"]["kernel"])


def _interval_to_positions(series: ObservedSeries, spec: str) -> tuple[int, int]:
    import datetime as dt

    try:
        lo_s, hi_s = spec.split(":")
        lo = series.position_of(dt.date.fromisoformat(lo_s))
        hi = series.position_of(dt.date.fromisoformat(hi_s))
    except (ValueError, AttributeError):
        raise ValueError(f"interval must be 'YYYY-MM-DD:YYYY-MM-DD', got {spec!r}") from None
    return max(lo, 1), min(hi, len(series))


# Flags whose spelling differs from the underlying parameter name.
_FLAG_PARAM_NAMES = {"B": "n_boot", "lambda": "trim_fraction", "input": "input_path"}


def _load_config(ctx: click.Context, _param: click.Parameter, value: str | None):
    """Flat key = value file feeding default_map; flags override file values."""
    if value is None:
        return None
    defaults: dict[str, dict] = {}
    for line_no, raw in enumerate(Path(value).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.UsageError(f"{value}:{line_no}: expected 'key = value'")
        key, _, val = line.partition("=")
        parts = key.strip().split(".")
        target = defaults
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        leaf = parts[-1]
        leaf = _FLAG_PARAM_NAMES.get(leaf, leaf.replace("-", "_"))
        target[leaf] = val.strip()
    ctx.default_map = defaults
    return value


# ---------------------------------------------------------------------------
# CLI definition


@click.group()
@click.option("--config", type=click.Path(exists=True), callback=_load_config,
              is_eager=True, expose_value=False,
              help="Flat key = value file; keys mirror flags (subcommand.flag).")
@click.option("--out", envvar="GAPTREND_OUT", default="gaptrend_out",
              show_default=True, help="Output directory for reports and data files.")
@click.option("--seed", type=int, default=0, show_default=True, help="Bootstrap seed.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for bootstrap replicates.")
@click.pass_context
def cli(ctx: click.Context, out: str, seed: int, threads: int) -> None:
    """Trend inference for gappy daily time series."""
    ctx.ensure_object(dict)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx.obj.update(out=out_dir, seed=seed, threads=max(threads, 1))


_INPUT_OPTIONS = [
    click.option("--input", "input_path", required=True, type=click.Path(exists=True),
                 help="CSV file with dated measurements."),
    click.option("--date-column", default="date", show_default=True),
    click.option("--value-column", default="value", show_default=True),
]


def _with_input(fn):
    for opt in reversed(_INPUT_OPTIONS):
        fn = opt(fn)
    return fn


@cli.command()
@_with_input
@click.pass_context
def ingest(ctx, input_path: str, date_column: str, value_column: str) -> None:
    """Read a CSV onto the daily grid and write the canonical form."""
    out_dir: Path = ctx.obj["out"]
    series, summary = ingest_csv(input_path, date_column, value_column)
    canonical = out_dir / "canonical.csv"
    write_canonical_csv(series, str(canonical))
    _write_report(
        out_dir, "ingest_report.json", "ingest",
        {
            "input": Path(input_path).name, "input_sha256": _sha256(input_path),
            "date_column": date_column, "value_column": value_column,
        },
        {
            "n_grid": summary.n_grid,
            "n_observed": summary.n_observed,
            "observed_fraction": summary.observed_fraction,
            "first_date": summary.first_date.isoformat(),
            "last_date": summary.last_date.isoformat(),
            "canonical_csv": canonical.name,
        },
    )
    click.echo(f"{summary.n_observed} observed days on a {summary.n_grid}-day grid "
               f"({summary.observed_fraction:.1%})")


@cli.command(name="break")
@_with_input
@click.option("--lambda", "trim_fraction", type=float, default=0.1, show_default=True,
              help="Trimming fraction for break candidates.")
@click.option("--fourier", "n_harmonics", type=int, default=3, show_default=True)
@click.option("--B", "n_boot", type=int, default=999, show_default=True)
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--theta", type=float, default=0.1, show_default=True)
@click.pass_context
def break_cmd(ctx, input_path, date_column, value_column, trim_fraction, n_harmonics,
              n_boot, level, alpha, theta) -> None:
    """Broken-trend analysis: break test, date interval, slope intervals."""
    out_dir: Path = ctx.obj["out"]
    threads = ctx.obj["threads"]
    series = _load_series_csv(input_path, date_column, value_column)
    cfg = AwbConfig(seed=ctx.obj["seed"], theta=theta, n_boot=n_boot)
    trim = trimming_set(len(series), trim_fraction)

    test = break_test(series, trim, cfg, n_harmonics, alpha, threads=threads)
    fit = estimate_break(series, trim, n_harmonics)
    ci = break_ci(series, fit, cfg, level, trim, threads=threads)
    slopes = slope_cis(series, fit, cfg, level, threads=threads)
    per_year = slopes.per_year(series.grid_step)

    trend = fit.trend_values()
    seasonal = fit.seasonal.fitted
    rows = []
    for i in range(len(series)):
        rows.append([
            series.date_at(i + 1).isoformat(),
            repr(float(series.values[i])) if series.mask[i] else None,
            repr(float(trend[i])),
            repr(float(trend[i] + seasonal[i])),
        ])
    _write_csv(out_dir, "break_trend.csv", ["date", "observed", "trend", "trend_plus_seasonal"], rows)

    _write_report(
        out_dir, "break_report.json", "break",
        {
            "input": Path(input_path).name, "input_sha256": _sha256(input_path),
            "lambda": trim_fraction, "fourier": n_harmonics, "B": n_boot,
            "level": level, "alpha": alpha, "theta": theta, "seed": cfg.seed,
        },
        {
            "statistic": test.statistic,
            "critical_value": test.critical_value,
            "p_value": test.p_value,
            "reject": test.reject,
            "break_index": fit.break_index,
            "break_date": ci.break_date.isoformat(),
            "break_ci": [ci.lower_date.isoformat(), ci.upper_date.isoformat()],
            "break_ci_length_days": ci.length,
            "slopes_per_year": {
                name: {"estimate": c.estimate, "ci": [c.lower, c.upper]}
                for name, c in per_year.items()
            },
            "intercept": {"estimate": slopes.intercept.estimate,
                          "ci": [slopes.intercept.lower, slopes.intercept.upper]},
            "ssr": fit.ssr,
            "plot_data": "break_trend.csv",
        },
    )
    click.echo(f"break test p-value {test.p_value:.4f}; break at {ci.break_date.isoformat()} "
               f"[{ci.lower_date.isoformat()}, {ci.upper_date.isoformat()}]")


@cli.command()
@_with_input
@click.option("--bandwidth", type=float, default=None, help="Trend bandwidth in rescaled time.")
@click.option("--pick-minimum", "pick_minimum", type=int, default=None,
              help="Use the n-th local minimum of the cross-validation curve (0-based).")
@click.option("--mcv-grid", default="0.01:0.25:0.005", show_default=True,
              help="Bandwidth candidates lo:hi:step.")
@click.option("--mcv-k", type=int, default=None, help="Leave-out half-width (default 1.75*T^(1/3)).")
@click.option("--fourier", "n_harmonics", type=int, default=3, show_default=True)
@click.option("--B", "n_boot", type=int, default=999, show_default=True)
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--svg/--no-svg", default=False, show_default=True,
              help="Also render static SVG plots.")
@click.pass_context
def smooth(ctx, input_path, date_column, value_column, bandwidth, pick_minimum,
           mcv_grid, mcv_k, n_harmonics, n_boot, level, svg) -> None:
    """Kernel trend with simultaneous confidence bands on deseasonalized data."""
    out_dir: Path = ctx.obj["out"]
    threads = ctx.obj["threads"]
    series = _load_series_csv(input_path, date_column, value_column)
    seasonal = fit_seasonal(series, n_harmonics=n_harmonics)
    eps = deseasonalize(series, seasonal)

    try:
        lo, hi, step = (float(x) for x in mcv_grid.split(":"))
    except ValueError:
        raise ValueError(f"--mcv-grid must be lo:hi:step, got {mcv_grid!r}") from None
    scan = mcv_scan(eps, bandwidth_grid(lo, hi, step), mcv_k)
    _write_csv(
        out_dir, "mcv_scores.csv", ["bandwidth", "score", "is_local_minimum"],
        [
            [repr(float(h)), repr(float(s)), int(i in set(scan.local_minima.tolist()))]
            for i, (h, s) in enumerate(zip(scan.grid, scan.scores))
        ],
    )
    if svg:
        ok = np.isfinite(scan.scores)
        _write_svg(out_dir, "mcv_scores.svg", [("cv score", scan.grid[ok], scan.scores[ok])])

    if bandwidth is None and pick_minimum is not None:
        scan = scan.pick(pick_minimum)
        bandwidth = scan.chosen
    if bandwidth is None:
        minima = ", ".join(f"{scan.grid[i]:g}" for i in scan.local_minima) or "none"
        raise click.UsageError(
            "bandwidth selection needs a user decision: pass --bandwidth or "
            f"--pick-minimum n (cross-validation curve written to mcv_scores.csv; "
            f"local minima at: {minima})"
        )

    fit = nw_estimate(eps, bandwidth)
    cfg = AwbConfig(seed=ctx.obj["seed"], n_boot=n_boot)
    bands = confidence_bands(eps, fit, cfg, level, threads=threads)

    rows = []
    for i in range(len(series)):
        def fmt(arr):
            return repr(float(arr[i])) if np.isfinite(arr[i]) else None
        rows.append([
            eps.date_at(i + 1).isoformat(),
            repr(float(eps.values[i])) if eps.mask[i] else None,
            fmt(fit.g_hat), fmt(bands.pointwise_lower), fmt(bands.pointwise_upper),
            fmt(bands.lower), fmt(bands.upper),
        ])
    _write_csv(
        out_dir, "trend_bands.csv",
        ["date", "deseasonalized", "trend", "pointwise_lower", "pointwise_upper",
         "simultaneous_lower", "simultaneous_upper"],
        rows,
    )
    if svg:
        days = np.arange(len(series), dtype=float)
        _write_svg(out_dir, "trend_bands.svg", [
            ("trend", days, fit.g_hat),
            ("lower", days, bands.lower),
            ("upper", days, bands.upper),
        ])
    artifact = _write_fit_artifact(out_dir, eps, fit)

    _write_report(
        out_dir, "smooth_report.json", "smooth",
        {
            "input": Path(input_path).name, "input_sha256": _sha256(input_path),
            "bandwidth": bandwidth, "mcv_grid": mcv_grid, "mcv_k": scan.k,
            "fourier": n_harmonics, "B": n_boot, "level": level, "seed": cfg.seed,
        },
        {
            "bandwidth": bandwidth,
            "calibrated_pointwise_alpha": bands.alpha_s,
            "mcv_local_minima": [float(scan.grid[i]) for i in scan.local_minima],
            "mcv_no_interior_minimum": scan.no_interior_minimum,
            "n_undefined_positions": int((~np.isfinite(fit.g_hat)).sum()),
            "trend_bands": "trend_bands.csv",
            "fit_artifact": artifact.name,
            "seasonal_cos": seasonal.a,
            "seasonal_sin": seasonal.b,
        },
    )
    click.echo(f"trend with h={bandwidth:g}; simultaneous level {level:g} "
               f"(calibrated pointwise rate {bands.alpha_s:.4f})")


@cli.command()
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True),
              help="Trend-fit artifact from `smooth`.")
@click.option("--kind", type=click.Choice(["min", "max"]), default="min", show_default=True)
@click.option("--B", "n_boot", type=int, default=999, show_default=True)
@click.option("--level", type=float, default=0.95, show_default=True)
@click.pass_context
def extremum(ctx, fit_path, kind, n_boot, level) -> None:
    """Confidence interval for the position of the trend extremum."""
    out_dir: Path = ctx.obj["out"]
    eps, fit = load_fit_artifact(fit_path)
    cfg = AwbConfig(seed=ctx.obj["seed"], n_boot=n_boot)
    res = extremum_ci(eps, fit, cfg, kind, level, threads=ctx.obj["threads"])
    _write_report(
        out_dir, "extremum_report.json", "extremum",
        {"fit": Path(fit_path).name, "fit_sha256": _sha256(fit_path), "kind": kind,
         "B": n_boot, "level": level, "seed": cfg.seed},
        {
            "location_index": res.location,
            "location_date": res.date.isoformat(),
            "value": res.value,
            "ci_dates": [res.lower_date.isoformat(), res.upper_date.isoformat()],
            "ci_indices": [res.lower_index, res.upper_index],
        },
    )
    click.echo(f"{kind} at {res.date.isoformat()} "
               f"[{res.lower_date.isoformat()}, {res.upper_date.isoformat()}]")


@cli.command()
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True))
@click.option("--B", "n_boot", type=int, default=999, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.pass_context
def lintest(ctx, fit_path, n_boot, alpha) -> None:
    """Test a linear trend from the trend minimum to the sample end."""
    out_dir: Path = ctx.obj["out"]
    eps, fit = load_fit_artifact(fit_path)
    cfg = AwbConfig(seed=ctx.obj["seed"], n_boot=n_boot)
    res = linearity_test(eps, fit, trend_minimum(fit), cfg, alpha, threads=ctx.obj["threads"])
    _write_report(
        out_dir, "lintest_report.json", "lintest",
        {"fit": Path(fit_path).name, "fit_sha256": _sha256(fit_path), "B": n_boot,
         "alpha": alpha, "seed": cfg.seed},
        {
            "q_ave": res.q_ave, "cv_ave": res.cv_ave, "p_ave": res.p_ave,
            "q_sup": res.q_sup, "cv_sup": res.cv_sup, "p_sup": res.p_sup,
            "slope_per_rescaled_time": res.slope,
            "anchor_index": res.anchor_index,
            "test_window": [res.test_start, res.test_end],
        },
    )
    click.echo(f"linearity: p_ave={res.p_ave:.4f} p_sup={res.p_sup:.4f}")


@cli.command()
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True))
@click.option("--interval", default=None,
              help="Calendar range 'YYYY-MM-DD:YYYY-MM-DD' (default: trend minimum to end).")
@click.option("--B", "n_boot", type=int, default=999, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.pass_context
def monotest(ctx, fit_path, interval, n_boot, alpha) -> None:
    """Tests of a monotonically increasing trend over an interval."""
    out_dir: Path = ctx.obj["out"]
    eps, fit = load_fit_artifact(fit_path)
    if interval is None:
        positions = (trend_minimum(fit).location, len(eps))
    else:
        positions = _interval_to_positions(eps, interval)
    cfg = AwbConfig(seed=ctx.obj["seed"], n_boot=n_boot)
    res = monotonicity_tests(eps, positions, cfg, h=fit.h, alpha=alpha,
                             threads=ctx.obj["threads"])
    _write_report(
        out_dir, "monotest_report.json", "monotest",
        {"fit": Path(fit_path).name, "fit_sha256": _sha256(fit_path), "interval": list(positions),
         "B": n_boot, "alpha": alpha, "seed": cfg.seed},
        {
            "u1": res.u1, "cv1": res.cv1, "p1": res.p1,
            "u2": res.u2, "cv2": res.cv2, "p2": res.p2,
            "h_u": res.h_u,
        },
    )
    click.echo(f"monotonicity: p1={res.p1:.4f} p2={res.p2:.4f} (h_u={res.h_u:.3f})")


@cli.command()
@click.option("--panel", type=click.Choice(["A", "B", "C", "D"], case_sensitive=False),
              required=True)
@click.option("--replications", type=int, default=1000, show_default=True)
@click.option("--B", "n_boot", type=int, default=999, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True,
              help="Shrink replications and B for desk runs.")
@click.pass_context
def mc(ctx, panel, replications, n_boot, scale) -> None:
    """Synthetic-data validation panels; emits a long-format results table."""
    out_dir: Path = ctx.obj["out"]
    started = time.time()
    rows = run_panel(panel.upper(), replications, n_boot, ctx.obj["seed"], scale,
                     threads=ctx.obj["threads"])
    name = f"panel_{panel.upper()}.csv"
    _write_csv(out_dir, name, PANEL_FIELDS, [[r.get(f, "") for f in PANEL_FIELDS] for r in rows])
    meta = {
        "panel": panel.upper(),
        "replications": replications,
        "B": n_boot,
        "scale": scale,
        "seed": ctx.obj["seed"],
        "table": name,
        "runtime_seconds": round(time.time() - started, 3),
    }
    (out_dir / f"panel_{panel.upper()}_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n"
    )
    click.echo(f"panel {panel.upper()}: {len(rows)} result rows -> {name}")


def run(argv: list[str] | None = None) -> int:
    """Entry point with the exit-code contract: 0 ok, 2 validation, 3 numerical."""
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="gaptrend")
        return EXIT_OK
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_VALIDATION
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except click.exceptions.Abort:
        return EXIT_VALIDATION
    except (ValueError, FileNotFoundError, NoInteriorExtremumError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except (SingularDesignError, FloatingPointError, np.linalg.LinAlgError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())
