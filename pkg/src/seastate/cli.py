"""Batch command-line interface.

Four commands: ``decomp`` fits one model and writes the smoothed
decomposition, ``sweep`` fits a grid of orders and writes an AIC table,
``twostep`` regresses out a long-period component before decomposing the
residual, and ``predict`` writes observation forecasts.

Options come from a flat ``key = value`` config file plus command-line
overrides (the flags mirror the m1/m2/m3/m4/m5 order notation).  Period
resolution: ``period`` drives the dummy seasonal when m2 = 1 and the
first trigonometric block otherwise; ``period2`` drives the first trig
block when m2 = 1, and otherwise the second trig block (m5), the
two-step stage-1 regression, or the one-factor curve.

All output files are written atomically; on failure the files already
written by the run are removed, a single JSON error line goes to stderr,
and the exit code is 2 for configuration errors or 1 for runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np

from .components import ModelSpec, TrigBlockSpec, excluded_harmonics
from .estimation import decompose, fit_mle, forecast, spec_order_tuple, sweep
from .timeseries import TimeSeries, load_csv, log_transform, resample_decimate, subtract_series
from .trigreg import fit_ols, two_step_fit


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


_DEFAULTS: Dict[str, str] = {
    "input": "",
    "column": "0",
    "missing_token": "",
    "log": "false",
    "decimate": "1",
    "output_dir": ".",
    "m1": "0",
    "m2": "0",
    "period": "0",
    "seasonal_variant": "sum",
    "m3": "0",
    "m4": "0",
    "m5": "0",
    "period2": "0",
    "trig_dynamics": "random_walk",
    "exclude_shared": "true",
    "one_factor": "false",
    "k": "0",
    "horizon": "0",
    "count_rule": "coefficients",
    "threads": "",
}

_RANGE_KEYS = ("m3", "m4", "m5")


def _parse_bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {value!r}")


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def _parse_range(key: str, value: str) -> List[int]:
    """An order value: single integer, "a..b" inclusive range, or a
    comma-separated list."""
    value = value.strip()
    if ".." in value:
        lo, _, hi = value.partition("..")
        out = list(range(_parse_int(key, lo), _parse_int(key, hi) + 1))
    elif "," in value:
        out = [_parse_int(key, v) for v in value.split(",") if v.strip() != ""]
    else:
        out = [_parse_int(key, value)]
    if not out:
        raise ConfigError(f"{key} range {value!r} is empty")
    if any(v < 0 for v in out):
        raise ConfigError(f"{key} values must be >= 0, got {value!r}")
    return out


def read_config_file(path: str) -> Dict[str, str]:
    """Parse a flat ``key = value`` config file; # starts a comment."""
    out: Dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def merge_config(args: argparse.Namespace) -> Dict[str, str]:
    cfg = dict(_DEFAULTS)
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _resolve_trig_periods(cfg, m2: int):
    """(trig1 period, trig2/stage-1 period) under the resolution rule."""
    period = _parse_float("period", cfg["period"])
    period2 = _parse_float("period2", cfg["period2"])
    if m2:
        return period2, 0.0
    return period, period2


def _terms_for_retained(m5: int, excluded: frozenset) -> int:
    """Smallest even term count whose harmonics keep m5 pairs after
    exclusion."""
    k = 0
    kept = 0
    while kept < m5:
        k += 1
        if k not in excluded:
            kept += 1
    return 2 * k


def build_spec(cfg: Dict[str, str], m3: int, m4: int, m5: int,
               reserve_period2: bool = False) -> ModelSpec:
    """Model spec from resolved orders.

    ``reserve_period2`` marks period2 as taken by a stage-1 regression
    (twostep, one-factor), leaving it unavailable for trig blocks.
    """
    m1 = _parse_int("m1", cfg["m1"])
    m2 = _parse_int("m2", cfg["m2"])
    if m2 not in (0, 1):
        raise ConfigError(f"m2 must be 0 or 1, got {m2}")
    period = _parse_float("period", cfg["period"])
    variant = cfg["seasonal_variant"]
    if variant not in ("sum", "lag"):
        raise ConfigError(f"seasonal_variant must be sum or lag, got {variant!r}")
    dynamics = cfg["trig_dynamics"]
    if dynamics not in ("constant", "random_walk"):
        raise ConfigError(
            f"trig_dynamics must be constant or random_walk, got {dynamics!r}"
        )

    seasonal_period = 0
    if m2:
        if period <= 0:
            raise ConfigError("m2 = 1 requires a positive period")
        if period != int(period):
            raise ConfigError(f"dummy seasonal period must be an integer, got {period}")
        seasonal_period = int(period)

    trig1_period, trig2_period = _resolve_trig_periods(cfg, m2)
    if reserve_period2:
        if m2 and m4 > 0:
            raise ConfigError(
                "m4 with m2 = 1 needs period2 for the trig block, but this "
                "command reserves period2 for the stage-1 regression"
            )
        trig2_period = 0.0

    trig = []
    if m4 > 0:
        if trig1_period <= 0:
            raise ConfigError(
                "m4 > 0 requires a positive period"
                + (" (period2 when m2 = 1)" if m2 else "")
            )
        trig.append(TrigBlockSpec(trig1_period, m4, dynamics=dynamics))
    if m5 > 0:
        if trig2_period <= 0:
            raise ConfigError("m5 > 0 requires a positive period2 (and m2 = 0)")
        excluded = frozenset()
        if _parse_bool("exclude_shared", cfg["exclude_shared"]) and m4 > 0:
            excluded = excluded_harmonics(trig1_period, trig2_period)
        trig.append(TrigBlockSpec(trig2_period, _terms_for_retained(m5, excluded),
                                  excluded=excluded))
    return ModelSpec(
        trend_order=m1,
        seasonal_period=seasonal_period,
        seasonal_form=variant,
        ar_order=m3,
        trig=tuple(trig),
        one_factor=_parse_bool("one_factor", cfg["one_factor"]),
    )


def load_series(cfg: Dict[str, str]) -> TimeSeries:
    path = cfg["input"]
    if not path:
        raise ConfigError("input file is required")
    column = cfg["column"]
    try:
        column = int(column)
    except ValueError:
        pass
    ts = load_csv(path, column=column, missing_token=cfg["missing_token"])
    step = _parse_int("decimate", cfg["decimate"])
    if step > 1:
        ts = resample_decimate(ts, step)
    if _parse_bool("log", cfg["log"]):
        ts = log_transform(ts)
    return ts


def _fmt(x) -> str:
    """One value as CSV text: floats at 17 significant digits, missing as
    an empty cell."""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return "%.17g" % x
    return str(x)


class _Outputs:
    """Atomic file writing with removal of partial outputs on failure."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: List[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def write_text(self, name: str, text: str) -> str:
        path = os.path.join(self.out_dir, name)
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=name + ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            try:
                os.unlink(path)
            except OSError:
                pass


def _csv_text(header: List[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _spec_dict(spec: ModelSpec) -> dict:
    return {
        "m1": spec.trend_order,
        "m2": 1 if spec.seasonal_period else 0,
        "seasonal_period": spec.seasonal_period,
        "seasonal_variant": spec.seasonal_form,
        "m3": spec.ar_order,
        "trig": [
            {
                "period": t.period,
                "n_terms": t.n_terms,
                "dynamics": t.dynamics,
                "excluded": sorted(t.excluded),
                "include_j0": t.include_j0,
            }
            for t in spec.trig
        ],
        "one_factor": spec.one_factor,
    }


def _report_dict(report, stage1=None) -> dict:
    out = {
        "spec": _spec_dict(report.spec),
        "params": report.params,
        "log_likelihood": report.log_likelihood,
        "aic": report.aic,
        "n_params": report.n_params,
        "n_obs": report.n_obs,
        "converged": report.converged,
        "iterations": report.iterations,
        "runtime": report.runtime,
        "kappa": report.kappa,
        "count_rule": report.count_rule,
    }
    if report.aic_prime is not None:
        out["aic_prime"] = report.aic_prime
    if stage1 is not None:
        out["stage1"] = {
            "period": stage1.period,
            "order": stage1.order,
            "harmonics": list(stage1.harmonics),
            "coefficients": [float(c) for c in stage1.coefficients],
            "sigma2": stage1.sigma2,
            "aic": stage1.aic,
        }
    return out


def _write_fit_json(out: _Outputs, report, stage1=None) -> None:
    text = json.dumps(_report_dict(report, stage1), indent=2) + "\n"
    out.write_text("fit.json", text)


def _write_components(out: _Outputs, ts: TimeSeries, result) -> None:
    labels = [k for k in result.components if k != "noise"]
    header = ["n", "y", "observed"] + labels
    trig_labels = [k for k in labels if k.startswith("trig_")]
    if len(trig_labels) >= 2:
        header.append("trig_sum")
    header.append("noise")
    y = ts.values
    rows = []
    for i in range(len(ts)):
        row = [i + 1, y[i] if ts.observed[i] else float("nan"),
               1 if ts.observed[i] else 0]
        row.extend(float(result.components[k][i]) for k in labels)
        if len(trig_labels) >= 2:
            row.append(float(sum(result.components[k][i] for k in trig_labels)))
        row.append(float(result.components["noise"][i]))
        rows.append(row)
    out.write_text("components.csv", _csv_text(header, rows))


def _write_forecast(out: _Outputs, n_last: int, means, variances) -> None:
    rows = [[n_last + k + 1, float(means[k]), float(variances[k])]
            for k in range(means.shape[0])]
    out.write_text("forecast.csv", _csv_text(["n", "mean", "variance"], rows))


def _sweep_orders(cfg) -> List[tuple]:
    ranges = {key: _parse_range(key, cfg[key]) for key in _RANGE_KEYS}
    if all(len(r) == 1 for r in ranges.values()):
        raise ConfigError("sweep needs at least one of m3/m4/m5 to be a range")
    return [
        (m3, m4, m5)
        for m3 in ranges["m3"]
        for m4 in ranges["m4"]
        for m5 in ranges["m5"]
    ]


def _write_aic_table(out: _Outputs, orders, result) -> None:
    header = ["m1", "m2", "m3", "m4", "m5", "n_params", "log_likelihood",
              "aic", "converged", "minimum", "error"]
    rows = []
    for (m3, m4, m5), row in zip(orders, result.rows):
        is_min = 1 if row.index == result.best_index else 0
        if row.report is None:
            spec_m1 = row.spec.trend_order if row.spec else ""
            spec_m2 = (1 if row.spec.seasonal_period else 0) if row.spec else ""
            rows.append([spec_m1, spec_m2, m3, m4, m5, "", float("nan"),
                         float("nan"), "", 0, row.error.replace(",", ";")])
        else:
            rep = row.report
            rows.append([rep.spec.trend_order, 1 if rep.spec.seasonal_period else 0,
                         m3, m4, m5, rep.n_params, rep.log_likelihood, rep.aic,
                         1 if rep.converged else 0, is_min, ""])
    out.write_text("aic_table.csv", _csv_text(header, rows))

    widths = [4, 4, 4, 4, 4, 8, 16, 16, 10, 8]
    names = ["m1", "m2", "m3", "m4", "m5", "nparam", "log-likelihood", "AIC",
             "converged", "minimum"]
    lines = ["".join(n.rjust(w + 2) for n, w in zip(names, widths))]
    for row in rows:
        cells = []
        for v, w in zip(row[:10], widths):
            if isinstance(v, float):
                cells.append(("%.2f" % v if math.isfinite(v) else "failed").rjust(w + 2))
            else:
                cells.append(str(v).rjust(w + 2))
        if row[9] == 1:
            cells[-1] = cells[-1][:-1] + "*"
        lines.append("".join(cells))
    out.write_text("aic_table.txt", "\n".join(lines) + "\n")


def _fit_kwargs(cfg) -> dict:
    return {"count_rule": cfg["count_rule"]}


def _threads(cfg) -> Optional[int]:
    return _parse_int("threads", cfg["threads"]) if cfg["threads"].strip() else None


def _stage1_curve(cfg, ts: TimeSeries, horizon: int = 0):
    """First-stage regression for one-factor/twostep: the fit and its
    de-intercepted curve over n = 1..N+horizon."""
    k = _parse_int("k", cfg["k"])
    if k < 1:
        raise ConfigError("this pipeline requires k >= 1 stage-1 harmonics")
    period2 = _parse_float("period2", cfg["period2"])
    if period2 <= 0:
        raise ConfigError("this pipeline requires a positive period2")
    stage1 = fit_ols(ts, period2, 2 * k)
    curve = stage1.evaluate(1, len(ts) + horizon, include_intercept=False)
    return stage1, curve


def cmd_decomp(cfg: Dict[str, str], out: _Outputs) -> None:
    orders = {key: _parse_int(key, cfg[key]) for key in _RANGE_KEYS}
    one_factor = _parse_bool("one_factor", cfg["one_factor"])
    spec = build_spec(cfg, orders["m3"], orders["m4"], orders["m5"],
                      reserve_period2=one_factor)
    ts = load_series(cfg)
    stage1 = curve = None
    if one_factor:
        stage1, curve = _stage1_curve(cfg, ts)
    report = fit_mle(spec, ts, one_factor_curve=curve, **_fit_kwargs(cfg))
    if stage1 is not None:
        report = replace(report,
                         aic_prime=report.aic + 2.0 * stage1.coefficients.shape[0])
    result = decompose(ts, report, one_factor_curve=curve)
    _write_components(out, ts, result)
    _write_fit_json(out, report, stage1)


def cmd_sweep(cfg: Dict[str, str], out: _Outputs) -> None:
    orders = _sweep_orders(cfg)
    ts = load_series(cfg)
    grid = [
        (lambda o=o: build_spec(cfg, o[0], o[1], o[2]))
        for o in orders
    ]
    result = sweep(grid, ts, threads=_threads(cfg), **_fit_kwargs(cfg))
    _write_aic_table(out, orders, result)


def cmd_twostep(cfg: Dict[str, str], out: _Outputs) -> None:
    orders = {key: _parse_int(key, cfg[key]) for key in _RANGE_KEYS}
    k = _parse_int("k", cfg["k"])
    if k < 1:
        raise ConfigError("twostep requires k >= 1")
    period2 = _parse_float("period2", cfg["period2"])
    if period2 <= 0:
        raise ConfigError("twostep requires a positive period2")
    spec = build_spec(cfg, orders["m3"], orders["m4"], orders["m5"],
                      reserve_period2=True)
    ts = load_series(cfg)
    stage1, report = two_step_fit(ts, period2, k, spec, **_fit_kwargs(cfg))
    residual = subtract_series(ts, stage1.fitted_curve)
    rows = [
        [i + 1,
         ts.values[i] if ts.observed[i] else float("nan"),
         1 if ts.observed[i] else 0,
         float(stage1.fitted_curve[i]),
         residual.values[i] if residual.observed[i] else float("nan")]
        for i in range(len(ts))
    ]
    out.write_text("stage1.csv",
                   _csv_text(["n", "y", "observed", "curve", "residual"], rows))
    result = decompose(residual, report)
    _write_components(out, residual, result)
    _write_fit_json(out, report, stage1)


def cmd_predict(cfg: Dict[str, str], out: _Outputs) -> None:
    horizon = _parse_int("horizon", cfg["horizon"])
    if horizon < 1:
        raise ConfigError("predict requires horizon >= 1")
    orders = {key: _parse_int(key, cfg[key]) for key in _RANGE_KEYS}
    one_factor = _parse_bool("one_factor", cfg["one_factor"])
    spec = build_spec(cfg, orders["m3"], orders["m4"], orders["m5"],
                      reserve_period2=one_factor)
    ts = load_series(cfg)
    stage1 = curve = None
    if one_factor:
        stage1, curve = _stage1_curve(cfg, ts, horizon)
    report = fit_mle(spec, ts, one_factor_curve=curve, **_fit_kwargs(cfg))
    means, variances = forecast(ts, report, horizon, one_factor_curve=curve)
    _write_fit_json(out, report, stage1)
    _write_forecast(out, len(ts), means, variances)


_COMMANDS = {
    "decomp": cmd_decomp,
    "sweep": cmd_sweep,
    "twostep": cmd_twostep,
    "predict": cmd_predict,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seastate",
        description="Seasonal decomposition of time series with state-space "
                    "models and AIC order selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("decomp", "fit one model and write the component decomposition"),
        ("sweep", "fit a grid of orders and write an AIC table"),
        ("twostep", "regress out a long-period component, then decompose"),
        ("predict", "fit one model and write forecasts"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--input", help="input CSV file")
        p.add_argument("--column", help="value column index or name")
        p.add_argument("--missing-token", dest="missing_token",
                       help="cell text marking missing values")
        p.add_argument("--log", help="log-transform the series (true/false)")
        p.add_argument("--decimate", help="keep every s-th point")
        p.add_argument("--output-dir", dest="output_dir", help="output directory")
        p.add_argument("--m1", help="trend order 0/1/2")
        p.add_argument("--m2", help="dummy seasonal flag 0/1")
        p.add_argument("--period", help="seasonal period (dummy when m2=1, "
                                        "else first trig block)")
        p.add_argument("--seasonal-variant", dest="seasonal_variant",
                       help="dummy seasonal form: sum or lag")
        p.add_argument("--m3", help="AR order (range allowed in sweep)")
        p.add_argument("--m4", help="trig term count (range allowed in sweep)")
        p.add_argument("--m5", help="retained harmonic pairs of the second "
                                    "trig block (range allowed in sweep)")
        p.add_argument("--period2", help="second period: trig block when m2=0, "
                                         "first trig block when m2=1, or the "
                                         "stage-1 regression period")
        p.add_argument("--trig-dynamics", dest="trig_dynamics",
                       help="trig coefficients: constant or random_walk")
        p.add_argument("--exclude-shared", dest="exclude_shared",
                       help="exclude second-block harmonics shared with the "
                            "first (true/false)")
        p.add_argument("--one-factor", dest="one_factor",
                       help="scale a stage-1 curve by a random-walk factor "
                            "(true/false)")
        p.add_argument("--k", help="stage-1 harmonic pairs (twostep, one-factor)")
        p.add_argument("--horizon", help="forecast steps (predict)")
        p.add_argument("--count-rule", dest="count_rule",
                       help="AIC parameter counting: coefficients or state_dim")
        p.add_argument("--threads", help="sweep thread cap (default: "
                                         "SEASTATE_THREADS or CPU count)")
    return parser


def _fail(category: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": category, "message": str(message)}) + "\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = merge_config(args)
        out = _Outputs(cfg["output_dir"])
    except ConfigError as exc:
        _fail("config", str(exc))
        return 2
    except OSError as exc:
        _fail("runtime", str(exc))
        return 1
    try:
        _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        out.cleanup()
        _fail("config", str(exc))
        return 2
    except Exception as exc:
        out.cleanup()
        _fail("runtime", str(exc))
        return 1
    for path in out.written:
        sys.stdout.write(path + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
