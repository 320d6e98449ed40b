"""Command-line interface.

Subcommands: simulate, estimate, experiment, evaluate, forecast,
plotdata.  Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import pandas as pd

from . import evaluate as ev
from . import intensity as inten
from .experiment import ConfigError, DataError, ExperimentConfig, \
    emit_plotdata, ingest_ticks, load_experiment_config, run_experiment, \
    write_ticks, _sim_for
from .sim import simulate_day

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _base_config(args) -> ExperimentConfig:
    if args.config:
        config = load_experiment_config(args.config)
    else:
        config = ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.out is not None:
        updates["out_dir"] = args.out
    if updates:
        from dataclasses import replace
        config = replace(config, **updates)
    return config


def cmd_simulate(args) -> int:
    config = _base_config(args)
    days = args.days if args.days is not None else config.days
    sim = _sim_for(config, args.noise)
    os.makedirs(config.out_dir, exist_ok=True)
    series = {}
    truths = []
    for day in range(days):
        panel = simulate_day(sim, day, config.master_seed)
        series[day] = panel.ticks_noisy
        truths.append({"day": day, "iv": panel.iv, "riv": panel.riv,
                       "iq": panel.iq, "n_ticks": panel.ticks_clean.n_ticks})
    ticks_path = os.path.join(config.out_dir, "ticks.csv")
    write_ticks(ticks_path, series)
    truths_path = os.path.join(config.out_dir, "truths.csv")
    pd.DataFrame(truths).to_csv(truths_path, index=False,
                                float_format="%.12g")
    print(f"wrote {ticks_path} and {truths_path} ({days} days)")
    return EXIT_OK


def cmd_estimate(args) -> int:
    config = _base_config(args)
    day_series, n_dupes = ingest_ticks(args.ticks)
    if n_dupes:
        print(f"collapsed {n_dupes} duplicate timestamps", file=sys.stderr)
    if not day_series:
        print("no days in input")
        return EXIT_OK
    spec = inten.KernelSpec(bandwidth=args.bandwidth,
                            mirror_correction=not args.no_mirror)
    os.makedirs(config.out_dir, exist_ok=True)
    rows = []
    lam_curves, sig2_curves = [], []
    for day in sorted(day_series):
        ticks = day_series[day]
        lam = inten.estimate_lambda(ticks, spec)
        sig2 = inten.estimate_varsigma2(ticks, spec,
                                        noise_adjust=args.noise_adjust)
        lam_curves.append(lam)
        sig2_curves.append(sig2)
        rows.append(pd.DataFrame({"day": day, "t": lam.grid,
                                  "lambda_hat": lam.values,
                                  "varsigma2_hat": sig2.values}))
    curves_path = os.path.join(config.out_dir, "curves.csv")
    pd.concat(rows, ignore_index=True).to_csv(curves_path, index=False,
                                              float_format="%.12g")
    lam_avg = inten.rolling_average(lam_curves, args.window_days)
    sig2_avg = inten.rolling_average(sig2_curves, args.window_days)
    avg_path = os.path.join(config.out_dir, "curves_rolling.csv")
    pd.DataFrame({"t": lam_avg.grid, "lambda_hat": lam_avg.values,
                  "varsigma2_hat": sig2_avg.values}).to_csv(
        avg_path, index=False, float_format="%.12g")
    print(f"wrote {curves_path} and {avg_path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _base_config(args)
    if args.paper_scale:
        from dataclasses import replace
        print("warning: paper-scale run (4800 days); this takes a while",
              file=sys.stderr)
        config = replace(config, days=4800)
    result = run_experiment(config)
    for name, path in result["paths"].items():
        print(f"wrote {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        records = pd.read_csv(args.losses)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    missing = set(ev.LOSS_COLUMNS) - set(records.columns)
    if missing:
        raise DataError(f"{args.losses}: missing columns {sorted(missing)}")
    report = ev.patton_rank(records, args.baseline,
                            mean_block_length=args.block_length,
                            n_boot=args.n_boot,
                            seed=args.seed if args.seed is not None else 0)
    out = args.out or "ranking.csv"
    report.to_csv(out, index=False, float_format="%.6g")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    try:
        records = pd.read_csv(args.losses)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    sel = records[(records["scheme"] == args.scheme)
                  & (records["M"] == args.M)
                  & (records["estimator"] == args.estimator)]
    if sel.empty:
        raise DataError("no rows match the requested scheme/M/estimator")
    sel = sel.sort_values("day")
    rv_series = sel["estimate"].to_numpy(dtype=float)
    if rv_series.size <= args.window:
        raise DataError(f"need more than window={args.window} days, "
                        f"have {rv_series.size}")
    forecasts = ev.rolling_forecast(rv_series, window=args.window)
    days = sel["day"].to_numpy()[args.window:]
    realized = rv_series[args.window:]
    frame = pd.DataFrame({"day": days, "forecast": forecasts,
                          "realized": realized})
    ok = (frame["forecast"] > 0) & (frame["realized"] > 0)
    frame["mse"] = (frame["forecast"] - frame["realized"]) ** 2
    frame.loc[ok, "qlike"] = ev.qlike(frame.loc[ok, "realized"],
                                      frame.loc[ok, "forecast"])
    out = args.out or "forecasts.csv"
    frame.to_csv(out, index=False, float_format="%.12g")
    print(f"wrote {out} ({len(frame)} forecasts)")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    written = emit_plotdata(args.aggregate, out_dir=args.out or ".",
                            svg=args.svg)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tickvol",
        description="tick-time stochastic volatility simulation and "
                    "realized-variance estimation")
    parser.add_argument("--config", help="experiment config file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("--out", help="output directory/file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate days and write tick CSVs")
    p.add_argument("--days", type=int)
    p.add_argument("--noise", default="iid_gaussian",
                   choices=["none", "iid_gaussian", "diurnal_arma"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate intensity/volatility curves")
    p.add_argument("--ticks", required=True, help="tick CSV path")
    p.add_argument("--bandwidth", type=float, default=117.0)
    p.add_argument("--window-days", type=int, default=50, dest="window_days")
    p.add_argument("--no-mirror", action="store_true", dest="no_mirror")
    p.add_argument("--noise-adjust", action="store_true", dest="noise_adjust")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run the Monte Carlo study")
    p.add_argument("--paper-scale", action="store_true", dest="paper_scale")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("evaluate", help="rank schemes against a baseline")
    p.add_argument("--losses", required=True, help="loss table CSV")
    p.add_argument("--baseline", default="cts")
    p.add_argument("--n-boot", type=int, default=999, dest="n_boot")
    p.add_argument("--block-length", type=float, default=20.0,
                   dest="block_length")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("forecast", help="rolling HAR one-step forecasts")
    p.add_argument("--losses", required=True, help="loss table CSV")
    p.add_argument("--scheme", default="cts")
    p.add_argument("--M", type=int, default=78)
    p.add_argument("--estimator", default="rv")
    p.add_argument("--window", type=int, default=803)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("plotdata", help="emit tidy per-figure CSV/SVG")
    p.add_argument("--aggregate", required=True, help="aggregate CSV")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
