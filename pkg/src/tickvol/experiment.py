"""Monte Carlo experiment driver and artifact plumbing.

``run_experiment`` simulates a panel of days, builds every requested
sampling grid (with true or rolling-estimated curves), computes the
requested estimators, and writes a long-format loss table per noise
setting plus an aggregate bias/RMSE table.  The driver is deterministic
given the configuration and master seed regardless of thread count:
days carry their own seed streams, estimation state folds over days in
order, and a single writer emits sorted output.
"""
from __future__ import annotations

import collections
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import estimators as est
from . import intensity as inten
from . import sampling
from .curves import IntensityCurve, load_curve_csv
from .evaluate import LOSS_COLUMNS, make_loss_record, records_frame, \
    relative_bias, relative_rmse
from .sim import DayPanel, NoiseSpec, SimConfig, TickSeries, default_config, \
    simulate_day

#: sampling frequencies of the plain-RV study
DEFAULT_M_RV = (13, 26, 39, 78, 260, 390)
#: sampling frequencies of the pre-averaging study
DEFAULT_M_PREAVG = (78, 260, 390, 780, 2340, 4680)
#: scheme tags understood by the driver ("_est" = estimated curves)
DRIVER_SCHEMES = ("cts", "itts", "rtts", "ibts", "rbts",
                  "itts_est", "ibts_est", "rbts_est")


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2 at the CLI)."""


class DataError(ValueError):
    """Malformed input data (exit code 3 at the CLI)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything the Monte Carlo driver needs."""

    days: int = 500
    master_seed: int = 0
    threads: int = 1
    schemes: tuple = ("cts", "itts", "rtts", "ibts", "rbts", "rbts_est")
    m_rv: tuple = DEFAULT_M_RV
    m_preavg: tuple = DEFAULT_M_PREAVG
    estimators: tuple = ("rv", "preavg")
    noise_kinds: tuple = ("none", "iid_gaussian")
    proxy: str = "iv"                      # or "next_day_rv"
    bandwidth: float = 117.0
    window_days: int = 50
    out_dir: str = "out"
    sim: SimConfig | None = None           # None = packaged default curves

    def __post_init__(self):
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for scheme in self.schemes:
            if scheme not in DRIVER_SCHEMES:
                raise ConfigError(f"unknown scheme {scheme!r}")
        for m in tuple(self.m_rv) + tuple(self.m_preavg):
            if int(m) < 1:
                raise ConfigError("all M must be >= 1")
        for e in self.estimators:
            if e not in ("rv", "preavg"):
                raise ConfigError(f"unknown estimator {e!r}")
        for kind in self.noise_kinds:
            if kind not in ("none", "iid_gaussian", "diurnal_arma"):
                raise ConfigError(f"unknown noise kind {kind!r}")
        if self.proxy not in ("iv", "next_day_rv"):
            raise ConfigError("proxy must be 'iv' or 'next_day_rv'")
        if self.bandwidth <= 0.0 or self.window_days < 1:
            raise ConfigError("bandwidth must be > 0 and window_days >= 1")


def _sim_for(config: ExperimentConfig, noise_kind: str) -> SimConfig:
    base = config.sim if config.sim is not None else default_config()
    noise = replace(base.noise, kind=noise_kind)
    return replace(base, noise=noise)


@dataclass
class _RollingState:
    """Sequential fold of per-day estimated curves (one per noise kind)."""

    window: int
    bandwidth: float
    sig2_hist: collections.deque = field(default_factory=collections.deque)
    lam_hist: collections.deque = field(default_factory=collections.deque)
    om2_hist: collections.deque = field(default_factory=collections.deque)

    def curves_for(self, ticks: TickSeries, noise_kind: str):
        """Rolling-average curves available *before* seeing today.

        The first day has no history and falls back to its own same-day
        estimate, so estimated-mode grids exist from day one.  Raw
        (unadjusted) tick-volatility curves are averaged and the noise
        level is removed only at consumption time, so negative day-level
        excursions cancel instead of being floored (see
        ``noise_adjusted_average``).
        """
        spec = inten.KernelSpec(bandwidth=self.bandwidth)
        lam_hat = inten.estimate_lambda(ticks, spec)
        sig2_hat = inten.estimate_varsigma2(ticks, spec, noise_adjust=False)
        om2_hat = (inten.noise_bias_values(ticks, spec)
                   if noise_kind != "none" else 0.0)
        if self.lam_hist:
            lam_use = inten.rolling_average(self.lam_hist, self.window)
            sig2_use = inten.noise_adjusted_average(
                self.sig2_hist, self.om2_hist, self.window)
        else:
            lam_use = lam_hat
            sig2_use = inten.noise_adjusted_average(
                [sig2_hat], [om2_hat], self.window)
        self.lam_hist.append(lam_hat)
        self.sig2_hist.append(sig2_hat)
        self.om2_hist.append(om2_hat)
        if len(self.lam_hist) > self.window:
            self.lam_hist.popleft()
            self.sig2_hist.popleft()
            self.om2_hist.popleft()
        return lam_use, sig2_use


def _day_grids(panel: DayPanel, config: ExperimentConfig,
               state: _RollingState, noise_kind: str, all_m) -> dict:
    """Build every requested (scheme, M) grid for one day."""
    ticks = panel.ticks_noisy
    lam, sig = panel.lambda_curve, panel.varsigma_curve
    spot = IntensityCurve(lam.t0, lam.t1, sig.values**2 * lam.values)
    est_lam = est_sig2 = None
    if any(s.endswith("_est") for s in config.schemes):
        est_lam, est_sig2 = state.curves_for(ticks, noise_kind)
    grids = {}
    for scheme in config.schemes:
        for m in all_m:
            if scheme == "cts":
                g = sampling.cts_grid(ticks.day_length_T, m)
            elif scheme == "itts":
                g = sampling.itts_grid(lam, m)
            elif scheme == "ibts":
                g = sampling.ibts_grid(spot, m)
            elif scheme == "rtts":
                if ticks.n_ticks < m:
                    continue
                g = sampling.rtts_grid(ticks, m)
            elif scheme == "rbts":
                if ticks.n_ticks < m:
                    continue
                g = sampling.rbts_grid(ticks, panel.varsigma_curve.transform(
                    np.square), m)
            elif scheme == "itts_est":
                g = sampling.itts_grid(est_lam, m)
            elif scheme == "ibts_est":
                est_spot = IntensityCurve(
                    est_lam.t0, est_lam.t1, est_lam.values * est_sig2.values)
                g = sampling.ibts_grid(est_spot, m)
            else:  # rbts_est
                if ticks.n_ticks < m:
                    continue
                g = sampling.rbts_grid(ticks, est_sig2, m)
            grids[(scheme, m)] = g
    return grids


def _day_records(panel: DayPanel, config: ExperimentConfig,
                 state: _RollingState, noise_kind: str) -> list[dict]:
    """Estimates for every (scheme, M, estimator) cell of one day."""
    all_m = sorted({*(config.m_rv if "rv" in config.estimators else ()),
                    *(config.m_preavg if "preavg" in config.estimators else ())})
    grids = _day_grids(panel, config, state, noise_kind, all_m)
    ticks = panel.ticks_noisy
    rows = []
    for (scheme, m), grid in sorted(grids.items()):
        returns = sampling.returns_from_grid(ticks, grid)
        if "rv" in config.estimators and m in config.m_rv:
            rows.append({"day": panel.day, "scheme": scheme, "M": m,
                         "estimator": "rv",
                         "estimate": est.rv(returns)})
        if "preavg" in config.estimators and m in config.m_preavg:
            spec = est.PreAvgSpec.for_frequency(returns.size)
            if returns.size >= 2 * spec.H:
                rows.append({"day": panel.day, "scheme": scheme, "M": m,
                             "estimator": "preavg",
                             "estimate": est.preavg_rv(returns, spec)})
    for row in rows:
        row["iv"] = panel.iv
    return rows


def _simulate_chunk(sim: SimConfig, days, master_seed: int,
                    threads: int) -> list[DayPanel]:
    if threads == 1 or len(days) <= 1:
        return [simulate_day(sim, d, master_seed) for d in days]
    from joblib import Parallel, delayed
    return list(Parallel(n_jobs=threads, prefer="threads")(
        delayed(simulate_day)(sim, d, master_seed) for d in days))


def experiment_records(config: ExperimentConfig,
                       noise_kind: str) -> pd.DataFrame:
    """All per-day estimate rows for one noise kind, in day order."""
    sim = _sim_for(config, noise_kind)
    state = _RollingState(config.window_days, config.bandwidth)
    rows: list[dict] = []
    chunk = max(1, 8 * config.threads)
    for start in range(0, config.days, chunk):
        days = range(start, min(start + chunk, config.days))
        panels = _simulate_chunk(sim, list(days), config.master_seed,
                                 config.threads)
        for panel in panels:      # sequential: rolling state is ordered
            rows.extend(_day_records(panel, config, state, noise_kind))
    return pd.DataFrame(rows)


def _attach_proxy(frame: pd.DataFrame, config: ExperimentConfig) -> pd.DataFrame:
    if config.proxy == "iv":
        frame = frame.assign(proxy=frame["iv"])
    else:
        # next-day realized variance on the 5-minute calendar grid
        base = frame[(frame["scheme"] == "cts") & (frame["M"] == 78)
                     & (frame["estimator"] == "rv")]
        nxt = base.set_index("day")["estimate"]
        frame = frame.assign(proxy=frame["day"].map(
            lambda d: nxt.get(d + 1, np.nan)))
        frame = frame.dropna(subset=["proxy"])
    return frame


def run_experiment(config: ExperimentConfig) -> dict:
    """Run the full study and write loss and aggregate tables.

    Returns a dict with the written file paths and the aggregate frame.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    paths = {}
    agg_rows = []
    for kind in config.noise_kinds:
        frame = experiment_records(config, kind)
        frame = _attach_proxy(frame, config)
        records = [
            make_loss_record(int(r.day), r.estimator, r.scheme, int(r.M),
                             float(r.estimate), float(r.proxy))
            for r in frame.itertuples()
            if r.estimate > 0.0 and r.proxy > 0.0]
        table = records_frame(records).sort_values(
            ["day", "scheme", "M", "estimator"], kind="mergesort")
        path = os.path.join(config.out_dir, f"losses_{kind}.csv")
        table.to_csv(path, index=False, float_format="%.12g")
        paths[f"losses_{kind}"] = path
        for (scheme, m, estimator), grp in frame.groupby(
                ["scheme", "M", "estimator"], sort=True):
            agg_rows.append({
                "noise": kind, "scheme": scheme, "M": int(m),
                "estimator": estimator,
                "rel_bias": relative_bias(grp["estimate"], grp["iv"]),
                "rel_rmse": relative_rmse(grp["estimate"], grp["iv"]),
                "n_days": int(len(grp))})
    agg = pd.DataFrame(agg_rows).sort_values(
        ["noise", "estimator", "scheme", "M"], kind="mergesort")
    agg_path = os.path.join(config.out_dir, "aggregate.csv")
    agg.to_csv(agg_path, index=False, float_format="%.12g")
    paths["aggregate"] = agg_path
    return {"paths": paths, "aggregate": agg}


# ---------------------------------------------------------------------------
# tick CSV contract


def write_ticks(path, day_series: dict[int, TickSeries]) -> None:
    """Write ``day,time_seconds,log_price`` rows sorted by (day, time)."""
    frames = []
    for day in sorted(day_series):
        ts = day_series[day]
        frames.append(pd.DataFrame({"day": day, "time_seconds": ts.times,
                                    "log_price": ts.log_prices}))
    out = (pd.concat(frames, ignore_index=True) if frames
           else pd.DataFrame(columns=["day", "time_seconds", "log_price"]))
    out.to_csv(path, index=False, float_format="%.12g")


def ingest_ticks(path, day_length_T: float = 23400.0):
    """Read a tick CSV into per-day series.

    Duplicate timestamps within a day collapse to the last price (the
    count is returned); non-monotone times are a data error.
    """
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return {}, 0
    except Exception as exc:
        raise DataError(f"{path}: {exc}") from exc
    required = {"day", "time_seconds", "log_price"}
    if frame.empty and not required.issubset(frame.columns):
        return {}, 0
    if not required.issubset(frame.columns):
        missing = sorted(required - set(frame.columns))
        raise DataError(f"{path}: missing columns {missing}")
    if frame[["day", "time_seconds", "log_price"]].isna().any().any():
        bad = int(frame.isna().any(axis=1).idxmax()) + 2
        raise DataError(f"{path}: malformed row at line {bad}")
    out = {}
    n_dupes = 0
    for day, grp in frame.groupby("day", sort=True):
        t = grp["time_seconds"].to_numpy(dtype=float)
        if np.any(np.diff(t) < 0.0):
            raise DataError(f"{path}: non-monotone times in day {day}")
        keep = np.concatenate((np.diff(t) > 0.0, [True]))
        n_dupes += int((~keep).sum())
        out[int(day)] = TickSeries(t[keep],
                                   grp["log_price"].to_numpy(dtype=float)[keep],
                                   day_length_T=day_length_T)
    return out, n_dupes


def emit_plotdata(aggregate_path, out_dir: str = ".",
                  svg: bool = False) -> list[str]:
    """Split an aggregate CSV into tidy per-figure panels.

    One CSV per (estimator, noise, metric) panel with columns
    ``M, scheme, metric``; with ``svg`` a simple line plot per panel is
    written alongside.  Returns the written paths.
    """
    try:
        agg = pd.read_csv(aggregate_path)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    required = {"noise", "scheme", "M", "estimator", "rel_bias", "rel_rmse"}
    missing = required - set(agg.columns)
    if missing:
        raise DataError(f"{aggregate_path}: missing columns {sorted(missing)}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for (noise, estimator), grp in agg.groupby(["noise", "estimator"]):
        for metric in ("rel_bias", "rel_rmse"):
            panel = grp[["M", "scheme", metric]].sort_values(
                ["scheme", "M"], kind="mergesort")
            path = os.path.join(out_dir,
                                f"fig_{estimator}_{noise}_{metric}.csv")
            panel.to_csv(path, index=False, float_format="%.8g")
            written.append(path)
            if svg:
                svg_path = path.replace(".csv", ".svg")
                _panel_svg(panel, metric, svg_path,
                           f"{estimator} / {noise}")
                written.append(svg_path)
    return written


def _panel_svg(panel: pd.DataFrame, metric: str, path: str,
               title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    for scheme, grp in panel.groupby("scheme"):
        ax.plot(grp["M"], grp[metric], marker="o", label=scheme)
    ax.set_xlabel("M")
    ax.set_ylabel(metric)
    ax.set_xscale("log")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# flat key-value config files


_LIST_KEYS = {"schemes", "m_rv", "m_preavg", "estimators", "noise_kinds"}
_INT_KEYS = {"days", "master_seed", "threads", "window_days"}
_FLOAT_KEYS = {"bandwidth", "leverage_rho", "noise_variance", "noise_ar",
               "noise_ma", "vshape_ratio", "ou_lambda_exp_scale",
               "ou_varsigma_exp_scale", "ou_mean_reversion"}
_STR_KEYS = {"out_dir", "proxy", "lambda_curve_file", "varsigma_curve_file"}


def parse_config_file(path) -> dict:
    """Parse the flat ``key = value`` format (see data/configschema.txt)."""
    values: dict = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = (p.strip() for p in line.partition("="))
        if key in _LIST_KEYS:
            items = [v.strip() for v in val.split(",") if v.strip()]
            if key in ("m_rv", "m_preavg"):
                values[key] = tuple(int(v) for v in items)
            else:
                values[key] = tuple(items)
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _STR_KEYS:
            values[key] = val
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def config_from_values(values: dict) -> ExperimentConfig:
    """Build an ExperimentConfig (including its SimConfig) from parsed keys."""
    values = dict(values)
    sim_kwargs = {}
    lam_file = values.pop("lambda_curve_file", None)
    sig_file = values.pop("varsigma_curve_file", None)
    if lam_file or sig_file:
        if not (lam_file and sig_file):
            raise ConfigError("lambda_curve_file and varsigma_curve_file "
                              "must be given together")
        try:
            sim_kwargs["lam_det"] = load_curve_csv(lam_file)
            sim_kwargs["sig_det"] = load_curve_csv(sig_file)
        except Exception as exc:
            raise DataError(str(exc)) from exc
    noise_kwargs = {}
    for src, dst in (("noise_variance", "variance"), ("noise_ar", "ar"),
                     ("noise_ma", "ma"), ("vshape_ratio", "vshape_ratio")):
        if src in values:
            noise_kwargs[dst] = values.pop(src)
    if "leverage_rho" in values:
        sim_kwargs["leverage_rho"] = values.pop("leverage_rho")
    ou_scale_lam = values.pop("ou_lambda_exp_scale", None)
    ou_scale_sig = values.pop("ou_varsigma_exp_scale", None)
    ou_mr = values.pop("ou_mean_reversion", None)
    base = default_config()
    if sim_kwargs.get("lam_det") is not None:
        base = replace(base, lam_det=sim_kwargs.pop("lam_det"),
                       sig_det=sim_kwargs.pop("sig_det"))
    if noise_kwargs:
        base = replace(base, noise=replace(base.noise, **noise_kwargs))
    if ou_scale_lam is not None or ou_mr is not None:
        kw = {}
        if ou_scale_lam is not None:
            kw["exp_scale"] = ou_scale_lam
        if ou_mr is not None:
            kw["mean_reversion"] = ou_mr
        base = replace(base, ou_lam=replace(base.ou_lam, **kw))
    if ou_scale_sig is not None or ou_mr is not None:
        kw = {}
        if ou_scale_sig is not None:
            kw["exp_scale"] = ou_scale_sig
        if ou_mr is not None:
            kw["mean_reversion"] = ou_mr
        base = replace(base, ou_sig=replace(base.ou_sig, **kw))
    if sim_kwargs:
        base = replace(base, **sim_kwargs)
    try:
        return ExperimentConfig(sim=base, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_experiment_config(path) -> ExperimentConfig:
    return config_from_values(parse_config_file(path))
