"""Loss computation, ranking, bootstrap testing and HAR forecasting.

The evaluation layer compares variance estimators through MSE and QLIKE
losses against a proxy, ranks schemes against a baseline by
Diebold-Mariano tests with stationary-bootstrap inference, and runs
rolling heterogeneous-autoregressive (HAR) one-step forecasts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

#: columns of the long-format loss table
LOSS_COLUMNS = ("day", "asset", "estimator", "scheme", "M",
                "estimate", "proxy", "mse", "qlike")


@dataclass(frozen=True)
class LossRecord:
    """One evaluated (day, estimator, scheme, M) cell."""

    day: int
    estimator: str
    scheme: str
    M: int
    estimate: float
    proxy: float
    mse: float
    qlike: float
    asset: str = "sim"


@dataclass(frozen=True)
class HarFit:
    """HAR regression of variance on daily/weekly/monthly averages."""

    beta0: float
    betaD: float
    betaW: float
    betaM: float
    residual_variance: float
    n_obs: int
    ridged: bool = False

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.beta0, self.betaD, self.betaW, self.betaM])


@dataclass(frozen=True)
class DmResult:
    """Diebold-Mariano comparison of two loss series."""

    mean_diff: float
    p_value: float
    n_boot: int
    mean_block_length: float

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value must lie in [0, 1]")


def mse_loss(proxy: float, estimate: float) -> float:
    return (estimate - proxy) ** 2


def qlike(proxy, estimate):
    """QLIKE loss ``x - ln x - 1`` with ``x = proxy / estimate``.

    Nonnegative, zero exactly when the estimate matches the proxy.
    """
    proxy = np.asarray(proxy, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if np.any(proxy <= 0.0) or np.any(estimate <= 0.0):
        raise ValueError("qlike needs positive proxy and estimate")
    x = proxy / estimate
    out = x - np.log(x) - 1.0
    return float(out) if out.ndim == 0 else out


def make_loss_record(day, estimator, scheme, M, estimate, proxy,
                     asset="sim") -> LossRecord:
    ql = qlike(proxy, estimate) if estimate > 0.0 and proxy > 0.0 else np.nan
    return LossRecord(day=day, estimator=estimator, scheme=scheme, M=M,
                      estimate=estimate, proxy=proxy,
                      mse=mse_loss(proxy, estimate), qlike=ql, asset=asset)


def records_frame(records) -> pd.DataFrame:
    return pd.DataFrame([r.__dict__ for r in records])[list(LOSS_COLUMNS)]


def stationary_bootstrap_indices(n: int, mean_block_length: float,
                                 n_boot: int,
                                 rng: np.random.Generator) -> np.ndarray:
    """Index matrix (n_boot, n) of circular stationary-bootstrap draws.

    Blocks restart with probability ``1/mean_block_length`` per step, so
    block lengths are geometric with the given mean; indices wrap around
    the series circularly.
    """
    if n < 1 or n_boot < 1:
        raise ValueError("need n >= 1 and n_boot >= 1")
    p = 1.0 / max(mean_block_length, 1.0)
    new = rng.random((n_boot, n)) < p
    new[:, 0] = True
    anchors = rng.integers(0, n, size=(n_boot, n))
    pos = np.arange(n)
    last_new = np.maximum.accumulate(np.where(new, pos, -1), axis=1)
    anchor_vals = np.take_along_axis(anchors, last_new, axis=1)
    return (anchor_vals + (pos - last_new)) % n


def dm_test(loss_diff, mean_block_length: float = 20.0, n_boot: int = 999,
            rng: np.random.Generator | None = None) -> DmResult:
    """Two-sided Diebold-Mariano test of zero mean loss difference.

    The null distribution of the mean is approximated by stationary-
    bootstrap resamples of the recentred series; the p-value is the
    add-one bootstrap tail fraction.
    """
    d = np.asarray(loss_diff, dtype=float)
    if d.size < 10:
        raise ValueError("need at least 10 loss differences")
    if rng is None:
        rng = np.random.default_rng()
    mean = float(d.mean())
    if np.all(d == 0.0):
        return DmResult(0.0, 1.0, n_boot, mean_block_length)
    centred = d - mean
    idx = stationary_bootstrap_indices(d.size, mean_block_length, n_boot, rng)
    boot_means = centred[idx].mean(axis=1)
    exceed = int(np.count_nonzero(np.abs(boot_means) >= abs(mean)))
    return DmResult(mean, (1.0 + exceed) / (n_boot + 1.0),
                    n_boot, mean_block_length)


def patton_rank(records: pd.DataFrame, baseline_scheme: str,
                losses=("mse", "qlike"), alpha: float = 0.05,
                mean_block_length: float = 20.0, n_boot: int = 999,
                seed: int = 0) -> pd.DataFrame:
    """Sign-and-significance ranking of schemes against a baseline.

    For every (asset, estimator, M, scheme) cell the day-by-day loss
    difference ``baseline - candidate`` is DM-tested; a significantly
    positive mean says the candidate beats the baseline.  The output
    aggregates, per scheme and loss, the percentage of cells
    significantly positive and negative at level ``alpha``.
    """
    if baseline_scheme not in set(records["scheme"]):
        raise ValueError(f"baseline scheme {baseline_scheme!r} not in records")
    keys = ["asset", "estimator", "M"]
    rows = []
    cell_id = 0
    for loss in losses:
        base = records[records["scheme"] == baseline_scheme]
        counts: dict[str, list[int]] = {}
        for key_vals, grp in records.groupby(keys, sort=True):
            b = base.merge(pd.DataFrame([dict(zip(keys, key_vals))]), on=keys)
            b = b.set_index("day")[loss]
            for scheme, sub in grp.groupby("scheme", sort=True):
                if scheme == baseline_scheme:
                    continue
                s = sub.set_index("day")[loss]
                joined = pd.concat([b, s], axis=1, join="inner").dropna()
                if len(joined) < 10:
                    continue
                diff = joined.iloc[:, 0].to_numpy() - joined.iloc[:, 1].to_numpy()
                rng = np.random.default_rng(
                    np.random.SeedSequence(seed, spawn_key=(cell_id,)))
                cell_id += 1
                res = dm_test(diff, mean_block_length, n_boot, rng)
                pos, neg, tot = counts.setdefault(scheme, [0, 0, 0])
                tot += 1
                if res.p_value < alpha:
                    if res.mean_diff > 0:
                        pos += 1
                    elif res.mean_diff < 0:
                        neg += 1
                counts[scheme] = [pos, neg, tot]
        for scheme, (pos, neg, tot) in sorted(counts.items()):
            rows.append({"scheme": scheme, "baseline": baseline_scheme,
                         "loss": loss,
                         "pct_sig_pos": 100.0 * pos / tot if tot else np.nan,
                         "pct_sig_neg": 100.0 * neg / tot if tot else np.nan})
    return pd.DataFrame(rows, columns=["scheme", "baseline", "loss",
                                       "pct_sig_pos", "pct_sig_neg"])


def _har_design(rv: np.ndarray):
    """Design matrix and target for the HAR regression.

    Row d regresses ``rv[d]`` on an intercept, ``rv[d-1]``, the mean of
    the last 5 and the mean of the last 22 values.
    """
    n = rv.size
    if n < 23:
        raise ValueError("need at least 23 observations")
    cum = np.concatenate(([0.0], np.cumsum(rv)))
    d_idx = np.arange(22, n)
    lag1 = rv[d_idx - 1]
    mean5 = (cum[d_idx] - cum[d_idx - 5]) / 5.0
    mean22 = (cum[d_idx] - cum[d_idx - 22]) / 22.0
    x = np.column_stack([np.ones(d_idx.size), lag1, mean5, mean22])
    return x, rv[d_idx]


def har_fit(rv_series) -> HarFit:
    """OLS HAR fit with a tiny-ridge fallback on rank deficiency."""
    rv = np.asarray(rv_series, dtype=float)
    x, y = _har_design(rv)
    beta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    ridged = rank < 4
    if ridged:
        xtx = x.T @ x
        penalty = 1e-10 * np.trace(xtx)
        beta = np.linalg.solve(xtx + penalty * np.eye(4), x.T @ y)
    resid = y - x @ beta
    dof = max(y.size - 4, 1)
    return HarFit(beta0=float(beta[0]), betaD=float(beta[1]),
                  betaW=float(beta[2]), betaM=float(beta[3]),
                  residual_variance=float(resid @ resid / dof),
                  n_obs=int(y.size), ridged=ridged)


def har_forecast(fit: HarFit, history) -> float:
    """One-step forecast from the last 22 observations of ``history``."""
    h = np.asarray(history, dtype=float)
    if h.size < 22:
        raise ValueError("need at least 22 observations of history")
    return float(fit.beta0 + fit.betaD * h[-1] + fit.betaW * h[-5:].mean()
                 + fit.betaM * h[-22:].mean())


def rolling_forecast(rv_series, window: int = 803,
                     horizon: int = 1) -> np.ndarray:
    """Re-fit HAR on a trailing window each day; one-step forecasts.

    Output element k forecasts ``rv[window + k]`` from data through day
    ``window + k - 1``; the output has length ``len(rv) - window``.
    """
    if horizon != 1:
        raise ValueError("only one-step forecasts are supported")
    rv = np.asarray(rv_series, dtype=float)
    if rv.size <= window:
        raise ValueError("series no longer than the estimation window")
    out = np.empty(rv.size - window)
    for k in range(out.size):
        hist = rv[k:window + k]
        fit = har_fit(hist)
        out[k] = har_forecast(fit, hist)
    return out


def relative_bias(estimates, truths) -> float:
    """Total estimation error as a share of the total truth."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.size == 0 or est.shape != tru.shape:
        raise ValueError("need equal-length non-empty inputs")
    return float((est - tru).sum() / tru.sum())


def relative_rmse(estimates, truths) -> float:
    """Root total squared error as a share of the total truth."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.size == 0 or est.shape != tru.shape:
        raise ValueError("need equal-length non-empty inputs")
    err = est - tru
    return float(np.sqrt(err @ err) / tru.sum())
