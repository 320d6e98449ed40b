"""Nonparametric estimation of trading intensity and tick volatility.

The trading intensity is a kernel sum over tick times; the squared tick
volatility is a Nadaraya-Watson ratio of kernel-smoothed squared price
increments to the kernel-smoothed tick counts.  Both are computed on a
uniform cell grid: ticks are binned, the bin masses are smoothed by a
discrete kernel, and boundary bias is removed by reflecting mass at the
session edges (the mirror-image correction), which preserves the total
mass exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .curves import IntensityCurve
from .sim import TickSeries

#: positivity floor for estimated curves
CURVE_FLOOR = 1e-12
#: default number of smoothing cells per day (10 s cells for a 6.5 h day)
DEFAULT_N_CELLS = 2340


@dataclass(frozen=True)
class KernelSpec:
    """Smoothing kernel, bandwidth in seconds, and boundary handling."""

    kernel: str = "gaussian"
    bandwidth: float = 117.0          # seconds, T/200 for a 6.5 hour day
    mirror_correction: bool = True

    def __post_init__(self):
        if self.kernel not in ("gaussian", "epanechnikov"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class RollingEstimate:
    """A rolling multi-day average of per-day estimated curves."""

    window_days: int
    curves: tuple
    averaged: IntensityCurve

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")


def _smooth_masses(masses: np.ndarray, spec: KernelSpec,
                   cell_width: float) -> np.ndarray:
    """Kernel-smooth per-cell masses; reflection keeps the total exact."""
    mode = "reflect" if spec.mirror_correction else "constant"
    if spec.kernel == "gaussian":
        return gaussian_filter1d(masses, sigma=spec.bandwidth / cell_width,
                                 mode=mode, truncate=8.0)
    # Epanechnikov: finite support, discretised on the cell grid
    radius = max(1, int(np.ceil(spec.bandwidth / cell_width)))
    u = np.arange(-radius, radius + 1) * (cell_width / spec.bandwidth)
    w = np.maximum(0.0, 1.0 - u**2)
    w /= w.sum()
    if spec.mirror_correction:
        padded = np.concatenate((masses[:radius][::-1], masses,
                                 masses[-radius:][::-1]))
    else:
        padded = np.concatenate((np.zeros(radius), masses, np.zeros(radius)))
    return np.convolve(padded, w, mode="same")[radius:-radius]


def _cells_to_curve(cell_values: np.ndarray, t0: float, t1: float,
                    floor: float = CURVE_FLOOR) -> IntensityCurve:
    """Node curve whose trapezoid integral equals cell sum times width.

    Interior nodes average the two adjacent cells, edge nodes copy the
    edge cell; with uniform cells this makes the trapezoid rule on the
    nodes reproduce the total cell mass exactly.
    """
    nodes = np.empty(cell_values.size + 1)
    nodes[0] = cell_values[0]
    nodes[-1] = cell_values[-1]
    nodes[1:-1] = 0.5 * (cell_values[:-1] + cell_values[1:])
    return IntensityCurve(t0, t1, np.maximum(nodes, floor))


def _binned(times: np.ndarray, weights: np.ndarray | None, T: float,
            n_cells: int) -> np.ndarray:
    edges = np.linspace(0.0, T, n_cells + 1)
    masses, _ = np.histogram(times, bins=edges, weights=weights)
    return masses.astype(float)


def estimate_lambda(ticks: TickSeries, spec: KernelSpec = KernelSpec(),
                    n_cells: int = DEFAULT_N_CELLS) -> IntensityCurve:
    """Kernel estimate of the trading intensity from one day of ticks.

    With mirror correction the trapezoid integral of the estimate equals
    the number of ticks exactly (up to the positivity floor).
    """
    if ticks.n_ticks < 2:
        raise ValueError("need at least 2 ticks")
    T = ticks.day_length_T
    masses = _binned(ticks.times, None, T, n_cells)
    smoothed = _smooth_masses(masses, spec, T / n_cells)
    return _cells_to_curve(smoothed / (T / n_cells), 0.0, T)


def noise_variance_estimate(ticks: TickSeries, max_lag: int = 10) -> float:
    """Estimated effective noise variance of the tick increments.

    Minus the summed autocovariances of the tick increments over lags 1
    to ``max_lag``, floored at zero.  The efficient returns are a
    martingale-difference sequence, so only the additive noise e_t
    contributes to these autocovariances, and the sum telescopes to
    gamma_e(0) - gamma_e(1) = half the variance that noise adds to each
    squared tick increment.  With iid noise only the first lag is
    nonzero and this reduces to minus the first autocovariance, which is
    unbiased even when the efficient signal is of the same order as the
    noise (the naive half-mean-squared-increment estimate would absorb
    half the signal); for serially dependent noise the higher lags pick
    up the remaining dependence.
    """
    dp = np.diff(ticks.log_prices)
    if dp.size < 2:
        return 0.0
    total = sum(np.dot(dp[:-k], dp[k:]) / (dp.size - k)
                for k in range(1, min(max_lag, dp.size - 1) + 1))
    return float(max(-total, 0.0))


def _noise_bias_weights(dp: np.ndarray, max_lag: int) -> np.ndarray:
    """Per-increment products whose local mean is the noise bias.

    -2 sum_k dp_i dp_{i+k} for lags 1..max_lag has expectation
    2(gamma_e(0) - gamma_e(1)) locally: exactly the additive bias that
    the noise leaves in each squared tick increment (the signal is a
    martingale difference and drops out of every lagged product).
    """
    w = np.zeros_like(dp)
    for k in range(1, min(max_lag, dp.size - 1) + 1):
        w[:-k] += -2.0 * dp[:-k] * dp[k:]
    return w


def noise_bias_values(ticks: TickSeries, spec: KernelSpec = KernelSpec(),
                      n_cells: int = DEFAULT_N_CELLS,
                      max_lag: int = 10) -> np.ndarray:
    """Local (time-varying) noise bias of squared tick increments.

    Node values on the same grid as ``estimate_varsigma2`` output,
    estimating how much additive-noise variance each squared increment
    around that time carries.  Unlike a curve, the values may be
    negative day by day; average over days before subtracting.
    """
    if ticks.n_ticks < 2:
        raise ValueError("need at least 2 ticks")
    T = ticks.day_length_T
    times = ticks.times[1:]
    w = _noise_bias_weights(np.diff(ticks.log_prices), max_lag)
    width = T / n_cells
    num = _smooth_masses(_binned(times, w, T, n_cells), spec, width)
    den = _smooth_masses(_binned(times, None, T, n_cells), spec, width)
    ratio = num / np.maximum(den, CURVE_FLOOR)
    nodes = np.empty(ratio.size + 1)
    nodes[0] = ratio[0]
    nodes[-1] = ratio[-1]
    nodes[1:-1] = 0.5 * (ratio[:-1] + ratio[1:])
    return nodes


def estimate_varsigma2(ticks: TickSeries, spec: KernelSpec = KernelSpec(),
                       n_cells: int = DEFAULT_N_CELLS,
                       noise_adjust: bool = False) -> IntensityCurve:
    """Nadaraya-Watson estimate of the squared tick volatility.

    Smoothed squared tick increments divided by smoothed tick counts,
    mirror-corrected at the session edges.  With ``noise_adjust`` the
    locally estimated noise bias (see ``noise_bias_values``) is removed
    from the smoothed numerator; adjusting after smoothing avoids the
    clipping bias that per-increment subtraction would create where
    noise dominates single increments.
    """
    if ticks.n_ticks < 2:
        raise ValueError("need at least 2 ticks")
    T = ticks.day_length_T
    times = ticks.times[1:]
    dp = np.diff(ticks.log_prices)
    width = T / n_cells
    num = _smooth_masses(_binned(times, dp ** 2, T, n_cells), spec, width)
    den = _smooth_masses(_binned(times, None, T, n_cells), spec, width)
    if noise_adjust:
        bias = _smooth_masses(
            _binned(times, _noise_bias_weights(dp, 10), T, n_cells),
            spec, width)
        num = np.maximum(num - bias, 0.0)
    ratio = num / np.maximum(den, CURVE_FLOOR)
    return _cells_to_curve(ratio, 0.0, T)


def rolling_average(curves, window: int) -> IntensityCurve:
    """Pointwise mean of the most recent ``window`` curves."""
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    recent = curves[-window:] if window >= 1 else curves
    stack = np.stack([c.values for c in recent])
    first = recent[0]
    return IntensityCurve(first.t0, first.t1, stack.mean(axis=0))


def noise_adjusted_average(curves, bias_values, window: int) -> IntensityCurve:
    """Rolling mean of raw tick-volatility curves minus the noise bias.

    ``curves`` are unadjusted ``estimate_varsigma2`` outputs and
    ``bias_values`` the matching per-day ``noise_bias_values`` arrays
    (scalars are accepted too, e.g. 0.0 for noise-free days).
    Subtracting the averaged bias *after* averaging lets day-level
    negative excursions cancel; flooring each day separately would bias
    the quiet part of the day upward, because there a single day's
    adjusted estimate is mostly below zero.
    """
    avg = rolling_average(curves, window)
    bias_values = [np.asarray(b, dtype=float) for b in bias_values]
    if not bias_values:
        raise ValueError("need at least one noise bias value")
    recent = bias_values[-window:] if window >= 1 else bias_values
    stack = np.stack([np.broadcast_to(b, avg.values.shape) for b in recent])
    shifted = avg.values - stack.mean(axis=0)
    return IntensityCurve(avg.t0, avg.t1, np.maximum(shifted, CURVE_FLOOR))


def rolling_estimate(curves, window: int = 50) -> RollingEstimate:
    curves = tuple(curves)
    return RollingEstimate(window_days=window, curves=curves,
                           averaged=rolling_average(curves, window))
