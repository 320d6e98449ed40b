"""Sampling grids in calendar, transaction and business time.

Five schemes produce a grid ``0 = tau_0 < ... < tau_M = T`` on which tick
prices are resampled by the previous-tick method:

* CTS  — calendar time, equidistant in t;
* iTTS — equidistant in the accumulated trading intensity;
* rTTS — equal tick counts per bin (realized transaction time);
* iBTS — equidistant in the accumulated spot variance;
* rBTS — equal shares of the realized variance target per bin.

The intensity-based schemes invert a piecewise-linear accumulated curve;
the realized schemes partition the observed ticks directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import IntensityCurve
from .sim import TickSeries

SCHEMES = ("cts", "itts", "rtts", "ibts", "rbts")


@dataclass(frozen=True)
class SamplingGrid:
    """Grid times with the producing scheme tag and requested M.

    ``taus`` has ``M + 1`` entries unless coincident boundaries were
    merged (tracked by ``n_merged``); it is always strictly increasing
    with exact endpoints 0 and T.
    """

    taus: np.ndarray
    scheme: str
    M: int
    n_merged: int = 0

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        object.__setattr__(self, "taus", taus)
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if taus.size < 2 or np.any(np.diff(taus) <= 0.0):
            raise ValueError("grid times must be strictly increasing")
        if self.M < 1:
            raise ValueError("M must be >= 1")

    @property
    def effective_m(self) -> int:
        return self.taus.size - 1

    @property
    def T(self) -> float:
        return float(self.taus[-1])


def _dedupe(taus: np.ndarray, scheme: str, M: int) -> SamplingGrid:
    """Merge coincident boundaries, keeping the exact endpoints."""
    keep = np.concatenate(([True], np.diff(taus) > 0.0))
    merged = int((~keep).sum())
    return SamplingGrid(taus[keep], scheme, M, n_merged=merged)


def grid_from_accumulated(phi: IntensityCurve, M: int,
                          scheme: str = "cts") -> SamplingGrid:
    """Invert an accumulated sampling intensity into a grid.

    ``phi`` is the accumulated curve rescaled so its range is [0, T]; the
    boundaries are ``tau_j = inf{t : phi(t) >= j T / M}`` (generalized
    inverse, so flats resolve to their left edge).  Here the accumulated
    values are supplied as curve *values* (weakly increasing, starting at
    0 and ending at T).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    vals = phi.values
    if np.any(np.diff(vals) < 0.0):
        raise ValueError("accumulated curve must be weakly increasing")
    if abs(vals[0]) > 1e-9 * max(1.0, abs(vals[-1])):
        raise ValueError("accumulated curve must start at 0")
    targets = np.arange(1, M) * (vals[-1] / M)
    grid_t = phi.grid
    # generalized inverse on a piecewise-linear function: the first grid
    # segment whose right value reaches the target; interpolating inside
    # that segment lands on the infimum even across flat stretches
    idx = np.clip(np.searchsorted(vals, targets, side="left"), 1, vals.size - 1)
    v0, v1 = vals[idx - 1], vals[idx]
    rise = v1 - v0
    frac = np.where(rise > 0.0, (targets - v0) / np.where(rise > 0.0, rise, 1.0), 1.0)
    inner = grid_t[idx - 1] + frac * (grid_t[idx] - grid_t[idx - 1])
    taus = np.concatenate(([phi.t0], inner, [phi.t1]))
    return _dedupe(taus, scheme, M)


def _accumulate(curve: IntensityCurve) -> IntensityCurve:
    """Accumulated curve rescaled to end at T.

    The exact accumulated value at t0 is zero; it is lifted to the
    smallest positive float to satisfy the positive-curve container, far
    below the inversion tolerance.
    """
    cum = curve.cumulative()
    T = curve.t1 - curve.t0
    vals = cum * (T / cum[-1])
    vals[0] = 5e-324
    return IntensityCurve(curve.t0, curve.t1, vals)


def cts_grid(T: float, M: int) -> SamplingGrid:
    """Equidistant calendar-time grid on [0, T]."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return SamplingGrid(np.linspace(0.0, T, M + 1), "cts", M)


def itts_grid(lambda_curve: IntensityCurve, M: int) -> SamplingGrid:
    """Grid equidistant in the accumulated trading intensity."""
    return grid_from_accumulated(_accumulate(lambda_curve), M, "itts")


def ibts_grid(spot_curve: IntensityCurve, M: int) -> SamplingGrid:
    """Grid equidistant in the accumulated spot variance (varsigma^2 lambda)."""
    return grid_from_accumulated(_accumulate(spot_curve), M, "ibts")


def rtts_grid(ticks: TickSeries, M: int, *,
              target_count: float | None = None) -> SamplingGrid:
    """Near-equal tick counts per bin; boundaries at last-tick-of-bin.

    Boundary j sits at tick number ``ceil(j n / M)``, the first tick at
    which the running count reaches a j-th share of the day's ticks; bin
    sizes differ by at most one.  With ``target_count`` set, the
    thresholds are multiples of that fixed count instead (variant for
    asymptotic experiments with a pre-set per-bin count).
    """
    n = ticks.n_ticks
    if n < M:
        raise ValueError(f"need at least M={M} ticks, have {n}")
    if target_count is None:
        ends = -((np.arange(1, M) * n) // -M) - 1   # ceil(j n / M) - 1
    else:
        counts = np.arange(1, n + 1, dtype=float)
        ends = np.searchsorted(counts, np.arange(1, M) * target_count)
        ends = np.minimum(ends, n - 1)
    taus = np.concatenate(([0.0], ticks.times[ends], [ticks.day_length_T]))
    return _dedupe(taus, "rtts", M)


def rbts_grid(ticks: TickSeries, varsigma2: IntensityCurve | np.ndarray,
              M: int, *, target_riv: float | None = None) -> SamplingGrid:
    """Equal realized-variance bins; boundaries at threshold-crossing ticks.

    The cumulative sum of ``varsigma^2(t_i)`` over ticks is thresholded at
    multiples of ``riv / M`` (or of a fixed ``target_riv``); boundary
    ``tau_j`` sits at the first tick where the running sum reaches the
    j-th threshold.
    """
    n = ticks.n_ticks
    if n < M:
        raise ValueError(f"need at least M={M} ticks, have {n}")
    if isinstance(varsigma2, IntensityCurve):
        s2 = varsigma2.at(ticks.times)
    else:
        s2 = np.asarray(varsigma2, dtype=float)
        if s2.shape != ticks.times.shape:
            raise ValueError("varsigma2 must match the tick times")
    if np.any(s2 <= 0.0):
        raise ValueError("varsigma2 must be positive")
    cum = np.cumsum(s2)
    step = cum[-1] / M if target_riv is None else target_riv
    thresholds = np.arange(1, M) * step
    idx = np.searchsorted(cum, thresholds * (1.0 - 1e-12), side="left")
    idx = np.minimum(idx, n - 1)
    taus = np.concatenate(([0.0], ticks.times[idx], [ticks.day_length_T]))
    return _dedupe(taus, "rbts", M)


def previous_tick_resample(ticks: TickSeries, grid: SamplingGrid,
                           p0: float = 0.0) -> np.ndarray:
    """Log price at each grid time: the last tick at or before it.

    Before the first tick the level is ``p0`` (zero for simulated days;
    pass the day's first observed price for real data).
    """
    idx = np.searchsorted(ticks.times, grid.taus, side="right")
    prices = np.concatenate(([p0], ticks.log_prices))
    return prices[idx]


def returns_from_grid(ticks: TickSeries, grid: SamplingGrid,
                      p0: float = 0.0) -> np.ndarray:
    """Per-bin returns of the previous-tick resampled prices."""
    return np.diff(previous_tick_resample(ticks, grid, p0))


def make_grid(scheme: str, M: int, *, ticks: TickSeries | None = None,
              lambda_curve: IntensityCurve | None = None,
              spot_curve: IntensityCurve | None = None,
              varsigma2: IntensityCurve | np.ndarray | None = None,
              T: float | None = None) -> SamplingGrid:
    """Dispatch to the scheme constructors from keyword inputs."""
    scheme = scheme.lower()
    if scheme == "cts":
        if T is None:
            T = ticks.day_length_T if ticks is not None else None
        if T is None:
            raise ValueError("cts needs T or ticks")
        return cts_grid(T, M)
    if scheme == "itts":
        if lambda_curve is None:
            raise ValueError("itts needs lambda_curve")
        return itts_grid(lambda_curve, M)
    if scheme == "ibts":
        if spot_curve is None:
            raise ValueError("ibts needs spot_curve")
        return ibts_grid(spot_curve, M)
    if scheme == "rtts":
        if ticks is None:
            raise ValueError("rtts needs ticks")
        return rtts_grid(ticks, M)
    if scheme == "rbts":
        if ticks is None or varsigma2 is None:
            raise ValueError("rbts needs ticks and varsigma2")
        return rbts_grid(ticks, varsigma2, M)
    raise ValueError(f"unknown scheme {scheme!r}")
