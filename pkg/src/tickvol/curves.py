"""Positive curves on a uniform time grid with linear interpolation.

The same container holds trading intensities, tick volatilities, spot
variances and sampling intensities.  All quadrature in the package is
trapezoidal on the curve grid, matching the piecewise-linear
interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class IntensityCurve:
    """A positive function on [t0, t1] sampled on a uniform grid.

    Values between grid points are obtained by linear interpolation.
    """

    t0: float
    t1: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 2:
            raise CurveError("curve needs at least 2 grid points")
        if not self.t1 > self.t0:
            raise CurveError("need t1 > t0")
        if not np.all(values > 0.0):
            raise CurveError("curve values must be strictly positive")
        if not np.all(np.isfinite(values)):
            raise CurveError("curve values must be finite")

    @property
    def n_grid(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.values.size)

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.values.size - 1)

    def at(self, t) -> np.ndarray:
        """Linear interpolation at times ``t`` (clipped to [t0, t1])."""
        return np.interp(np.asarray(t, dtype=float), self.grid, self.values)

    def cumulative(self) -> np.ndarray:
        """Trapezoidal antiderivative on the grid, starting at 0."""
        v = self.values
        out = np.empty_like(v)
        out[0] = 0.0
        np.cumsum(0.5 * (v[1:] + v[:-1]) * self.dt, out=out[1:])
        return out

    def integral(self, a: float | None = None, b: float | None = None) -> float:
        """Trapezoidal integral over [a, b] (defaults to the full range)."""
        cum = self.cumulative()
        if a is None and b is None:
            return float(cum[-1])
        a = self.t0 if a is None else a
        b = self.t1 if b is None else b
        g = self.grid
        ca, cb = np.interp([a, b], g, cum)
        return float(cb - ca)

    def transform(self, fn) -> "IntensityCurve":
        """Pointwise transform; the result lives on the same grid."""
        return IntensityCurve(self.t0, self.t1, fn(self.values))

    def __mul__(self, other: "IntensityCurve") -> "IntensityCurve":
        if not isinstance(other, IntensityCurve):
            return NotImplemented
        if other.values.size != self.values.size or other.t0 != self.t0 or other.t1 != self.t1:
            raise CurveError("curves must share one grid")
        return IntensityCurve(self.t0, self.t1, self.values * other.values)


def constant_curve(value: float, t0: float, t1: float, n_grid: int = 2) -> IntensityCurve:
    return IntensityCurve(t0, t1, np.full(n_grid, float(value)))


def resample_curve(curve: IntensityCurve, n_grid: int) -> IntensityCurve:
    """Re-interpolate a curve onto a uniform grid with ``n_grid`` points."""
    t = np.linspace(curve.t0, curve.t1, n_grid)
    return IntensityCurve(curve.t0, curve.t1, curve.at(t))


def load_curve_csv(path, t0: float | None = None, t1: float | None = None) -> IntensityCurve:
    """Read a ``t,value`` CSV (header optional) into a curve.

    The stored grid must be uniform and strictly increasing.
    """
    raw = np.genfromtxt(path, delimiter=",", dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 2:
        raise CurveError(f"{path}: expected two columns t,value")
    if np.isnan(raw[0]).any():  # header row
        raw = raw[1:]
    t, v = raw[:, 0], raw[:, 1]
    if np.isnan(v).any() or np.isnan(t).any():
        raise CurveError(f"{path}: non-numeric entries")
    steps = np.diff(t)
    if not np.all(steps > 0) or not np.allclose(steps, steps[0], rtol=1e-6):
        raise CurveError(f"{path}: time grid must be uniform and increasing")
    curve = IntensityCurve(float(t[0]), float(t[-1]), v)
    if t0 is not None and not np.isclose(curve.t0, t0):
        raise CurveError(f"{path}: curve starts at {curve.t0}, expected {t0}")
    if t1 is not None and not np.isclose(curve.t1, t1):
        raise CurveError(f"{path}: curve ends at {curve.t1}, expected {t1}")
    return curve


def save_curve_csv(path, curve: IntensityCurve) -> None:
    with open(path, "w") as fh:
        fh.write("t,value\n")
        for t, v in zip(curve.grid, curve.values):
            fh.write(f"{t:.10g},{v:.12g}\n")
