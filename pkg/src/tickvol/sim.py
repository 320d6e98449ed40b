"""Tick-time stochastic volatility simulator.

A trading day is driven by three ingredients:

* a trading-intensity curve ``lambda(t)`` controlling how many ticks
  arrive and when (doubly stochastic Poisson arrivals),
* a tick-volatility curve ``varsigma(t)`` giving the standard deviation
  of each tick return of the efficient log price,
* optional market-microstructure noise added on top of the efficient
  price observed at tick times.

Both curves are deterministic diurnal shapes modulated day by day by
exponentials of discrete Ornstein-Uhlenbeck paths, normalised so the
modulation has unit mean within each day.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .curves import IntensityCurve, load_curve_csv, resample_curve

#: seconds in a 6.5 hour trading session
DAY_SECONDS = 23400.0
#: Euler steps per day for the OU modulation paths (one per second)
DEFAULT_N_STEPS = 23400


@dataclass(frozen=True)
class OuSpec:
    """Discrete Ornstein-Uhlenbeck recursion ``x_{k+1} = x_k - a x_k + e_k``.

    ``e_k`` are iid centred Gaussians with standard deviation
    ``innovation_sd``; for ``a`` in (0,1) the stationary variance is
    ``innovation_sd**2 / (a (2 - a))``.  ``exp_scale`` is the coefficient
    inside the exponential modulation ``exp(exp_scale * x)``; zero
    switches modulation off.
    """

    mean_reversion: float = 2e-4
    innovation_sd: float = 1.0
    exp_scale: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.mean_reversion <= 1.0:
            raise ValueError("mean_reversion must lie in [0, 1]")
        if self.innovation_sd < 0.0 or self.exp_scale < 0.0:
            raise ValueError("innovation_sd and exp_scale must be >= 0")

    @property
    def stationary_var(self) -> float:
        a = self.mean_reversion
        if a == 0.0:
            return float("inf")
        return self.innovation_sd**2 / (a * (2.0 - a))


@dataclass(frozen=True)
class NoiseSpec:
    """Microstructure noise added to tick log prices.

    ``kind`` is one of ``"none"``, ``"iid_gaussian"`` (centred Gaussian
    with variance ``variance``) and ``"diurnal_arma"`` (ARMA(1,1)
    innovations with a piecewise-linear V-shaped variance profile whose
    open/close-to-midday ratio is ``vshape_ratio``, scaled so the
    within-day average noise variance equals ``variance``).
    """

    kind: str = "iid_gaussian"
    variance: float = 1.2e-4
    ar: float = 0.5
    ma: float = 0.5
    vshape_ratio: float = 2.0

    def __post_init__(self):
        if self.kind not in ("none", "iid_gaussian", "diurnal_arma"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.variance < 0.0:
            raise ValueError("variance must be >= 0")
        if not abs(self.ar) < 1.0:
            raise ValueError("ar must satisfy |ar| < 1")
        if self.vshape_ratio < 1.0:
            raise ValueError("vshape_ratio must be >= 1")


@dataclass(frozen=True)
class TickSeries:
    """One day of ticks: arrival times and log prices.

    ``true_varsigma`` carries the simulator's tick volatility at the tick
    times when known (None for ingested real data).
    """

    times: np.ndarray
    log_prices: np.ndarray
    true_varsigma: np.ndarray | None = None
    day_length_T: float = DAY_SECONDS

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        prices = np.asarray(self.log_prices, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "log_prices", prices)
        if self.true_varsigma is not None:
            tv = np.asarray(self.true_varsigma, dtype=float)
            object.__setattr__(self, "true_varsigma", tv)
            if tv.shape != times.shape:
                raise ValueError("true_varsigma must match times in shape")
            if tv.size and np.any(tv <= 0.0):
                raise ValueError("true_varsigma must be positive")
        if times.shape != prices.shape or times.ndim != 1:
            raise ValueError("times and log_prices must be 1-d of equal length")
        if times.size:
            if np.any(np.diff(times) <= 0.0):
                raise ValueError("tick times must be strictly increasing")
            if times[0] < 0.0 or times[-1] > self.day_length_T:
                raise ValueError("tick times must lie in [0, T]")

    @property
    def n_ticks(self) -> int:
        return self.times.size

    def with_prices(self, log_prices: np.ndarray) -> "TickSeries":
        return TickSeries(self.times, log_prices, self.true_varsigma,
                          self.day_length_T)


@dataclass(frozen=True)
class DayPanel:
    """A simulated day together with its latent curves and true targets.

    ``iv`` is the integrated variance (integral of varsigma^2 * lambda),
    ``riv`` the realized counterpart (sum of varsigma^2 over the ticks),
    ``iq`` the integrated quarticity (integral of varsigma^4 * lambda).
    """

    lambda_curve: IntensityCurve
    varsigma_curve: IntensityCurve
    ticks_clean: TickSeries
    ticks_noisy: TickSeries
    iv: float
    riv: float
    iq: float
    day: int = 0


@dataclass(frozen=True)
class SimConfig:
    """Full configuration of the day simulator."""

    lam_det: IntensityCurve
    sig_det: IntensityCurve
    ou_lam: OuSpec = OuSpec(exp_scale=0.01)
    ou_sig: OuSpec = OuSpec(exp_scale=0.005)
    noise: NoiseSpec = NoiseSpec()
    leverage_rho: float = 0.0
    n_steps: int = DEFAULT_N_STEPS

    def __post_init__(self):
        if not -1.0 <= self.leverage_rho <= 1.0:
            raise ValueError("leverage_rho must lie in [-1, 1]")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not np.isclose(self.lam_det.t0, self.sig_det.t0) or \
                not np.isclose(self.lam_det.t1, self.sig_det.t1):
            raise ValueError("lam_det and sig_det must cover the same day")

    @property
    def day_length_T(self) -> float:
        return self.lam_det.t1 - self.lam_det.t0


def default_config(**overrides) -> SimConfig:
    """The packaged desk calibration (about 2000 ticks per day)."""
    data = importlib.resources.files("tickvol") / "data"
    lam = load_curve_csv(str(data / "lambda_det.csv"))
    sig = load_curve_csv(str(data / "varsigma_det.csv"))
    return replace(SimConfig(lam_det=lam, sig_det=sig), **overrides)


def day_rng(master_seed: int, day: int, n_streams: int = 5):
    """Independent per-purpose generators for one simulated day.

    Stream order: OU(lambda), OU(varsigma), arrivals, tick returns,
    noise.  The spawn key makes day streams independent of how days are
    batched across workers.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(day,))
    return [np.random.default_rng(child) for child in ss.spawn(n_streams)]


def simulate_ou(spec: OuSpec, n_steps: int, rng: np.random.Generator,
                x0: float = 0.0, return_innovations: bool = False):
    """Simulate the OU recursion for ``n_steps`` steps (output length
    ``n_steps + 1`` including the start value)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    eps = rng.normal(0.0, spec.innovation_sd, size=n_steps)
    a = 1.0 - spec.mean_reversion
    # AR(1) recursion as a linear filter, with the x0 carry-over folded
    # into the first innovation
    drive = eps.copy()
    drive[0] += a * x0
    x = np.empty(n_steps + 1)
    x[0] = x0
    x[1:] = lfilter([1.0], [1.0, -a], drive)
    if return_innovations:
        return x, eps
    return x


def build_intensity(det: IntensityCurve, ou_path: np.ndarray,
                    exp_scale: float) -> IntensityCurve:
    """Multiply a deterministic curve by a unit-mean exponential OU factor.

    The factor is ``exp(exp_scale * x_k)`` divided by its day average, so
    the modulation has exactly unit mean on the grid; an all-zero OU path
    reproduces the deterministic curve.
    """
    ou_path = np.asarray(ou_path, dtype=float)
    base = det if det.n_grid == ou_path.size else resample_curve(det, ou_path.size)
    factor = np.exp(exp_scale * ou_path)
    factor /= factor.mean()
    return IntensityCurve(det.t0, det.t1, base.values * factor)


def simulate_arrivals(lambda_curve: IntensityCurve,
                      rng: np.random.Generator) -> np.ndarray:
    """Doubly stochastic Poisson arrival times given the intensity path.

    Conditional on the path the count is Poisson with mean the integrated
    intensity, and the times are iid with density proportional to the
    intensity: sorted uniforms are mapped through the inverse of the
    piecewise-linear integrated intensity.
    """
    cum = lambda_curve.cumulative()
    total = cum[-1]
    n = rng.poisson(total)
    if n == 0:
        return np.empty(0)
    u = np.sort(rng.uniform(0.0, total, size=n))
    times = np.interp(u, cum, lambda_curve.grid)
    # strictly increasing times in (t0, t1]: nudge exact ties upward
    lo = np.nextafter(lambda_curve.t0, np.inf)
    times = np.maximum(times, lo)
    for i in range(1, times.size):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return times[times <= lambda_curve.t1]


def _interval_innovation_sums(times: np.ndarray, eps_std: np.ndarray,
                              t0: float, dt: float):
    """Standardised sums of innovations over the inter-tick intervals.

    Innovation k belongs to the grid step ending at ``t0 + (k+1) dt``;
    tick i collects the steps whose endpoint falls in (t_{i-1}, t_i].
    Returns the standardised sums and a mask of non-empty intervals.
    """
    ends = t0 + dt * np.arange(1, eps_std.size + 1)
    hi = np.searchsorted(ends, times, side="right")
    lo = np.concatenate(([0], hi[:-1]))
    cum = np.concatenate(([0.0], np.cumsum(eps_std)))
    sums = cum[hi] - cum[lo]
    counts = (hi - lo).astype(float)
    z = np.zeros(times.size)
    nz = counts > 0
    z[nz] = sums[nz] / np.sqrt(counts[nz])
    return z, nz


def simulate_prices(arrivals: np.ndarray, varsigma_curve: IntensityCurve,
                    leverage_rho: float = 0.0,
                    rng: np.random.Generator | None = None, *,
                    eps_std: np.ndarray | None = None) -> TickSeries:
    """Efficient log prices ``P(t_i) = P(t_{i-1}) + varsigma(t_i) U_i``.

    ``U_i`` are standard normal and ``P(0) = 0``.  With ``leverage_rho``
    nonzero, ``U_i`` is correlated with the standardised sum ``eps_std``
    of volatility-modulation innovations over (t_{i-1}, t_i]; empty
    intervals fall back to the independent draw, keeping U_i standard
    normal.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    if arrivals.size and np.any(np.diff(arrivals) <= 0):
        raise ValueError("arrivals must be sorted strictly increasing")
    if rng is None:
        rng = np.random.default_rng()
    n = arrivals.size
    w = rng.standard_normal(n)
    if leverage_rho != 0.0 and eps_std is not None and n:
        dt = (varsigma_curve.t1 - varsigma_curve.t0) / eps_std.size
        z, nz = _interval_innovation_sums(arrivals, eps_std,
                                          varsigma_curve.t0, dt)
        u = np.where(nz, leverage_rho * z
                     + np.sqrt(1.0 - leverage_rho**2) * w, w)
    else:
        u = w
    sig = varsigma_curve.at(arrivals)
    prices = np.cumsum(sig * u)
    return TickSeries(arrivals, prices, sig if n else None,
                      varsigma_curve.t1 - varsigma_curve.t0)


def _diurnal_innovation_sd(times: np.ndarray, spec: NoiseSpec,
                           T: float) -> np.ndarray:
    """Innovation standard deviations for the diurnal ARMA noise.

    The marginal noise variance follows a piecewise-linear V over the day
    (ratio ``vshape_ratio`` between the open/close peaks and the midday
    trough) and averages ``variance`` over the ticks.  Innovation
    variances are recovered from the exact ARMA(1,1) variance recursion
    ``Var_i = a^2 Var_{i-1} + s_i^2 + (b^2 + 2ab) s_{i-1}^2``.
    """
    a, b = spec.ar, spec.ma
    x = times / T
    shape = 1.0 + (spec.vshape_ratio - 1.0) * np.abs(2.0 * x - 1.0)
    target = shape / shape.mean() * spec.variance
    c = b * b + 2.0 * a * b
    n = times.size
    s2 = np.empty(n)
    s2[0] = target[0] * (1.0 - a * a) / (1.0 + c)   # stationary start
    for i in range(1, n):
        s2[i] = target[i] - a * a * target[i - 1] - c * s2[i - 1]
        if s2[i] <= 0.0:    # steep V drops can outrun the recursion
            s2[i] = 1e-4 * target[i]
    return np.sqrt(s2)


def contaminate(ticks: TickSeries, spec: NoiseSpec,
                rng: np.random.Generator) -> TickSeries:
    """Add microstructure noise to the tick log prices."""
    n = ticks.n_ticks
    if spec.kind == "none" or n == 0:
        return ticks
    if spec.kind == "iid_gaussian":
        v = rng.normal(0.0, np.sqrt(spec.variance), size=n)
        return ticks.with_prices(ticks.log_prices + v)
    # diurnal_arma: v_i = a v_{i-1} + e_i + b e_{i-1}, time-varying e sd.
    # A geometric burn-in with the opening sd gives a stationary start.
    sd = _diurnal_innovation_sd(ticks.times, spec, ticks.day_length_T)
    n_burn = 64
    eps = rng.standard_normal(n + n_burn)
    eps *= np.concatenate((np.full(n_burn, sd[0]), sd))
    v = lfilter([1.0, spec.ma], [1.0, -spec.ar], eps)[n_burn:]
    return ticks.with_prices(ticks.log_prices + v)


def simulate_day(config: SimConfig, day: int = 0,
                 master_seed: int = 0) -> DayPanel:
    """Simulate one full day and compute its true variance targets."""
    rng_ol, rng_os, rng_arr, rng_ret, rng_noise = day_rng(master_seed, day)
    x_lam = simulate_ou(config.ou_lam, config.n_steps, rng_ol)
    x_sig, eps_sig = simulate_ou(config.ou_sig, config.n_steps, rng_os,
                                 return_innovations=True)
    lam = build_intensity(config.lam_det, x_lam, config.ou_lam.exp_scale)
    # the unit-mean exp modulation applies to varsigma^2; take the square
    # root afterwards to get the varsigma curve itself
    sig2_det = config.sig_det.transform(np.square)
    sig = build_intensity(sig2_det, x_sig,
                          config.ou_sig.exp_scale).transform(np.sqrt)
    arrivals = simulate_arrivals(lam, rng_arr)
    eps_std = (eps_sig / config.ou_sig.innovation_sd
               if config.ou_sig.innovation_sd > 0 else eps_sig)
    clean = simulate_prices(arrivals, sig, config.leverage_rho, rng_ret,
                            eps_std=eps_std)
    noisy = contaminate(clean, config.noise, rng_noise)
    sig2 = IntensityCurve(sig.t0, sig.t1, sig.values**2)
    iv = (lam * sig2).integral()
    # the tick volatility actually applied to the returns is sig.at(t_i),
    # so riv sums its square (not the interpolation of sig^2)
    riv = float((sig.at(arrivals) ** 2).sum())
    iq = IntensityCurve(lam.t0, lam.t1, sig2.values**2 * lam.values).integral()
    return DayPanel(lambda_curve=lam, varsigma_curve=sig, ticks_clean=clean,
                    ticks_noisy=noisy, iv=iv, riv=riv, iq=iq, day=day)


def simulate_days(config: SimConfig, days, master_seed: int = 0,
                  n_jobs: int = 1) -> list[DayPanel]:
    """Simulate many days; results are ordered by day regardless of jobs."""
    days = list(days)
    if n_jobs == 1 or len(days) <= 1:
        return [simulate_day(config, d, master_seed) for d in days]
    from joblib import Parallel, delayed
    out = Parallel(n_jobs=n_jobs)(
        delayed(simulate_day)(config, d, master_seed) for d in days)
    return list(out)
