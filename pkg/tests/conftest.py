import numpy as np
import pytest

from tickvol.curves import IntensityCurve
from tickvol.sim import NoiseSpec, OuSpec, SimConfig, TickSeries


def small_curves(n_ticks_mean=300.0, T=23400.0, n_grid=235):
    """Fast mirrored-J curve pair for unit-test simulations."""
    x = np.linspace(0.0, 1.0, n_grid)
    lam = 1.0 + 2.0 * np.exp(-x / 0.10) + 0.8 * np.exp(-(1.0 - x) / 0.07)
    s2 = 1.0 + 12.0 * np.exp(-x / 0.08) + 4.0 * np.exp(-(1.0 - x) / 0.06)
    t = np.linspace(0.0, T, n_grid)
    lam *= n_ticks_mean / np.trapezoid(lam, t)
    lam_curve = IntensityCurve(0.0, T, lam)
    s2 *= 1.2e-4 * n_ticks_mean / np.trapezoid(s2 * lam, t)
    sig_curve = IntensityCurve(0.0, T, np.sqrt(s2))
    return lam_curve, sig_curve


@pytest.fixture(scope="session")
def fast_config():
    """Small simulation config (~300 ticks/day, coarse OU grid)."""
    lam, sig = small_curves()
    return SimConfig(lam_det=lam, sig_det=sig, n_steps=2340,
                     noise=NoiseSpec(kind="none"))


@pytest.fixture(scope="session")
def fast_noisy_config(fast_config):
    from dataclasses import replace
    return replace(fast_config, noise=NoiseSpec(kind="iid_gaussian"))


def random_ticks(rng, n=150, T=23400.0, sig_lo=5e-3, sig_hi=2e-2):
    """A synthetic tick path with known tick volatilities."""
    times = np.sort(rng.uniform(T * 1e-6, T, n))
    sig = rng.uniform(sig_lo, sig_hi, n)
    prices = np.cumsum(sig * rng.standard_normal(n))
    return TickSeries(times, prices, true_varsigma=sig, day_length_T=T)
