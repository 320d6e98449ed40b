"""Tick-time stochastic volatility: simulation, sampling and estimation."""

from .curves import IntensityCurve, constant_curve, load_curve_csv, \
    resample_curve, save_curve_csv
from .estimators import MseSetting, PreAvgSpec, asymptotic_variance_preavg, \
    asymptotic_variance_rv, bts_phi, conditional_mse, optimal_frequency, \
    preavg_rv, rv
from .evaluate import DmResult, HarFit, LossRecord, dm_test, har_fit, \
    har_forecast, patton_rank, qlike, relative_bias, relative_rmse, \
    rolling_forecast, stationary_bootstrap_indices
from .experiment import ExperimentConfig, emit_plotdata, ingest_ticks, \
    load_experiment_config, run_experiment, write_ticks
from .intensity import KernelSpec, RollingEstimate, estimate_lambda, \
    estimate_varsigma2, noise_adjusted_average, noise_bias_values, \
    noise_variance_estimate, rolling_average
from .sampling import SamplingGrid, cts_grid, grid_from_accumulated, \
    ibts_grid, itts_grid, previous_tick_resample, rbts_grid, \
    returns_from_grid, rtts_grid
from .sim import DayPanel, NoiseSpec, OuSpec, SimConfig, TickSeries, \
    build_intensity, contaminate, default_config, simulate_arrivals, \
    simulate_day, simulate_days, simulate_ou, simulate_prices

__version__ = "0.1.0"
