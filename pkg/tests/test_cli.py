import os
import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd
import pytest

from tickvol.cli import main
from tickvol.experiment import ExperimentConfig, run_experiment

from conftest import small_curves


@pytest.fixture()
def fast_conf_file(tmp_path):
    """A config file pointing at small curve CSVs for quick CLI runs."""
    from tickvol.curves import save_curve_csv
    lam, sig = small_curves()
    lam_path = tmp_path / "lam.csv"
    sig_path = tmp_path / "sig.csv"
    save_curve_csv(lam_path, lam)
    save_curve_csv(sig_path, sig)
    conf = tmp_path / "exp.conf"
    conf.write_text(
        f"lambda_curve_file = {lam_path}\n"
        f"varsigma_curve_file = {sig_path}\n"
        "days = 16\n"
        "schemes = cts, rbts\n"
        "m_rv = 13, 26\n"
        "m_preavg =\n"
        "estimators = rv\n"
        "noise_kinds = none\n")
    return conf


def test_simulate_writes_ticks_and_truths(fast_conf_file, tmp_path, capsys):
    out = tmp_path / "sim_out"
    code = main(["--config", str(fast_conf_file), "--out", str(out),
                 "simulate", "--days", "2", "--noise", "none"])
    assert code == 0
    ticks = pd.read_csv(out / "ticks.csv")
    truths = pd.read_csv(out / "truths.csv")
    assert set(ticks.columns) == {"day", "time_seconds", "log_price"}
    assert sorted(ticks["day"].unique()) == [0, 1]
    assert list(truths.columns) == ["day", "iv", "riv", "iq", "n_ticks"]
    assert (truths["iv"] > 0).all()
    assert "wrote" in capsys.readouterr().out


def test_estimate_roundtrip(fast_conf_file, tmp_path):
    out = tmp_path / "sim_out"
    assert main(["--config", str(fast_conf_file), "--out", str(out),
                 "simulate", "--days", "3", "--noise", "none"]) == 0
    est_out = tmp_path / "est_out"
    code = main(["--out", str(est_out), "estimate",
                 "--ticks", str(out / "ticks.csv"),
                 "--bandwidth", "600", "--window-days", "2"])
    assert code == 0
    curves = pd.read_csv(est_out / "curves.csv")
    rolling = pd.read_csv(est_out / "curves_rolling.csv")
    assert set(curves.columns) == {"day", "t", "lambda_hat", "varsigma2_hat"}
    assert sorted(curves["day"].unique()) == [0, 1, 2]
    assert (curves["lambda_hat"] > 0).all()
    assert len(rolling) == curves.groupby("day").size().iloc[0]
    # the rolling file averages the last window of days
    last2 = curves[curves["day"] >= 1].groupby("t", sort=False)
    np.testing.assert_allclose(rolling["lambda_hat"].to_numpy(),
                               last2["lambda_hat"].mean().to_numpy(),
                               rtol=1e-6)


def test_experiment_evaluate_forecast_plotdata(fast_conf_file, tmp_path):
    out = tmp_path / "exp_out"
    code = main(["--config", str(fast_conf_file), "--out", str(out),
                 "--seed", "3", "--threads", "2", "experiment"])
    assert code == 0
    losses = out / "losses_none.csv"
    assert losses.exists() and (out / "aggregate.csv").exists()

    rank_out = tmp_path / "ranking.csv"
    code = main(["--out", str(rank_out), "evaluate", "--losses", str(losses),
                 "--baseline", "cts", "--n-boot", "99"])
    assert code == 0
    ranking = pd.read_csv(rank_out)
    assert set(ranking["scheme"]) == {"rbts"}

    fig_dir = tmp_path / "figs"
    code = main(["--out", str(fig_dir), "plotdata",
                 "--aggregate", str(out / "aggregate.csv"), "--svg"])
    assert code == 0
    files = sorted(os.listdir(fig_dir))
    assert any(f.endswith(".csv") for f in files)
    svgs = [f for f in files if f.endswith(".svg")]
    assert svgs
    root = ET.parse(fig_dir / svgs[0]).getroot()
    assert root.tag.endswith("svg")


def test_forecast_command(tmp_path):
    # build a loss table long enough for a short rolling window
    rng = np.random.default_rng(0)
    frame = pd.DataFrame({
        "day": np.arange(60), "asset": "sim", "estimator": "rv",
        "scheme": "cts", "M": 78,
        "estimate": 1.0 + 0.1 * rng.standard_normal(60),
        "proxy": 1.0, "mse": 0.0, "qlike": 0.0})
    losses = tmp_path / "losses.csv"
    frame.to_csv(losses, index=False)
    fc_out = tmp_path / "fc.csv"
    code = main(["--out", str(fc_out), "forecast", "--losses", str(losses),
                 "--scheme", "cts", "--M", "78", "--estimator", "rv",
                 "--window", "40"])
    assert code == 0
    fc = pd.read_csv(fc_out)
    assert len(fc) == 20
    assert {"day", "forecast", "realized", "mse", "qlike"} <= set(fc.columns)
    # window longer than the series is a data error
    assert main(["forecast", "--losses", str(losses), "--window",
                 "999"]) == 3


def test_exit_code_config_error(tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("days = 0\n")
    assert main(["--config", str(conf), "experiment"]) == 2
    conf.write_text("mystery = 1\n")
    assert main(["--config", str(conf), "experiment"]) == 2


def test_exit_code_data_error(tmp_path):
    missing = tmp_path / "nothing.csv"
    assert main(["evaluate", "--losses", str(missing)]) == 3
    assert main(["estimate", "--ticks", str(missing)]) == 3
    bad = tmp_path / "bad_ticks.csv"
    bad.write_text("day,time_seconds,log_price\n0,5.0,1\n0,4.0,2\n")
    assert main(["estimate", "--ticks", str(bad)]) == 3


def test_evaluate_rejects_wrong_columns(tmp_path):
    bad = tmp_path / "losses.csv"
    pd.DataFrame({"day": [1], "loss": [0.5]}).to_csv(bad, index=False)
    assert main(["evaluate", "--losses", str(bad)]) == 3


def test_empty_ticks_file_is_ok(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["estimate", "--ticks", str(empty)]) == 0
