import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazemark.errors import DegenerateAmplitudeRange, NegativeAmplitude, TooFewSaccades
from gazemark.events import SaccadeEvent
from gazemark.mainseq import (
    NORMATIVE, MainSequenceModel, deviation_report, fit_main_sequence, fit_main_sequence_detailed,
    normative_curves, predict_duration, predict_peak_velocity, report_csv,
)


def make_saccades(amps, vel_noise=0.0, dur_noise=0.0, seed=0, model=NORMATIVE):
    rng = np.random.default_rng(seed)
    out = []
    for a in amps:
        v = predict_peak_velocity(a, model) * (1 + vel_noise * rng.standard_normal())
        d = predict_duration(a, model) * (1 + dur_noise * rng.standard_normal())
        out.append(SaccadeEvent(0.0, d, d, float(a), v, min(v, a / (d / 1000))))
    return out


def test_velocity_examples():
    assert predict_peak_velocity(0.0) == 0.0
    oracle = 500.0 * (1.0 - math.exp(-1.0))
    assert oracle == pytest.approx(316.060, abs=5e-4)
    assert predict_peak_velocity(14.0) == pytest.approx(oracle, rel=1e-12)


def test_duration_examples():
    assert predict_duration(0.0) == 21.0
    assert predict_duration(10.0) == pytest.approx(43.0, rel=1e-12)
    assert predict_duration(5.0) == pytest.approx(32.0, rel=1e-12)


def test_negative_amplitude():
    with pytest.raises(NegativeAmplitude):
        predict_peak_velocity(-0.1)
    with pytest.raises(NegativeAmplitude):
        predict_duration(np.array([1.0, -1.0]))


def test_shape_over_sweep():
    a = np.linspace(0.0, 100.0, 10_000)
    v = predict_peak_velocity(a)
    assert np.all(np.diff(v) > 0)
    assert np.all(np.diff(v, 2) <= 1e-9)
    assert predict_peak_velocity(1e4) == pytest.approx(NORMATIVE.theta_max_dps, rel=1e-6)


@settings(max_examples=200)
@given(st.floats(0, 90), st.floats(0, 90))
def test_duration_affine(a, b):
    diff = predict_duration(a + b) - predict_duration(a)
    assert diff == pytest.approx(NORMATIVE.slope_ms_per_deg * b, abs=1e-9)


def test_fit_recovers_noise_free():
    m = fit_main_sequence(make_saccades(np.linspace(0.5, 25.0, 200)))
    assert m.theta_max_dps == pytest.approx(500.0, abs=1e-3)
    assert m.c_deg == pytest.approx(14.0, abs=1e-3)
    assert m.slope_ms_per_deg == pytest.approx(2.2, abs=1e-6)
    assert m.intercept_ms == pytest.approx(21.0, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.floats(200, 900), st.floats(3, 40), st.floats(1, 4), st.floats(10, 40))
def test_fit_recovers_other_models(theta, c, slope, intercept):
    truth = MainSequenceModel(theta, c, slope, intercept)
    m = fit_main_sequence(make_saccades(np.linspace(0.5, 30.0, 120), model=truth))
    assert m.theta_max_dps == pytest.approx(theta, rel=1e-5)
    assert m.c_deg == pytest.approx(c, rel=1e-5)
    assert m.slope_ms_per_deg == pytest.approx(slope, rel=1e-9)


def test_fit_with_noise():
    fits = [fit_main_sequence(make_saccades(np.random.default_rng(s).uniform(0.5, 25, 200), 0.05, 0.05, seed=s))
            for s in range(10)]
    for m in fits:
        assert abs(m.theta_max_dps / 500 - 1) < 0.10
        assert abs(m.c_deg / 14 - 1) < 0.15


def test_fit_errors():
    with pytest.raises(DegenerateAmplitudeRange):
        fit_main_sequence(make_saccades([3.0] * 20))
    with pytest.raises(TooFewSaccades):
        fit_main_sequence(make_saccades([1.0, 2.0, 3.0]))


def test_implausible_velocities_excluded():
    sacs = make_saccades(np.linspace(1, 20, 50))
    sacs.append(SaccadeEvent(0.0, 30.0, 30.0, 5.0, 1500.0, 200.0))
    res = fit_main_sequence_detailed(sacs)
    assert res.n_excluded == 1 and res.n_used == 50
    assert res.model.theta_max_dps == pytest.approx(500.0, abs=1e-3)


def test_deviation_report_symmetric_and_exact():
    sacs = make_saccades(np.linspace(1, 20, 40))
    reports = deviation_report(sacs + sacs, ["ADHD"] * 40 + ["NonADHD"] * 40)
    adhd, non, pooled = reports
    assert (adhd.rmse_velocity_dps, adhd.fitted) == (non.rmse_velocity_dps, non.fitted)
    assert adhd.velocity_points == non.velocity_points
    assert pooled.n_saccades == 80
    for r in reports:
        assert r.rmse_velocity_dps == pytest.approx(0.0, abs=1e-9)
        assert r.rmse_duration_ms == pytest.approx(0.0, abs=1e-9)
    assert report_csv(reports).splitlines()[0].startswith("group,n_saccades")


def test_noisy_rmse_scale():
    amps = np.random.default_rng(2).uniform(1, 20, 2000)
    sacs = make_saccades(amps, vel_noise=0.05, seed=3)
    r = deviation_report(sacs, ["ADHD"] * 1000 + ["NonADHD"] * 1000)[2]
    # 5% multiplicative noise: expected rmse is 0.05 times the rms of the predictions
    expected = 0.05 * math.sqrt(np.mean(predict_peak_velocity(amps) ** 2))
    assert r.rmse_velocity_dps / expected == pytest.approx(1.0, abs=0.1)


def test_normative_curves():
    vel, dur = normative_curves()
    vel_rows = vel.splitlines()
    assert vel_rows[0] == "amplitude_deg,peak_velocity_dps"
    assert len(vel_rows) == 402
    assert dur.splitlines()[-1] == f"40.0,{2.2 * 40 + 21!r}"
