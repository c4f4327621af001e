import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swingcorr.metrics import normalized_mse
from swingcorr.modal import analytic_angle_xcorr, decompose
from swingcorr.pipeline import ambient_records, recover_all
from swingcorr.recovery import (CorrelationSequence, RecoveredResponse, RecoveryConfig,
                                RecoveryError, bandpass_kernel, cross_correlate,
                                derivative_plan, detrend_bandpass, differentiate,
                                recover_response, reference_angle, scale_to_nadir,
                                xcorr_values)
from swingcorr.simulate import AmbientConfig, StateSpace, TimeSeries, simulate_ambient

TS = 0.01
SCALAR = StateSpace(np.eye(1), 3 * np.eye(1), 2 * np.eye(1))


def series(x, label="gen:1:angle", ts=TS):
    return TimeSeries(label, ts, np.asarray(x, dtype=float))


def direct_xcorr(x, y, max_lag):
    m = len(x)
    out = []
    for tau in range(-max_lag, max_lag + 1):
        s = 0.0
        for i in range(m):
            j = i - tau
            if 0 <= j < m:
                s += x[i] * y[j]
        out.append(s / m)
    return np.array(out)


# -- reference angle -----------------------------------------------------------

def test_reference_angle_examples():
    a, b = series(np.ones(10)), series(3 * np.ones(10))
    np.testing.assert_array_equal(reference_angle([a, b]).samples, 2 * np.ones(10))
    x = series(np.random.default_rng(0).standard_normal(10))
    np.testing.assert_array_equal(reference_angle([x]).samples, x.samples)
    np.testing.assert_array_equal(reference_angle([x, x.replace(samples=-x.samples)]).samples,
                                  np.zeros(10))
    np.testing.assert_allclose(reference_angle([a, b], weights=[3, 1]).samples, 1.5)


def test_reference_angle_mismatch():
    with pytest.raises(RecoveryError):
        reference_angle([series(np.ones(10)), series(np.ones(11))])
    with pytest.raises(RecoveryError):
        reference_angle([series(np.ones(10)), series(np.ones(10), ts=0.02)])
    with pytest.raises(RecoveryError):
        reference_angle([])


# -- filter --------------------------------------------------------------------

def _tone(f, n=60_000, phase=0.0):
    t = np.arange(n) * TS
    return series(np.sin(2 * np.pi * f * t + phase))


def test_kernel_zero_dc_gain():
    h = bandpass_kernel(TS, (0.1, 0.7), 6001)
    assert abs(h.sum()) < 1e-12
    np.testing.assert_allclose(h, h[::-1], atol=0)


def test_filter_rejects_dc():
    y = detrend_bandpass(series(5.0 * np.ones(60_000)), RecoveryConfig())
    assert np.abs(y.samples).max() <= 1e-3 * 5.0


def test_filter_passes_mid_band_without_phase_shift():
    x = _tone(0.3)
    y = detrend_bandpass(x, RecoveryConfig())
    ref = np.sin(2 * np.pi * 0.3 * y.times)
    amp = np.sqrt(2 * np.mean(y.samples**2))
    assert amp == pytest.approx(1.0, rel=0.05)
    # phase by projection onto sin/cos at the aligned output times
    s = np.mean(y.samples * ref)
    c = np.mean(y.samples * np.cos(2 * np.pi * 0.3 * y.times))
    assert abs(np.arctan2(c, s)) <= 1e-3
    assert np.abs(y.samples - amp * ref).max() < 0.05


def test_filter_attenuates_high_frequency():
    y = detrend_bandpass(_tone(5.0), RecoveryConfig())
    assert np.abs(y.samples).max() <= 1e-2


def test_filter_output_mean_and_trim():
    x = series(np.random.default_rng(1).standard_normal(60_000) + 3.0)
    cfg = RecoveryConfig()
    y = detrend_bandpass(x, cfg)
    taps = cfg.num_taps(TS)
    assert taps == 6001
    assert len(y) == len(x) - (taps - 1)
    assert y.t0 == pytest.approx(3000 * TS)
    assert abs(y.samples.mean()) <= 1e-6 * x.samples.std()


def test_filter_record_too_short():
    with pytest.raises(RecoveryError, match="too short"):
        detrend_bandpass(series(np.ones(18_000)), RecoveryConfig())


def test_filter_idempotent_in_band(wscc9):
    (x,) = simulate_ambient(wscc9, AmbientConfig(seed=0), ["line:5-6:flow"])
    cfg = RecoveryConfig(passband=(0.1, 4.0))
    y1 = detrend_bandpass(x, cfg)
    y2 = detrend_bandpass(y1, cfg)
    h = (len(y1) - len(y2)) // 2
    a = y1.samples[h:h + len(y2)]
    assert np.sqrt(np.mean((y2.samples - a) ** 2) / np.mean(a**2)) <= 0.01


def test_config_validation():
    for kw in ({"passband": (0.7, 0.1)}, {"passband": (0.0, 1.0)}, {"max_lag": 0},
               {"diff_order": 3}, {"taps": 4}):
        with pytest.raises(ValueError):
            RecoveryConfig(**kw)
    with pytest.raises(ValueError, match="Nyquist"):
        RecoveryConfig(passband=(0.1, 60.0)).check(TS)
    with pytest.raises(ValueError, match="quarter"):
        RecoveryConfig(max_lag=10.0).check(TS, 3000)


# -- correlation ---------------------------------------------------------------

def test_xcorr_unit_impulse():
    s = cross_correlate(series([1.0, 0, 0]), series([1.0, 0, 0]), 1 * TS)
    np.testing.assert_allclose(s.lags, [-TS, 0, TS])
    np.testing.assert_allclose(s.values, [0, 1 / 3, 0], atol=1e-16)
    assert s.at(0) == pytest.approx(1 / 3)


def test_xcorr_lag_convention():
    # y is x delayed by 3 samples -> C_xy[tau] = mean x[m] y[m - tau] peaks at tau = -3
    x = np.random.default_rng(2).standard_normal(500)
    y = np.r_[np.zeros(3), x[:-3]]
    v = xcorr_values(x, y, 10)
    assert np.argmax(v) - 10 == -3


def test_xcorr_symmetry():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(100), rng.standard_normal(100)
    a, b = xcorr_values(x, y, 99), xcorr_values(y, x, 99)
    np.testing.assert_allclose(a, b[::-1], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 300), st.integers(0, 2**32 - 1))
def test_fft_matches_direct_sum(m, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(m), rng.standard_normal(m)
    lag = min(m - 1, 40)
    ref = direct_xcorr(x, y, lag)
    got = xcorr_values(x, y, lag)
    assert np.abs(got - ref).max() <= 1e-10 * np.abs(ref).max()


def test_xcorr_mismatched_rates():
    with pytest.raises(RecoveryError):
        cross_correlate(series(np.ones(10)), series(np.ones(10), ts=0.02), 0.05)


def test_scalar_correlation_matches_closed_form():
    dec = decompose(np.eye(1), 2 * np.eye(1), 3.0)
    tau = np.arange(501) * TS
    ref = analytic_angle_xcorr(dec, 1.0, 0, 0, tau)
    vals = []
    for seed in range(10):
        (x,) = simulate_ambient(SCALAR, AmbientConfig(seed=seed), ["gen:1:angle"])
        x = x.replace(samples=x.samples - x.samples.mean())
        s = cross_correlate(x, x, 5.0).nonnegative()
        vals.append(normalized_mse((tau, ref), (s.lags, s.values)))
    assert np.mean(vals) <= 0.1


# -- differentiation -----------------------------------------------------------

def _seq(v):
    v = np.asarray(v, dtype=float)
    return CorrelationSequence(np.arange(len(v)) * TS, v, "a", "b", TS)


def test_differentiate_ramp_and_quadratic():
    t = np.arange(50) * TS
    np.testing.assert_allclose(differentiate(_seq(t), 1).values[1:-1], 1.0, rtol=1e-10)
    np.testing.assert_allclose(differentiate(_seq(t**2), 2).values[1:-1], 2.0, rtol=1e-8)
    d = differentiate(_seq(t), 1)
    assert d.values[0] == pytest.approx(1.0) and d.values[-1] == pytest.approx(1.0)
    np.testing.assert_array_equal(d.lags, _seq(t).lags)


def test_differentiate_exponential():
    t = np.arange(501) * TS
    d = differentiate(_seq(np.exp(-t)), 1)
    assert np.abs(d.values[1:-1] + np.exp(-t[1:-1])).max() <= 2e-5


def test_differentiate_errors():
    with pytest.raises(RecoveryError):
        differentiate(_seq([1, 2, 3, 4]), 1)
    with pytest.raises(RecoveryError):
        differentiate(_seq(np.ones(10)), 3)


@pytest.mark.parametrize("src, tgt, kind, plan", [
    ("gen:2:freq", "gen:1:freq", "frequency", (0, 1.0)),
    ("gen:2:angle", "gen:1:freq", "frequency", (1, 1.0)),
    ("gen:2:angle", "gen:1:angle", "frequency", (2, -1.0)),
    ("gen:2:angle", "gen:1:angle", "rotor-angle", (1, -1.0)),
    ("gen:2:angle", "bus:5:angle", "bus-angle", (1, -1.0)),
    ("gen:2:angle", "line:5-6:flow", "line-flow", (1, -1.0)),
    ("gen:2:freq", "gen:1:angle", "rotor-angle", (0, -1.0)),
])
def test_derivative_plan(src, tgt, kind, plan):
    assert derivative_plan(src, tgt, kind) == plan


@pytest.mark.parametrize("src, tgt, kind", [
    ("gen:2:freq", "gen:1:freq", "rotor-angle"),
    ("line:5-6:flow", "gen:1:angle", "rotor-angle"),
    ("gen:2:angle", "gen:1:angle", "voltage"),
    ("gen:2:volts", "gen:1:angle", "rotor-angle"),
])
def test_derivative_plan_rejects(src, tgt, kind):
    with pytest.raises(RecoveryError):
        derivative_plan(src, tgt, kind)


# -- full recovery -------------------------------------------------------------

@pytest.fixture(scope="module")
def two_gen_records(two_gen):
    return ambient_records(two_gen, AmbientConfig(seed=0),
                           ["gen:1:angle", "gen:2:angle", "gen:1:freq", "gen:2:freq"])


def test_recover_normalized(two_gen_records, two_gen):
    (r,) = recover_all(two_gen_records, 1, [("gen:2:freq", "frequency")], RecoveryConfig(),
                       two_gen)
    assert np.abs(r.samples).max() == 1.0
    assert r.lags[0] == 0 and r.lags[-1] == pytest.approx(10.0)
    assert r.norm > 0 and r.physical is None


def test_recover_two_gen_period(two_gen_records, two_gen):
    (r,) = recover_all(two_gen_records, 1, [("gen:1:freq", "frequency")], RecoveryConfig(),
                       two_gen)
    s = r.samples
    i = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0))
    # linear interpolation of downward zero crossings
    tz = r.lags[i] + s[i] / (s[i] - s[i + 1]) * TS
    period = np.mean(np.diff(tz[:4]))
    omega = np.sqrt(16 - 0.04) / 2
    assert period == pytest.approx(2 * np.pi / omega, rel=0.02)


def test_recover_scale_invariance(two_gen_records):
    x, y = two_gen_records["gen:1:angle"], two_gen_records["gen:2:angle"]
    cfg = RecoveryConfig(reference="none")
    a = recover_response(x, y, "rotor-angle", cfg)
    b = recover_response(x.replace(samples=7.5 * x.samples), y.replace(samples=7.5 * y.samples),
                         "rotor-angle", cfg)
    assert np.abs(a.samples - b.samples).max() <= 1e-12


def test_recover_noise_level_invariance(two_gen):
    ch = ["gen:1:angle", "gen:2:angle", "gen:1:freq", "gen:2:freq"]
    tgt = [("gen:2:angle", "rotor-angle")]
    a = recover_all(ambient_records(two_gen, AmbientConfig(seed=3), ch), 1, tgt,
                    RecoveryConfig(), two_gen)[0]
    b = recover_all(ambient_records(two_gen, AmbientConfig(seed=3, alpha=2.0), ch), 1, tgt,
                    RecoveryConfig(), two_gen)[0]
    assert normalized_mse(a, b) <= 0.05


def test_recover_scalar_mode_seed_average():
    tau = np.arange(501) * TS
    ref = np.exp(-tau) - np.exp(-2 * tau)
    cfg = RecoveryConfig(passband=(0.01, 10.0), taps=6001, max_lag=5.0, reference="none")
    runs = []
    for seed in range(10):
        (x,) = simulate_ambient(SCALAR, AmbientConfig(seed=seed), ["gen:1:angle"])
        runs.append(recover_response(x, x, "rotor-angle", cfg).samples)
    assert normalized_mse((tau, ref), (tau, np.mean(runs, axis=0))) <= 0.1


def test_recover_no_excitation():
    z = series(np.zeros(60_000))
    with pytest.raises(RecoveryError, match="no excitation"):
        recover_response(z, z, "rotor-angle", RecoveryConfig())


# -- nadir scaling -------------------------------------------------------------

def _resp(samples):
    s = np.asarray(samples, dtype=float)
    return RecoveredResponse("frequency", "gen:2", "gen:1:freq", np.arange(len(s)) * TS, s, 1.0)


def test_scale_to_nadir():
    r = scale_to_nadir(_resp([0.0, -1.0, -0.5, 0.3]), -0.2)
    assert r.scale == pytest.approx(0.2)
    assert r.physical.min() == pytest.approx(-0.2)
    back = r.physical / np.abs(r.physical).max()
    np.testing.assert_allclose(back, r.samples, atol=1e-15)


def test_scale_to_nadir_sign_mismatch():
    with pytest.raises(RecoveryError, match="sign"):
        scale_to_nadir(_resp([0.0, 0.5, 1.0]), -0.2)
    with pytest.raises(RecoveryError):
        scale_to_nadir(_resp([0.0, 0.5, 1.0]), 0.0)


def test_recover_applies_nadir(two_gen_records, two_gen):
    (r,) = recover_all(two_gen_records, 1, [("gen:2:freq", "frequency")],
                       RecoveryConfig(nadir=0.5), two_gen)
    assert r.physical.max() == pytest.approx(0.5)
