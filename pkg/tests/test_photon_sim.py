import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfcsim import kernels
from qfcsim.filters import noise_suppression_ratio
from qfcsim.photon_sim import (PS, Scenario, apply_dead_time, apply_dead_time_ps, calibrate_from_slopes,
                               calibrate_from_snr, chopper_is_lock, noise_gain_for, signal_rate_profile,
                               simulate_timetags, trigger_times_ps, window_fraction, with_overrides)


def quiet(**kw):
    base = dict(pulse_fwhm_s=1e-6, mu_in=0.0, pulse_rate_hz=10e3, n_pulses=3000, device_efficiency=0.3,
                noise_rate_after_waveguide_cps=0.0, dark_rate_cps=0.0, dead_time_s=0.0, seed=1)
    base.update(kw)
    return Scenario(**base)


def test_profile_peak_and_midpoint():
    s = quiet(mu_in=1.0, chopper_hz=0.0)
    c = s.detected_per_pulse
    peak = c * 2 * math.sqrt(math.log(2) / math.pi) / s.pulse_fwhm_s
    assert signal_rate_profile(s, s.delay_s) == pytest.approx(peak, rel=1e-9)
    assert signal_rate_profile(s, s.period_s) < 1e-12 * peak


def test_profile_integral():
    s = quiet(mu_in=0.5, chopper_hz=0.0)
    t = np.linspace(s.period_s, 2 * s.period_s, 200_001)
    area = np.trapezoid(signal_rate_profile(s, t), t)
    assert area == pytest.approx(0.5 * 0.3 * 0.1, rel=1e-6)


def test_no_light_only_triggers():
    tags = simulate_timetags(quiet())
    assert tags.clicks.size == 0
    assert tags.triggers.size == 3000


def test_triggers_only_in_measure_phase():
    s = quiet(n_pulses=5000)
    t = trigger_times_ps(s) * PS
    assert not np.any(chopper_is_lock(t, s.chopper_hz, s.chopper_duty))
    assert not np.any(chopper_is_lock(t + s.period_s * 0.999, s.chopper_hz, s.chopper_duty))


def test_noise_count_poisson():
    s = quiet(noise_rate_after_waveguide_cps=5000.0, use_cavity=False, n_pulses=200_000)
    tags = simulate_timetags(s)
    rate = s.filtered_noise_cps
    expect = rate * s.duration_s * (1 - s.chopper_duty)
    assert abs(tags.clicks.size - expect) < 3 * math.sqrt(expect)
    # gating: no click inside a lock half-cycle
    assert not np.any(chopper_is_lock(tags.clicks * PS, s.chopper_hz, s.chopper_duty))


def test_noise_scales_with_cavity_ratio():
    s = quiet(noise_rate_after_waveguide_cps=300.0)
    r = noise_suppression_ratio(s.cascade_without, s.cascade_with)
    assert with_overrides(s, use_cavity=False).filtered_noise_cps == pytest.approx(s.filtered_noise_cps * r)


def test_signal_per_pulse():
    s = quiet(mu_in=2.0, device_efficiency=0.5, detector_efficiency=0.2, n_pulses=200_000)
    tags = simulate_timetags(s)
    lam = s.detected_per_pulse
    n = tags.clicks.size
    assert abs(n / s.n_pulses - lam) < 3 * math.sqrt(lam / s.n_pulses)


def test_deterministic_replay():
    s = quiet(mu_in=0.5, noise_rate_after_waveguide_cps=3000.0, dark_rate_cps=50.0, dead_time_s=20e-6,
              n_pulses=50_000, seed=77)
    assert simulate_timetags(s) == simulate_timetags(s)
    assert simulate_timetags(with_overrides(s, seed=78)) != simulate_timetags(s)


def test_dead_time_examples():
    np.testing.assert_array_equal(apply_dead_time([0.0, 10e-6, 25e-6], 20e-6), [0.0, 25e-6])
    assert apply_dead_time([], 20e-6).size == 0
    with pytest.raises(ValueError):
        apply_dead_time([2.0, 1.0], 1e-6)


def test_dead_time_exact_boundary_survives():
    assert apply_dead_time_ps(np.array([0, 20, 39, 40]), 20).tolist() == [0, 20, 40]


@pytest.mark.parametrize("rate", [2e3, 2e4, 1e5])
def test_dead_time_rate_law(rate):
    tau = 20e-6
    T = 20.0
    rng = np.random.default_rng(int(rate))
    ev = np.cumsum(rng.exponential(1 / rate, int(rate * T * 1.2)))
    ev = ev[ev < T]
    kept = apply_dead_time(ev, tau)
    expect = rate / (1 + rate * tau) * T
    # kept counts of a renewal process: variance = mean * (1/(1+r tau))^2
    sd = math.sqrt(expect) / (1 + rate * tau)
    assert abs(kept.size - expect) < 3 * sd + 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 10**9), max_size=300), st.integers(1, 10**7))
def test_dead_time_kernels_agree(ts, tau):
    ev = np.sort(np.array(ts, dtype=np.int64))
    a = kernels.dead_time_keep_np(ev, tau)
    b = kernels.dead_time_keep_nb(ev, tau)
    assert np.array_equal(a, b)
    kept = ev[a]
    assert np.all(np.diff(kept) >= tau)


def test_scenario_validation():
    with pytest.raises(ValueError):
        quiet(pulse_fwhm_s=-1.0)
    with pytest.raises(ValueError):
        quiet(pulse_rate_hz=1e6)  # period shorter than 5 FWHM
    with pytest.raises(ValueError):
        quiet(device_efficiency=1.5)
    with pytest.raises(ValueError):
        quiet(chopper_duty=1.0)


def test_calibration_reproduces_bundled_values():
    noise, eta = calibrate_from_snr(7.0, 6.1, 9.13, 0.021, 385e-9, 0.1)
    assert noise == pytest.approx(51.737, rel=1e-4)
    assert eta == pytest.approx(0.14274, rel=1e-4)
    assert noise_gain_for(noise, 300.0, 0.1) == pytest.approx(1.72456, rel=1e-4)
    noise, eta = calibrate_from_slopes(4.70e-3, 5.47e-3, 9.13, 0.1)
    assert noise == pytest.approx(55.729, rel=1e-4)
    assert eta == pytest.approx(0.29739, rel=1e-4)
    assert noise_gain_for(noise, 300.0, 0.1) == pytest.approx(1.85762, rel=1e-4)
    assert window_fraction() == pytest.approx(0.99676, abs=1e-5)
