import math

import numpy as np
import pytest

from pclaser.dynamics import (IntegratorConfig, Method, TimeTrace, TraceError,
                              extract_decay_time, extract_rise_time, integrate,
                              rise_decay_shape, simulate_pulse_response)
from pclaser.fitting import synth_trace
from pclaser.model import (GainModel, LaserState, PumpDrive, lasing_level_decay,
                           pump_rate_eval, rhs_eval)
from pclaser.steadystate import pulse_threshold_equivalent

from conftest import make_params

TIGHT = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-14 * 1e24)


def rk4_reference(params, drive, y0, t_end, h):
    """Classical fixed-step RK4, written out here as an independent oracle."""
    n = int(round(t_end / h))
    y = np.array(y0, dtype=float)
    f = lambda t, s: rhs_eval(params, s, float(pump_rate_eval(params, drive, t)))
    t = 0.0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y, n * h


@pytest.fixture(scope="module")
def benchmark():
    params = make_params()
    drive = PumpDrive.cw(40e-6)
    y0 = (1e21, 1.2e24, 5e23)
    shortest = min(params.tau_p, params.tau_ef, 1 / lasing_level_decay(params))
    y_ref, t_end = rk4_reference(params, drive, y0, 20e-12, 1e-3 * shortest)
    return params, drive, LaserState(*y0), t_end, y_ref


def test_zero_pump_zero_state(params):
    traj = integrate(params, PumpDrive.cw(0.0), LaserState(), (0.0, 1e-9))
    assert np.all(traj(np.linspace(0, 1e-9, 50)) == 0.0)


def test_exponential_decay_oracle():
    p = make_params(f_cav=0.0, gain=GainModel(g0=0.0))
    n0 = 2e24
    tau_g = 1 / lasing_level_decay(p)
    traj = integrate(p, PumpDrive.cw(0.0), LaserState(0.0, n0, 0.0), (0.0, 5 * tau_g), TIGHT)
    t = np.linspace(0, 5 * tau_g, 400)
    exact = n0 * np.exp(-t / tau_g)
    assert np.max(np.abs(traj(t)[1] - exact) / exact) < 1e-6


@pytest.mark.parametrize("method", list(Method))
def test_fine_step_oracle(benchmark, method):
    params, drive, s0, t_end, y_ref = benchmark
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12 * params.n_tr, method=method)
    y = integrate(params, drive, s0, (0.0, t_end), cfg).final_state.as_array()
    assert np.all(np.abs(y - y_ref) <= 1e-5 * np.abs(y_ref))


def test_convergence_with_tolerance(benchmark):
    params, drive, s0, t_end, y_ref = benchmark
    errors = []
    for rtol in (1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
        cfg = IntegratorConfig(rel_tol=rtol, abs_tol=rtol * 1e-4 * params.n_tr)
        y = integrate(params, drive, s0, (0.0, t_end), cfg).final_state.as_array()
        errors.append(np.max(np.abs(y - y_ref) / np.abs(y_ref)))
    assert all(b < a for a, b in zip(errors, errors[1:])), errors


CASES = [
    (dict(), PumpDrive.cw(1e-3)),
    (dict(), PumpDrive.pulse_train(50e-6)),
    (dict(f_cav=0.0), PumpDrive.pulse_train(5e-6)),
    (dict(gain=GainModel("logarithmic", g0=2e13)), PumpDrive.cw(5e-3)),
    (dict(tau_pc_nr=math.inf, f_pc=0.0), PumpDrive.pulse_train(1e-3, pulse_fwhm=1e-12)),
]


# explicit trial steps may overflow before being rejected
@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning", "ignore:invalid value:RuntimeWarning")
@pytest.mark.parametrize("overrides,drive", CASES)
@pytest.mark.parametrize("method", list(Method))
def test_non_negative(overrides, drive, method):
    p = make_params(**overrides)
    cfg = IntegratorConfig(method=method)
    traj = integrate(p, drive, LaserState(), (0.0, 300e-12), cfg)
    assert np.all(traj.y >= -cfg.abs_tol_vector(p)[:, None])


def test_conservation_along_trajectory():
    p = make_params(tau_p=math.inf, tau_pc_nr=math.inf, tau_ef=math.inf, tau_er=math.inf,
                    tau_enr=math.inf, f_pc=0.0, f_cav=30.0)
    s0 = LaserState(0.0, 2e24, 0.0)
    traj = integrate(p, PumpDrive.cw(0.0), s0, (0.0, 10e-9))
    y = traj(np.linspace(0.0, 10e-9, 2001))
    total0 = s0.p + s0.n_g
    assert np.max(np.abs(y[0] + y[1] - total0)) / total0 < 1e-6
    assert y[0, -1] > 1e23  # the exchange actually happened


def test_pulse_response_zero_power(passivated):
    tr = simulate_pulse_response(passivated.laser, passivated.pump.replace(power_avg=0.0),
                                 record=100e-12)
    assert np.all(tr.y == 0.0)


def test_pulse_response_is_periodic(passivated):
    laser = passivated.laser
    drive = passivated.pump.replace(
        power_avg=4.7 * pulse_threshold_equivalent(laser, passivated.pump.rep_period))
    tr = simulate_pulse_response(laser, drive, record=200e-12)
    peaks = tr.meta["peak_history"]
    assert tr.meta["periods_warmup"] >= 3
    assert abs(peaks[-1] - peaks[-2]) < 1e-3 * peaks[-2]


def _weak_pulse_tail(laser, passivated):
    drive = passivated.pump.replace(power_avg=1e-3 * pulse_threshold_equivalent(
        laser, passivated.pump.rep_period))
    tr = simulate_pulse_response(laser, drive, record=300e-12, dt=0.25e-12)
    return extract_decay_time(tr, t_offset=40e-12, floor=1e-4 * tr.y.max()).tau


def test_far_below_threshold_decay_is_cavity_lifetime(passivated):
    # weak gain: stimulated terms negligible, spontaneous emission dominates
    laser = passivated.laser.replace(gain=GainModel(g0=1e10))
    assert _weak_pulse_tail(laser, passivated) == pytest.approx(
        1 / lasing_level_decay(laser), rel=0.10)


def test_below_transparency_reabsorption(passivated):
    # at the preset gain a photon is re-absorbed with probability
    # G0/(G0 + 1/tau_p), G0 = gamma*g0, which slows the carrier decay
    laser = passivated.laser
    k_p = 1 / laser.tau_p
    escape = k_p / (k_p + laser.gamma_conf * laser.gain.g0)
    k = (laser.f_cav * escape + laser.f_pc) / laser.tau_r + 1 / laser.tau_pc_nr
    tau = _weak_pulse_tail(laser, passivated)
    assert tau == pytest.approx(1 / k, rel=0.02)
    assert tau > 1.5 / lasing_level_decay(laser)


def test_decay_exact_exponential():
    t = np.arange(0.0, 100e-12, 0.5e-12)
    fit = extract_decay_time(TimeTrace(t, np.exp(-t / 10e-12)), floor=1e-6)
    assert fit.tau == pytest.approx(10e-12, rel=1e-6)
    assert fit.monotone


def test_decay_noise_spread():
    t = np.arange(0.0, 150e-12, 0.5e-12)
    clean = np.exp(-t / 10e-12)
    taus = []
    for seed in range(100):
        y = clean + 0.01 * np.random.default_rng(seed).standard_normal(t.size)
        taus.append(extract_decay_time(TimeTrace(t, y, {"noise_sigma": 0.01})).tau)
    err = np.array(taus) / 10e-12 - 1
    # empirical spread: bias and the 95th percentile of |error| within 2%
    assert abs(np.mean(err)) < 0.01
    assert np.quantile(np.abs(err), 0.95) < 0.02


def test_decay_window_too_short():
    t = np.arange(0.0, 5e-12, 1e-12)
    with pytest.raises(TraceError):
        extract_decay_time(TimeTrace(t, np.exp(-t / 1e-12)))


@pytest.mark.parametrize("tau_ef", [6e-12, 12e-12])
def test_rise_time_round_trip(passivated, tau_ef):
    laser = passivated.laser.replace(tau_ef=tau_ef)
    t = np.arange(0.0, 300e-12, 0.5e-12)
    tr = synth_trace(laser, passivated.pump, t, region="mirror")
    assert extract_rise_time(tr) == pytest.approx(tau_ef, rel=0.10)


def test_rise_step_like():
    t = np.arange(0.0, 200e-12, 1e-12)
    y = rise_decay_shape(t, 20.5e-12, 1e-16, 30e-12)
    assert extract_rise_time(TimeTrace(t, y)) <= 1e-12


def test_rise_no_rise():
    t = np.arange(0.0, 50e-12, 1e-12)
    with pytest.raises(TraceError):
        extract_rise_time(TimeTrace(t, np.exp(-t / 5e-12)))


def test_trace_validation():
    with pytest.raises(TraceError):
        TimeTrace(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    with pytest.raises(TraceError):
        TimeTrace(np.array([0.0, 1.0]), np.array([1.0, np.nan]))
