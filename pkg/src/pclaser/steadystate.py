"""Steady states, lasing curves and lasing thresholds.

The steady state is parametrized by the photon density P: the photon
balance gives N_G(P) in closed form (linear gain) or by a monotone scalar
solve (logarithmic gain), and the summed carrier/photon balance

    R = N_G(P) * (F_pc/tau_r + 1/tau_pc_nr) + P/tau_p

is then inverted for P, where R is the feed rate into the lasing level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import (GainKind, LaserParams, LaserState, cw_pump_rate, gain_eval,
                    rate, rhs_eval)


class SteadyStateError(RuntimeError):
    pass


_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LasingCurve:
    l_in: np.ndarray
    l_out: np.ndarray
    n_g: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class ThresholdReport:
    l_th_numeric: float
    l_th_analytic: float
    # N_tr*V_mode*F_pc*tau_p/tau_r, N_tr*V_mode*tau_p/tau_nr, 1
    bracket_terms: tuple

    @property
    def bracket(self):
        return sum(self.bracket_terms)

    @property
    def first_term(self):
        return self.bracket_terms[0] + self.bracket_terms[1]


def feed_rate(params: LaserParams, l_in):
    """Steady-state relaxation rate into the lasing level at CW power ``l_in``."""
    return cw_pump_rate(params, l_in) * params.feed_fraction


def clamp_density(params: LaserParams):
    """Carrier density where modal gain equals cavity loss, or inf if unreachable."""
    g0 = params.gain.g0 * params.gamma_conf
    if g0 == 0.0:
        return math.inf
    loss = rate(params.tau_p)
    if params.gain.kind is GainKind.LINEAR:
        return params.n_tr * (1.0 + loss / g0)
    return params.n_tr * math.exp(loss / g0)


def carrier_at_photon_density(params: LaserParams, p):
    """Lasing-level density that holds photon density ``p`` in steady state."""
    if p <= 0.0:
        return 0.0
    gg0 = params.gamma_conf * params.gain.g0
    loss = rate(params.tau_p)
    sponta = params.f_cav * rate(params.tau_r) / p
    if params.gain.kind is GainKind.LINEAR:
        return (loss + gg0) / (gg0 / params.n_tr + sponta)

    def balance(n):
        return params.gamma_conf * gain_eval(params.gain, n, params.n_tr) + sponta * n - loss

    hi = clamp_density(params)
    if not math.isfinite(hi):
        hi = loss / sponta
    # balance(0) < 0 and balance(hi) >= 0 by construction
    return optimize.brentq(balance, 0.0, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=500)


def solve_steady_state(params: LaserParams, l_in) -> LaserState:
    """CW steady state of the rate equations on the physical branch."""
    if l_in < 0:
        raise ValueError(f"l_in must be >= 0, got {l_in}")
    if math.isinf(params.tau_p):
        raise SteadyStateError("no steady state for a loss-free cavity (tau_p = inf)")
    pump = cw_pump_rate(params, l_in)
    n_e = pump / params.pump_level_rate
    feed = n_e * rate(params.tau_ef)
    if feed == 0.0:
        return LaserState(0.0, 0.0, n_e)
    a = params.background_rate
    loss = rate(params.tau_p)

    if params.f_cav == 0.0:
        n_clamp = clamp_density(params)
        if a * n_clamp >= feed:
            return LaserState(0.0, feed / a, n_e)
        return LaserState((feed - a * n_clamp) / loss, n_clamp, n_e)

    def excess(p):
        return carrier_at_photon_density(params, p) * a + p * loss - feed

    p_hi = feed / loss
    try:
        p = optimize.brentq(excess, 0.0, p_hi, xtol=p_hi * 1e-17, rtol=4 * _EPS, maxiter=500)
    except ValueError as exc:
        raise SteadyStateError(f"steady state not bracketed at l_in={l_in!r}: {exc}") from exc
    n_g = carrier_at_photon_density(params, p)
    if params.gamma_conf * gain_eval(params.gain, n_g, params.n_tr) >= loss:
        raise SteadyStateError(f"solution left the physical branch at l_in={l_in!r}")
    return LaserState(p, n_g, n_e)


def steady_state_residual(params: LaserParams, state: LaserState, l_in):
    """Max |rhs| relative to the largest individual rate term."""
    pump = cw_pump_rate(params, l_in)
    d = rhs_eval(params, state, pump)
    stim = abs(params.gamma_conf * gain_eval(params.gain, state.n_g, params.n_tr) * state.p)
    scale = max(pump, stim, state.p * rate(params.tau_p),
                state.n_g * (params.f_cav * rate(params.tau_r) + params.background_rate),
                state.n_e * params.pump_level_rate)
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(d)) / scale)


def lasing_curve(params: LaserParams, l_in_grid) -> LasingCurve:
    grid = np.asarray(l_in_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("l_in grid must be strictly increasing with >= 2 points")
    p = np.empty_like(grid)
    n_g = np.empty_like(grid)
    for i, l_in in enumerate(grid):
        try:
            s = solve_steady_state(params, l_in)
        except SteadyStateError as exc:
            raise SteadyStateError(f"grid point {i} (l_in={l_in!r}): {exc}") from exc
        p[i], n_g[i] = s.p, s.n_g
    return LasingCurve(grid, params.output_power(p), n_g, p)


def threshold_numeric(params: LaserParams, power_range=(1e-15, 1.0), rtol=1e-6):
    """Pump power at which the mode holds one photon (P*V_mode = 1)."""
    target = 1.0 / params.v_mode

    def miss(log_l):
        p = solve_steady_state(params, math.exp(log_l)).p
        return math.log(p / target) if p > 0 else -1e3

    lo, hi = (math.log(x) for x in power_range)
    f_lo, f_hi = miss(lo), miss(hi)
    if f_lo > 0 or f_hi < 0:
        raise SteadyStateError(
            f"P*V_mode = 1 not bracketed in power range {power_range}")
    root = optimize.brentq(miss, lo, hi, xtol=rtol * 1e-2, rtol=4 * _EPS)
    return math.exp(root)


def threshold_analytic(params: LaserParams) -> ThresholdReport:
    """Closed-form threshold, neglecting pump-level radiative recombination."""
    return _analytic(params, numeric=None)


def _analytic(params, numeric):
    tau_p = params.tau_p
    nv = params.n_tr * params.v_mode
    terms = (nv * params.f_pc * tau_p * rate(params.tau_r),
             nv * tau_p * rate(params.tau_pc_nr),
             1.0)
    prefactor = (params.photon_energy / (tau_p * params.eta) * params.v_a / params.v_mode
                 * (1.0 + params.tau_ef * rate(params.tau_enr)))
    l_th = prefactor * sum(terms)
    return ThresholdReport(numeric if numeric is not None else math.nan, l_th, terms)


def threshold_report(params: LaserParams, **kwargs) -> ThresholdReport:
    """Numeric and analytic thresholds with the analytic bracket terms."""
    return _analytic(params, threshold_numeric(params, **kwargs))


def pulse_threshold_equivalent(params: LaserParams, rep_period):
    """Average pulse-train power whose per-pulse dose brings the lasing level to
    transparency plus one photon in the mode.

    This is the single-pulse counterpart of the CW threshold condition:
    N_G = N_tr and P*V_mode = 1, with the dose fed through the pump level.
    """
    dose = params.n_tr + 1.0 / params.v_mode
    energy = params.photon_energy * params.v_a * dose / (params.eta * params.feed_fraction)
    return energy / rep_period


def kink_threshold(curve: LasingCurve):
    """Two-segment linear L-I fit; returns the x-intercept of the upper segment.

    The breakpoint is chosen to minimize the total squared residual of the
    two segments, mimicking how thresholds are read off measured curves.
    """
    x, y = curve.l_in, curve.l_out
    n = x.size
    if n < 6:
        raise ValueError("kink estimator needs at least 6 curve points")
    best = None
    for k in range(3, n - 2):
        lo = np.polyfit(x[:k], y[:k], 1, full=True)
        hi = np.polyfit(x[k:], y[k:], 1, full=True)
        sse = sum(float(r[0]) if r.size else 0.0 for r in (lo[1], hi[1]))
        if best is None or sse < best[0]:
            best = (sse, hi[0])
    slope, intercept = best[1]
    return -intercept / slope


def differential_efficiency(curve: LasingCurve, threshold=None, window=(1.5, 3.0)):
    """Least-squares slope dL_out/dL_in above threshold.

    ``threshold`` defaults to the kink estimate. Points with l_in inside
    ``window`` (multiples of threshold) are used; the upper edge is open if
    the curve stops earlier.
    """
    if threshold is None:
        threshold = kink_threshold(curve)
    lo, hi = window[0] * threshold, window[1] * threshold
    mask = (curve.l_in >= lo) & (curve.l_in <= hi)
    if curve.l_in[-1] < 2.0 * threshold or np.count_nonzero(mask) < 2:
        raise ValueError(
            f"need >= 2 curve points in [{lo:.3e}, {hi:.3e}] W and a curve reaching 2x threshold")
    slope, _ = np.polyfit(curve.l_in[mask], curve.l_out[mask], 1)
    return float(slope)
