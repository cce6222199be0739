"""Time-domain integration of the rate equations and trace time constants."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .lsq import levenberg_marquardt
from .shapes import gaussian_exp_response
from .model import (FWHM_TO_SIGMA, LaserParams, LaserState, PumpDrive, PumpKind,
                    gain_eval, gain_slope, pump_rate_eval, rate, rhs_eval)


class IntegrationError(RuntimeError):
    """Integration failed; ``time`` is where it happened, if known."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t = {time:.6e} s)")
        self.time = time


class StepUnderflowError(IntegrationError):
    pass


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TimeTrace:
    t: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        if t.ndim != 1 or t.shape != y.shape or t.size < 2:
            raise TraceError("t and y must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(t) <= 0):
            raise TraceError("t must be strictly increasing")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(t)):
            raise TraceError("trace contains non-finite values")

    def scaled(self, c) -> TimeTrace:
        meta = dict(self.meta)
        if meta.get("noise_sigma") is not None:
            meta["noise_sigma"] = abs(c) * meta["noise_sigma"]
        return TimeTrace(self.t, c * self.y, meta)


class Method(str, enum.Enum):
    EXPLICIT = "explicit-adaptive"
    SEMI_IMPLICIT = "semi-implicit"


_SCIPY_METHOD = {Method.EXPLICIT: "DOP853", Method.SEMI_IMPLICIT: "Radau"}


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances for :func:`integrate`.

    ``abs_tol`` is in density units and applies to the carrier densities;
    the photon density uses ``abs_tol / (n_tr * v_mode)`` photons-equivalent,
    i.e. the same fraction of one photon as abs_tol is of N_tr. ``None``
    means 1e-3 * N_tr.
    """

    rel_tol: float = 1e-8
    abs_tol: float | None = None
    max_step: float = math.inf
    method: Method = Method.SEMI_IMPLICIT

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.rel_tol > 0 or (self.abs_tol is not None and not self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")
        if not self.max_step > 0:
            raise ValueError("max_step must be > 0")

    def abs_tol_vector(self, params: LaserParams):
        atol_n = 1e-3 * params.n_tr if self.abs_tol is None else self.abs_tol
        atol_p = atol_n / (params.n_tr * params.v_mode)
        return np.array([atol_p, atol_n, atol_n])


def jacobian(params: LaserParams, y):
    p, n_g, _ = y
    gg = params.gamma_conf * gain_eval(params.gain, n_g, params.n_tr)
    dgg = params.gamma_conf * gain_slope(params.gain, n_g, params.n_tr)
    inv_r = rate(params.tau_r)
    k_g = (params.f_cav + params.f_pc) * inv_r + rate(params.tau_pc_nr)
    return np.array([
        [gg - rate(params.tau_p), dgg * p + params.f_cav * inv_r, 0.0],
        [-gg, -k_g - dgg * p, rate(params.tau_ef)],
        [0.0, 0.0, -params.pump_level_rate],
    ])


class Trajectory:
    """Piecewise dense solution; call with time(s) to get states (3, ...)."""

    def __init__(self, t, y, pieces):
        self.t = t  # accepted step times
        self.y = y  # states at accepted steps, shape (3, n)
        self._pieces = pieces  # list of (t0, t1, OdeSolution)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((3, t.size))
        edges = np.array([pc[1] for pc in self._pieces])
        idx = np.minimum(np.searchsorted(edges, t, side="left"), len(self._pieces) - 1)
        for k in np.unique(idx):
            sel = idx == k
            out[:, sel] = self._pieces[k][2](t[sel])
        np.maximum(out, 0.0, out=out)
        return out[:, 0] if scalar else out

    @property
    def final_state(self) -> LaserState:
        return LaserState.from_array(np.maximum(self.y[:, -1], 0.0))


def _breakpoints(drive: PumpDrive, t0, t1):
    """Segment boundaries isolating each pulse (+-6 sigma) from the quiet gaps."""
    if drive.kind is PumpKind.CW or drive.power_avg == 0.0:
        return [(t0, t1, False)]
    reach = 6.0 * drive.pulse_fwhm * FWHM_TO_SIGMA
    segs = []
    cursor = t0
    for c in drive.pulse_centres(t0, t1):
        a, b = max(c - reach, t0), min(c + reach, t1)
        if a > cursor:
            segs.append((cursor, a, False))
        if b > max(a, cursor):
            segs.append((max(a, cursor), b, True))
        cursor = max(cursor, b)
    if cursor < t1:
        segs.append((cursor, t1, False))
    return segs


def integrate(params: LaserParams, drive: PumpDrive, s0: LaserState, t_span,
              cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the rate equations over ``t_span`` from state ``s0``.

    Pulses are integrated as separate segments with the step limited to a
    fifth of the pulse FWHM, so the adaptive controller cannot step over them.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ValueError(f"invalid t_span {t_span!r}")
    atol = cfg.abs_tol_vector(params)
    method = _SCIPY_METHOD[cfg.method]

    def fun(t, y):
        return rhs_eval(params, y, pump_rate_eval(params, drive, t))

    def jac(t, y):
        return jacobian(params, y)

    y = s0.as_array()
    ts, ys, pieces = [np.array([t0])], [y[:, None]], []
    for a, b, in_pulse in _breakpoints(drive, t0, t1):
        max_step = cfg.max_step
        if in_pulse:
            max_step = min(max_step, drive.pulse_fwhm / 5.0)
        kwargs = {"jac": jac} if method == "Radau" else {}
        sol = solve_ivp(fun, (a, b), y, method=method, rtol=cfg.rel_tol, atol=atol,
                        max_step=max_step, dense_output=True, **kwargs)
        if sol.status != 0:
            t_fail = float(sol.t[-1]) if sol.t.size else a
            if "step size" in sol.message.lower():
                raise StepUnderflowError(f"step-size underflow: {sol.message}", t_fail)
            raise IntegrationError(sol.message, t_fail)
        bad = ~np.all(np.isfinite(sol.y), axis=0)
        if np.any(bad):
            raise IntegrationError("non-finite state", float(sol.t[np.argmax(bad)]))
        low = sol.y < -atol[:, None]
        if np.any(low):
            col = int(np.argmax(np.any(low, axis=0)))
            raise IntegrationError(
                f"negative state {sol.y[:, col]} beyond abs_tol", float(sol.t[col]))
        y = np.maximum(sol.y[:, -1], 0.0)
        ts.append(sol.t[1:])
        ys.append(np.maximum(sol.y[:, 1:], 0.0))
        pieces.append((a, b, sol.sol))
    return Trajectory(np.concatenate(ts), np.concatenate(ys, axis=1), pieces)


class PeriodicConvergenceError(RuntimeError):
    pass


def _pulse_peak(params, traj, centre, drive, t_stop):
    t = np.linspace(centre - 3 * drive.pulse_fwhm, min(t_stop, centre + 200 * drive.pulse_fwhm),
                    4001)
    return float(np.max(params.output_power(traj(t)[0])))


def simulate_pulse_response(params: LaserParams, drive: PumpDrive,
                            cfg: IntegratorConfig | None = None, *, warmup=3,
                            max_periods=30, periods=1, dt=None, record=None,
                            rtol_periodic=1e-3) -> TimeTrace:
    """Output power L_out(t) in the periodic steady state of a pulse train.

    At least ``warmup`` periods are integrated, continuing until the pulse
    peak changes by less than ``rtol_periodic`` between periods. Then
    ``periods`` periods are sampled every ``dt`` (default FWHM/10); ``record``
    truncates the sampled window (seconds from the start of the period).
    """
    if drive.kind is not PumpKind.PULSE_TRAIN:
        raise ValueError("simulate_pulse_response needs a pulse-train drive")
    cfg = cfg or IntegratorConfig()
    period = drive.rep_period
    dt = drive.pulse_fwhm / 10.0 if dt is None else dt
    span = periods * period if record is None else min(record, periods * period)
    n = int(math.floor(span / dt + 1e-9)) + 1
    t_rel = dt * np.arange(n)
    if drive.power_avg == 0.0:
        return TimeTrace(t_rel, np.zeros(n), {"periods_warmup": 0})

    state = LaserState()
    peaks = []
    k = 0
    while True:
        t_a = k * period
        traj = integrate(params, drive, state, (t_a, t_a + period), cfg)
        peaks.append(_pulse_peak(params, traj, t_a + drive.pulse_delay, drive, t_a + period))
        state = traj.final_state
        k += 1
        if k >= warmup and len(peaks) >= 2 and \
                abs(peaks[-1] - peaks[-2]) <= rtol_periodic * abs(peaks[-2]):
            break
        if k >= max_periods:
            raise PeriodicConvergenceError(
                f"no periodic steady state after {max_periods} periods; last peaks {peaks[-2:]}")
    t_a = k * period
    traj = integrate(params, drive, state, (t_a, t_a + periods * period), cfg)
    y = params.output_power(traj(t_a + t_rel)[0])
    return TimeTrace(t_rel, y, {"periods_warmup": k, "peak_history": peaks})


@dataclass(frozen=True)
class DecayFit:
    tau: float
    amplitude: float
    residual: float  # rms of weighted log residuals
    t_start: float
    t_stop: float
    n_points: int
    monotone: bool


def noise_sigma(trace: TimeTrace):
    """Noise level from metadata, else a robust estimate from point-to-point scatter."""
    sigma = trace.meta.get("noise_sigma")
    if sigma is not None:
        return float(sigma)
    tail = trace.y[-max(trace.y.size // 10, 8):]
    d = np.diff(tail)
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0))


def extract_decay_time(trace: TimeTrace, t_offset=None, floor_factor=3.0, floor=None,
                       min_points=5) -> DecayFit:
    """Single-exponential time constant of the trailing edge.

    The window starts ``t_offset`` after the global maximum (default one
    sample) and ends before the first sample below ``floor_factor`` times
    the noise floor. The fit is log-linear, weighted by intensity so that
    each point counts according to its relative noise.
    """
    t, y = trace.t, trace.y
    i_pk = int(np.argmax(y))
    if floor is None:
        floor = floor_factor * noise_sigma(trace)
    floor = max(floor, 0.0)
    if t_offset is None:
        i0 = i_pk + 1
    else:
        i0 = int(np.searchsorted(t, t[i_pk] + t_offset))
    below = np.nonzero(y[i0:] <= floor)[0]
    i1 = i0 + (below[0] if below.size else y.size - i0)
    if i1 - i0 < min_points:
        raise TraceError(f"decay window has {i1 - i0} samples, need >= {min_points}")
    tw, yw = t[i0:i1], y[i0:i1]
    coef = np.polyfit(tw - tw[0], np.log(yw), 1, w=yw)
    if coef[0] >= 0:
        raise TraceError("tail is not decaying")
    resid = (np.log(yw) - np.polyval(coef, tw - tw[0])) * yw / yw.max()
    rise = np.diff(yw) > max(floor, 1e-12 * yw.max())
    monotone = not np.any(rise)
    if not monotone and np.count_nonzero(rise) > 0.25 * rise.size:
        warnings.warn("decay tail is non-monotone beyond tolerance", RuntimeWarning)
    return DecayFit(-1.0 / coef[0], math.exp(coef[1]), float(np.sqrt(np.mean(resid ** 2))),
                    float(tw[0]), float(tw[-1]), int(tw.size), monotone)


def rise_decay_shape(t, t0, tau_rise, tau_decay, sigma=0.0):
    """Population fed through a level of lifetime tau_rise and decaying with tau_decay.

    Proportional to exp(-s/tau_decay) - exp(-s/tau_rise), s = t - t0, blurred
    by a Gaussian excitation of standard deviation ``sigma``.
    """
    k_d, k_r = 1.0 / tau_decay, 1.0 / tau_rise
    if abs(k_r - k_d) <= 1e-7 * k_r:
        k_r = k_d * (1.0 + 1e-7)
    return (gaussian_exp_response(t, t0, sigma, k_d)
            - gaussian_exp_response(t, t0, sigma, k_r)) * k_r / (k_r - k_d)


def extract_rise_time(trace: TimeTrace, pulse_fwhm=None, tail_fraction=0.3) -> float:
    """Rise constant of a feeding-limited leading edge.

    The trace up to the point where it has fallen to ``tail_fraction`` of the
    peak is fitted with the fed-population shape of :func:`rise_decay_shape`
    plus a baseline. The excitation width is fixed to ``pulse_fwhm`` when
    given and fitted otherwise. The 10-90% rise time seeds the fit. A rise
    faster than the sampling is reported as (at most) one sample spacing.
    """
    t, y = trace.t, trace.y
    i_pk = int(np.argmax(y))
    if i_pk == 0:
        raise TraceError("no discernible rise: peak at first sample")
    dt = float(np.min(np.diff(t)))
    peak = float(y[i_pk])
    base = float(np.median(y[:max(i_pk // 4, 1)])) if i_pk >= 4 else float(y[0])
    lead = y[:i_pk + 1] - base
    i10 = int(np.argmax(lead >= 0.1 * (peak - base)))
    i90 = int(np.argmax(lead >= 0.9 * (peak - base)))
    if i90 - i10 <= 1:
        return min(dt, max(t[i90] - t[i10], 0.0)) if i90 > i10 else dt
    after = np.nonzero(y[i_pk:] - base <= tail_fraction * (peak - base))[0]
    i_end = i_pk + (after[0] if after.size else y.size - 1 - i_pk)
    i_end = max(i_end, min(i_pk + 5, y.size - 1))
    tw, yw = t[:i_end + 1], y[:i_end + 1]
    try:
        tau_d0 = extract_decay_time(TimeTrace(t[i_pk:], y[i_pk:] - base)).tau
    except (TraceError, ValueError):
        tau_d0 = 5.0 * (t[i_end] - t[i_pk] + dt)
    tau_r0 = min(max((t[i90] - t[i10]) / 2.2, dt), 0.5 * tau_d0)
    span = float(t[-1] - t[0])
    fit_sigma = pulse_fwhm is None
    sigma_fixed = 0.0 if fit_sigma else pulse_fwhm * FWHM_TO_SIGMA

    def unpack(x):
        return x[0], x[1], x[2], x[3], x[4], (x[5] if fit_sigma else sigma_fixed)

    def resid(x):
        a, t0, tr, td, b, sg = unpack(x)
        return (a * rise_decay_shape(tw, t0, tr, td, sg) + b - yw) / peak

    x0 = [1.0, t[i10] - 0.5 * tau_r0, tau_r0, tau_d0, base]
    lo = [0.0, t[0] - span, 1e-3 * dt, dt, -np.inf]
    hi = [np.inf, t[i90], span, 100 * span, np.inf]
    scale = [1.0, dt, dt, dt, max(abs(peak), 1e-300)]
    if fit_sigma:
        x0.append(0.5 * dt)
        lo.append(0.0)
        hi.append(span)
        scale.append(dt)
    x0 = np.clip(x0, lo, hi)
    shape0 = rise_decay_shape(tw, x0[1], x0[2], x0[3], x0[5] if fit_sigma else sigma_fixed)
    x0[0] = (peak - base) / max(float(shape0.max()), 1e-300)
    scale[0] = x0[0]
    fit = levenberg_marquardt(resid, x0, lo, hi, x_scale=scale)
    tau_rise, tau_decay = float(fit.x[2]), float(fit.x[3])
    # the shape is symmetric in the two constants; the faster one is the rise
    tau_rise = min(tau_rise, tau_decay)
    return tau_rise if tau_rise > 1e-2 * dt else min(tau_rise, dt)
