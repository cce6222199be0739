"""Lifetime decomposition, Purcell-factor and S extraction, trace fitting."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import surface
from .shapes import gaussian_exp_response, gaussian_kernel_convolve
from .dynamics import (IntegrationError, IntegratorConfig, Method, TimeTrace,
                       extract_decay_time, integrate)
from .lsq import covariance, levenberg_marquardt
from .model import (FWHM_TO_SIGMA, LaserParams, LaserState, PumpDrive, PumpKind,
                    cw_pump_rate, lasing_level_decay, rate)
from .steadystate import threshold_analytic


class ExtractionError(ValueError):
    pass


# ---------------------------------------------------------------- lifetimes


def extract_lifetimes(tau_bulk, tau_pc, f_pc):
    """(tau_r, tau_pc_nr) from bulk and photonic-crystal PL lifetimes.

    The bulk has F = 1 and negligible NR loss, so tau_r = tau_bulk; the
    NR rate in the crystal is what remains of 1/tau_pc after F_pc/tau_r.
    """
    if not (tau_bulk > 0 and tau_pc > 0):
        raise ExtractionError("lifetimes must be > 0")
    if not 0 < f_pc <= 1:
        raise ExtractionError(f"f_pc must lie in (0, 1], got {f_pc}")
    tau_r = tau_bulk
    nr_rate = 1.0 / tau_pc - f_pc / tau_r
    if abs(nr_rate) <= 1e-12 / tau_pc:
        return tau_r, math.inf
    if nr_rate < 0:
        raise ExtractionError(
            f"non-positive NR rate {nr_rate:.3e} 1/s: tau_pc is longer than the radiative "
            "limit tau_r/F_pc")
    return tau_r, 1.0 / nr_rate


def extract_fcav(tau_cav, tau_r, tau_pc_nr, f_pc):
    """Invert 1/tau_cav = (F_cav + F_pc)/tau_r + 1/tau_pc_nr for F_cav."""
    background = f_pc / tau_r + rate(tau_pc_nr)
    excess = 1.0 / tau_cav - background
    if excess < -1e-12 * background:
        raise ExtractionError(
            "cavity lifetime is not shorter than the background decay "
            f"({tau_cav:.4g} s vs {1.0 / background:.4g} s)")
    return max(tau_r * excess, 0.0)


def cavity_lifetime(f_cav, tau_r, tau_pc_nr, f_pc):
    return 1.0 / ((f_cav + f_pc) / tau_r + rate(tau_pc_nr))


@dataclass(frozen=True)
class LifetimeSet:
    """Measured PL lifetimes and the quantities derived from them."""

    tau_bulk: float
    tau_pc: float
    tau_cav: float | None = None
    tau_r: float | None = None
    tau_pc_nr: float | None = None
    f_cav: float | None = None

    def __post_init__(self):
        for name in ("tau_bulk", "tau_pc", "tau_cav"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ExtractionError(f"{name} must be > 0, got {value}")

    @property
    def populated(self):
        return self.tau_r is not None and self.tau_pc_nr is not None

    def extract(self, f_pc) -> LifetimeSet:
        tau_r, tau_pc_nr = extract_lifetimes(self.tau_bulk, self.tau_pc, f_pc)
        f_cav = None
        if self.tau_cav is not None:
            f_cav = extract_fcav(self.tau_cav, tau_r, tau_pc_nr, f_pc)
        return dataclasses.replace(self, tau_r=tau_r, tau_pc_nr=tau_pc_nr, f_cav=f_cav)


@dataclass(frozen=True)
class PassivationReport:
    s_before: float
    s_after: float
    nr_rate_reduction: float
    s_reduction: float
    threshold_before: float
    threshold_after: float
    threshold_reduction: float
    f_cav_before: float | None
    f_cav_after: float | None
    bracket_before: tuple
    bracket_after: tuple

    def as_dict(self):
        return dataclasses.asdict(self)


def passivation_report(before: LifetimeSet, after: LifetimeSet, radius,
                       laser: LaserParams) -> PassivationReport:
    """S, NR-rate and predicted threshold change between two treatments.

    ``laser`` supplies everything the threshold formula needs besides the
    lifetimes (tau_p, N_tr, V_mode, ...); tau_r and tau_pc_nr are taken
    from each lifetime set, all else is shared so the ratio isolates the
    lifetime change.
    """
    for label, ls in (("before", before), ("after", after)):
        if not ls.populated:
            raise ExtractionError(f"{label}: lifetime set is not populated; call extract() first")
    s_b = surface.s_from_tau_nr(before.tau_pc_nr, radius)
    s_a = surface.s_from_tau_nr(after.tau_pc_nr, radius)
    th_b = threshold_analytic(laser.replace(tau_r=before.tau_r, tau_pc_nr=before.tau_pc_nr))
    th_a = threshold_analytic(laser.replace(tau_r=after.tau_r, tau_pc_nr=after.tau_pc_nr))
    nr_b, nr_a = rate(before.tau_pc_nr), rate(after.tau_pc_nr)
    return PassivationReport(
        s_before=s_b,
        s_after=s_a,
        nr_rate_reduction=nr_b / nr_a if nr_a > 0 else math.inf,
        s_reduction=s_b / s_a if s_a > 0 else math.inf,
        threshold_before=th_b.l_th_analytic,
        threshold_after=th_a.l_th_analytic,
        threshold_reduction=th_b.l_th_analytic / th_a.l_th_analytic,
        f_cav_before=before.f_cav,
        f_cav_after=after.f_cav,
        bracket_before=th_b.bracket_terms,
        bracket_after=th_a.bracket_terms,
    )


# ---------------------------------------------------------------- models


def fit_integrator(params: LaserParams):
    """Tight tolerances for model evaluation; pulse doses can sit far below N_tr.

    Explicit steps are several times cheaper over trace-length windows;
    :meth:`RateModel._integrated` falls back to the stiff method on failure.
    """
    return IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10 * params.n_tr,
                            method=Method.EXPLICIT)


_RATE_FIELDS = ("tau_r", "tau_pc_nr", "tau_p", "f_cav", "f_pc", "gamma_conf",
                "tau_ef", "tau_er", "tau_enr", "n_tr")


class RateModel:
    """Rate-equation prediction of a PL or output trace for a single pulse.

    ``observable`` is "pl" (emission rate (F_cav + F_pc) N_G / tau_r) or
    "output" (cavity output power). ``region="mirror"`` drops the cavity
    channel (F_cav = 0), which is how photonic-crystal mirror PL is modelled.
    Free parameters are LaserParams field names, plus "g0" and "t_shift".

    With no cavity channel the photon density stays zero, the remaining
    two-level system is linear and driven by Gaussian pulses, and its exact
    closed-form solution is used; otherwise the equations are integrated.
    """

    def __init__(self, params: LaserParams, drive: PumpDrive, observable="pl",
                 region="cavity", cfg: IntegratorConfig | None = None):
        if observable not in ("pl", "output"):
            raise ValueError(f"unknown observable {observable!r}")
        if region not in ("cavity", "mirror"):
            raise ValueError(f"unknown region {region!r}")
        if region == "mirror":
            params = params.replace(f_cav=0.0)
        self.params = params
        self.drive = drive
        self.observable = observable
        self.region = region
        self.cfg = cfg or fit_integrator(params)

    @property
    def param_names(self):
        return _RATE_FIELDS + ("g0", "t_shift")

    def defaults(self):
        d = {name: getattr(self.params, name) for name in _RATE_FIELDS}
        d["g0"] = self.params.gain.g0
        d["t_shift"] = 0.0
        return d

    def laser(self, values) -> LaserParams:
        changes = {k: v for k, v in values.items() if k in _RATE_FIELDS}
        p = self.params.replace(**changes)
        if "g0" in values:
            p = p.replace(gain=dataclasses.replace(p.gain, g0=values["g0"]))
        if self.region == "mirror":
            p = p.replace(f_cav=0.0)
        return p

    def _weight(self, p: LaserParams):
        return (p.f_cav + p.f_pc) * rate(p.tau_r)

    def predict(self, t, values=None, irf_fwhm=0.0):
        values = {**self.defaults(), **(values or {})}
        p = self.laser(values)
        t = np.asarray(t, dtype=float) - values["t_shift"]
        if p.f_cav == 0.0 and self.observable == "pl":
            return self._linear_pl(p, t, irf_fwhm)
        return self._integrated(p, t, irf_fwhm)

    def _linear_pl(self, p: LaserParams, t, irf_fwhm):
        d = self.drive
        k_e = p.pump_level_rate
        k_g = lasing_level_decay(p)
        sigma = math.hypot(d.pulse_fwhm * FWHM_TO_SIGMA if d.kind is PumpKind.PULSE_TRAIN
                           else 0.0, irf_fwhm * FWHM_TO_SIGMA)
        dose = cw_pump_rate(p, d.power_avg) * d.rep_period  # carriers per volume per pulse
        n_g = np.zeros_like(t)
        # the integrated model starts from the dark state at t = 0
        centres = d.pulse_centres(0.0, float(t[-1])) if t.size else []
        for c in centres:
            if c < 0.0:
                continue
            e_e = gaussian_exp_response(t, c, sigma, k_e)
            if abs(k_e - k_g) > 1e-9 * k_e:
                e_g = gaussian_exp_response(t, c, sigma, k_g)
                n_g += dose * rate(p.tau_ef) * (e_g - e_e) / (k_e - k_g)
            else:
                h = 1e-7 * k_e
                e_g = gaussian_exp_response(t, c, sigma, k_e - h)
                n_g += dose * rate(p.tau_ef) * (e_g - e_e) / h
        return self._weight(p) * n_g

    def _integrated(self, p: LaserParams, t, irf_fwhm):
        pad = 6 * irf_fwhm * FWHM_TO_SIGMA
        t_end = float(t[-1]) + pad
        if t_end <= 0:
            return np.zeros_like(t)
        try:
            traj = integrate(p, self.drive, LaserState(), (0.0, t_end), self.cfg)
        except IntegrationError:
            if self.cfg.method is Method.SEMI_IMPLICIT:
                raise
            stiff = dataclasses.replace(self.cfg, method=Method.SEMI_IMPLICIT)
            traj = integrate(p, self.drive, LaserState(), (0.0, t_end), stiff)

        def obs(tt):
            s = traj(np.clip(tt, 0.0, t_end))
            y = p.output_power(s[0]) if self.observable == "output" else self._weight(p) * s[1]
            return np.where(tt >= 0.0, y, 0.0)

        if irf_fwhm <= 0:
            return obs(t)
        dt_f = min(np.min(np.diff(t)) if t.size > 1 else irf_fwhm, irf_fwhm / 20.0)
        t0 = min(float(t[0]), 0.0) - pad
        grid = t0 + dt_f * np.arange(int(math.ceil((t_end - t0) / dt_f)) + 1)
        conv = gaussian_kernel_convolve(grid, obs(grid), irf_fwhm)
        return np.interp(t, grid, conv)


class MultiExponential:
    """Sum of exponential decays started at t0, optionally fed by a rise.

    shape(t) = sum_i w_i * E(t; 1/tau_i) - rise_term, with w_1 = 1 and
    w_i = frac_i for i > 1, E the Gaussian-IRF-convolved causal exponential.
    With ``rise=True`` the population is fed through a level of lifetime
    tau_rise, giving (E(k_i) - E(k_rise)) / (k_rise - k_i) style terms.
    """

    def __init__(self, n_decay=1, rise=False):
        if n_decay < 1:
            raise ValueError("need at least one decay component")
        self.n_decay = n_decay
        self.rise = rise

    @property
    def param_names(self):
        names = ["t0"] + [f"tau_{i + 1}" for i in range(self.n_decay)]
        names += [f"frac_{i + 1}" for i in range(1, self.n_decay)]
        if self.rise:
            names.append("tau_rise")
        return tuple(names)

    def defaults(self):
        d = {"t0": 0.0}
        for i in range(self.n_decay):
            d[f"tau_{i + 1}"] = 10e-12 * 10 ** i
        for i in range(1, self.n_decay):
            d[f"frac_{i + 1}"] = 0.1
        if self.rise:
            d["tau_rise"] = 5e-12
        return d

    def predict(self, t, values=None, irf_fwhm=0.0):
        v = {**self.defaults(), **(values or {})}
        sigma = irf_fwhm * FWHM_TO_SIGMA
        out = np.zeros_like(np.asarray(t, dtype=float))
        for i in range(self.n_decay):
            w = 1.0 if i == 0 else v[f"frac_{i + 1}"]
            k = 1.0 / v[f"tau_{i + 1}"]
            term = gaussian_exp_response(t, v["t0"], sigma, k)
            if self.rise:
                k_r = 1.0 / v["tau_rise"]
                if abs(k_r - k) <= 1e-7 * k_r:
                    k_r = k * (1.0 + 1e-7)
                term = (term - gaussian_exp_response(t, v["t0"], sigma, k_r)) * k_r / (k_r - k)
            out += w * term
        return out


# ---------------------------------------------------------------- fitting


@dataclass
class FitResult:
    params_hat: dict
    residual_norm: float
    stderr: dict | None
    iterations: int
    converged: bool
    message: str = ""
    unidentifiable: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)
    cost_history: list = field(default_factory=list)

    def as_dict(self):
        return {
            "params_hat": dict(self.params_hat),
            "residual_norm": self.residual_norm,
            "stderr": None if self.stderr is None else dict(self.stderr),
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "unidentifiable": list(self.unidentifiable),
            "derived": dict(self.derived),
        }


def initial_guess(model, trace: TimeTrace, free):
    """Seed time constants from the trace: log-linear tail and 10-90% rise."""
    guess = {}
    try:
        tau_tail = extract_decay_time(trace).tau
    except (ValueError, RuntimeError):
        tau_tail = None
    y, t = trace.y, trace.t
    i_pk = int(np.argmax(y))
    lead = y[:i_pk + 1] - y[0]
    tau_rise = None
    if i_pk > 2 and lead[-1] > 0:
        i10 = int(np.argmax(lead >= 0.1 * lead[-1]))
        i90 = int(np.argmax(lead >= 0.9 * lead[-1]))
        if i90 > i10:
            tau_rise = (t[i90] - t[i10]) / 2.2
    if isinstance(model, MultiExponential):
        if tau_tail and "tau_1" in free:
            guess["tau_1"] = tau_tail
        if tau_rise and "tau_rise" in free:
            guess["tau_rise"] = tau_rise
        if "t0" in free:
            guess["t0"] = t[max(i_pk - 1, 0)] if not model.rise else t[0]
    else:
        if tau_rise and "tau_ef" in free:
            guess["tau_ef"] = tau_rise
        if tau_tail and "tau_pc_nr" in free:
            p = model.params
            tail_rate = 1.0 / tau_tail - (p.f_cav + p.f_pc) * rate(p.tau_r)
            if tail_rate > 0:
                guess["tau_pc_nr"] = 1.0 / tail_rate
    return guess


def _default_bounds(name):
    if name in ("t0", "t_shift"):
        return (-np.inf, np.inf)
    if name.startswith("frac_"):
        return (0.0, np.inf)
    if name in ("f_pc", "gamma_conf"):
        return (1e-6, 1.0)
    if name == "f_cav":
        return (0.0, np.inf)
    return (1e-3 * 1e-12 if name.startswith("tau") else 0.0, np.inf)


def fit_trace(model, trace: TimeTrace, free, init=None, bounds=None, irf_fwhm=0.0,
              max_iter=200, rel_step=1e-6) -> FitResult:
    """Damped least-squares fit of ``model`` to ``trace``.

    The prediction is amplitude * shape(t) + baseline; amplitude and
    baseline are always fitted. ``free`` names the model parameters to
    vary, others stay at the model defaults overridden by ``init``. When
    ``init`` omits a free parameter it is seeded from the trace. Residuals
    are divided by ``trace.meta['noise_sigma']`` when present.
    """
    free = tuple(free)
    unknown = [n for n in free if n not in model.param_names]
    if unknown:
        raise ValueError(f"unknown free parameter(s) {unknown}; valid: {model.param_names}")
    values = model.defaults()
    values.update(initial_guess(model, trace, free))
    values.update(init or {})
    bounds = dict(bounds or {})
    t, y = trace.t, trace.y
    sigma = trace.meta.get("noise_sigma") or 1.0

    shape0 = model.predict(t, values, irf_fwhm)
    design = np.column_stack([shape0, np.ones_like(shape0)])
    (amp0, base0), *_ = np.linalg.lstsq(design, y, rcond=None)
    if not amp0 > 0:
        amp0 = (y.max() - y.min()) / max(np.max(np.abs(shape0)), 1e-300)
    names = free + ("amplitude", "baseline")
    x0 = np.array([values[n] for n in free] + [amp0, base0], dtype=float)
    lo = np.array([bounds.get(n, _default_bounds(n))[0] for n in free] + [-np.inf, -np.inf])
    hi = np.array([bounds.get(n, _default_bounds(n))[1] for n in free] + [np.inf, np.inf])
    x0 = np.clip(x0, lo, hi)
    span = t[-1] - t[0]
    scale = np.array([abs(values[n]) if values[n] != 0 else
                      (span * 1e-3 if n in ("t0", "t_shift") else 1.0) for n in free]
                     + [abs(amp0) or 1.0, max(np.max(np.abs(y)), 1e-300)])

    def resid(x):
        v = dict(values)
        v.update(zip(free, x[:-2]))
        return (x[-2] * model.predict(t, v, irf_fwhm) + x[-1] - y) / sigma

    res = levenberg_marquardt(resid, x0, lo, hi, x_scale=scale, max_iter=max_iter,
                              rel_step=rel_step)
    params_hat = dict(zip(names, map(float, res.x)))
    stderr = None
    singular_names = []
    if res.converged:
        cov, singular = covariance(res.jac, res.cost, y.size, len(names))
        # with sigma given the residuals are already normalized
        stderr = {n: float(math.sqrt(cov[i, i])) if np.isfinite(cov[i, i]) else math.inf
                  for i, n in enumerate(names)}
        singular_names = [n for n, s in zip(names, singular) if s]
    result = FitResult(params_hat, float(math.sqrt(2.0 * res.cost) * sigma), stderr,
                       res.iterations, res.converged, res.message, singular_names,
                       cost_history=[c * sigma ** 2 for c in res.cost_history])
    if isinstance(model, RateModel):
        v = dict(values)
        v.update({n: params_hat[n] for n in free})
        p = model.laser(v)
        result.derived = {
            "tau_pc": 1.0 / lasing_level_decay(p, include_cavity=False),
            "tau_cav": 1.0 / lasing_level_decay(p),
        }
    return result


def model_curve(model, result: FitResult, t, irf_fwhm=0.0, init=None):
    """Best-fit prediction at times ``t``."""
    v = {**model.defaults(), **(init or {})}
    v.update({k: val for k, val in result.params_hat.items()
              if k not in ("amplitude", "baseline")})
    return result.params_hat["amplitude"] * model.predict(t, v, irf_fwhm) \
        + result.params_hat["baseline"]


# ---------------------------------------------------------------- synthesis


def synth_trace(params: LaserParams, drive: PumpDrive, t, sigma=0.0, seed=0, irf_fwhm=0.0,
                observable="pl", region="cavity", cfg: IntegratorConfig | None = None
                ) -> TimeTrace:
    """Simulated observable on sample times ``t`` with IRF blur and seeded noise.

    The model is always integrated numerically. ``sigma`` is the Gaussian
    noise standard deviation relative to the clean peak; the absolute value
    is stored as ``meta['noise_sigma']``.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    t = np.asarray(t, dtype=float)
    model = RateModel(params, drive, observable, region, cfg)
    clean = model._integrated(model.params, t, irf_fwhm)
    peak = float(np.max(np.abs(clean))) if clean.size else 0.0
    noise_abs = sigma * peak
    y = clean
    meta = {"observable": observable, "region": region, "irf_fwhm": irf_fwhm, "seed": seed}
    if sigma > 0:
        rng = np.random.default_rng(seed)
        y = clean + rng.normal(0.0, noise_abs, size=t.size)
        meta["noise_sigma"] = noise_abs
    return TimeTrace(t, y, meta)
