"""Physical types and the three-level rate equations.

State variables are densities over a common reference volume:

    dP/dt   = G_conf*G(N_G)*P + F_cav*N_G/tau_r - P/tau_p
    dN_G/dt = N_E/tau_ef - N_G*((F_cav + F_pc)/tau_r + 1/tau_pc_nr) - G_conf*G(N_G)*P
    dN_E/dt = pump - N_E*(1/tau_er + 1/tau_enr + 1/tau_ef)

with ``pump = eta*L_in/(hbar*omega_p*V_a)``.  A photon number is P*V_mode.
Lifetimes may be ``math.inf`` to switch a channel off.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import units


class ParameterError(ValueError):
    """A physical parameter violates its invariant."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name


def rate(tau):
    """1/tau with an infinite lifetime meaning a disabled channel."""
    return 0.0 if math.isinf(tau) else 1.0 / tau


class GainKind(str, enum.Enum):
    LINEAR = "linear"
    LOGARITHMIC = "logarithmic"


@dataclass(frozen=True)
class GainModel:
    """Modal gain rate G(N) in s^-1; vanishes at transparency for both kinds."""

    kind: GainKind = GainKind.LINEAR
    g0: float = 5e12
    n_floor: float = 1e20

    def __post_init__(self):
        object.__setattr__(self, "kind", GainKind(self.kind))
        if not self.g0 >= 0 or math.isinf(self.g0):
            raise ParameterError("g0", f"must be finite and >= 0, got {self.g0}")
        if not self.n_floor > 0:
            raise ParameterError("n_floor", f"must be > 0, got {self.n_floor}")


def gain_eval(gain: GainModel, n, n_tr):
    """Gain rate at carrier density ``n``; exactly zero at ``n == n_tr``."""
    if gain.kind is GainKind.LINEAR:
        return gain.g0 * (n / n_tr - 1.0)
    return gain.g0 * np.log(np.maximum(n, gain.n_floor) / n_tr)


def gain_slope(gain: GainModel, n, n_tr):
    """dG/dN."""
    if gain.kind is GainKind.LINEAR:
        return gain.g0 / n_tr
    return gain.g0 / n if n > gain.n_floor else 0.0


@dataclass(frozen=True)
class LaserParams:
    """Parameter set of the rate equations, SI units."""

    tau_r: float
    tau_pc_nr: float
    tau_p: float
    f_cav: float
    f_pc: float
    gamma_conf: float
    eta: float
    tau_ef: float
    tau_er: float
    tau_enr: float
    v_a: float
    v_mode: float
    lambda_cav: float
    n_tr: float
    gain: GainModel = field(default_factory=GainModel)

    def __post_init__(self):
        for name in ("tau_r", "tau_pc_nr", "tau_p", "tau_ef", "tau_er", "tau_enr",
                     "v_a", "v_mode", "lambda_cav", "n_tr"):
            value = getattr(self, name)
            if not value > 0 or math.isnan(value):
                raise ParameterError(name, f"must be > 0, got {value}")
        for name in ("v_a", "v_mode", "lambda_cav", "n_tr"):
            if math.isinf(getattr(self, name)):
                raise ParameterError(name, "must be finite")
        # f_pc = 0 is accepted for loss-free test configurations
        if not 0 <= self.f_pc <= 1:
            raise ParameterError("f_pc", f"must lie in [0, 1], got {self.f_pc}")
        for name in ("gamma_conf", "eta"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ParameterError(name, f"must lie in (0, 1], got {value}")
        if not self.f_cav >= 0 or math.isinf(self.f_cav):
            raise ParameterError("f_cav", f"must be finite and >= 0, got {self.f_cav}")

    def replace(self, **changes) -> LaserParams:
        return dataclasses.replace(self, **changes)

    @property
    def photon_energy(self):
        return units.photon_energy(self.lambda_cav)

    @property
    def pump_level_rate(self):
        """Total depopulation rate of the pump level."""
        return rate(self.tau_er) + rate(self.tau_enr) + rate(self.tau_ef)

    @property
    def feed_fraction(self):
        """Fraction of pump-level carriers that relax into the lasing level."""
        return rate(self.tau_ef) / self.pump_level_rate

    @property
    def background_rate(self):
        """Lasing-level loss rate excluding the cavity channel: F_pc/tau_r + 1/tau_pc_nr."""
        return self.f_pc * rate(self.tau_r) + rate(self.tau_pc_nr)

    def output_power(self, p):
        """Cavity output power for photon density ``p``."""
        return self.photon_energy * self.v_mode * p * rate(self.tau_p)


@dataclass(frozen=True)
class LaserState:
    p: float = 0.0
    n_g: float = 0.0
    n_e: float = 0.0

    def __post_init__(self):
        for name in ("p", "n_g", "n_e"):
            value = getattr(self, name)
            if not value >= 0 or math.isinf(value):
                raise ParameterError(name, f"state must be finite and >= 0, got {value}")

    def as_array(self):
        return np.array([self.p, self.n_g, self.n_e])

    @classmethod
    def from_array(cls, y) -> LaserState:
        return cls(float(y[0]), float(y[1]), float(y[2]))


class PumpKind(str, enum.Enum):
    CW = "cw"
    PULSE_TRAIN = "pulse"


FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class PumpDrive:
    """CW or Gaussian pulse-train excitation.

    ``power_avg`` is the time-averaged incident power. Pulses are centred at
    ``pulse_delay + k*rep_period``; the delay defaults to three FWHM so the
    first pulse starts from zero at t = 0.
    """

    kind: PumpKind = PumpKind.CW
    power_avg: float = 0.0
    pulse_fwhm: float = 3.5e-12
    rep_period: float = 13e-9
    pulse_delay: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PumpKind(self.kind))
        if not self.power_avg >= 0 or math.isinf(self.power_avg):
            raise ParameterError("power_avg", f"must be finite and >= 0, got {self.power_avg}")
        if self.kind is PumpKind.PULSE_TRAIN:
            if not 0 < self.pulse_fwhm < self.rep_period:
                raise ParameterError(
                    "pulse_fwhm", "need 0 < pulse_fwhm < rep_period for a pulse train")
        if self.pulse_delay is None:
            object.__setattr__(self, "pulse_delay", 3.0 * self.pulse_fwhm)

    @classmethod
    def cw(cls, power) -> PumpDrive:
        return cls(PumpKind.CW, power)

    @classmethod
    def pulse_train(cls, power_avg, pulse_fwhm=3.5e-12, rep_period=13e-9,
                    pulse_delay=None) -> PumpDrive:
        return cls(PumpKind.PULSE_TRAIN, power_avg, pulse_fwhm, rep_period, pulse_delay)

    def replace(self, **changes) -> PumpDrive:
        return dataclasses.replace(self, **changes)

    def pulse_centres(self, t_start, t_stop):
        """Pulse centre times whose +-6 sigma window overlaps [t_start, t_stop]."""
        if self.kind is PumpKind.CW:
            return np.empty(0)
        reach = 6.0 * self.pulse_fwhm * FWHM_TO_SIGMA
        k0 = math.floor((t_start - reach - self.pulse_delay) / self.rep_period)
        k1 = math.ceil((t_stop + reach - self.pulse_delay) / self.rep_period)
        centres = self.pulse_delay + self.rep_period * np.arange(k0, k1 + 1)
        return centres[(centres + reach >= t_start) & (centres - reach <= t_stop)]


def cw_pump_rate(params: LaserParams, power):
    """eta*L/(hbar*omega_p*V_a), the pump-level generation rate density."""
    return params.eta * power / (params.photon_energy * params.v_a)


def pump_rate_eval(params: LaserParams, drive: PumpDrive, t):
    """Pump-level generation rate [m^-3 s^-1] at time(s) ``t``.

    A pulse train is a periodic sum of normalized Gaussians scaled so its
    time average equals the CW rate at the same average power.
    """
    mean = cw_pump_rate(params, drive.power_avg)
    if drive.kind is PumpKind.CW or mean == 0.0:
        return mean if np.ndim(t) == 0 else np.full(np.shape(t), mean)
    sigma = drive.pulse_fwhm * FWHM_TO_SIGMA
    period = drive.rep_period
    t = np.asarray(t, dtype=float)
    # phase of t relative to the nearest pulse centre
    phase = np.mod(t - drive.pulse_delay + 0.5 * period, period) - 0.5 * period
    n_img = int(math.ceil(8.0 * sigma / period))
    total = np.zeros_like(phase)
    for k in range(-n_img, n_img + 1):
        u = (phase - k * period) / sigma
        total += np.exp(-0.5 * u * u)
    value = mean * period * total / (sigma * math.sqrt(2.0 * math.pi))
    return float(value) if value.ndim == 0 else value


def rhs_eval(params: LaserParams, state, pump_rate):
    """Time derivatives (dP/dt, dN_G/dt, dN_E/dt).

    ``state`` is a :class:`LaserState` or a length-3 sequence (P, N_G, N_E).
    Returns a numpy array of the three derivatives.
    """
    if isinstance(state, LaserState):
        p, n_g, n_e = state.p, state.n_g, state.n_e
    else:
        p, n_g, n_e = state
    stim = params.gamma_conf * gain_eval(params.gain, n_g, params.n_tr) * p
    inv_tau_r = rate(params.tau_r)
    relax = n_e * rate(params.tau_ef)
    dp = stim + params.f_cav * n_g * inv_tau_r - p * rate(params.tau_p)
    dn_g = relax - n_g * ((params.f_cav + params.f_pc) * inv_tau_r
                          + rate(params.tau_pc_nr)) - stim
    dn_e = pump_rate - n_e * params.pump_level_rate
    return np.array([dp, dn_g, dn_e])


def lasing_level_decay(params: LaserParams, include_cavity=True):
    """1/tau_G = (F_cav + F_pc)/tau_r + 1/tau_pc_nr.

    With ``include_cavity=False`` the cavity channel is dropped, which is the
    decay of carriers in the photonic-crystal mirrors.
    """
    f_cav = params.f_cav if include_cavity else 0.0
    return (f_cav + params.f_pc) * rate(params.tau_r) + rate(params.tau_pc_nr)
