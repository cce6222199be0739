"""Nonradiative surface recombination from carrier diffusion.

Carriers diffuse with ambipolar diffusivity D, decay radiatively at
F_pc/tau_r, and recombine at exposed sidewalls through the Robin condition
D dN/dr + S N = 0. Replacing the photonic-crystal holes by mesas of the hole
radius conserves the exposed area; in the fast-diffusion limit the surface
loss of a mesa is 2S/r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import optimize, special

from . import units
from .model import ParameterError

J0_FIRST_ZERO = 2.404825557695773


@dataclass(frozen=True)
class SurfaceParams:
    d_amb: float = 20.0 * units.CM2_PER_S
    s_vel: float = 1.7e5 * units.CM_PER_S
    radius: float = 120e-9
    lattice_a: float = 315e-9
    f_pc: float = 0.2
    tau_r: float = 654e-12
    temperature: float = 10.0
    m_eff_ratio: float = 0.067

    def __post_init__(self):
        for name in ("d_amb", "radius", "lattice_a", "tau_r", "temperature", "m_eff_ratio"):
            value = getattr(self, name)
            if not value > 0:
                raise ParameterError(name, f"must be > 0, got {value}")
        # S = 0 switches surface recombination off
        if not self.s_vel >= 0:
            raise ParameterError("s_vel", f"must be >= 0, got {self.s_vel}")
        if not 0 <= self.f_pc <= 1:
            raise ParameterError("f_pc", f"must lie in [0, 1], got {self.f_pc}")
        if not self.radius < self.lattice_a / 2:
            raise ParameterError("radius", "hole radius must be below half the lattice constant")


def tau_nr_from_s(s_vel, radius):
    """Mesa nonradiative lifetime r/(2S); inf when S = 0."""
    if s_vel < 0 or radius <= 0:
        raise ValueError("need s_vel >= 0 and radius > 0")
    return math.inf if s_vel == 0 else radius / (2.0 * s_vel)


def s_from_tau_nr(tau_nr, radius):
    """Surface recombination velocity r/(2*tau_nr); 0 for an infinite lifetime."""
    if tau_nr <= 0 or radius <= 0:
        raise ValueError("need tau_nr > 0 and radius > 0")
    return 0.0 if math.isinf(tau_nr) else radius / (2.0 * tau_nr)


def total_pc_decay(surface: SurfaceParams):
    """1/tau_pc = F_pc/tau_r + 2S/r."""
    return surface.f_pc / surface.tau_r + 2.0 * surface.s_vel / surface.radius


def mesa_root(s_vel, d_amb, radius, xtol=1e-10):
    """Smallest x = kR > 0 with x*J1(x) = (S*R/D)*J0(x); 0 for S = 0."""
    h = s_vel * radius / d_amb
    if h == 0.0:
        return 0.0
    if math.isinf(h):
        return J0_FIRST_ZERO

    def f(x):
        return x * special.j1(x) - h * special.j0(x)

    # f(0) = -h < 0 and f(first zero of J0) = x*J1(x) > 0
    try:
        return optimize.brentq(f, 0.0, J0_FIRST_ZERO, xtol=1e-300, rtol=xtol)
    except ValueError as exc:
        raise ValueError(f"mesa eigenvalue not bracketed for S*R/D = {h}") from exc


def mesa_eigenrate(surface: SurfaceParams):
    """Slowest decay rate D*k^2 + F_pc/tau_r of a diffusing disk of the hole radius."""
    x = mesa_root(surface.s_vel, surface.d_amb, surface.radius)
    return surface.d_amb * (x / surface.radius) ** 2 + surface.f_pc / surface.tau_r


def s_temperature_scale(s_ref, t_ref, t_new):
    """Rescale S with the thermal velocity sqrt(3kT/m*)."""
    if t_ref <= 0 or t_new <= 0:
        raise ValueError("temperatures must be > 0")
    return s_ref * math.sqrt(t_new / t_ref)


def thermal_velocity(temperature, m_eff_ratio):
    return math.sqrt(3.0 * units.K_BOLTZMANN * temperature / (m_eff_ratio * units.const.m_e))


def diffusion_length(d_amb, tau):
    return math.sqrt(d_amb * tau)
