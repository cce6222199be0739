"""Unit conversions between IO units and internal SI.

User-facing quantities are given in ps, nm, uW, cm^-3, cm/s and cm^2/s.
Everything inside the library is SI. All conversions live here.
"""

import math

import scipy.constants as const

HBAR = const.hbar
H_PLANCK = const.h
C_LIGHT = const.c
K_BOLTZMANN = const.k

PS = 1e-12
NS = 1e-9
NM = 1e-9
UM = 1e-6
UW = 1e-6
UM3 = 1e-18
PER_CM3 = 1e6  # cm^-3 -> m^-3
CM_PER_S = 1e-2
CM2_PER_S = 1e-4

# (io suffix, factor to SI)
_SUFFIXES = {
    "ps": PS,
    "ns": NS,
    "nm": NM,
    "um": UM,
    "uW": UW,
    "um3": UM3,
    "cm3": PER_CM3,
    "cm_per_s": CM_PER_S,
    "cm2_per_s": CM2_PER_S,
    "per_s": 1.0,
    "K": 1.0,
}


def to_si(value, unit):
    """Convert ``value`` given in IO ``unit`` to SI."""
    return value * _SUFFIXES[unit]


def from_si(value, unit):
    """Convert SI ``value`` to IO ``unit``."""
    return value / _SUFFIXES[unit]


def photon_energy(wavelength):
    """Photon energy hbar*omega [J] for a vacuum wavelength [m]."""
    return H_PLANCK * C_LIGHT / wavelength


def angular_frequency(wavelength):
    return 2.0 * math.pi * C_LIGHT / wavelength


def ring_down_time(q_factor, wavelength):
    """Cavity photon lifetime tau_p = Q / omega."""
    return q_factor / angular_frequency(wavelength)
