import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from pclaser import units
from pclaser.model import ParameterError
from pclaser.surface import (J0_FIRST_ZERO, SurfaceParams, diffusion_length, mesa_eigenrate,
                             mesa_root, s_from_tau_nr, s_temperature_scale, tau_nr_from_s,
                             total_pc_decay)

CM_S = units.CM_PER_S
D20 = 20.0 * units.CM2_PER_S


def test_tau_from_s_examples():
    assert tau_nr_from_s(1.7e5 * CM_S, 120.7e-9) == pytest.approx(35.5e-12, rel=5e-3)
    assert tau_nr_from_s(4.0e4 * CM_S, 120e-9) == pytest.approx(149e-12, rel=0.02)
    assert tau_nr_from_s(0.0, 120e-9) == math.inf
    assert s_from_tau_nr(math.inf, 120e-9) == 0.0


def test_consistent_radius():
    # the radius that joins both measured (S, tau) pairs of the untreated sample
    r = 2 * 1.7e5 * CM_S * 35.5e-12
    assert r == pytest.approx(120.7e-9, rel=1e-3)


@given(s=st.floats(1.0, 1e5), r=st.floats(10e-9, 150e-9))
def test_s_tau_round_trip(s, r):
    assert s_from_tau_nr(tau_nr_from_s(s, r), r) == pytest.approx(s, rel=1e-15)


def test_total_pc_decay():
    sp = SurfaceParams(s_vel=1.7e5 * CM_S, radius=120.7e-9, tau_r=654e-12, f_pc=0.2)
    assert 1 / total_pc_decay(sp) == pytest.approx(35.1e-12, rel=5e-3)
    assert 1 / total_pc_decay(sp) == pytest.approx(33.8e-12, rel=0.05)
    assert total_pc_decay(SurfaceParams(s_vel=0.0)) == 0.2 / 654e-12
    assert total_pc_decay(sp) == pytest.approx(
        sp.f_pc / sp.tau_r + 1 / tau_nr_from_s(sp.s_vel, sp.radius), rel=1e-15)


@pytest.mark.parametrize("x", np.linspace(0.0, 50.0, 26))
def test_bessel_accuracy(x):
    # integral representation J_n(x) = 1/pi * int_0^pi cos(n*t - x*sin t) dt
    for n, fn in ((0, special.j0), (1, special.j1)):
        ref, _ = integrate.quad(lambda t: math.cos(n * t - x * math.sin(t)), 0, math.pi,
                                epsabs=1e-13, epsrel=0, limit=400)
        assert abs(fn(x) - ref / math.pi) < 1e-10


def test_mesa_reflecting_boundary():
    sp = SurfaceParams(s_vel=0.0)
    assert mesa_root(0.0, D20, 120e-9) == 0.0
    assert mesa_eigenrate(sp) == sp.f_pc / sp.tau_r


@pytest.mark.parametrize("h", [0.1, 0.03, 0.01])
def test_mesa_small_h_matches_closed_form(h):
    r = 120e-9
    s = h * D20 / r
    sp = SurfaceParams(d_amb=D20, s_vel=s, radius=r)
    surface_part = mesa_eigenrate(sp) - sp.f_pc / sp.tau_r
    assert surface_part == pytest.approx(2 * s / r, rel=0.03)


def test_mesa_example_point():
    sp = SurfaceParams(d_amb=D20, s_vel=1.7e5 * CM_S, radius=120e-9)
    assert sp.s_vel * sp.radius / sp.d_amb == pytest.approx(0.1, rel=0.03)
    surface_part = mesa_eigenrate(sp) - sp.f_pc / sp.tau_r
    assert surface_part == pytest.approx(2 * sp.s_vel / sp.radius, rel=0.03)


def test_mesa_root_is_root():
    x = mesa_root(1.7e5 * CM_S, D20, 120e-9)
    h = 1.7e5 * CM_S * 120e-9 / D20
    assert x * special.j1(x) == pytest.approx(h * special.j0(x), rel=1e-10)


def test_mesa_absorbing_limit():
    r = 120e-9
    assert mesa_root(math.inf, D20, r) == J0_FIRST_ZERO
    x = mesa_root(1e12, D20, r)
    assert x == pytest.approx(2.40483, rel=1e-5)
    sp = SurfaceParams(d_amb=D20, s_vel=1e12, radius=r)
    assert mesa_eigenrate(sp) == pytest.approx(
        D20 * (2.40483 / r) ** 2 + sp.f_pc / sp.tau_r, rel=1e-5)


def test_fast_diffusion_limit():
    r, s = 120e-9, 1.7e5 * CM_S
    d = s * r / 5e-4
    sp = SurfaceParams(d_amb=d, s_vel=s, radius=r)
    assert mesa_eigenrate(sp) == pytest.approx(total_pc_decay(sp), rel=1e-3)


def test_mesa_monotone():
    s_vals = np.logspace(0, 4, 12)
    rates = [mesa_eigenrate(SurfaceParams(s_vel=s)) for s in s_vals]
    assert np.all(np.diff(rates) > 0)
    radii = np.linspace(40e-9, 150e-9, 12)
    rates = [mesa_eigenrate(SurfaceParams(radius=r)) for r in radii]
    assert np.all(np.diff(rates) < 0)


def test_temperature_scaling():
    assert s_temperature_scale(1.0, 10.0, 300.0) == pytest.approx(math.sqrt(30), rel=1e-15)
    assert s_temperature_scale(3.0, 50.0, 50.0) == 3.0
    s300 = s_temperature_scale(1.7e5, 10.0, 300.0)
    assert s300 == pytest.approx(9.3e5, rel=0.01)
    assert 1e5 < s300 < 5e6


def test_diffusion_length_exceeds_cavity():
    # ~3 um for D = 20 cm^2/s and a few ns; longer than the ~1 um cavity region
    assert diffusion_length(D20, 5e-9) > 1e-6
    assert diffusion_length(D20, 654e-12) > 315e-9


@pytest.mark.parametrize("field,value", [("radius", 200e-9), ("d_amb", 0.0),
                                         ("s_vel", -1.0), ("temperature", 0.0)])
def test_invalid_surface_params(field, value):
    with pytest.raises(ParameterError):
        SurfaceParams(**{field: value})
