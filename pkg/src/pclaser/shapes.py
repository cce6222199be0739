"""Closed-form pulse response shapes and Gaussian blurring."""

import math

import numpy as np
from scipy import special

from .model import FWHM_TO_SIGMA


def gaussian_exp_response(t, centre, sigma, k):
    """Unit-area Gaussian (centre, sigma) convolved with a causal exp(-k t).

    sigma = 0 gives the bare step response exp(-k (t - centre)) for t >= centre.
    """
    s = np.asarray(t, dtype=float) - centre
    if sigma == 0.0:
        with np.errstate(over="ignore"):
            return np.where(s >= 0.0, np.exp(-k * np.maximum(s, 0.0)), 0.0)
    z = (k * sigma * sigma - s) / (sigma * math.sqrt(2.0))
    # erfcx keeps exp(a) * erfc(z) finite on both tails
    with np.errstate(over="ignore", under="ignore"):
        out = np.where(
            z >= 0.0,
            0.5 * np.exp(-s * s / (2 * sigma * sigma)) * special.erfcx(np.maximum(z, 0.0)),
            0.5 * np.exp(0.5 * (k * sigma) ** 2 - k * s) * special.erfc(np.minimum(z, 0.0)))
    return out


def gaussian_kernel_convolve(t_uniform, y, fwhm):
    """Convolve uniformly sampled ``y`` with a unit-area Gaussian of given FWHM."""
    if fwhm <= 0:
        return y
    dt = t_uniform[1] - t_uniform[0]
    sigma = fwhm * FWHM_TO_SIGMA
    half = int(math.ceil(6 * sigma / dt))
    u = dt * np.arange(-half, half + 1)
    kern = np.exp(-0.5 * (u / sigma) ** 2)
    kern /= kern.sum()
    padded = np.concatenate([np.zeros(half), y, np.full(half, y[-1])])
    return np.convolve(padded, kern, mode="valid")
