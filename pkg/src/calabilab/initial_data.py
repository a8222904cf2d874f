"""Named initial-data presets; every random preset takes an explicit seed."""

import numpy as np

from .errors import ConfigurationError, PositivityError
from .fields import TWO_PI
from .toric import SymplecticPotential, admissible_perturbation

PRESETS = ("zero", "single-mode", "random-bandlimited", "polynomial-perturbation")


def single_mode(model, k=(1, 0), eps=1e-3):
    """eps * cos(2 pi (k1 x / L1 + k2 y / L2)) on the torus."""
    x, y = model.coordinates()
    L1, L2 = model.periods
    return eps * np.cos(TWO_PI * (k[0] * x / L1 + k[1] * y / L2))


def random_bandlimited(model, seed, eps=1e-3, band=4):
    """Random Fourier series over 0 < |k| <= band (integer lattice), scaled to max |phi| = eps."""
    rng = np.random.default_rng(seed)
    x, y = model.coordinates()
    L1, L2 = model.periods
    phi = np.zeros_like(x)
    band = int(band)
    if band < 1 or band >= model.n // 2:
        raise ConfigurationError(f"band must lie in [1, {model.n // 2 - 1}], got {band}")
    for k1 in range(-band, band + 1):
        for k2 in range(0, band + 1):
            if k1 * k1 + k2 * k2 == 0 or k1 * k1 + k2 * k2 > band * band:
                continue
            if k2 == 0 and k1 < 0:
                continue
            a, b = rng.standard_normal(2)
            arg = TWO_PI * (k1 * x / L1 + k2 * y / L2)
            phi += a * np.cos(arg) + b * np.sin(arg)
    return eps * phi / np.abs(phi).max()


def initial_potential(model, preset, seed=0, eps=1e-3, k=(1, 0), band=4, degree=4, margin=0.1):
    """Nodal values of the initial potential (or perturbation f on the toric side)."""
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown initial-data preset {preset!r}")
    if model.testbed == "torus":
        if preset == "zero":
            return np.zeros((model.n, model.n))
        if preset == "single-mode":
            return single_mode(model, k, eps)
        if preset == "random-bandlimited":
            return random_bandlimited(model, seed, eps, band)
        raise ConfigurationError("polynomial-perturbation is a toric preset")
    if preset == "zero":
        return np.zeros(model.grid.shape)
    if preset == "polynomial-perturbation":
        return admissible_perturbation(model, seed, degree, margin, fraction=eps)
    raise ConfigurationError(f"{preset} is a torus preset; use polynomial-perturbation")


def initial_state(model, values, delta_pos=1e-6):
    """Build the state, turning a positivity failure at t = 0 into a configuration error."""
    from .torus import MetricState

    try:
        if model.testbed == "torus":
            return MetricState(model, values, delta_pos)
        return SymplecticPotential(model, values, delta_pos)
    except PositivityError as exc:
        raise ConfigurationError(f"initial data violates positivity: {exc}") from None
