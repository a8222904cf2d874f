"""Shared test data generators."""

import numpy as np

from calabilab.toric import SymplecticPotential, admissible_perturbation


def bandlimited(model, rng, band=4, amplitude=1.0, normalize=True):
    """Random real trigonometric polynomial with integer wavevectors |k| <= band."""
    x, y = model.coordinates()
    L1, L2 = model.periods
    out = np.zeros_like(x)
    for k1 in range(-band, band + 1):
        for k2 in range(-band, band + 1):
            if k1 * k1 + k2 * k2 <= band * band:
                phase = rng.uniform(0, 2 * np.pi)
                out += rng.standard_normal() * np.cos(2 * np.pi * (k1 * x / L1 + k2 * y / L2) + phase)
    return amplitude * out / np.abs(out).max() if normalize else amplitude * out


def curved_potential(model, rng, density_drop=0.5, band=3):
    """Potential whose density h = 1 + lap(phi)/4 dips to about 1 - density_drop."""
    phi = bandlimited(model, rng, band)
    q = 0.25 * model.laplacian(phi)
    return density_drop * phi / np.abs(q).max()


def perturbed(model, seed, fraction=0.5, margin=0.1):
    return SymplecticPotential(model, admissible_perturbation(model, seed, 4, margin, fraction))


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance line; printed again in the pytest terminal summary."""
    line = f"{criterion:<4s} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return passed
