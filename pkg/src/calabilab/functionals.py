"""Energies, Futaki-type invariants and path-length bounds on both testbeds.

States are :class:`~calabilab.torus.MetricState` (torus) or
:class:`~calabilab.toric.SymplecticPotential` (toric).  Both expose ``S``,
``volume_weights`` and ``residual(theta)``, which is all the energies need.

On the toric side the extremal affine function returned by
:func:`~calabilab.toric.extremal_affine_function` already contains the
average Sbar, so ``S - theta_X`` is the full modified residual and the
centered part ``theta_X - Sbar`` is the holomorphy potential of X.
"""

from dataclasses import dataclass
import hashlib

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (CalabiLabError, ConfigurationError, DomainError, PositivityError,
                     PreconditionError, UnsupportedTestbed)
from .toric import AffineFunction, holomorphy_values


@dataclass(frozen=True)
class EnergyReport:
    """An energy value with integrand extrema, a quadrature error proxy and a fingerprint."""

    value: float
    integrand_min: float
    integrand_max: float
    quadrature_error: float
    fingerprint: str

    def __float__(self):
        return self.value


def state_fingerprint(state):
    """Short sha256 digest of the model description and the potential bytes."""
    h = hashlib.sha256(repr(state.model).encode())
    h.update(np.ascontiguousarray(state.phi).tobytes())
    return h.hexdigest()[:16]


def _energy(state, integrand):
    value = float(np.sum(integrand * state.volume_weights))
    coarse = state.coarse_integral(integrand)
    return EnergyReport(value, float(integrand.min()), float(integrand.max()),
                        abs(value - coarse), state_fingerprint(state))


def _theta_for(state, theta_X):
    """Validated extremal affine function for ``state`` (None on the torus)."""
    if state.testbed == "torus":
        if theta_X is None or theta_X == 0:
            return None
        if isinstance(theta_X, AffineFunction) and theta_X.is_constant() and theta_X.constant == 0:
            return None
        raise ConfigurationError("the torus carries no holomorphic field: theta_X must be zero")
    if theta_X is None:
        return state.model.theta_X
    if not isinstance(theta_X, AffineFunction):
        raise ConfigurationError("theta_X must be an AffineFunction on the toric testbed")
    if theta_X.dim != state.model.dim:
        raise ConfigurationError(
            f"theta_X lives on R^{theta_X.dim} but the polytope is {state.model.dim}-dimensional")
    return theta_X


def calabi_energy(state):
    """Ca = int S^2 dvol."""
    return _energy(state, state.S * state.S)


def modified_calabi_energy(state, theta_X=None):
    """Modified energy int (S - Sbar - theta_X)^2 dvol.

    On the torus this is literally :func:`calabi_energy`.  On the toric side
    ``theta_X`` defaults to the class's extremal affine function.
    """
    theta = _theta_for(state, theta_X)
    if theta is None:
        return calabi_energy(state)
    r = state.residual(theta)
    return _energy(state, r * r)


def _require_toric(state, what):
    if state.testbed != "toric":
        raise UnsupportedTestbed(f"{what} needs holomorphic fields; the torus testbed has none")


def _centered(Y, state):
    if not isinstance(Y, AffineFunction):
        raise ConfigurationError("vector fields are given by their affine holomorphy potentials")
    if Y.dim not in (0, state.model.dim):
        raise ConfigurationError(f"affine function on R^{Y.dim} does not match the polytope")
    return holomorphy_values(Y, state.model)


def futaki(state, Y):
    """F(Y) = int theta_Y (S - Sbar) dmu, theta_Y centered."""
    _require_toric(state, "futaki")
    if Y.is_constant(0.0):
        return 0.0
    th = _centered(Y, state)
    sbar = state.model.average_scalar_curvature
    return float(np.sum(th * (state.S - sbar) * state.volume_weights))


def bilinear_B(state, X, Y):
    """B(X, Y) = int theta_X theta_Y dmu with both potentials centered."""
    _require_toric(state, "bilinear_B")
    if X.is_constant(0.0) or Y.is_constant(0.0):
        return 0.0
    return float(np.sum(_centered(X, state) * _centered(Y, state) * state.volume_weights))


def modified_futaki(state, Y, theta_X=None):
    """F~(Y) = int theta_Y (S - Sbar - theta_X) dmu; vanishes for the extremal theta_X."""
    _require_toric(state, "modified_futaki")
    theta = _theta_for(state, theta_X)
    if Y.is_constant(0.0):
        return 0.0
    th = _centered(Y, state)
    return float(np.sum(th * state.residual(theta) * state.volume_weights))


def futaki_gram(state, basis=None):
    """Matrix B(Y_i, Y_j) over an affine basis (coordinate functions by default)."""
    basis = state.model.basis if basis is None else basis
    return np.array([[bilinear_B(state, a, b) for b in basis] for a in basis])


def _potential_values(phi):
    return np.asarray(phi.phi if hasattr(phi, "phi") else phi, dtype=float)


def mabuchi_path_length(phi0, phi1, n_segments=8):
    """Mabuchi length of the linear path (1 - t) phi0 + t phi1.

    ``phi0`` and ``phi1`` are states of the same model.  The speed
    (int gdot^2 dvol_t)^{1/2} is integrated in t by composite Gauss-Legendre
    with four nodes per segment; every node state is checked for positivity.
    """
    if int(n_segments) != n_segments or n_segments < 8:
        raise DomainError(f"n_segments must be an integer >= 8, got {n_segments}")
    if phi0.model != phi1.model:
        raise ConfigurationError("path endpoints belong to different models")
    a, b = _potential_values(phi0), _potential_values(phi1)
    gdot = b - a
    t4, w4 = leggauss(4)
    edges = np.linspace(0.0, 1.0, int(n_segments) + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        for tq, wq in zip(lo + half * (t4 + 1.0), w4 * half):
            try:
                st = phi0.with_potential((1.0 - tq) * a + tq * b)
            except PositivityError as exc:
                raise PositivityError(f"linear path leaves the Kaehler cone at t = {tq:.6f}: {exc}",
                                      margin=exc.margin, location=exc.location) from None
            total += wq * np.sqrt(np.sum(gdot * gdot * st.volume_weights))
    return float(total)


@dataclass(frozen=True)
class DistanceBound:
    length: float
    bound: float
    constant: float

    @property
    def margin(self):
        return self.bound - self.length

    def __iter__(self):
        return iter((self.length, self.bound))


def lemma_DE_bound(phi0, phi1, Lam, n_segments=8, rtol=1e-12):
    """(path length, Lam^{n/2} ||phi0 - phi1||_{L^2(omega)}) for a torus pair.

    The precondition omega_{gamma_t} <= Lam * omega is checked on the
    endpoint densities: the density is affine in t along the linear path, so
    the endpoints bound it.  ``Lam = 1`` is accepted for the equality case.
    """
    if phi0.testbed != "torus":
        raise UnsupportedTestbed("the distance estimate is implemented on the torus testbed")
    if not Lam >= 1.0:
        raise DomainError(f"Lambda must be >= 1, got {Lam}")
    for st in (phi0, phi1):
        ratio = st.h
        if ratio.max() > Lam * (1.0 + rtol):
            idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
            x, y = (float(c[idx]) for c in st.model.coordinates())
            raise PreconditionError(
                f"density ratio {ratio.max():.6g} exceeds Lambda = {Lam:g} at (x, y) = ({x:.4f}, {y:.4f})")
    length = mabuchi_path_length(phi0, phi1, n_segments)
    n = phi0.model.complex_dim
    C = Lam ** (0.5 * n)
    d = _potential_values(phi0) - _potential_values(phi1)
    l2 = float(np.sqrt(np.sum(d * d) * phi0.model.cell))
    out = DistanceBound(length, C * l2, C)
    if length > out.bound * (1.0 + 1e-10) + 1e-300:
        raise CalabiLabError(f"path length {length:.17g} exceeds the bound {out.bound:.17g}")
    return out
