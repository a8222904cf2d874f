"""Flat complex 1-torus testbed.

Conventions (see CONVENTIONS.md): z = x + iy, d/dz = (d/dx - i d/dy)/2, the
background metric has density 1 and omega_phi has density

    h = 1 + phi_{z zbar} = 1 + lap(phi)/4

with respect to dx dy.  Scalar curvature is S = -h^{-1} (log h)_{z zbar} and
the Lichnerowicz operator is D*D with D f = f_{,zz} = h d_z(h^{-1} d_z f).
On this testbed the average scalar curvature vanishes and there are no
holomorphic vector fields with zeros, so the modified flow is the Calabi flow.
"""

from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError, PositivityError
from .fields import TWO_PI, PeriodicField, is_power_of_two, torus_coordinates, wavenumbers

DELTA_POS = 1e-6


class TorusModel:
    """Flat torus [0, L1) x [0, L2) discretized on an N x N grid."""

    testbed = "torus"
    complex_dim = 1
    average_scalar_curvature = 0.0

    def __init__(self, periods=(TWO_PI, TWO_PI), n=64):
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 or min(periods) <= 0:
            raise ConfigurationError(f"torus periods must be two positive lengths, got {periods}")
        if not is_power_of_two(int(n)):
            raise ConfigurationError(f"grid size {n} is not a power of two")
        self.periods = periods
        self.n = int(n)
        self.volume = periods[0] * periods[1]
        self.cell = self.volume / self.n**2
        kx, ky = wavenumbers(self.n, periods)
        self.k2 = kx**2 + ky**2
        self.dz_symbol = 0.5 * (1j * kx + ky)
        self.dzbar_symbol = 0.5 * (1j * kx - ky)
        # flat Lichnerowicz symbol (lap/4)^2 on the full FFT grid
        self.lichnerowicz_symbol = self.k2**2 / 16.0
        # Gauss-Bonnet with Euler characteristic zero
        assert self.average_scalar_curvature == 0.0

    def __eq__(self, other):
        return (isinstance(other, TorusModel) and self.periods == other.periods
                and self.n == other.n)

    def __hash__(self):
        return hash((self.periods, self.n))

    def __repr__(self):
        return f"TorusModel(periods={self.periods}, n={self.n})"

    def coordinates(self):
        return torus_coordinates(self.n, self.periods)

    def mode_symbol(self, k1, k2):
        """Closed-form flat Lichnerowicz eigenvalue of the mode (k1, k2)."""
        a = TWO_PI * k1 / self.periods[0]
        b = TWO_PI * k2 / self.periods[1]
        return (a * a + b * b) ** 2 / 16.0

    def lowest_symbol(self):
        return min(self.mode_symbol(1, 0), self.mode_symbol(0, 1))

    # spectral helpers on raw arrays
    def laplacian(self, f):
        return np.fft.ifft2(-self.k2 * np.fft.fft2(f)).real

    def dz(self, f):
        return np.fft.ifft2(self.dz_symbol * np.fft.fft2(f))

    def dzbar(self, f):
        return np.fft.ifft2(self.dzbar_symbol * np.fft.fft2(f))

    def field(self, values):
        return PeriodicField(values, self.periods)


class MetricState:
    """Kähler metric omega_phi on the torus, with derived density and curvature."""

    testbed = "torus"

    def __init__(self, model, phi, delta_pos=DELTA_POS):
        values = phi.values if isinstance(phi, PeriodicField) else np.asarray(phi, dtype=float)
        if values.shape != (model.n, model.n):
            raise ConfigurationError(
                f"potential has shape {values.shape}, model expects {(model.n, model.n)}")
        if not np.all(np.isfinite(values)):
            raise DomainError("potential has non-finite values")
        self.model = model
        self.phi = np.array(values, dtype=float)
        self.phi.setflags(write=False)
        self.delta_pos = delta_pos
        q = 0.25 * model.laplacian(self.phi)
        self.h = 1.0 + q
        hmin = float(self.h.min())
        if not hmin > delta_pos:
            idx = np.unravel_index(int(np.argmin(self.h)), self.h.shape)
            x, y = (c[idx] for c in model.coordinates())
            raise PositivityError(
                f"metric density min {hmin:.6e} <= {delta_pos:g} at (x, y) = ({x:.4f}, {y:.4f})",
                margin=hmin, location=(float(x), float(y)))
        # log1p keeps S accurate when h is within round-off of 1
        self.log_h = np.log1p(q)
        self.S = -0.25 * model.laplacian(self.log_h) / self.h
        for a in (self.h, self.log_h, self.S):
            a.setflags(write=False)

    @property
    def potential(self):
        return self.model.field(self.phi)

    @property
    def density(self):
        return self.model.field(self.h)

    @property
    def positivity_margin(self):
        return float(self.h.min())

    @property
    def shape(self):
        return self.phi.shape

    @cached_property
    def volume_weights(self):
        """Per-node weights w with sum(f * w) = integral of f omega_phi."""
        w = self.h * self.model.cell
        w.setflags(write=False)
        return w

    def coarse_integral(self, values):
        sl = (slice(None, None, 2), slice(None, None, 2))
        return float(np.sum(values[sl] * self.h[sl]) * 4 * self.model.cell)

    def inner(self, f, g):
        return float(np.sum(f * g * self.volume_weights))

    def with_potential(self, phi):
        return MetricState(self.model, phi, self.delta_pos)

    def residual(self, theta=None):
        """S - Sbar - theta_X; on the torus Sbar = 0 and theta_X = 0."""
        return self.S

    def lichnerowicz(self, f):
        """L f = Re h^{-1} d_zbar(h^{-1} d_zbar(h d_z(h^{-1} d_z f)))."""
        m, h = self.model, self.h
        inner = h * m.dz(m.dz(f) / h)
        return (m.dzbar(m.dzbar(inner) / h)).real / h

    def derivative_seminorm(self, g, k):
        """||nabla^k g||_{L^2} with respect to the flat background metric."""
        m = self.model
        g_hat = np.fft.fft2(g)
        return float(np.sqrt(m.cell / m.n**2 * np.sum(m.k2**k * np.abs(g_hat) ** 2)))

    def distance_to_reference(self, reference=None):
        """C^0 and L^2(omega) distances to ``reference`` modulo constants."""
        ref = 0.0 if reference is None else reference
        d = self.phi - ref
        d = d - d.mean()
        return float(np.abs(d).max()), float(np.sqrt(np.sum(d * d) * self.model.cell))

    def centered_potential(self):
        """Potential re-centred to zero flat mean (for display only)."""
        return self.phi - self.phi.mean()


def density_from_potential(model, phi, delta_pos=DELTA_POS):
    """Metric state of omega + i dd-bar phi; raises PositivityError if min h <= delta_pos."""
    return MetricState(model, phi, delta_pos)


def scalar_curvature(state):
    return state.model.field(state.S)


def lichnerowicz_apply(state, f):
    values = f.values if isinstance(f, PeriodicField) else np.asarray(f, dtype=float)
    return state.model.field(state.lichnerowicz(values))


def ricci_identity_terms(state, f):
    """The three integrals of the Ricci identity, each evaluated independently.

    Returns (mixed, pure, ricci) with
        mixed = int |f_{i jbar}|^2 omega_phi = int f_{z zbar}^2 / h
        pure  = int |f_{,ij}|^2  omega_phi  = int h |d_z(h^{-1} f_z)|^2
        ricci = int R^{i jbar} f_i f_jbar omega_phi = int S |f_z|^2
    all against dx dy.
    """
    values = f.values if isinstance(f, PeriodicField) else np.asarray(f, dtype=float)
    m, h = state.model, state.h
    fzz_bar = 0.25 * m.laplacian(values)
    fz = m.dz(values)
    cell = m.cell
    mixed = float(np.sum(fzz_bar**2 / h) * cell)
    pure = float(np.sum(h * np.abs(m.dz(fz / h)) ** 2) * cell)
    ricci = float(np.sum(state.S * np.abs(fz) ** 2) * cell)
    return mixed, pure, ricci


def ricci_identity_residual(state, f):
    """|LHS - RHS| / (|LHS| + |RHS| + 1) for int|f_{i jbar}|^2 = int|f_{ij}|^2 + int Ric(f, f)."""
    mixed, pure, ricci = ricci_identity_terms(state, f)
    rhs = pure + ricci
    return abs(mixed - rhs) / (abs(mixed) + abs(rhs) + 1.0)
