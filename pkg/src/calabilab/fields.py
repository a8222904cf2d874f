"""Discrete scalar fields, differentiation and quadrature on both testbeds.

Torus fields live on an N x N uniform grid of [0, L1) x [0, L2) with axis 0
along x and axis 1 along y; they are differentiated with the FFT.

Polytope fields live on Gauss-Legendre tensor grids: an affine image of
the reference interval for d = 1 and a bilinear image of the reference
square for convex quadrilaterals (d = 2).  All nodes are interior, so no
stencil ever reads a boundary point; boundary values are obtained by
polynomial extrapolation only where a facet integral needs them.
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError, DomainError
from .polytope import Polytope

TWO_PI = 2.0 * np.pi


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def is_power_of_two(n):
    return n >= 2 and (n & (n - 1)) == 0


# ---------------------------------------------------------------------------
# periodic fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Real scalar field sampled on the uniform torus grid."""

    values: np.ndarray
    periods: tuple = (TWO_PI, TWO_PI)

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigurationError(f"torus fields must be N x N, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("torus field has non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))

    @property
    def n(self):
        return self.values.shape[0]

    def coordinates(self):
        return torus_coordinates(self.n, self.periods)

    @classmethod
    def from_function(cls, func, n, periods=(TWO_PI, TWO_PI)):
        x, y = torus_coordinates(n, periods)
        return cls(np.broadcast_to(func(x, y), (n, n)), periods)

    def __add__(self, other):
        o = other.values if isinstance(other, PeriodicField) else other
        return PeriodicField(self.values + o, self.periods)

    def __sub__(self, other):
        o = other.values if isinstance(other, PeriodicField) else other
        return PeriodicField(self.values - o, self.periods)

    def __mul__(self, other):
        o = other.values if isinstance(other, PeriodicField) else other
        return PeriodicField(self.values * o, self.periods)

    __rmul__ = __mul__


def torus_coordinates(n, periods):
    x = np.arange(n) * (periods[0] / n)
    y = np.arange(n) * (periods[1] / n)
    return np.meshgrid(x, y, indexing="ij")


@lru_cache(maxsize=32)
def wavenumbers(n, periods):
    """Angular wavenumbers (kx, ky) broadcast to the full FFT grid."""
    kx = TWO_PI * np.fft.fftfreq(n, d=periods[0] / n)
    ky = TWO_PI * np.fft.fftfreq(n, d=periods[1] / n)
    kx, ky = np.meshgrid(kx, ky, indexing="ij")
    kx.setflags(write=False)
    ky.setflags(write=False)
    return kx, ky


def spectral_derivative(f, multi_index):
    """Mixed partial derivative d^a/dx^a d^b/dy^b of a periodic field.

    The Nyquist coefficient is dropped for odd orders along an axis so that
    real fields map to real fields.
    """
    a, b = (int(i) for i in multi_index)
    if a < 0 or b < 0 or a + b > 4:
        raise DomainError(f"multi-index {multi_index} must be nonnegative with order <= 4")
    n = f.n
    if not is_power_of_two(n):
        raise ConfigurationError(f"grid size {n} is not a power of two")
    if a == b == 0:
        return PeriodicField(f.values.copy(), f.periods)
    kx, ky = wavenumbers(n, f.periods)
    symbol = (1j * kx) ** a * (1j * ky) ** b
    if a % 2:
        symbol[n // 2, :] = 0.0
    if b % 2:
        symbol[:, n // 2] = 0.0
    out = np.fft.ifft2(symbol * np.fft.fft2(f.values)).real
    return PeriodicField(out, f.periods)


def integrate_torus(f, density=None):
    """Integral of ``f * density dx dy``; exact for band-limited integrands."""
    values = f.values if isinstance(f, PeriodicField) else np.asarray(f, dtype=float)
    periods = f.periods if isinstance(f, PeriodicField) else (TWO_PI, TWO_PI)
    if density is not None:
        d = density.values if isinstance(density, PeriodicField) else np.asarray(density)
        if not np.all(d > 0):
            raise DomainError(f"density must be positive (min {d.min():.3e})")
        values = values * d
    cell = periods[0] * periods[1] / values.size
    return float(np.sum(values) * cell)


# ---------------------------------------------------------------------------
# Gauss-Legendre grids on polytopes
# ---------------------------------------------------------------------------

def _leggauss_extended(n, dtype):
    """Gauss-Legendre rule refined by Newton steps in ``dtype`` (e.g. np.longdouble)."""
    def legendre(t):
        p_prev, p = np.ones_like(t), t.copy()
        for k in range(2, n + 1):
            p_prev, p = p, ((2 * k - 1) * t * p - (k - 1) * p_prev) / k
        return p, n * (t * p - p_prev) / (t * t - 1)

    t = leggauss(n)[0].astype(dtype)
    for _ in range(3):
        p, dp = legendre(t)
        t = t - p / dp
    _, dp = legendre(t)
    return t, 2 / ((1 - t * t) * dp * dp)


class GaussAxis:
    """Gauss-Legendre nodes on [0, 1] with barycentric interpolation data."""

    def __init__(self, n, dtype=float):
        if n < 2:
            raise ConfigurationError("a polytope grid needs at least 2 nodes per axis")
        t, w = leggauss(n) if dtype is float else _leggauss_extended(n, dtype)
        self.n = n
        self.nodes = 0.5 * (t + 1.0)
        self.weights = 0.5 * w
        # barycentric weights for Gauss-Legendre points
        self.bary = (-1.0) ** np.arange(n) * np.sqrt((1.0 - t * t) * w)
        diff = self.nodes[:, None] - self.nodes[None, :]
        np.fill_diagonal(diff, 1.0)
        d = (self.bary[None, :] / self.bary[:, None]) / diff
        np.fill_diagonal(d, 0.0)
        d -= np.diag(d.sum(axis=1))
        self.diff = d
        self.left = self.interpolation_row(0.0)
        self.right = self.interpolation_row(1.0)

    def interpolation_row(self, z):
        d = z - self.nodes
        hit = np.flatnonzero(d == 0.0)
        if hit.size:
            row = np.zeros(self.n)
            row[hit[0]] = 1.0
            return row
        t = self.bary / d
        return t / t.sum()


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Node/weight pairs for the Lebesgue measure on P and for d sigma on dP."""

    nodes: np.ndarray
    weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    order: int
    polytope: Polytope

    def __post_init__(self):
        for name in ("nodes", "weights", "boundary_nodes", "boundary_weights"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        if np.any(self.weights < 0) or np.any(self.boundary_weights < 0):
            raise ConfigurationError("quadrature weights must be nonnegative")

    @classmethod
    def exact(cls, polytope, order=8):
        """Polynomial-exact rule built from a triangulation of ``polytope``."""
        x, w = polytope.quadrature(order)
        bx, bw = polytope.boundary_quadrature(order)
        return cls(x, w, bx, bw, order, polytope)


class PolytopeGrid:
    """Interior Gauss-Legendre tensor grid on an interval or convex quadrilateral.

    Args:
        polytope: the momentum polytope (2-D grids need four vertices).
        n: nodes per axis.
    """

    def __init__(self, polytope, n=129, dtype=float):
        self.polytope = polytope
        self.n = int(n)
        self.dim = polytope.dim
        self.dtype = dtype
        self.axis = GaussAxis(self.n, dtype)
        if self.dim == 1:
            self._init_interval()
        else:
            if len(polytope.vertices) != 4:
                raise ConfigurationError(
                    "2-D polytope grids are built on convex quadrilaterals; "
                    f"got {len(polytope.vertices)} vertices")
            self._init_quad()
        self.shape = self.weights.shape
        self.size = self.weights.size

    def _init_interval(self):
        ax = self.axis
        a, b = self.polytope.vertices[:, 0]
        self.length = b - a
        self.coords = (_readonly(a + self.length * ax.nodes, self.dtype),)
        self.weights = _readonly(self.length * ax.weights, self.dtype)
        # boundary functional: g -> sum over facets of g d sigma (unit masses)
        self.boundary_functional = _readonly(ax.left + ax.right, self.dtype)

    def _init_quad(self):
        ax = self.axis
        v0, v1, v2, v3 = self.polytope.vertices
        s, t = np.meshgrid(ax.nodes, ax.nodes, indexing="ij")
        s_, t_ = s[..., None], t[..., None]
        pts = (1 - s_) * (1 - t_) * v0 + s_ * (1 - t_) * v1 + s_ * t_ * v2 + (1 - s_) * t_ * v3
        xs = (1 - t_) * (v1 - v0) + t_ * (v2 - v3)
        xt = (1 - s_) * (v3 - v0) + s_ * (v2 - v1)
        det = xs[..., 0] * xt[..., 1] - xs[..., 1] * xt[..., 0]
        if not np.all(det > 0):
            raise ConfigurationError("bilinear map of the quadrilateral is degenerate")
        self.coords = (_readonly(pts[..., 0], self.dtype), _readonly(pts[..., 1], self.dtype))
        self.jacobian = _readonly(det, self.dtype)
        # rows of the inverse Jacobian: d(s,t)/dx and d(s,t)/dy
        self._sx, self._tx = xt[..., 1] / det, -xs[..., 1] / det
        self._sy, self._ty = -xt[..., 0] / det, xs[..., 0] / det
        w = ax.weights
        self.weights = _readonly(np.outer(w, w) * det, self.dtype)
        # facet measures: facet k runs from vertex k to vertex k+1
        sig = []
        for nu, _, (a, b) in self.polytope.facets():
            sig.append(np.linalg.norm(b - a) / np.linalg.norm(nu))
        # s=0 <-> facet 3, s=1 <-> facet 1, t=0 <-> facet 0, t=1 <-> facet 2
        bf = (np.outer(sig[3] * ax.left + sig[1] * ax.right, w)
              + np.outer(w, sig[0] * ax.left + sig[2] * ax.right))
        self.boundary_functional = _readonly(bf, self.dtype)

    # -- differentiation --------------------------------------------------
    def d(self, g, j):
        """Physical first derivative of nodal values along coordinate ``j``."""
        D = self.axis.diff
        if self.dim == 1:
            return (D @ g) / self.length
        gs = D @ g
        gt = g @ D.T
        if j == 0:
            return self._sx * gs + self._tx * gt
        return self._sy * gs + self._ty * gt

    def d_transpose(self, v, j):
        """Apply the transpose of :meth:`d` (as a matrix on flattened nodes)."""
        D = self.axis.diff
        if self.dim == 1:
            return (D.T @ v) / self.length
        if j == 0:
            return D.T @ (self._sx * v) + (self._tx * v) @ D
        return D.T @ (self._sy * v) + (self._ty * v) @ D

    def hessian(self, g):
        """Nodal Hessian, shape ``grid.shape + (d, d)``; mixed terms symmetrized."""
        if self.dim == 1:
            return self.d(self.d(g, 0), 0)[..., None, None]
        gx, gy = self.d(g, 0), self.d(g, 1)
        hxy = 0.5 * (self.d(gx, 1) + self.d(gy, 0))
        out = np.empty(g.shape + (2, 2))
        out[..., 0, 0] = self.d(gx, 0)
        out[..., 1, 1] = self.d(gy, 1)
        out[..., 0, 1] = out[..., 1, 0] = hxy
        return out

    def hessian_transpose(self, v):
        """Sum over j, k of Hess_jk^T applied to a symmetric tensor field v^{jk}."""
        if self.dim == 1:
            return self.d_transpose(self.d_transpose(v[..., 0, 0], 0), 0)
        dt = self.d_transpose
        return (dt(dt(v[..., 0, 0], 0), 0) + dt(dt(v[..., 1, 1], 1), 1)
                + dt(dt(v[..., 0, 1], 0), 1) + dt(dt(v[..., 1, 0], 1), 0))

    @cached_property
    def diff_matrices(self):
        """Dense first-derivative matrices on flattened nodes (one per coordinate)."""
        D = self.axis.diff
        if self.dim == 1:
            return (D / self.length,)
        eye = np.eye(self.n)
        ds, dt = np.kron(D, eye), np.kron(eye, D)
        return (self._sx.ravel()[:, None] * ds + self._tx.ravel()[:, None] * dt,
                self._sy.ravel()[:, None] * ds + self._ty.ravel()[:, None] * dt)

    @cached_property
    def hessian_matrices(self):
        """Dense matrices H[j][k] mapping nodal values to Hessian entries."""
        Ds = self.diff_matrices
        if self.dim == 1:
            return [[Ds[0] @ Ds[0]]]
        hxy = 0.5 * (Ds[0] @ Ds[1] + Ds[1] @ Ds[0])
        return [[Ds[0] @ Ds[0], hxy], [hxy, Ds[1] @ Ds[1]]]

    # -- quadrature -------------------------------------------------------
    @property
    def order(self):
        """Polynomial degree integrated exactly by the grid rule."""
        return 2 * self.n - 1 if self.dim == 1 else 2 * self.n - 2

    @cached_property
    def rule(self):
        bx, bw = self.polytope.boundary_quadrature(self.order)
        nodes = np.stack([c.ravel() for c in self.coords], axis=-1)
        return QuadratureRule(nodes, self.weights.ravel(), bx, bw, self.order, self.polytope)

    def integrate(self, values):
        return float(np.sum(np.asarray(values) * self.weights))

    def coarse_integrate(self, values):
        """Same integral on every other node (a cheap quadrature error proxy)."""
        sl = (slice(None, None, 2),) * self.dim
        w = self.weights[sl]
        v = np.broadcast_to(values, self.shape)[sl]
        return float(np.sum(v * w) * (self.weights.sum() / w.sum()))

    def sample(self, func):
        return np.broadcast_to(np.asarray(func(*self.coords), dtype=float), self.shape).copy()

    def field(self, values):
        return PolytopeField(values, self)


@dataclass(frozen=True, eq=False)
class PolytopeField:
    """Nodal values on a :class:`PolytopeGrid`."""

    values: np.ndarray
    grid: PolytopeGrid = field(repr=False)

    def __post_init__(self):
        v = _readonly(np.broadcast_to(self.values, self.grid.shape))
        if not np.all(np.isfinite(v)):
            raise DomainError("polytope field has non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def polytope(self):
        return self.grid.polytope


def integrate_polytope(f, rule):
    """Integrate a :class:`PolytopeField` or a callable ``f(*coords)`` against d mu."""
    if isinstance(f, PolytopeField):
        grid_rule = f.grid.rule
        if f.polytope != rule.polytope:
            raise ConfigurationError("field and quadrature rule live on different polytopes")
        if grid_rule is not rule and not (
                grid_rule.nodes.shape == rule.nodes.shape
                and np.array_equal(grid_rule.nodes, rule.nodes)):
            raise ConfigurationError("quadrature rule does not match the field's grid")
        return float(np.sum(f.values.ravel() * rule.weights))
    values = np.broadcast_to(np.asarray(f(*rule.nodes.T), dtype=float), rule.weights.shape)
    return float(np.sum(values * rule.weights))


def integrate_boundary(f, polytope, degree=16):
    """Sum of facet integrals of ``f(*coords)`` against d sigma."""
    for nu in polytope.normals:
        if np.gcd.reduce(np.abs(nu)) != 1:
            raise ConfigurationError(f"facet normal {tuple(nu)} is not primitive")
    x, w = polytope.boundary_quadrature(degree)
    values = np.broadcast_to(np.asarray(f(*x.T), dtype=float), w.shape)
    return float(np.sum(values * w))
