"""Toric testbed in momentum coordinates.

A torus-invariant Kähler metric in the class of a Delzant polytope P is
encoded by a symplectic potential u = u0 + f, where u0 = 1/2 sum_k l_k log l_k
is Guillemin's canonical potential and f is smooth on the closed polytope.
Scalar curvature is Abreu's S = -sum_{jk} d_j d_k u^{jk} with u^{jk} the
inverse Hessian; with this normalization S = 4 on [0, 1].

S is evaluated in weak form,

    int_P S g dmu = 2 int_{dP} g dsigma - int_P u^{jk} g_{jk} dmu,

on a Gauss-Legendre grid.  The discrete Lichnerowicz operator is then the
exact derivative of the discrete S and is symmetric with respect to the grid
inner product; its kernel is exactly the affine functions.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache
import itertools

import numpy as np
from scipy.special import xlogy

from .errors import ConfigurationError, DomainError, PositivityError
from .fields import PolytopeField, PolytopeGrid, QuadratureRule

DELTA_POS = 1e-6


@dataclass(frozen=True)
class AffineFunction:
    """x -> constant + <gradient, x>; holomorphy potential of a toric field."""

    constant: float
    gradient: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "gradient", tuple(float(a) for a in self.gradient))

    @property
    def dim(self):
        return len(self.gradient)

    def __call__(self, *coords):
        out = self.constant + 0.0 * coords[0] if coords else self.constant
        for a, x in zip(self.gradient, coords):
            out = out + a * x
        return out

    def mean(self, polytope):
        """Average over P with respect to d mu (exact: uses the barycenter)."""
        self._check(polytope)
        return self.constant + float(np.dot(self.gradient, polytope.barycenter))

    def centered(self, polytope):
        return AffineFunction(self.constant - self.mean(polytope), self.gradient)

    def _check(self, polytope):
        if self.dim not in (0, polytope.dim):
            raise ConfigurationError(
                f"affine function on R^{self.dim} does not match a {polytope.dim}-D polytope")

    @classmethod
    def coordinate(cls, j, dim):
        g = [0.0] * dim
        g[j] = 1.0
        return cls(0.0, tuple(g))

    def is_constant(self, tol=1e-12):
        return all(abs(a) <= tol for a in self.gradient)


def affine_basis(dim):
    """Coordinate functions x_1, .., x_d (holomorphy potentials of the torus action)."""
    return [AffineFunction.coordinate(j, dim) for j in range(dim)]


def _canonical_inverse_hessian(polytope, coords):
    """Closed-form inverse of Hess(u0), smooth up to the boundary.

    Numerator and denominator are multiplied by prod_k l_k; for a simple
    polytope the denominator stays positive on the closed polytope.
    """
    pts = np.stack(coords, axis=-1)
    nu = polytope.normals.astype(pts.dtype)
    # facet values in the dtype of the nodes (extended precision for S0)
    l = pts @ nu.T + polytope.constants.astype(pts.dtype)
    K = polytope.n_facets
    others = [np.prod(np.delete(l, k, axis=-1), axis=-1) for k in range(K)]
    if polytope.dim == 1:
        den = sum(nu[k, 0] ** 2 * others[k] for k in range(K))
        num = 2.0 * np.prod(l, axis=-1)
        return (num / den)[..., None, None]
    num = np.zeros(pts.shape[:-1] + (2, 2))
    for k in range(K):
        perp = np.array([-nu[k, 1], nu[k, 0]])
        num += 0.5 * np.outer(perp, perp) * others[k][..., None, None]
    den = np.zeros(pts.shape[:-1])
    for k, m in itertools.combinations(range(K), 2):
        det = nu[k, 0] * nu[m, 1] - nu[k, 1] * nu[m, 0]
        if det:
            rest = np.prod(np.delete(l, [k, m], axis=-1), axis=-1)
            den += 0.25 * det * det * rest
    return num / den[..., None, None]


def _sym_eig_min(a):
    """Smallest eigenvalue of (..., d, d) matrices with real spectrum, d <= 2."""
    if a.shape[-1] == 1:
        return a[..., 0, 0]
    tr = a[..., 0, 0] + a[..., 1, 1]
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    return 0.5 * tr - disc


def _inv(a):
    if a.shape[-1] == 1:
        return 1.0 / a
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1] / det
    out[..., 1, 1] = a[..., 0, 0] / det
    out[..., 0, 1] = -a[..., 0, 1] / det
    out[..., 1, 0] = -a[..., 1, 0] / det
    return out


def _canonical_curvature(polytope, n):
    """Weak-form S(u0) on the grid nodes, evaluated in extended precision.

    Dividing by the endpoint weights (about 1/n^2) after two differentiations
    amplifies round-off like n^4 eps; long double keeps S(u0) exact to ~1e-10
    at n = 129.
    """
    g = PolytopeGrid(polytope, n, dtype=np.longdouble)
    w = g.weights
    G = _canonical_inverse_hessian(polytope, g.coords)
    S0 = (2 * g.boundary_functional - g.hessian_transpose(w[..., None, None] * G)) / w
    return S0.astype(float)


class ToricModel:
    """Polytope, grid and the canonical (Guillemin) data shared by all potentials."""

    testbed = "toric"

    def __init__(self, polytope, n=129):
        self.polytope = polytope
        self.grid = PolytopeGrid(polytope, n)
        self.dim = polytope.dim
        self.complex_dim = polytope.dim
        g = self.grid
        self.G = _canonical_inverse_hessian(polytope, g.coords)
        self.S0 = _canonical_curvature(polytope, self.grid.n)
        self.average_scalar_curvature = 2.0 * polytope.boundary_measure / polytope.volume
        self.theta_X = extremal_affine_function(polytope, g.rule)
        self.basis = affine_basis(self.dim)

    def __repr__(self):
        return f"ToricModel({self.polytope!r}, n={self.grid.n})"

    @cached_property
    def theta_values(self):
        return self.theta_X(*self.grid.coords)

    @cached_property
    def basis_values(self):
        """Centered coordinate functions sampled on the grid."""
        return [holomorphy_values(Y, self) for Y in self.basis]

    def canonical_hessian(self):
        """Hess(u0) = 1/2 sum_k nu_k nu_k^T / l_k at the (interior) grid nodes."""
        pts = np.stack(self.grid.coords, axis=-1)
        l = self.polytope.facet_values(pts)
        nu = self.polytope.normals.astype(float)
        return 0.5 * np.einsum("...k,ki,kj->...ij", 1.0 / l, nu, nu)

    def canonical_potential(self):
        pts = np.stack(self.grid.coords, axis=-1)
        return 0.5 * xlogy(*(2 * [self.polytope.facet_values(pts)])).sum(axis=-1)

    def affine_projection(self, g):
        """dmu-orthogonal projection of nodal values onto affine functions."""
        w = self.grid.weights.ravel()
        B = np.column_stack([np.ones(w.size)] + [c.ravel() for c in self.grid.coords])
        coef = np.linalg.solve((B * w[:, None]).T @ B, (B * w[:, None]).T @ g.ravel())
        return (B @ coef).reshape(self.grid.shape)


@lru_cache(maxsize=16)
def toric_model(polytope, n=129):
    return ToricModel(polytope, n)


class SymplecticPotential:
    """u = u0 + f on the polytope grid, with cached inverse Hessian and curvature."""

    testbed = "toric"

    def __init__(self, model, f=None, delta_pos=DELTA_POS):
        self.model = model
        g = model.grid
        values = np.zeros(g.shape) if f is None else np.asarray(
            f.values if isinstance(f, PolytopeField) else f, dtype=float)
        if values.shape != g.shape:
            raise ConfigurationError(f"perturbation has shape {values.shape}, grid is {g.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("perturbation has non-finite values")
        self.f = values.copy()
        self.f.setflags(write=False)
        self.delta_pos = delta_pos
        self.F = g.hessian(self.f)
        eye = np.eye(model.dim)
        M = eye + model.G @ self.F
        margin = _sym_eig_min(M)
        m = float(margin.min())
        if not m > delta_pos:
            idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
            loc = tuple(float(c[idx]) for c in g.coords)
            raise PositivityError(
                f"Hessian margin {m:.6e} <= {delta_pos:g} at x = {loc}", margin=m, location=loc)
        self.margin = m
        Minv = _inv(M)
        self.U = Minv @ model.G
        self.U = 0.5 * (self.U + np.swapaxes(self.U, -1, -2))
        # G - U = M^{-1} G F G; small when f is, so its derivatives carry little round-off
        W = Minv @ model.G @ self.F @ model.G
        W = 0.5 * (W + np.swapaxes(W, -1, -2))
        w = g.weights
        self.S = model.S0 + g.hessian_transpose(w[..., None, None] * W) / w
        self.S.setflags(write=False)

    # -- accessors ------------------------------------------------------------
    @property
    def grid(self):
        return self.model.grid

    @property
    def polytope(self):
        return self.model.polytope

    @property
    def potential(self):
        return self.grid.field(self.f)

    @property
    def phi(self):
        return self.f

    @property
    def shape(self):
        return self.f.shape

    @property
    def positivity_margin(self):
        """min over nodes of the smallest eigenvalue of Hess(u0)^{-1} Hess(u)."""
        return self.margin

    def values(self):
        """u = u0 + f at the grid nodes."""
        return self.model.canonical_potential() + self.f

    def hessian(self):
        return self.model.canonical_hessian() + self.F

    def inverse_hessian(self):
        return self.U

    def min_hessian_eigenvalue(self):
        return float(_sym_eig_min(self.hessian()).min())

    @property
    def volume_weights(self):
        return self.grid.weights

    def coarse_integral(self, values):
        return self.grid.coarse_integrate(values)

    def inner(self, a, b):
        return float(np.sum(a * b * self.grid.weights))

    def with_potential(self, f):
        return SymplecticPotential(self.model, f, self.delta_pos)

    def residual(self, theta=None):
        """S - theta_X, where theta_X already carries the average Sbar."""
        if theta is None:
            return self.S - self.model.average_scalar_curvature
        return self.S - _theta_values(theta, self.model)

    def lichnerowicz(self, v):
        """L v = w^{-1} sum_jk Hess_jk^T (w (U Hess(v) U)^{jk}); the derivative of S."""
        g = self.grid
        w = g.weights
        T = self.U @ g.hessian(v) @ self.U
        return g.hessian_transpose(w[..., None, None] * T) / w

    def lichnerowicz_stiffness(self):
        """Dense symmetric K with v.K.v = sum_q w_q tr(U F(v) U F(v))."""
        g = self.grid
        H = g.hessian_matrices
        w = g.weights.ravel()
        d = self.model.dim
        U = self.U.reshape(-1, d, d)
        K = np.zeros((g.size, g.size))
        for j, k, a, b in itertools.product(range(d), repeat=4):
            coef = w * U[:, j, a] * U[:, k, b]
            K += H[j][k].T @ (coef[:, None] * H[a][b])
        return 0.5 * (K + K.T)

    def derivative_seminorm(self, v, k):
        """||nabla^k v||_{L^2(d mu)} with the flat metric on momentum coordinates."""
        g = self.grid
        d = self.model.dim
        total = np.zeros(g.shape)
        for alpha in itertools.product(range(d), repeat=k):
            dv = v
            for j in alpha:
                dv = g.d(dv, j)
            total += dv * dv
        return float(np.sqrt(np.sum(total * g.weights)))

    def distance_to_reference(self, reference=None):
        """C^0 and L^2(d mu) distances to ``reference`` modulo affine functions."""
        ref = 0.0 if reference is None else reference
        d = self.f - ref
        d = d - self.model.affine_projection(d)
        return float(np.abs(d).max()), float(np.sqrt(np.sum(d * d * self.grid.weights)))

    def centered_potential(self):
        return self.f - self.model.affine_projection(self.f)


def _theta_values(theta, model):
    if isinstance(theta, AffineFunction):
        theta._check(model.polytope)
        return theta(*model.grid.coords)
    return np.asarray(theta, dtype=float)


def guillemin_potential(polytope, n=129):
    """Canonical potential u0 (zero perturbation) on the default grid."""
    return SymplecticPotential(toric_model(polytope, n))


def abreu_scalar_curvature(u):
    return u.grid.field(u.S)


def extremal_affine_function(polytope, rule=None):
    """The affine theta_X with int (S - theta_X) L dmu = 0 for every affine L.

    Uses the u-independent boundary form int S L dmu = 2 int_{dP} L dsigma, so
    only the moment (Gram) matrix of {1, x_j} and facet integrals are needed.
    """
    if rule is None:
        rule = QuadratureRule.exact(polytope, 4)
    if rule.polytope != polytope:
        raise ConfigurationError("quadrature rule belongs to another polytope")
    x, w = rule.nodes, rule.weights
    B = np.column_stack([np.ones(len(x)), x])
    gram = (B * w[:, None]).T @ B
    bx, bw = rule.boundary_nodes, rule.boundary_weights
    Bb = np.column_stack([np.ones(len(bx)), bx])
    rhs = 2.0 * (Bb * bw[:, None]).sum(axis=0)
    if np.linalg.cond(gram) > 1e12:
        raise ConfigurationError("moment matrix is singular (degenerate polytope)")
    coef = np.linalg.solve(gram, rhs)
    return AffineFunction(coef[0], tuple(coef[1:]))


def holomorphy_values(Y, model):
    return Y.centered(model.polytope)(*model.grid.coords) * np.ones(model.grid.shape)


def holomorphy_potential(Y, u):
    """theta_Y sampled on the grid and normalized to zero d mu-mean.

    In momentum coordinates this field is the same for every potential u.
    """
    return u.grid.field(holomorphy_values(Y, u.model))


def random_polynomial(dim, degree, seed):
    """Coefficients of x^a y^b, 2 <= a + b <= degree, from a seeded normal draw."""
    rng = np.random.default_rng(seed)
    if dim == 1:
        powers = [(a,) for a in range(2, degree + 1)]
    else:
        powers = [(a, t - a) for t in range(2, degree + 1) for a in range(t + 1)]
    return {p: float(c) for p, c in zip(powers, rng.standard_normal(len(powers)))}


def admissible_perturbation(model, seed, degree=4, margin=0.1, fraction=1.0):
    """Seeded polynomial perturbation scaled so Hess(u0 + f) >= margin * Hess(u0).

    With ``fraction = 1`` the relative Hessian margin is exactly ``margin`` at
    the worst grid node (for convex p the largest relative stretch is
    ``2 - margin`` instead); smaller fractions give proportionally gentler data.
    """
    if not 0 < fraction <= 1:
        raise DomainError("fraction must lie in (0, 1]")
    coef = random_polynomial(model.dim, degree, seed)
    coords = model.grid.coords
    p = sum(c * np.prod([x**a for x, a in zip(coords, pw)], axis=0) for pw, c in coef.items())
    p = p / np.abs(p).max()
    Hp = model.grid.hessian(p)
    GH = model.G @ Hp
    lowest = float(_sym_eig_min(GH).min())
    if lowest < 0:
        scale = (1.0 - margin) / -lowest
    else:
        # convex p: bound the largest relative change instead
        highest = float((-_sym_eig_min(-GH)).max())
        scale = (1.0 - margin) / highest
    return fraction * scale * p
