"""Momentum polytopes of toric testbeds (dimension 1 and 2).

A polytope is stored as an ordered vertex list together with its facets
``l_k(x) = <x, nu_k> + c_k >= 0`` where every ``nu_k`` is a primitive
integer inward normal.  Facets are derived from the vertices.
"""

from fractions import Fraction
from math import gcd
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import PolytopeError

_RTOL = 1e-9


def _primitive_normal(direction, max_denominator=1000):
    """Scale a rational direction to the primitive integer vector it spans."""
    direction = np.asarray(direction, dtype=float)
    scale = np.abs(direction).max()
    if scale == 0.0:
        raise PolytopeError("zero-length edge")
    unit = direction / scale
    fracs = [Fraction(float(c)).limit_denominator(max_denominator) for c in unit]
    if any(abs(float(f) - c) > _RTOL for f, c in zip(fracs, unit)):
        raise PolytopeError(f"edge normal {tuple(direction)} is not rational")
    lcm = 1
    for f in fracs:
        lcm = lcm * f.denominator // gcd(lcm, f.denominator)
    ints = [int(f * lcm) for f in fracs]
    g = 0
    for i in ints:
        g = gcd(g, abs(i))
    return np.array([i // g for i in ints], dtype=np.int64)


class Polytope:
    """Compact convex Delzant-type polytope in R^d, d in {1, 2}.

    Args:
        vertices: for d = 1 two endpoints (scalars or 1-tuples); for d = 2
            the polygon vertices in boundary order (either orientation).
        linenos: optional source line numbers, used to decorate errors.
    """

    def __init__(self, vertices, linenos=None):
        v = np.asarray(vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] not in (1, 2):
            raise PolytopeError("vertices must be points in R^1 or R^2")
        if not np.all(np.isfinite(v)):
            raise PolytopeError("non-finite vertex coordinate")
        self.dim = v.shape[1]
        self._linenos = linenos
        if self.dim == 1:
            self._init_interval(v)
        else:
            self._init_polygon(v)
        self.volume = float(self.integrate(lambda *x: np.ones_like(x[0]), degree=0))
        if not self.volume > 0:
            raise PolytopeError("polytope has zero volume")
        self.barycenter = np.array([
            self.integrate(lambda *x, j=j: x[j], degree=1) / self.volume
            for j in range(self.dim)
        ])

    def _err(self, message, index=None):
        lineno = None
        if index is not None and self._linenos is not None:
            lineno = self._linenos[index]
        return PolytopeError(message, lineno)

    def _init_interval(self, v):
        if len(v) != 2:
            raise self._err("an interval needs exactly two endpoints")
        order = np.argsort(v[:, 0])
        v = v[order]
        if self._linenos is not None:
            self._linenos = [self._linenos[i] for i in order]
        a, b = v[:, 0]
        if not b > a:
            raise self._err("degenerate interval", 1)
        self.vertices = v
        self.normals = np.array([[1], [-1]], dtype=np.int64)
        self.constants = np.array([-a, b])

    def _init_polygon(self, v):
        m = len(v)
        if m < 3:
            raise self._err("a polygon needs at least three vertices")
        signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if signed < 0:
            v = v[::-1].copy()
            if self._linenos is not None:
                self._linenos = self._linenos[::-1]
        scale = max(1.0, float(np.ptp(v, axis=0).max()))
        tol = _RTOL * scale
        normals, consts = [], []
        for i in range(m):
            e = v[(i + 1) % m] - v[i]
            if np.linalg.norm(e) <= tol:
                raise self._err("repeated vertex", (i + 1) % m)
            try:
                nu = _primitive_normal([-e[1], e[0]])
            except PolytopeError as exc:
                raise self._err(str(exc), i) from None
            normals.append(nu)
            consts.append(-float(nu @ v[i]))
        self.vertices = v
        self.normals = np.array(normals, dtype=np.int64)
        self.constants = np.array(consts)
        values = self.facet_values(v)
        if np.any(values < -tol * np.abs(self.normals).max()):
            bad = int(np.argmin(values.min(axis=1)))
            raise self._err("polygon is not convex", bad)
        on = np.abs(values) <= tol * np.abs(self.normals).max(axis=1)
        for i in range(m):
            if on[i].sum() != 2:
                raise self._err(
                    f"vertex {tuple(v[i])} lies on {int(on[i].sum())} facets (not simple)", i)
        for i in range(m):
            a, b = self.normals[i - 1], self.normals[i]
            det = int(a[0] * b[1] - a[1] * b[0])
            if abs(det) != 1:
                raise self._err(
                    f"vertex {tuple(v[i])} violates the Delzant condition (det {det})", i)

    # -- geometry ---------------------------------------------------------
    @property
    def n_facets(self):
        return len(self.normals)

    def facet_values(self, points):
        """Return ``l_k(x)`` with shape ``points.shape[:-1] + (n_facets,)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.normals.T.astype(float) + self.constants

    def contains(self, points, tol=1e-12):
        return np.all(self.facet_values(points) >= -tol, axis=-1)

    def facets(self):
        """Yield ``(normal, constant, endpoints)`` for every facet.

        For an interval the endpoint array has a single row.
        """
        if self.dim == 1:
            yield self.normals[0], self.constants[0], self.vertices[:1]
            yield self.normals[1], self.constants[1], self.vertices[1:]
            return
        m = len(self.vertices)
        for k in range(m):
            yield self.normals[k], self.constants[k], self.vertices[[k, (k + 1) % m]]

    @property
    def boundary_measure(self):
        """Total facet measure sigma(dP) (edge length divided by |nu|)."""
        _, w = self.boundary_quadrature(0)
        return float(w.sum())

    # -- exact polynomial quadrature -----------------------------------------
    def quadrature(self, degree):
        """Nodes (m, d) and nonnegative weights exact for polynomials of ``degree``."""
        npts = max(1, (degree + 3) // 2)
        t, w = leggauss(npts)
        t = 0.5 * (t + 1.0)
        w = 0.5 * w
        if self.dim == 1:
            a, b = self.vertices[:, 0]
            return (a + (b - a) * t)[:, None], (b - a) * w
        # fan triangulation and a collapsed (Duffy) tensor rule per triangle
        nodes, weights = [], []
        p0 = self.vertices[0]
        xi, eta = np.meshgrid(t, t, indexing="ij")
        wxy = np.outer(w, w)
        for k in range(1, len(self.vertices) - 1):
            p1, p2 = self.vertices[k], self.vertices[k + 1]
            jac = abs((p1[0] - p0[0]) * (p2[1] - p1[1]) - (p1[1] - p0[1]) * (p2[0] - p1[0]))
            pts = p0 + xi[..., None] * (p1 - p0) + (xi * eta)[..., None] * (p2 - p1)
            nodes.append(pts.reshape(-1, 2))
            weights.append((wxy * xi * jac).ravel())
        return np.concatenate(nodes), np.concatenate(weights)

    def boundary_quadrature(self, degree):
        """Nodes and weights for the facet measure d sigma, exact to ``degree``.

        On the facet ``<x, nu> + c = 0`` the measure is Lebesgue measure
        divided by ``|nu|``, so that ``d sigma`` wedged with ``nu`` is ``d mu``.
        """
        if self.dim == 1:
            return self.vertices.copy(), np.ones(2)
        npts = max(1, (degree + 2) // 2)
        t, w = leggauss(npts)
        t = 0.5 * (t + 1.0)
        w = 0.5 * w
        nodes, weights = [], []
        for nu, _, (a, b) in self.facets():
            length = float(np.linalg.norm(b - a))
            nodes.append(a + t[:, None] * (b - a))
            weights.append(w * length / float(np.linalg.norm(nu)))
        return np.concatenate(nodes), np.concatenate(weights)

    def integrate(self, f, degree=8):
        """Integrate ``f(*coords)`` against d mu with the exact rule of ``degree``."""
        x, w = self.quadrature(degree)
        return float(np.sum(np.asarray(f(*x.T), dtype=float) * w))

    def moment_matrix(self):
        """Gram matrix of {1, x_1, .., x_d} in L^2(P, d mu)."""
        x, w = self.quadrature(2)
        basis = np.column_stack([np.ones(len(x)), x])
        return (basis * w[:, None]).T @ basis

    # -- comparison & I/O -------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return (self.vertices.shape == other.vertices.shape
                and np.allclose(self.vertices, other.vertices, rtol=0, atol=1e-12))

    def __hash__(self):
        return hash(np.round(self.vertices, 12).tobytes())

    def __repr__(self):
        pts = ", ".join(str(tuple(float(c) for c in p)) for p in self.vertices)
        return f"Polytope([{pts}])"

    @classmethod
    def from_text(cls, text, source="<string>"):
        """Parse one vertex per line (space-separated reals); ``#`` starts a comment."""
        rows, linenos = [], []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split()]
            except ValueError:
                raise PolytopeError(f"{source}: malformed vertex {line!r}", lineno) from None
            if rows and len(row) != len(rows[0]):
                raise PolytopeError(
                    f"{source}: expected {len(rows[0])} coordinates, got {len(row)}", lineno)
            if len(row) not in (1, 2):
                raise PolytopeError(f"{source}: vertices must have 1 or 2 coordinates", lineno)
            rows.append(row)
            linenos.append(lineno)
        if not rows:
            raise PolytopeError(f"{source}: no vertices found")
        return cls(rows, linenos=linenos)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"polytope file not found: {path}")
        return cls.from_text(path.read_text(), source=str(path))


def interval(a=0.0, b=1.0):
    return Polytope([a, b])


def unit_square():
    return Polytope([(0, 0), (1, 0), (1, 1), (0, 1)])


def hirzebruch_trapezoid():
    """Momentum polygon (0,0),(2,0),(1,1),(0,1): a one-point blow-up of CP^2."""
    return Polytope([(0, 0), (2, 0), (1, 1), (0, 1)])
