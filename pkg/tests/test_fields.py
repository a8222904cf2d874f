import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from calabilab import (PeriodicField, PolytopeGrid, QuadratureRule, TorusModel,
                       hirzebruch_trapezoid, integrate_boundary, integrate_polytope,
                       integrate_torus, interval, spectral_derivative, unit_square)
from calabilab.errors import ConfigurationError, DomainError

from helpers import bandlimited

X, Y = sp.symbols("x y")


def trapezoid_integral(expr):
    return sp.integrate(sp.integrate(expr, (X, 0, 2 - Y)), (Y, 0, 1))


def fd_second(f, h, axis):
    """Fourth-order central second difference on a periodic grid."""
    r = lambda s: np.roll(f, s, axis=axis)  # noqa: E731
    return (-r(2) + 16 * r(1) - 30 * f + 16 * r(-1) - r(-2)) / (12 * h * h)


# -- PeriodicField ----------------------------------------------------------------

def test_periodic_field_rejects_nonfinite_and_nonsquare():
    with pytest.raises(DomainError):
        PeriodicField(np.full((8, 8), np.nan))
    with pytest.raises(ConfigurationError):
        PeriodicField(np.zeros((8, 4)))


def test_periodic_field_values_are_read_only():
    f = PeriodicField(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


# -- spectral_derivative --------------------------------------------------------------

@pytest.mark.parametrize("index", [(1, 0), (0, 1), (2, 0), (1, 1), (2, 2), (0, 4)])
def test_derivative_of_constant_is_zero(index):
    f = PeriodicField(np.ones((32, 32)))
    assert np.abs(spectral_derivative(f, index).values).max() < 1e-14


def test_derivative_of_sine_mode():
    L1 = 3.0
    f = PeriodicField.from_function(lambda x, y: np.sin(2 * np.pi * x / L1), 32, (L1, 5.0))
    x, _ = f.coordinates()
    expected = (2 * np.pi / L1) * np.cos(2 * np.pi * x / L1)
    got = spectral_derivative(f, (1, 0)).values
    assert np.abs(got - expected).max() <= 1e-12 * np.abs(expected).max()


def test_mixed_fourth_derivative_matches_finite_difference_oracle():
    errors = []
    for n in (64, 128):
        m = TorusModel(n=n)
        phi = bandlimited(m, np.random.default_rng(4), band=3)
        spec = spectral_derivative(m.field(phi), (2, 2)).values
        h = 2 * np.pi / n
        fd = fd_second(fd_second(phi, h, 0), h, 1)
        errors.append(np.abs(spec - fd).max() / np.abs(spec).max())
    assert errors[0] < 1e-3
    # O(h^4): halving h divides the error by about 16
    assert errors[0] / errors[1] > 12


def test_derivative_errors():
    with pytest.raises(ConfigurationError):
        spectral_derivative(PeriodicField(np.zeros((12, 12))), (1, 0))
    with pytest.raises(DomainError):
        spectral_derivative(PeriodicField(np.zeros((8, 8))), (3, 2))
    with pytest.raises(DomainError):
        spectral_derivative(PeriodicField(np.zeros((8, 8))), (-1, 0))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_mixed_derivatives_commute(seed):
    m = TorusModel(n=32)
    f = m.field(bandlimited(m, np.random.default_rng(seed), band=5))
    direct = spectral_derivative(f, (1, 1)).values
    chained = spectral_derivative(spectral_derivative(f, (1, 0)), (0, 1)).values
    assert np.abs(direct - chained).max() <= 1e-13 * max(1.0, np.abs(direct).max())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), axis=st.sampled_from([(1, 0), (0, 1)]))
def test_integration_by_parts_on_torus(seed, axis):
    m = TorusModel(periods=(2.0, 5.0), n=32)
    rng = np.random.default_rng(seed)
    f, g = (m.field(bandlimited(m, rng, band=4)) for _ in range(2))
    a = integrate_torus(spectral_derivative(f, axis) * g)
    b = integrate_torus(f * spectral_derivative(g, axis))
    df = spectral_derivative(f, axis)
    scale = np.sqrt(integrate_torus(df * df) * integrate_torus(g * g))
    assert abs(a + b) <= 1e-10 * scale


# -- integrate_torus ------------------------------------------------------------------

def test_integrate_torus_volume_and_mean_zero_mode():
    periods = (2.0, 3.5)
    one = PeriodicField(np.ones((16, 16)), periods)
    assert integrate_torus(one, one) == pytest.approx(7.0, rel=1e-15)
    s = PeriodicField.from_function(lambda x, y: np.sin(2 * np.pi * x / 2.0), 16, periods)
    assert abs(integrate_torus(s, one)) < 1e-14


def test_integrate_torus_matches_oversampled_oracle():
    coarse, fine = TorusModel(n=32), TorusModel(n=256)
    f_c = bandlimited(coarse, np.random.default_rng(7), band=4, normalize=False)
    f_f = bandlimited(fine, np.random.default_rng(7), band=4, normalize=False)
    d_c = 20.0 + bandlimited(coarse, np.random.default_rng(8), band=4, normalize=False)
    d_f = 20.0 + bandlimited(fine, np.random.default_rng(8), band=4, normalize=False)
    got = integrate_torus(coarse.field(f_c), coarse.field(d_c))
    oracle = integrate_torus(fine.field(f_f), fine.field(d_f))
    assert abs(got - oracle) <= 1e-10 * max(1.0, abs(oracle))


def test_integrate_torus_rejects_nonpositive_density():
    f = PeriodicField(np.ones((8, 8)))
    d = np.ones((8, 8))
    d[3, 3] = 0.0
    with pytest.raises(DomainError):
        integrate_torus(f, PeriodicField(d))


# -- quadrature on polytopes ----------------------------------------------------------

@pytest.mark.parametrize("degree", [0, 3, 6, 9])
def test_exact_rule_integrates_monomials_on_trapezoid(degree):
    P = hirzebruch_trapezoid()
    rule = QuadratureRule.exact(P, degree)
    assert np.all(rule.weights >= 0) and np.all(rule.boundary_weights >= 0)
    for a in range(degree + 1):
        b = degree - a
        exact = float(trapezoid_integral(X**a * Y**b))
        got = integrate_polytope(lambda x, y: x**a * y**b, rule)
        assert got == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("n", [5, 9])
def test_grid_rule_exact_to_declared_order(n):
    grid = PolytopeGrid(unit_square(), n)
    assert np.all(grid.weights > 0)
    top = grid.order // 2
    for a in range(top + 1):
        for b in range(top + 1):
            got = grid.integrate(grid.coords[0] ** a * grid.coords[1] ** b)
            assert got == pytest.approx(1.0 / ((a + 1) * (b + 1)), rel=1e-12)
    g1 = PolytopeGrid(interval(), n)
    for a in range(g1.order + 1):
        assert g1.integrate(g1.coords[0] ** a) == pytest.approx(1.0 / (a + 1), rel=1e-12)


def test_grid_rule_on_trapezoid_integrates_polynomials():
    grid = PolytopeGrid(hirzebruch_trapezoid(), 9)
    x, y = grid.coords
    for a, b in [(0, 0), (1, 0), (0, 1), (2, 1), (3, 2)]:
        exact = float(trapezoid_integral(X**a * Y**b))
        assert grid.integrate(x**a * y**b) == pytest.approx(exact, rel=1e-12)


def test_integrate_polytope_examples():
    sq = PolytopeGrid(unit_square(), 9)
    assert integrate_polytope(sq.field(np.ones(sq.shape)), sq.rule) == pytest.approx(1.0, rel=1e-14)
    iv = PolytopeGrid(interval(), 9)
    assert integrate_polytope(iv.field(iv.coords[0]), iv.rule) == pytest.approx(0.5, rel=1e-14)
    P = hirzebruch_trapezoid()
    oracle = float(trapezoid_integral(X**2 * Y))
    assert oracle == pytest.approx(13 / 30)
    assert integrate_polytope(lambda x, y: x * x * y, QuadratureRule.exact(P, 3)) == pytest.approx(
        oracle, rel=1e-13)


def test_integrate_polytope_rejects_mismatched_rule():
    sq = PolytopeGrid(unit_square(), 5)
    with pytest.raises(ConfigurationError):
        integrate_polytope(sq.field(np.ones(sq.shape)), QuadratureRule.exact(hirzebruch_trapezoid()))
    other = PolytopeGrid(unit_square(), 7)
    with pytest.raises(ConfigurationError):
        integrate_polytope(sq.field(np.ones(sq.shape)), other.rule)


def test_integrate_boundary_examples():
    assert integrate_boundary(lambda x: np.ones_like(x), interval()) == 2.0
    assert integrate_boundary(lambda x, y: np.ones_like(x), unit_square()) == pytest.approx(4.0)
    assert integrate_boundary(lambda x, y: x, unit_square()) == pytest.approx(2.0, rel=1e-14)


def test_boundary_measure_weights_facets_by_normal_length():
    # the slanted edge of the trapezoid has normal (-1, -1): length sqrt 2 / sqrt 2 = 1
    P = hirzebruch_trapezoid()
    assert integrate_boundary(lambda x, y: np.ones_like(x), P) == pytest.approx(5.0, rel=1e-14)
    # facet-by-facet oracle for f = x: bottom 2, slant int_0^1 (2 - t) dt = 3/2, top 1/2, left 0
    assert integrate_boundary(lambda x, y: x, P) == pytest.approx(4.0, rel=1e-14)


def test_integrate_boundary_rejects_nonprimitive_normal():
    P = unit_square()
    P.normals = P.normals * 2
    with pytest.raises(ConfigurationError):
        integrate_boundary(lambda x, y: x, P)


@pytest.mark.parametrize("poly", [interval(), unit_square(), hirzebruch_trapezoid()])
def test_grid_nodes_lie_inside_polytope(poly):
    grid = PolytopeGrid(poly, 11)
    pts = np.stack([c.ravel() for c in grid.coords], axis=-1)
    assert np.all(poly.facet_values(pts) > 0)


def test_polytope_field_rejects_nonfinite():
    grid = PolytopeGrid(interval(), 5)
    with pytest.raises(DomainError):
        grid.field(np.full(grid.shape, np.inf))
