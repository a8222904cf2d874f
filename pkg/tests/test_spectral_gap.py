import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calabilab import (FlowConfig, MetricState, SymplecticPotential, TorusModel, fit_decay_rate,
                       interval, min_eigenvalue, project_At, run, sobolev_decay_check,
                       toric_model)
from calabilab.errors import ConfigurationError, ConvergenceError
from calabilab.spectral_gap import fit_exponential

from helpers import bandlimited, curved_potential, perturbed


def weighted_inner(state, a, b):
    return float(np.sum(a * b * state.volume_weights))


# -- projection onto A_t --------------------------------------------------------------

def test_projection_kills_constants_and_coordinates(torus32, trapezoid_model):
    s = MetricState(torus32, curved_potential(torus32, np.random.default_rng(0)))
    assert np.abs(project_At(np.full(s.shape, 3.0), s)).max() < 1e-13
    u = perturbed(trapezoid_model, 0)
    for c in trapezoid_model.grid.coords:
        assert np.abs(project_At(c, u)).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_projection_idempotent_and_self_adjoint(seed):
    model = toric_model(interval(), 33)
    rng = np.random.default_rng(seed)
    for s in (perturbed(model, seed % 1000), MetricState(TorusModel(n=16), curved_potential(
            TorusModel(n=16), rng))):
        f, g = rng.standard_normal((2,) + s.shape)
        Pf = project_At(f, s)
        assert np.abs(project_At(Pf, s) - Pf).max() < 1e-12 * np.abs(Pf).max()
        a, b = weighted_inner(s, Pf, g), weighted_inner(s, f, project_At(g, s))
        assert abs(a - b) < 1e-11 * max(1.0, abs(a))


def test_projection_keeps_field_type(torus32):
    s = MetricState(torus32, np.zeros((32, 32)))
    out = project_At(torus32.field(np.ones((32, 32))), s)
    assert type(out) is type(torus32.field(np.ones((32, 32))))


# -- min_eigenvalue -------------------------------------------------------------------

def test_flat_torus_gap_is_lowest_symbol():
    m = TorusModel(periods=(2 * np.pi, 3.0), n=32)
    rep = min_eigenvalue(MetricState(m, np.zeros((32, 32))))
    assert rep.lambda1 == pytest.approx(m.lowest_symbol(), rel=1e-6)
    assert rep.residual < 1e-8
    assert rep.mean_violation < 1e-10


def test_gap_with_lowest_modes_removed_is_next_symbol(torus32):
    x, y = torus32.coordinates()
    extra = [np.cos(x), np.sin(x), np.cos(y), np.sin(y)]
    rep = min_eigenvalue(MetricState(torus32, np.zeros((32, 32))), extra=extra)
    assert rep.lambda1 == pytest.approx(torus32.mode_symbol(1, 1), rel=1e-6)
    assert rep.lambda1 == pytest.approx(0.25, rel=1e-6)


def test_toric_interval_gap_positive_and_refinement_stable():
    values = [min_eigenvalue(SymplecticPotential(toric_model(interval(), n))).lambda1
              for n in (33, 65)]
    assert values[0] > 0
    assert values[1] == pytest.approx(values[0], rel=5e-4)


def test_toric_gap_report_constraints(trapezoid_model):
    rep = min_eigenvalue(perturbed(trapezoid_model, 3))
    assert rep.lambda1 > 0
    assert rep.mean_violation < 1e-10 and rep.orthogonality_violation < 1e-10


def test_rayleigh_quotient_lower_bound(torus32):
    s = MetricState(torus32, curved_potential(torus32, np.random.default_rng(4), 0.5))
    lam = min_eigenvalue(s).lambda1
    rng = np.random.default_rng(5)
    for _ in range(100):
        f = project_At(bandlimited(torus32, rng, 6), s)
        num = weighted_inner(s, s.lichnerowicz(f), f)
        assert num >= (lam - 1e-8) * weighted_inner(s, f, f)


def test_nonconvergence_reports_last_quotient(torus32):
    s = MetricState(torus32, curved_potential(torus32, np.random.default_rng(6)))
    with pytest.raises(ConvergenceError) as err:
        min_eigenvalue(s, max_iter=1, tol=0.0)
    assert np.isfinite(err.value.last_value)


# -- rate fits ------------------------------------------------------------------------

def test_synthetic_exponential_rate():
    t = np.linspace(0, 5, 200)
    fit = fit_decay_rate((t, 7 * np.exp(-3 * t)))
    assert fit.rate == pytest.approx(3.0, abs=1e-6)
    assert fit.n_samples >= 20 and fit.rms_residual < 1e-10


def test_fit_needs_twenty_samples():
    t = np.linspace(0, 1, 10)
    with pytest.raises(ConfigurationError):
        fit_exponential(t, np.exp(-t))


def test_fit_refuses_unconverged_trace(torus32):
    s = MetricState(torus32, bandlimited(torus32, np.random.default_rng(7), 2, 1e-3))
    trace, _ = run(s, FlowConfig(dt_init=0.5, dt_max=0.5, t_max=5.0))
    with pytest.raises(ConfigurationError):
        fit_decay_rate(trace, eps_stop=1e-12)


@pytest.fixture(scope="module")
def converged_torus_run():
    m = TorusModel(n=32)
    s = MetricState(m, bandlimited(m, np.random.default_rng(8), 2, 1e-3))
    cfg = FlowConfig(dt_init=0.5, dt_max=0.5, eps_stop=1e-20, snapshot_stride=1)
    return s, *run(s, cfg)


def test_energy_and_distance_rates_match_gap(converged_torus_run):
    s, trace, _ = converged_torus_run
    lam = min_eigenvalue(s).lambda1
    ca = fit_decay_rate(trace, "Ca", eps_stop=1e-12)
    assert 1.8 * lam <= ca.rate <= 2.2 * lam
    c0 = fit_decay_rate(trace, "dist_c0", floor=1e-12)
    assert c0.rate == pytest.approx(ca.rate / 2, rel=0.15)


def test_sobolev_rates_agree(converged_torus_run):
    _, trace, final = converged_torus_run
    rep = sobolev_decay_check(trace, final, 4)
    assert rep.passed and len(rep.rates) == 5 and min(rep.rates) > 0


def test_single_mode_sobolev_rates_equal_symbol():
    m = TorusModel(n=32)
    x, _ = m.coordinates()
    s = MetricState(m, 1e-3 * np.cos(x))
    cfg = FlowConfig(dt_init=0.5, dt_max=0.5, eps_stop=1e-20, snapshot_stride=1)
    trace, final = run(s, cfg)
    rep = sobolev_decay_check(trace, final, 4)
    for r in rep.rates:
        assert r == pytest.approx(m.mode_symbol(1, 0), rel=1e-3)


def test_sobolev_stationary_run_is_at_floor(torus32):
    s = MetricState(torus32, np.zeros((32, 32)))
    trace, final = run(s, FlowConfig(snapshot_stride=1))
    trace.snapshots.append(trace.snapshots[-1])
    rep = sobolev_decay_check(trace, final)
    assert rep.stationary and rep.passed


def test_sobolev_needs_snapshots(torus32):
    s = MetricState(torus32, np.zeros((32, 32)))
    trace, final = run(s, FlowConfig())
    with pytest.raises(ConfigurationError):
        sobolev_decay_check(trace, final)
