"""Experiment orchestration behind the command-line interface."""

from dataclasses import dataclass, replace
import hashlib
from importlib import resources
import logging
from pathlib import Path

import numpy as np

from . import __version__, functionals, io, spectral_gap
from .errors import CalabiLabError, FlowStalled
from .flow import energy_decay_identity_check, integrate_fixed, run
from .initial_data import initial_potential, initial_state
from .polytope import Polytope
from .toric import AffineFunction, toric_model
from .torus import TorusModel, ricci_identity_residual

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_STALLED = 0, 1, 2


def conventions_hash():
    """sha256 of the packaged conventions document."""
    text = resources.files("calabilab").joinpath("CONVENTIONS.md").read_bytes()
    return hashlib.sha256(text).hexdigest()


def build_model(cfg):
    tb = cfg.testbed
    if tb["kind"] == "torus":
        return TorusModel(tb["periods"], tb["n"])
    return toric_model(Polytope.from_file(tb["polytope"]), tb["n"])


def build_initial_state(cfg, model=None):
    model = build_model(cfg) if model is None else model
    ini = cfg.initial
    values = initial_potential(model, ini["preset"], seed=ini["seed"], eps=ini["epsilon"],
                               k=ini["k"], band=ini["band"], degree=ini["degree"],
                               margin=ini["margin"])
    return initial_state(model, values, cfg.flow.positivity_margin)


@dataclass
class ExperimentResult:
    status: int
    summary: dict
    trace: object
    state: object
    out_dir: Path


class _Checks:
    def __init__(self):
        self.items = {}

    def add(self, name, passed, **detail):
        self.items[name] = {"passed": bool(passed), **detail}
        log.info("check %-14s %s", name, "pass" if passed else "FAIL")

    def fail(self, name, exc):
        self.items[name] = {"passed": False, "error": str(exc)}

    @property
    def all_passed(self):
        return all(v["passed"] for v in self.items.values())


def _monotone(energy, rtol=1e-12):
    return bool(np.all(energy[1:] <= energy[:-1] * (1.0 + rtol)))


def _state_at(state, potential):
    return state.with_potential(potential)


def _gap_diagnostics(trace, state, stride):
    """Gap at every ``stride``-th snapshot and at the last one; fills the lambda1 column."""
    snaps = trace.snapshots
    picks = sorted(set(range(0, len(snaps), stride)) | {len(snaps) - 1})
    by_step = {r.step: r for r in trace.accepted}
    times, gaps, reports = [], [], []
    for i in picks:
        s = snaps[i]
        rep = spectral_gap.min_eigenvalue(_state_at(state, s.potential))
        times.append(s.t)
        gaps.append(rep.lambda1)
        reports.append(rep)
        if s.step in by_step:
            by_step[s.step].lambda1 = rep.lambda1
    return np.array(times), np.array(gaps), reports


def _mid_snapshot(trace, eps_stop):
    """Snapshot whose energy is closest (in log) to the geometric mean of start and eps_stop."""
    energy_at = dict(zip(trace.column("step").astype(int), trace.energy()))
    e0 = trace.energy()[0]
    target = 0.5 * (np.log(e0) + np.log(max(eps_stop, 1e-300)))
    best, err = None, np.inf
    for s in trace.snapshots:
        e = energy_at.get(s.step)
        if e is None or e <= 0:
            continue
        d = abs(np.log(e) - target)
        if d < err:
            best, err = s, d
    return best


def run_experiment(cfg, write=True):
    """Run the flow and the enabled diagnostics; write artifacts into ``cfg.output_dir``."""
    model = build_model(cfg)
    state0 = build_initial_state(cfg, model)
    diag = cfg.diagnostics
    eps_stop = cfg.flow.eps_stop
    flow_cfg = cfg.flow
    if diag["sobolev"]:
        # continue past eps_stop so the terminal state can stand in for psi_inf
        flow_cfg = replace(flow_cfg, eps_stop=min(eps_stop, diag["sobolev_eps"]))
    stalled, stall_msg = False, None
    try:
        trace, final = run(state0, flow_cfg)
    except FlowStalled as exc:
        stalled, stall_msg = True, str(exc)
        trace, final = exc.trace, exc.state
    energy = trace.energy()
    times = trace.times
    below = np.flatnonzero(energy < eps_stop)
    stationary = energy[0] < eps_stop
    checks = _Checks()
    checks.add("flow", not stalled and below.size > 0, status=trace.status,
               final_energy=float(energy[-1]), eps_stop=eps_stop)
    checks.add("monotone", _monotone(energy), rejections=trace.rejections)
    summary = {
        "version": __version__,
        "conventions_sha256": conventions_hash(),
        "config": cfg.as_dict(),
        "testbed": model.testbed,
        "model": repr(model),
        "status": "stalled" if stalled else trace.status,
        "stall_message": stall_msg,
        "accepted_steps": len(trace) - 1,
        "rejected_steps": trace.rejections,
        "t_final": float(times[-1]),
        "t_converged": float(times[below[0]]) if below.size else None,
        "energy_initial": float(energy[0]),
        "energy_final": float(energy[-1]),
        "energy_kind": trace.kind,
        "units": io.UNITS,
    }
    figures = {}
    out = Path(cfg.output_dir)
    if write:
        (out / "figures").mkdir(parents=True, exist_ok=True)

    if not stalled:
        lam_final = None
        if diag["gap"]:
            try:
                gt, gaps, reports = _gap_diagnostics(trace, final, diag["gap_stride"])
                lam_final = float(gaps[-1])
                info = {"min": float(gaps.min()), "final": lam_final, "count": int(len(gaps)),
                        "max_residual": float(max(r.residual for r in reports)),
                        "max_constraint_violation": float(max(
                            max(r.mean_violation, r.orthogonality_violation) for r in reports))}
                if model.testbed == "torus":
                    info["flat_symbol"] = model.lowest_symbol()
                summary["gap"] = info
                checks.add("gap", gaps.min() > 0, **info)
                if write and diag["plots"]:
                    figures["gap"] = io_path(out, "gap.png")
                    from .plotting import plot_gap
                    plot_gap(gt, gaps, figures["gap"], info.get("flat_symbol"))
            except CalabiLabError as exc:
                checks.fail("gap", exc)
        fit = None
        if diag["rate_fit"] and not stationary:
            try:
                if lam_final is None:
                    lam_final = spectral_gap.min_eigenvalue(final).lambda1
                fit = spectral_gap.fit_decay_rate(trace, "mCa" if trace.kind == "modified" else "Ca")
                rel = abs(fit.rate - 2 * lam_final) / (2 * lam_final)
                detail = {"rate": fit.rate, "two_lambda1": 2 * lam_final, "relative_error": rel,
                          "window": [fit.t_a, fit.t_b], "samples": fit.n_samples,
                          "rms_residual": fit.rms_residual}
                checks.add("rate_vs_gap", rel <= diag["rate_tolerance"], **detail)
                dfit = spectral_gap.fit_decay_rate(trace, "dist_c0", floor=0.0)
                drel = abs(dfit.rate - 0.5 * fit.rate) / (0.5 * fit.rate)
                checks.add("distance_rate", drel <= diag["distance_rate_tolerance"],
                           rate=dfit.rate, half_energy_rate=0.5 * fit.rate, relative_error=drel,
                           window=[dfit.t_a, dfit.t_b], samples=dfit.n_samples)
            except CalabiLabError as exc:
                checks.fail("rate_vs_gap" if fit is None else "distance_rate", exc)
        if diag["sobolev"] and not stationary:
            try:
                rep = spectral_gap.sobolev_decay_check(
                    trace, final, diag["k_max"], tolerance=diag["sobolev_tolerance"],
                    energy_window=diag["sobolev_energy_window"])
                checks.add("sobolev", rep.passed, rates=rep.rates, spread=rep.spread,
                           windows=[[f.t_a, f.t_b] for f in rep.fits])
                if write and diag["plots"]:
                    from .plotting import plot_sobolev
                    st, norms = spectral_gap.sobolev_norms(trace, final, k_max=diag["k_max"])
                    figures["sobolev"] = io_path(out, "sobolev.png")
                    plot_sobolev(st, norms, figures["sobolev"])
            except CalabiLabError as exc:
                checks.fail("sobolev", exc)
        if diag["identity"] and not stationary:
            try:
                snap = _mid_snapshot(trace, eps_stop)
                mid = _state_at(final, snap.potential)
                h = diag["identity_dt"]
                states = integrate_fixed(mid, h, 2, cfg.flow.scheme, trace.kind)
                window = [(snap.t + i * h, s.energy) for i, s in enumerate(states)]
                rep = energy_decay_identity_check(window, states, trace.kind)
                checks.add("identity", rep.relative_discrepancy <= diag["identity_tolerance"],
                           t=rep.t_mid, fd=rep.derivative_fd, predicted=rep.derivative_identity,
                           relative_discrepancy=rep.relative_discrepancy)
            except CalabiLabError as exc:
                checks.fail("identity", exc)
        if diag["futaki"] and model.testbed == "toric":
            vals = np.concatenate([trace.column("futaki_1"), trace.column("futaki_2")])
            vals = vals[np.isfinite(vals)]
            worst = float(np.abs(vals).max()) if vals.size else 0.0
            checks.add("futaki", worst < 1e-6, max_abs_modified_futaki=worst)
        if fit is not None:
            summary["rate"] = {"quantity": fit.quantity, "rate": fit.rate}
        if write and diag["plots"]:
            from .plotting import plot_energy, plot_timestep
            figures["energy"] = plot_energy(trace, io_path(out, "energy.png"), fit)
            figures["timestep"] = plot_timestep(trace, io_path(out, "timestep.png"))

    summary["checks"] = checks.items
    status = EXIT_STALLED if stalled else (EXIT_OK if checks.all_passed else EXIT_FAILED)
    summary["exit_status"] = status
    if write:
        io.write_trace_csv(trace, out / "trace.csv")
        if diag["write_snapshots"]:
            snapdir = out / "snapshots"
            snapdir.mkdir(exist_ok=True)
            for s in trace.snapshots:
                io.write_snapshot(snapdir / f"step_{s.step:07d}.cfl", s.potential, s.t)
        summary["figures"] = {k: str(Path(v).relative_to(out)) for k, v in figures.items()}
        io.write_summary(summary, out / "summary.json")
    return ExperimentResult(status, summary, trace, final, out)


def io_path(out, name):
    return Path(out) / "figures" / name


# ---------------------------------------------------------------------------
# invariant suite (no flow)
# ---------------------------------------------------------------------------

def invariant_suite(cfg, n_random=5, seed=0):
    """Structural checks on the configured initial state; returns [(name, passed, value)]."""
    model = build_model(cfg)
    state = build_initial_state(cfg, model)
    rng = np.random.default_rng(seed)
    w = state.volume_weights
    out = []

    def add(name, value, ok):
        out.append((name, bool(ok), float(value)))

    if model.testbed == "torus":
        x, y = model.coordinates()
        add("volume", abs(w.sum() - model.volume) / model.volume,
            abs(w.sum() - model.volume) < 1e-10 * model.volume)
        gb = abs(np.sum(state.S * w))
        add("gauss_bonnet", gb, gb < 1e-8 * model.volume)
        fields = []
        for _ in range(n_random):
            f = np.zeros_like(x)
            for k1, k2 in rng.integers(-4, 5, size=(6, 2)):
                f += rng.standard_normal() * np.cos(k1 * x + k2 * y + rng.uniform(0, 6.3))
            fields.append(f)
        ricci = max(ricci_identity_residual(state, f) for f in fields)
        add("ricci_identity", ricci, ricci < 1e-7)
    else:
        pol = model.polytope
        bq = pol.boundary_quadrature(8)
        rel = 0.0
        for Lfun in [lambda *c: np.ones_like(c[0])] + [
                (lambda *c, j=j: c[j]) for j in range(model.dim)]:
            lhs = float(np.sum(state.S * Lfun(*model.grid.coords) * w))
            rhs = 2.0 * float(np.sum(Lfun(*bq[0].T) * bq[1]))
            rel = max(rel, abs(lhs - rhs) / max(abs(rhs), 1.0))
        add("boundary_representation", rel, rel < 1e-6)
        fut = max([abs(functionals.modified_futaki(state, Y)) for Y in model.basis] or [0.0])
        add("modified_futaki", fut, fut < 1e-6)
    fs = [rng.standard_normal(state.shape) for _ in range(2)]
    if model.testbed == "torus":
        fs = [np.fft.ifft2(np.fft.fft2(f) * (model.k2 < 64)).real for f in fs]
    a = np.sum(state.lichnerowicz(fs[0]) * fs[1] * w)
    b = np.sum(fs[0] * state.lichnerowicz(fs[1]) * w)
    adj = abs(a - b) / max(abs(a), abs(b), 1e-300)
    add("adjointness", adj, adj < 1e-9)
    psd = min(np.sum(state.lichnerowicz(f) * f * w) for f in fs)
    add("semidefinite", psd, psd >= -1e-10)
    gap = spectral_gap.min_eigenvalue(state).lambda1
    add("gap_positive", gap, gap > 0)
    return out


def futaki_report(polytope, n=None):
    """theta_X, Futaki invariants and the B matrix on the coordinate basis.

    Exact values use the boundary representation int S L dmu = 2 int_{dP} L dsigma
    and polynomial quadrature, so they hold for every potential.  When the
    polytope has a grid (interval or quadrilateral) the same numbers are also
    evaluated by quadrature at the canonical potential.
    """
    from .functionals import bilinear_B, futaki, modified_futaki
    from .toric import SymplecticPotential, affine_basis, extremal_affine_function

    theta = extremal_affine_function(polytope)
    sbar = 2.0 * polytope.boundary_measure / polytope.volume
    basis = affine_basis(polytope.dim)
    bx, bw = polytope.boundary_quadrature(4)
    qx, qw = polytope.quadrature(4)
    cent = [Y.centered(polytope) for Y in basis]
    F = [2.0 * float(np.sum(c(*bx.T) * bw)) for c in cent]
    B = [[float(np.sum(a(*qx.T) * b(*qx.T) * qw)) for b in cent] for a in cent]
    tx = AffineFunction(theta.constant, theta.gradient).centered(polytope)
    BX = [float(np.sum(tx(*qx.T) * c(*qx.T) * qw)) for c in cent]
    rep = {"theta_X": {"constant": theta.constant, "gradient": list(theta.gradient)},
           "Sbar": sbar,
           "symmetric": bool(np.all(np.abs(theta.gradient) < 1e-10)),
           "futaki_exact": F, "B_exact": B,
           "modified_futaki_exact": [f - b for f, b in zip(F, BX)]}
    if polytope.dim == 1 or len(polytope.vertices) == 4:
        u = SymplecticPotential(toric_model(polytope, n or (129 if polytope.dim == 1 else 33)))
        rep["futaki_grid"] = [futaki(u, Y) for Y in u.model.basis]
        rep["modified_futaki_grid"] = [modified_futaki(u, Y) for Y in u.model.basis]
        rep["B_grid"] = [[bilinear_B(u, X, Y) for Y in u.model.basis] for X in u.model.basis]
    return rep
