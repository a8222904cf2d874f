"""Calabi flow and modified Calabi flow on both testbeds.

Torus: phi_t = S(phi) (Sbar = 0 and no extremal field, so both flows agree).
Its linearization at the flat metric is phi_t = -lap^2 phi / 16, which is the
stiff part handled implicitly (imex-bilaplacian) or exactly (etd).

Toric, in momentum coordinates with u = u0 + f:
    calabi      f_t = Sbar - S(u)
    modified    f_t = theta_X - S(u)
The derivative of S with respect to f is +L, so both are dissipative.  There
is no constant-coefficient part, so the implicit schemes use the current
Lichnerowicz stiffness (linearly implicit Euler / exponential Euler).

Every step is accepted only if the flow's energy does not increase beyond
a relative 1e-12 and positivity holds; otherwise dt is halved.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import logging

import numpy as np
import scipy.linalg

from . import functionals
from .errors import (CalabiLabError, ConfigurationError, DomainError, FlowStalled,
                     PositivityError, StepRejected)

log = logging.getLogger(__name__)

SCHEMES = ("explicit-rk4", "imex-bilaplacian", "etd")
KINDS = ("modified", "calabi")


@dataclass
class FlowConfig:
    """Time-stepping parameters; validated on construction."""

    scheme: str = "etd"
    kind: str = "modified"
    dt_init: float = 0.1
    dt_min: float = 1e-12
    dt_max: float = 0.5
    t_max: float = 1e3
    eps_stop: float = 1e-12
    positivity_margin: float = 1e-6
    cadence: int = 1
    snapshot_stride: int = 10
    max_steps: int = 200000
    energy_rtol: float = 1e-12
    grow_after: int = 10
    grow_factor: float = 1.25

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def validate(self):
        errs = []
        if self.scheme not in SCHEMES:
            errs.append(f"scheme must be one of {', '.join(SCHEMES)}")
        if self.kind not in KINDS:
            errs.append(f"kind must be one of {', '.join(KINDS)}")
        for name in ("dt_init", "dt_min", "dt_max", "t_max", "eps_stop", "positivity_margin"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                errs.append(f"{name} must be positive")
        if not errs and not self.dt_min <= self.dt_init <= self.dt_max:
            errs.append("need dt_min <= dt_init <= dt_max")
        for name in ("cadence", "snapshot_stride", "max_steps", "grow_after"):
            if int(getattr(self, name)) < 1:
                errs.append(f"{name} must be a positive integer")
        if not self.grow_factor >= 1.0:
            errs.append("grow_factor must be >= 1")
        if not self.energy_rtol >= 0.0:
            errs.append("energy_rtol must be nonnegative")
        return errs


TRACE_COLUMNS = ("step", "t", "dt", "Ca", "mCa", "max_residual", "dist_c0", "dist_l2",
                 "positivity_margin", "futaki_1", "futaki_2", "lambda1", "accepted")


@dataclass
class TraceRecord:
    step: int
    t: float
    dt: float
    Ca: float
    mCa: float
    max_residual: float
    dist_c0: float
    dist_l2: float
    positivity_margin: float
    futaki_1: float = float("nan")
    futaki_2: float = float("nan")
    lambda1: float = float("nan")
    accepted: bool = True

    def row(self):
        return [getattr(self, c) for c in TRACE_COLUMNS]


@dataclass
class Snapshot:
    step: int
    t: float
    potential: np.ndarray


@dataclass
class FlowTrace:
    """Diagnostics of a run: one record per attempted step and stored snapshots."""

    kind: str = "modified"
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: str = "running"
    rejections: int = 0

    @property
    def accepted(self):
        return [r for r in self.records if r.accepted]

    def column(self, name, accepted_only=True):
        recs = self.accepted if accepted_only else self.records
        return np.array([getattr(r, name) for r in recs], dtype=float)

    @property
    def times(self):
        return self.column("t")

    def energy(self):
        return self.column("mCa" if self.kind == "modified" else "Ca")

    @property
    def final(self):
        return self.accepted[-1]

    def __len__(self):
        return len(self.accepted)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def _rhs_values(state, kind, theta_X=None):
    if state.testbed == "torus":
        return np.asarray(state.S)
    if kind == "calabi":
        return state.model.average_scalar_curvature - state.S
    theta = functionals._theta_for(state, theta_X)
    return -state.residual(theta)


def _field(state, values):
    return state.model.field(values) if state.testbed == "torus" else state.grid.field(values)


def calabi_rhs(state):
    """Torus: S - Sbar.  Toric: Sbar - S(u) (Legendre-dual sign)."""
    return _field(state, _rhs_values(state, "calabi"))


def modified_rhs(state, theta_X=None):
    """Torus: same as :func:`calabi_rhs`.  Toric: theta_X - S(u)."""
    if state.testbed == "toric":
        functionals._theta_for(state, theta_X)
    return _field(state, _rhs_values(state, "modified", theta_X))


def flow_energy(state, kind, theta_X=None):
    """The Lyapunov functional of the chosen flow (Ca or the modified energy)."""
    if kind == "calabi":
        return functionals.calabi_energy(state).value
    return functionals.modified_calabi_energy(state, theta_X).value


# ---------------------------------------------------------------------------
# torus schemes
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _etdrk4_coefficients(model, dt, n_contour=32):
    """Kassam-Trefethen contour evaluation of the ETDRK4 phi-functions."""
    c = -model.lichnerowicz_symbol * dt
    r = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    LR = c[..., None] + r
    eLR = np.exp(LR)
    Q = dt * np.mean((np.exp(LR / 2) - 1.0) / LR, axis=-1).real
    f1 = dt * np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=-1).real
    f2 = dt * np.mean((2.0 + LR + eLR * (-2.0 + LR)) / LR**3, axis=-1).real
    f3 = dt * np.mean((-4.0 - 3.0 * LR - LR**2 + eLR * (4.0 - LR)) / LR**3, axis=-1).real
    return np.exp(c), np.exp(c / 2), Q, f1, f2, f3


def _stage(state, values):
    try:
        return state.with_potential(values)
    except (PositivityError, DomainError) as exc:
        raise StepRejected(f"positivity lost inside the step: {exc}") from None


def _torus_nonlinear_hat(state):
    """FFT of S + lichnerowicz_symbol * phi (the part left after removing -lap^2/16)."""
    m = state.model
    return np.fft.fft2(state.S) + m.lichnerowicz_symbol * np.fft.fft2(state.phi)


def _torus_step(state, dt, scheme):
    m = state.model
    if scheme == "explicit-rk4":
        return _rk4(state, dt, lambda s: np.asarray(s.S))
    v = np.fft.fft2(state.phi)
    if scheme == "imex-bilaplacian":
        new = (v + dt * _torus_nonlinear_hat(state)) / (1.0 + dt * m.lichnerowicz_symbol)
        return _stage(state, np.fft.ifft2(new).real)
    E, E2, Q, f1, f2, f3 = _etdrk4_coefficients(m, float(dt))
    Nv = _torus_nonlinear_hat(state)
    a = E2 * v + Q * Nv
    sa = _stage(state, np.fft.ifft2(a).real)
    Na = _torus_nonlinear_hat(sa)
    b = E2 * v + Q * Na
    sb = _stage(state, np.fft.ifft2(b).real)
    Nb = _torus_nonlinear_hat(sb)
    c = E2 * a + Q * (2.0 * Nb - Nv)
    sc = _stage(state, np.fft.ifft2(c).real)
    Nc = _torus_nonlinear_hat(sc)
    new = E * v + Nv * f1 + 2.0 * (Na + Nb) * f2 + Nc * f3
    return _stage(state, np.fft.ifft2(new).real)


def _rk4(state, dt, rhs):
    y = state.phi
    k1 = rhs(state)
    k2 = rhs(_stage(state, y + 0.5 * dt * k1))
    k3 = rhs(_stage(state, y + 0.5 * dt * k2))
    k4 = rhs(_stage(state, y + dt * k3))
    return _stage(state, y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


# ---------------------------------------------------------------------------
# toric schemes
# ---------------------------------------------------------------------------

def _phi1(z):
    """(exp(z) - 1) / z, evaluated stably including z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def _toric_step(state, dt, scheme, kind, theta_X):
    def rhs(s):
        return _rhs_values(s, kind, theta_X)

    if scheme == "explicit-rk4":
        return _rk4(state, dt, rhs)
    r = rhs(state)
    w = state.grid.weights.ravel()
    K = state.lichnerowicz_stiffness()
    if scheme == "imex-bilaplacian":
        A = K + np.diag(w / dt)
        delta = scipy.linalg.solve(A, w * r.ravel(), assume_a="sym")
    else:
        # exponential Euler with the frozen symmetric operator W^{-1/2} K W^{-1/2}
        sw = np.sqrt(w)
        lam, V = scipy.linalg.eigh(K / np.outer(sw, sw))
        lam = np.maximum(lam, 0.0)
        coef = V.T @ (sw * r.ravel())
        delta = (V @ (dt * _phi1(-dt * lam) * coef)) / sw
    return _stage(state, state.f + delta.reshape(state.shape))


# ---------------------------------------------------------------------------
# stepping and the run loop
# ---------------------------------------------------------------------------

def step(state, dt, scheme="etd", kind="modified", theta_X=None, energy=None, energy_rtol=1e-12):
    """One time step; raises :class:`StepRejected` on positivity loss or energy increase.

    ``energy`` is the current flow energy if already known.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    if kind not in KINDS:
        raise ConfigurationError(f"unknown flow kind {kind!r}")
    if energy is None:
        energy = flow_energy(state, kind, theta_X)
    with np.errstate(over="ignore", invalid="ignore"):
        if state.testbed == "torus":
            new = _torus_step(state, dt, scheme)
        else:
            new = _toric_step(state, dt, scheme, kind, theta_X)
    new_energy = flow_energy(new, kind, theta_X)
    if not np.isfinite(new_energy) or new_energy > energy * (1.0 + energy_rtol):
        raise StepRejected(f"energy increased from {energy:.6e} to {new_energy:.6e}")
    new.energy = new_energy
    return new


def _record(state, step_no, t, dt, kind, accepted=True):
    ca = functionals.calabi_energy(state).value
    mca = ca if state.testbed == "torus" else functionals.modified_calabi_energy(state).value
    res = state.residual(None if state.testbed == "torus" else state.model.theta_X)
    c0, l2 = state.distance_to_reference()
    fut = [float("nan")] * 2
    if state.testbed == "toric":
        for j, Y in enumerate(state.model.basis):
            fut[j] = functionals.modified_futaki(state, Y)
    return TraceRecord(step_no, float(t), float(dt), ca, mca, float(np.abs(res).max()),
                       c0, l2, state.positivity_margin, fut[0], fut[1], accepted=accepted)


def run(state, config, theta_X=None):
    """Integrate until the flow energy drops below ``eps_stop`` or t reaches ``t_max``.

    Returns ``(trace, terminal_state)``; raises :class:`FlowStalled` (carrying
    the partial trace and last state) when dt falls below ``dt_min``.
    """
    if state.delta_pos != config.positivity_margin:
        state = _rebuild(state, config.positivity_margin)
    kind = config.kind
    trace = FlowTrace(kind=kind)
    energy = flow_energy(state, kind, theta_X)
    t, dt, streak, n = 0.0, config.dt_init, 0, 0
    trace.records.append(_record(state, 0, 0.0, 0.0, kind))
    trace.snapshots.append(Snapshot(0, 0.0, np.array(state.phi)))
    while energy >= config.eps_stop:
        if t >= config.t_max * (1 - 1e-14):
            trace.status = "t_max"
            break
        if n >= config.max_steps:
            trace.status = "max_steps"
            break
        h = min(dt, config.t_max - t)
        try:
            new = step(state, h, config.scheme, kind, theta_X, energy, config.energy_rtol)
        except StepRejected as exc:
            trace.rejections += 1
            rec = trace.records[-1]
            trace.records.append(TraceRecord(rec.step, rec.t, h, rec.Ca, rec.mCa, rec.max_residual,
                                             rec.dist_c0, rec.dist_l2, rec.positivity_margin,
                                             rec.futaki_1, rec.futaki_2, accepted=False))
            log.debug("step rejected at t=%.6g dt=%.3g: %s", t, h, exc.reason)
            dt = 0.5 * h
            streak = 0
            if dt < config.dt_min:
                trace.status = "stalled"
                raise FlowStalled(f"dt fell below dt_min = {config.dt_min:g} at t = {t:.6g} "
                                  f"({exc.reason})", trace=trace, state=state) from None
            continue
        n += 1
        t += h
        state, energy = new, new.energy
        streak += 1
        if streak >= config.grow_after:
            dt = min(dt * config.grow_factor, config.dt_max)
            streak = 0
        if n % config.cadence == 0 or energy < config.eps_stop:
            trace.records.append(_record(state, n, t, h, kind))
        if n % config.snapshot_stride == 0:
            trace.snapshots.append(Snapshot(n, t, np.array(state.phi)))
    else:
        trace.status = "converged"
    if trace.snapshots[-1].step != n:
        trace.snapshots.append(Snapshot(n, t, np.array(state.phi)))
    if trace.records[-1].step != n or not trace.records[-1].accepted:
        trace.records.append(_record(state, n, t, trace.records[-1].dt, kind))
    return trace, state


def _rebuild(state, delta_pos):
    cls = type(state)
    return cls(state.model, state.phi, delta_pos)


def integrate_fixed(state, dt, n_steps, scheme="etd", kind="modified", theta_X=None):
    """Take ``n_steps`` steps of size ``dt`` (no step-size control); returns the states.

    Raises :class:`CalabiLabError` if any step is rejected.
    """
    states = [state]
    energy = flow_energy(state, kind, theta_X)
    states[0].energy = energy
    for i in range(int(n_steps)):
        try:
            new = step(states[-1], dt, scheme, kind, theta_X, energy)
        except StepRejected as exc:
            raise CalabiLabError(f"fixed-step window rejected at step {i}: {exc.reason}") from None
        energy = new.energy
        states.append(new)
    return states


@dataclass(frozen=True)
class IdentityReport:
    derivative_fd: float
    derivative_identity: float
    relative_discrepancy: float
    t_mid: float


def dissipation(state, kind="modified", theta_X=None):
    """-2 int psidot L psidot dvol at ``state`` (the predicted energy derivative)."""
    v = _rhs_values(state, kind, theta_X)
    return -2.0 * float(np.sum(v * state.lichnerowicz(v) * state.volume_weights))


def energy_decay_identity_check(trace_window, states, kind="modified", theta_X=None):
    """Compare the finite-difference energy derivative at the middle state with the identity.

    ``trace_window`` holds (t, energy) pairs (or :class:`TraceRecord` items) of
    at least three consecutive accepted steps; ``states`` are the matching
    states.  The derivative of the quadratic interpolant is used so unequal
    steps are allowed.
    """
    recs = list(trace_window)
    if len(recs) < 3 or len(states) != len(recs):
        raise ConfigurationError("need >= 3 records with matching states")
    if any(isinstance(r, TraceRecord) and not r.accepted for r in recs):
        raise ConfigurationError("window spans rejected steps")
    if isinstance(recs[0], TraceRecord):
        pairs = [(r.t, r.mCa if kind == "modified" else r.Ca) for r in recs]
    else:
        pairs = [(float(a), float(b)) for a, b in recs]
    mid = len(pairs) // 2
    (t0, e0), (t1, e1), (t2, e2) = pairs[mid - 1], pairs[mid], pairs[mid + 1]
    if not t0 < t1 < t2:
        raise ConfigurationError("window times must be strictly increasing")
    h0, h1 = t1 - t0, t2 - t1
    fd = (-h1 / (h0 * (h0 + h1)) * e0 + (h1 - h0) / (h0 * h1) * e1
          + h0 / (h1 * (h0 + h1)) * e2)
    ident = dissipation(states[mid], kind, theta_X)
    scale = max(abs(fd), abs(ident))
    rel = 0.0 if scale == 0.0 else abs(fd - ident) / scale
    return IdentityReport(fd, ident, rel, t1)
