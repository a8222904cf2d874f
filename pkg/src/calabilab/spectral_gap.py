"""Constrained spectral gap of the Lichnerowicz operator and decay-rate fitting.

A_t is the subspace orthogonal (in the state's volume form) to constants and
to the holomorphy potentials of the given vector fields.  On the torus the
list of fields is empty; on a toric state it is the coordinate functions.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, ConvergenceError
from .fields import PeriodicField, PolytopeField
from .toric import AffineFunction, holomorphy_values

log = logging.getLogger(__name__)


def _values(f):
    if isinstance(f, (PeriodicField, PolytopeField)):
        return f.values
    return np.asarray(f, dtype=float)


def _wrap(state, values):
    return state.model.field(values) if state.testbed == "torus" else state.grid.field(values)


def constraint_matrix(state, basis=None, extra=()):
    """Columns spanning the excluded directions: 1, theta_Y for Y in basis, extras."""
    if basis is None:
        basis = [] if state.testbed == "torus" else state.model.basis
    cols = [np.ones(state.shape)]
    for Y in basis:
        if isinstance(Y, AffineFunction):
            if state.testbed == "torus":
                raise ConfigurationError("affine holomorphy potentials need a toric state")
            cols.append(holomorphy_values(Y, state.model))
        else:
            cols.append(_values(Y))
    cols.extend(_values(e) for e in extra)
    return np.stack([c.ravel() for c in cols], axis=1)


class _Projector:
    """Orthogonal projector onto A_t in the inner product sum(a * b * w)."""

    def __init__(self, state, basis=None, extra=()):
        self.w = state.volume_weights.ravel()
        Q = constraint_matrix(state, basis, extra)
        WQ = Q * self.w[:, None]
        # orthonormalize the constraints in the weighted inner product
        R = np.linalg.cholesky(Q.T @ WQ).T
        self.Q = scipy.linalg.solve_triangular(R, Q.T, trans="T").T
        self.WQ = self.Q * self.w[:, None]

    def __call__(self, x):
        flat = x.ravel()
        return (flat - self.Q @ (self.WQ.T @ flat)).reshape(x.shape)

    def transpose(self, y):
        flat = y.ravel()
        return (flat - self.WQ @ (self.Q.T @ flat)).reshape(y.shape)

    def violations(self, x):
        """(mean violation, largest theta-orthogonality violation), normalized by ||x||."""
        flat = x.ravel()
        norm = np.sqrt(np.sum(flat * flat * self.w)) or 1.0
        c = np.abs(self.WQ.T @ flat) / norm
        return float(c[0]), float(c[1:].max()) if c.size > 1 else 0.0


def project_At(f, state, vector_field_basis=None, extra=()):
    """Orthogonal projection of ``f`` onto A_t (idempotent, self-adjoint)."""
    values = _values(f)
    out = _Projector(state, vector_field_basis, extra)(values)
    if isinstance(f, (PeriodicField, PolytopeField)):
        return _wrap(state, out)
    return out


@dataclass(frozen=True)
class GapReport:
    """Smallest eigenvalue of the projected Lichnerowicz operator on A_t."""

    lambda1: float
    eigenfield: np.ndarray = field(repr=False)
    residual: float
    mean_violation: float
    orthogonality_violation: float
    iterations: int
    ritz_vectors: np.ndarray = field(default=None, repr=False)


def _pcg(apply_A, b, precond, tol, maxiter):
    """Preconditioned CG for a symmetric positive (semi)definite system."""
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = np.sum(r * z)
    bnorm = np.sqrt(np.sum(b * b)) or 1.0
    for _ in range(maxiter):
        Ap = apply_A(p)
        alpha = rz / np.sum(p * Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.sqrt(np.sum(r * r)) <= tol * bnorm:
            break
        z = precond(r)
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def _torus_solver(state, proj, tol):
    """Solve P^T K P x = P^T W b on A_t, K = W L, preconditioned by the flat symbol."""
    m = state.model
    w = state.volume_weights
    sym = m.lichnerowicz_symbol * m.cell
    inv = np.zeros_like(sym)
    nz = sym > 0
    inv[nz] = 1.0 / sym[nz]

    def apply_A(x):
        return proj.transpose(w * state.lichnerowicz(proj(x)))

    def precond(r):
        return proj(np.fft.ifft2(inv * np.fft.fft2(proj.transpose(r))).real)

    def solve(b):
        return proj(_pcg(apply_A, proj.transpose(w * b), precond, tol, 2000))

    return solve


def _dense_solver(state, proj):
    w = state.volume_weights.ravel()
    K = state.lichnerowicz_stiffness()
    C = proj.WQ
    k = C.shape[1]
    A = np.block([[K, C], [C.T, np.zeros((k, k))]])
    lu = scipy.linalg.lu_factor(A)
    shape = state.shape

    def solve(b):
        rhs = np.concatenate([w * b.ravel(), np.zeros(k)])
        return proj(scipy.linalg.lu_solve(lu, rhs)[: w.size].reshape(shape))

    return solve


def min_eigenvalue(state, vector_field_basis=None, extra=(), tol=1e-10, max_iter=500,
                   seed=0, solver_tol=1e-13, residual_tol=1e-8, polish_iter=20, block=6,
                   start=None):
    """Smallest eigenvalue of P L P on A_t by block inverse iteration (shift 0).

    A block of ``block`` vectors is iterated with a Rayleigh-Ritz step so that
    nearly degenerate clusters (a perturbed flat torus splits its fourfold
    lowest eigenspace) do not slow convergence.  Stops when the lowest Ritz
    value changes by less than ``tol`` relative and its residual is below
    ``residual_tol``, or ``polish_iter`` iterations after stagnation when the
    residual has reached its round-off floor.

    ``start`` (a previous :class:`GapReport` on the same grid) seeds the block
    with its Ritz vectors, which makes gaps along a flow cheap to track.
    """
    proj = _Projector(state, vector_field_basis, extra)
    w = state.volume_weights
    shape = state.shape
    size = w.size
    if state.testbed == "torus":
        solve = _torus_solver(state, proj, solver_tol)
    else:
        solve = _dense_solver(state, proj)
    block = max(1, min(int(block), size - proj.Q.shape[1]))
    rng = np.random.default_rng(seed)
    X = np.stack([proj(rng.standard_normal(shape)).ravel() for _ in range(block)], axis=1)
    if start is not None and start.ritz_vectors is not None and start.ritz_vectors.shape == X.shape:
        X = np.stack([proj(v.reshape(shape)).ravel() for v in start.ritz_vectors.T], axis=1)
    wf = w.ravel()

    def ritz(Y):
        # W-orthonormalize, then diagonalize the projected operator on span(Y)
        R = np.linalg.cholesky(Y.T @ (Y * wf[:, None])).T
        Y = scipy.linalg.solve_triangular(R, Y.T, trans="T").T
        LY = np.stack([state.lichnerowicz(Y[:, j].reshape(shape)).ravel()
                       for j in range(Y.shape[1])], axis=1)
        A = Y.T @ (LY * wf[:, None])
        theta, V = np.linalg.eigh(0.5 * (A + A.T))
        return theta, Y @ V, LY @ V

    rho_old = np.inf
    stagnant = 0
    for it in range(1, max_iter + 1):
        X = np.stack([solve(X[:, j].reshape(shape)).ravel() for j in range(block)], axis=1)
        theta, X, LX = ritz(X)
        rho = float(theta[0])
        x = X[:, 0].reshape(shape)
        res = proj(LX[:, 0].reshape(shape)) - rho * x
        residual = float(np.sqrt(np.sum(res * res * w)) / max(abs(rho), np.finfo(float).tiny))
        if abs(rho - rho_old) <= tol * abs(rho):
            stagnant += 1
            if residual <= residual_tol or stagnant > polish_iter:
                break
        rho_old = rho
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {max_iter} iterations (last Rayleigh "
            f"quotient {rho:.12g}, residual {residual:.3e})", last_value=rho)
    mean_v, orth_v = proj.violations(x)
    return GapReport(rho, x, residual, mean_v, orth_v, it, X)


# ---------------------------------------------------------------------------
# decay-rate fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Log-linear fit y ~ exp(intercept - rate * t) over [t_a, t_b]."""

    rate: float
    t_a: float
    t_b: float
    rms_residual: float
    quantity: str
    n_samples: int
    intercept: float


def decade_window(t, y, floor=1e-12, trim=0.1):
    """Indices of the last full decade of y above ``floor``, minus the first ``trim``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    if not ok.any():
        return np.array([], dtype=int)
    lo = max(floor, float(y[ok].min()))
    above = ok & (y >= lo)
    # start of the tail that stays within one decade of lo
    start = len(y)
    for i in range(len(y) - 1, -1, -1):
        if not ok[i] or y[i] > 10.0 * lo:
            break
        start = i
    idx = np.arange(start, len(y))
    idx = idx[above[idx]]
    cut = int(np.ceil(trim * len(idx)))
    return idx[cut:]


def fit_exponential(t, y, quantity="y", floor=1e-12, trim=0.1, min_samples=20, window="last-decade"):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window == "last-decade":
        idx = decade_window(t, y, floor, trim)
    elif window == "all":
        idx = np.flatnonzero(np.isfinite(y) & (y > floor))
        idx = idx[int(np.ceil(trim * len(idx))):]
    else:
        raise ConfigurationError(f"unknown window policy {window!r}")
    if len(idx) < min_samples:
        raise ConfigurationError(
            f"only {len(idx)} usable samples of {quantity} for the rate fit (need {min_samples})")
    tt, ly = t[idx], np.log(y[idx])
    A = np.column_stack([np.ones_like(tt), -tt])
    (c0, rate), *_ = np.linalg.lstsq(A, ly, rcond=None)
    rms = float(np.sqrt(np.mean((A @ np.array([c0, rate]) - ly) ** 2)))
    return RateFit(float(rate), float(tt[0]), float(tt[-1]), rms, quantity, len(idx), float(c0))


def fit_decay_rate(trace, quantity="mCa", window_policy="last-decade", eps_stop=None,
                   floor=1e-12, min_samples=20):
    """Exponential decay rate of a trace column over the chosen window.

    ``trace`` is a :class:`~calabilab.flow.FlowTrace` or a ``(t, y)`` pair.
    With ``eps_stop`` given, the final energy must be below ``10 * eps_stop``.
    """
    if isinstance(trace, tuple):
        t, y = trace
    else:
        t = trace.times
        y = trace.column(quantity)
        if eps_stop is not None and not trace.energy()[-1] < 10.0 * eps_stop:
            raise ConfigurationError("trace has not converged; refusing to fit a rate")
    return fit_exponential(t, y, quantity, floor=floor, min_samples=min_samples,
                           window=window_policy)


@dataclass(frozen=True)
class SobolevReport:
    fits: tuple
    spread: float
    stationary: bool
    passed: bool
    tolerance: float

    @property
    def rates(self):
        return [f.rate for f in self.fits]


def sobolev_norms(trace, state, reference=None, k_max=4):
    """Times and ||nabla^k (psi(t) - psi_inf)||_{L^2} for every snapshot, k = 0..k_max.

    ``psi_inf`` defaults to the final snapshot; potentials are compared modulo
    the kernel (constants, or affine functions on the toric side).
    """
    if len(trace.snapshots) < 2:
        raise ConfigurationError("sobolev check needs stored snapshots")
    ref = trace.snapshots[-1].potential if reference is None else reference
    times, norms = [], []
    for snap in trace.snapshots:
        d = snap.potential - ref
        d = d - (d.mean() if state.testbed == "torus" else state.model.affine_projection(d))
        times.append(snap.t)
        norms.append([state.derivative_seminorm(d, k) for k in range(k_max + 1)])
    return np.array(times), np.array(norms)


def sobolev_decay_check(trace, state, k_max=4, reference=None, tolerance=0.25,
                        energy_window=1e6, floor=1e-12, min_samples=20):
    """Fit decay rates of ||nabla^k (psi - psi_inf)|| for k <= k_max and compare them.

    Only snapshots whose flow energy is at least ``energy_window`` times the
    final energy are used, so the error of the psi_inf proxy stays negligible.
    Passes when all rates are positive and max/min - 1 <= ``tolerance``.
    """
    times, norms = sobolev_norms(trace, state, reference, k_max)
    if np.all(norms[:-1] <= floor):
        return SobolevReport((), 0.0, True, True, tolerance)
    rec_t = trace.times
    energy = trace.energy()
    e_final = energy[-1]
    snap_energy = np.interp(times, rec_t, energy)
    keep = snap_energy >= energy_window * e_final
    fits = []
    for k in range(k_max + 1):
        fits.append(fit_exponential(times[keep], norms[keep, k], f"grad^{k}",
                                    floor=floor, min_samples=min_samples))
    rates = np.array([f.rate for f in fits])
    spread = float(rates.max() / rates.min() - 1.0) if rates.min() > 0 else np.inf
    passed = bool(rates.min() > 0 and spread <= tolerance)
    return SobolevReport(tuple(fits), spread, False, passed, tolerance)
