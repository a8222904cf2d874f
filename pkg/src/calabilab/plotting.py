"""Figures written next to the run artifacts (non-interactive Agg backend)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_energy(trace, path, fit=None):
    """Energies against time on a log scale, with the fitted exponential if given."""
    t = trace.times
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, style in (("Ca", "-"), ("mCa", "--")):
        y = trace.column(name)
        ok = y > 0
        if ok.any():
            ax.semilogy(t[ok], y[ok], style, label=name)
    if fit is not None:
        tt = np.linspace(fit.t_a, fit.t_b, 50)
        ax.semilogy(tt, np.exp(fit.intercept - fit.rate * tt), "k:",
                    label=f"fit rate {fit.rate:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    return _save(fig, path)


def plot_timestep(trace, path):
    fig, ax = plt.subplots(figsize=(6, 3))
    recs = trace.records
    acc = np.array([r.accepted for r in recs])
    t = np.array([r.t for r in recs])
    dt = np.array([r.dt for r in recs])
    ax.semilogy(t[acc], np.maximum(dt[acc], 1e-300), ".", ms=3, label="accepted")
    if (~acc).any():
        ax.semilogy(t[~acc], dt[~acc], "rx", ms=4, label="rejected")
    ax.set_xlabel("t")
    ax.set_ylabel("dt")
    ax.legend()
    return _save(fig, path)


def plot_gap(times, gaps, path, reference=None):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(times, gaps, "o-", ms=3, label="lambda1")
    if reference is not None:
        ax.axhline(reference, color="k", ls=":", label="flat symbol")
    ax.set_xlabel("t")
    ax.set_ylabel("constrained gap")
    ax.legend()
    return _save(fig, path)


def plot_sobolev(times, norms, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in range(norms.shape[1]):
        ok = norms[:, k] > 0
        ax.semilogy(times[ok], norms[ok, k], label=f"k = {k}")
    ax.set_xlabel("t")
    ax.set_ylabel("||grad^k (psi - psi_inf)||")
    ax.legend()
    return _save(fig, path)
