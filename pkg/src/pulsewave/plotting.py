"""Figures for the CLI reports (matplotlib, non-interactive backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cylinder import magnetization_profile  # noqa: E402

__all__ = ["plot_wave", "plot_table", "plot_branch", "plot_gap", "plot_trace", "plot_compare"]

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_wave(sol, path) -> Path:
    g = sol.grid
    s, psi, _ = magnetization_profile(sol.U)
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(10, 3.6))
    a0.plot(s, psi, lw=1.5)
    a0.set_xlabel("s")
    a0.set_ylabel("x-average of U")
    a0.set_title(f"energy {sol.energy:.6f}")
    vals = sol.U.values.reshape(g.n_s, -1)
    im = a1.imshow(vals.T, aspect="auto", origin="lower", extent=[-g.L, g.L, 0, 1], cmap="RdBu_r",
                   vmin=-1, vmax=1)
    a1.set_xlabel("s")
    a1.set_ylabel("x (flattened)")
    fig.colorbar(im, ax=a1)
    return _save(fig, path)


def plot_table(table, path) -> Path:
    rows = table.ok_rows()
    th = np.degrees([np.arctan2(r.e[1], r.e[0]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(th, [r.phi for r in rows], "o-", label="surface tension")
    ax.plot(th, [r.mobility for r in rows], "s--", label="mobility")
    ax.set_xlabel("direction angle (deg)")
    ax.legend()
    return _save(fig, path)


def plot_branch(rows: Sequence, path) -> Path:
    th = np.array([r.theta for r in rows])
    order = np.argsort(th)
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(10, 3.6))
    a0.plot(th[order], np.array([r.dphi_e2 for r in rows])[order], "o-")
    a0.axhline(0, color="k", lw=0.5)
    a0.set_xlabel("theta (deg)")
    a0.set_ylabel("<D phi, e2>")
    a1.plot(th[order], np.array([r.sin_theta_mobility for r in rows])[order], "o-")
    a1.set_xlabel("theta (deg)")
    a1.set_ylabel("|sin theta| M")
    return _save(fig, path)


def plot_gap(reports: Sequence, path) -> Path:
    d = np.array([r.delta for r in reports])
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.loglog(d, [r.e_min for r in reports], "o-", label="e_min")
    ax.loglog(d, [r.e_pinned for r in reports], "s-", label="e_pinned")
    ax.loglog(d, 2 * np.sqrt(2) / 3 * np.sqrt(d), "k:", label="sigma0 sqrt(delta)")
    ax.set_xlabel("delta")
    ax.legend()
    return _save(fig, path)


def plot_trace(zeta, trace, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(zeta, trace, ".-")
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xlabel("zeta")
    ax.set_ylabel("u_zeta(1/4)")
    return _save(fig, path)


def plot_compare(result, path) -> Path:
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(10, 3.6))
    if result.graph is not None:
        a0.plot(result.graph.x, result.graph.h, "k-", lw=2, label="graph flow")
    for eps, (x, h) in zip(result.epsilon, result.fronts):
        a0.plot(x, h, lw=1, label=f"eps={eps:g}")
    a0.set_xlabel("x")
    a0.set_ylabel("front height")
    a0.legend(fontsize=8)
    a1.loglog(result.epsilon, result.sup_error, "o-", label="sup")
    a1.loglog(result.epsilon, result.l2_error, "s--", label="rms")
    a1.set_xlabel("eps")
    a1.set_ylabel("front error")
    a1.legend()
    return _save(fig, path)
