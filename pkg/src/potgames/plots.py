"""Figure rendering for run reports.

Every CLI report path writes its figures next to the CSV tables.  All plots
use the Agg backend and write PNG files; nothing here is interactive.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _potential_grid(game, xlim, ylim, res=151):
    xs = np.linspace(*xlim, res)
    ys = np.linspace(*ylim, res)
    XX, YY = np.meshgrid(xs, ys)
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    ZZ = game.potential_batch(pts).reshape(XX.shape)
    return XX, YY, ZZ


def plot_trajectory_2d(path: str | Path, game, trajs: dict, star=None) -> Path:
    """Iterate paths over potential contours for games with two coordinates."""
    plt = _plt()
    pts = np.vstack([t.iterates() for t in trajs.values()])
    if star is not None:
        pts = np.vstack([pts, np.asarray(star, dtype=float)])
    lo = pts.min(axis=0) - 1.0
    hi = pts.max(axis=0) + 1.0
    span = np.maximum(hi - lo, 2.0)
    mid = 0.5 * (hi + lo)
    xlim = (float(mid[0] - span[0] / 2), float(mid[0] + span[0] / 2))
    ylim = (float(mid[1] - span[1] / 2), float(mid[1] + span[1] / 2))
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    XX, YY, ZZ = _potential_grid(game, xlim, ylim)
    cs = ax.contourf(XX, YY, ZZ, levels=25, cmap="viridis", alpha=0.85)
    fig.colorbar(cs, ax=ax, label="potential")
    for label, traj in trajs.items():
        it = traj.iterates()
        ax.plot(it[:, 0], it[:, 1], "-o", ms=2.5, lw=1.2, label=label)
        ax.plot(it[0, 0], it[0, 1], "ks", ms=5)
    if star is not None:
        ax.plot(star[0], star[1], "r*", ms=14, label="selected optimum")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_agent_paths(path: str | Path, game, traj, labels=None) -> Path:
    """Per-agent 2-D block paths on the plane (grid coordination scenarios)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 6))
    it = traj.iterates()
    for i in range(game.n_agents):
        sl = game.space.block_slice(i)
        xs, ys = it[:, sl.start], it[:, sl.start + 1]
        name = labels[i] if labels else f"agent {i + 1}"
        ax.plot(xs, ys, "-o", ms=3, lw=1.0, label=name)
        ax.plot(xs[0], ys[0], "ks", ms=6)
        ax.plot(xs[-1], ys[-1], "r*", ms=10)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.grid(True, lw=0.3)
    ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_potential_curve(path: str | Path, trajs: dict) -> Path:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for label, traj in trajs.items():
        ax.plot([p.iteration for p in traj.points], traj.potentials(), label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("potential")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_error_curves(path: str | Path, errors: dict) -> Path:
    """Distance-to-optimum curves per algorithm, log scale."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for label, err in errors.items():
        err = np.maximum(np.asarray(err, dtype=float), 1e-16)
        ax.semilogy(np.arange(len(err)), err, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("distance to selected optimum")
    ax.grid(True, which="both", lw=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_steering(path: str | Path, trace, tau: float) -> Path:
    plt = _plt()
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    ks = [r.k for r in trace.rows]
    ax0.plot(ks, [r.collective for r in trace.rows], label="collective benefit")
    ax0.axhline(tau, color="r", ls="--", lw=1, label="target")
    ax0.set_xlabel("outer step")
    ax0.set_ylabel("collective benefit")
    ax0.legend(fontsize=8)
    n = len(trace.rows[0].incentives)
    for i in range(n):
        ax1.plot(ks, [r.incentives[i] for r in trace.rows], label=f"incentive {i + 1}")
    ax1.set_xlabel("outer step")
    ax1.set_ylabel("incentive")
    ax1.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_contours(path: str | Path, game, resolution: int = 101) -> Path:
    """Potential contour figure over the full box of a two-coordinate game."""
    plt = _plt()
    xlim = (float(game.space.lo[0]), float(game.space.hi[0]))
    ylim = (float(game.space.lo[1]), float(game.space.hi[1]))
    XX, YY, ZZ = _potential_grid(game, xlim, ylim, res=resolution)
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    cs = ax.contourf(XX, YY, ZZ, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="potential")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_certification(path: str | Path, game, point, argmax_point, resolution: int = 121) -> Path:
    """Contours with the certified argmax and the tested point marked."""
    plt = _plt()
    pts = np.vstack([np.asarray(point, dtype=float), np.asarray(argmax_point, dtype=float)])
    lo = pts.min(axis=0) - 3.0
    hi = pts.max(axis=0) + 3.0
    XX, YY, ZZ = _potential_grid(game, (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])), res=resolution)
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    cs = ax.contourf(XX, YY, ZZ, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="potential")
    ax.plot(point[0], point[1], "wo", ms=9, mec="k", label="tested point")
    ax.plot(argmax_point[0], argmax_point[1], "r*", ms=14, label="grid argmax")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
