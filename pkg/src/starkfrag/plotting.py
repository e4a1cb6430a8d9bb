"""Figure rendering for the experiment runner (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def series_figure(path, series_list, refs=None, xlabel="k", ylabel="value"):
    """Overlay time series with optional horizontal reference lines."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for ts in series_list:
        ax.plot(ts.points, ts.values, lw=1.0, label=ts.label)
    for label, val in (refs or {}).items():
        ax.axhline(val, ls="--", lw=0.9, alpha=0.8, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series_list) + len(refs or {}) > 1:
        ax.legend(fontsize=8)
    _finish(fig, path)


def profile_figure(path, profile, ref=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    sites = np.arange(len(profile))
    ax.plot(sites, profile, "o-", ms=4, label="dynamics")
    if ref is not None:
        ax.plot(sites, ref, "s--", ms=4, alpha=0.8, label="component mean")
    ax.set_xlabel("site j")
    ax.set_ylabel(r"$\bar n_j$")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    _finish(fig, path)


def scaling_figure(path, Ls, ratios, law=None):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.semilogy(Ls, ratios, "o", label="largest / sector")
    if law is not None:
        ax.semilogy(Ls, law, "--", label="8(L+1)/((L+2)(L+4))")
    ax.set_xlabel("L")
    ax.set_ylabel("dimension ratio")
    ax.legend(fontsize=8)
    _finish(fig, path)


def sweep_figure(path, xs, values, refs=None, xlabel=r"$g/\omega$", ylabel="value"):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(xs, values, "o-", ms=4)
    for label, val in (refs or {}).items():
        ax.axhline(val, ls="--", lw=0.9, alpha=0.8, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if refs:
        ax.legend(fontsize=8)
    _finish(fig, path)


def heatmap_figure(path, g_values, ratio_values, grid, ylabel=r"$g/\omega$"):
    """grid[i, j] at (ratio_values[i], g_values[j])."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    mesh = ax.pcolormesh(g_values, ratio_values, grid, shading="nearest")
    fig.colorbar(mesh, ax=ax, label=r"$\bar C_L$")
    ax.set_xlabel("g")
    ax.set_ylabel(ylabel)
    _finish(fig, path)


def defect_figure(path, Js, defects):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.loglog(Js, defects, "o-", label="first-order defect")
    guide = defects[0] * (np.asarray(Js) / Js[0]) ** 2
    ax.loglog(Js, guide, "--", alpha=0.7, label=r"$\propto J^2$")
    ax.set_xlabel("J")
    ax.set_ylabel("operator-norm defect")
    ax.legend(fontsize=8)
    _finish(fig, path)


def sizes_figure(path, sizes):
    """Component-size distribution on log-log axes."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    uniq, counts = np.unique(np.asarray(sizes), return_counts=True)
    ax.loglog(uniq, counts, "o")
    ax.set_xlabel("component dimension")
    ax.set_ylabel("count")
    _finish(fig, path)


def groups_figure(path, charges, sizes):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.bar(charges, sizes, width=0.8)
    ax.set_xlabel(r"charge $\hat E$")
    ax.set_ylabel("states")
    _finish(fig, path)
