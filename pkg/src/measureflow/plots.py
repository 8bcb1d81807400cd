"""Figure rendering for the report path.

Every figure is drawn from data that is also written to CSV; the plots are a
convenience layer on top of the delimited outputs, never the other way
around. PNGs are written with fixed dpi and stripped metadata.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "save_ito_figure",
    "save_sweep_figure",
    "save_riccati_figure",
    "save_fp_figure",
    "save_mv_figure",
]

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_ito_figure(diagnostics, path, title):
    """Cumulative per-step contributions of each identity term."""
    if not diagnostics:
        return
    t = np.array([row["time"] for row in diagnostics])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    keys = [k for k in diagnostics[0] if k.startswith(("d_", "generator_")) and k != "d_residual"]
    for key in keys:
        series = np.cumsum([row[key] for row in diagnostics])
        ax1.plot(t, series, label=key.replace("d_", "").replace("generator_", "gen "))
    ax1.set_xlabel("t")
    ax1.set_ylabel("cumulative contribution")
    ax1.legend(fontsize=7)
    ax1.set_title(title)
    if "d_residual" in diagnostics[0]:
        ax2.plot(t, np.cumsum([row["d_residual"] for row in diagnostics]), color="crimson")
        ax2.set_ylabel("cumulative residual")
    ax2.set_xlabel("t")
    _finish(fig, path)


def save_sweep_figure(rows, path):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ns = sorted({r["N"] for r in rows})
    means = [np.mean([abs(r["residual"]) for r in rows if r["N"] == n]) for n in ns]
    for r in rows:
        ax.plot(r["N"], abs(r["residual"]), ".", color="gray", alpha=0.5)
    ax.plot(ns, means, "o-", color="navy", label="mean |residual|")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("|residual|")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_riccati_figure(sol, path, mean_path=None, mean_nodes=None):
    fig, axes = plt.subplots(1, 2 if mean_path is not None else 1, figsize=(9, 3.4))
    ax = axes[0] if mean_path is not None else axes
    for name in "ABCD":
        ax.plot(sol.ts, getattr(sol, name), label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("coefficient")
    ax.legend(fontsize=8)
    if mean_path is not None:
        axes[1].plot(mean_nodes, mean_path, color="navy")
        axes[1].set_xlabel("t")
        axes[1].set_ylabel("closed-loop mean")
    _finish(fig, path)


def save_fp_figure(times, phi_series, rate_mc, path):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(times, phi_series, label="density march")
    ax.plot(
        times,
        phi_series[0] + rate_mc * np.asarray(times),
        "--",
        label="particle generator slope",
    )
    ax.set_xlabel("t")
    ax.set_ylabel("functional value")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_mv_figure(nodes, mean, std, eta_rows, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(nodes, mean, color="navy", label="ensemble mean")
    ax1.fill_between(nodes, mean - std, mean + std, alpha=0.25, color="navy")
    ax1.set_xlabel("t")
    ax1.set_ylabel("state")
    ax1.legend(fontsize=8)
    if eta_rows:
        ax2.plot(
            [r["time"] for r in eta_rows],
            np.cumsum([r["eta_mass"] for r in eta_rows]),
            color="darkorange",
        )
    ax2.set_xlabel("t")
    ax2.set_ylabel("cumulative eta mass (per particle)")
    _finish(fig, path)
