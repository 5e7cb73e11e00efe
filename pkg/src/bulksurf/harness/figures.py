"""Matplotlib figures rendered next to the delimited reports."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def plot_convergence(report, path):
    """Log-log error-vs-h plot with a reference slope of the mesh degree."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    hs = report.hs
    for key in report.error_keys:
        ax.loglog(hs, report.errors(key), "o-", label=key)
    if len(hs) >= 2:
        k = report.degree
        ref = report.errors(report.error_keys[0])[0] * (hs / hs[0]) ** k
        ax.loglog(hs, ref, "k--", linewidth=0.8, label=f"slope {k}")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(f"{report.experiment} study, degree {report.degree}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_radius_history(ts, radii, oracle, path):
    """Measured mean radius against the closed-form radius law."""
    ts = np.asarray(ts)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.plot(ts, radii, label="mean surface radius")
    ax.plot(ts, oracle.radius(ts), "k--", linewidth=0.8, label="exact radius")
    ax.set_xlabel("t")
    ax.set_ylabel("R")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_fracnorm(report, path):
    """Inverse-estimate constants across levels (flat lines = sharp scaling)."""
    rows = [r for r in report.rows if "lambda_max" in r]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    if rows:
        levels = [r["level"] for r in rows]
        for key in rows[0]:
            if key.startswith("inv_const_"):
                ax.plot(levels, [r[key] for r in rows], "o-",
                        label=key.replace("inv_const_", "C "))
        ax.set_xticks(levels)
    ax.set_xlabel("refinement level")
    ax.set_ylabel("inverse-estimate constant")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
