"""Report figures, rendered off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib import ticker  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_spectrum", "plot_slope", "plot_kernel_profile", "plot_norm", "plot_decay", "save_figure"]


def save_figure(fig, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.stem + ".tmp" + path.suffix)
    fig.savefig(tmp, dpi=110, metadata={"Software": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_spectrum(clusters, path) -> Path:
    """Low-lying eigenvalues divided by ``4 pi p``; cluster in blue, excited in red."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for c in clusters:
        scale = 4 * np.pi * c.p
        ax.plot([c.p] * c.d_p, c.cluster_eigenvalues / scale, "o", color="tab:blue", ms=4)
        exc = c.excited_eigenvalues
        if len(exc):
            ax.plot([c.p] * len(exc), exc / scale, "s", color="tab:red", ms=4, mfc="none")
    ax.axhline(1.0, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("p")
    ax.set_ylabel(r"$\lambda / 4\pi p$")
    ax.set_title("bound-state cluster and first excited levels")
    fig.tight_layout()
    return save_figure(fig, path)


def plot_slope(reports: Sequence, path, title: str = "") -> Path:
    """Log-log error curves with their fitted lines."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for rep in reports:
        ps = np.asarray(rep.ps, dtype=float)
        errs = np.maximum(np.asarray(rep.errors, dtype=float), 1e-300)
        (line,) = ax.loglog(ps, errs, "o-", label=f"{rep.name}")
        if not rep.exact and np.isfinite(rep.slope):
            fit = np.exp(rep.intercept) * ps**rep.slope
            ax.loglog(ps, fit, "--", color=line.get_color(), lw=0.9, label=f"slope {rep.slope:+.2f}")
    ax.xaxis.set_major_formatter(ticker.ScalarFormatter())
    ax.xaxis.set_minor_formatter(ticker.NullFormatter())
    ax.set_xticks(sorted({int(p) for rep in reports for p in rep.ps}))
    ax.set_xlabel("p")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return save_figure(fig, path)


def plot_kernel_profile(slices, fits, path) -> Path:
    """``log |P(x, x+Z)|`` against ``p |Z|^2`` with the model line ``-(pi/2) p |Z|^2``."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for slc, fit in zip(slices, fits):
        u = slc.p * slc.distances**2
        mod = slc.moduli
        keep = mod > 0
        ax.plot(u[keep], np.log(mod[keep]), ".", ms=3, label=f"p={slc.p}, c={fit.c:.3f}")
    umax = max(float(np.max(s.p * s.distances**2)) for s in slices) if slices else 1.0
    uu = np.linspace(0, umax, 50)
    ax.plot(uu, -np.pi / 2 * uu, "k--", lw=0.9, label=r"$-\pi u/2$ (shifted)")
    ax.set_xlabel(r"$p|Z|^2$")
    ax.set_ylabel(r"$\log|P(x,x+Z)|$ (scaled)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return save_figure(fig, path)


def plot_decay(sweep, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ps = [r.p for r in sweep.reports]
    ax.semilogy(ps, [r.scaled_bergman for r in sweep.reports], "o-", label="sup |P| / p")
    ax.set_xlabel("p")
    ax.set_ylabel("scaled sup beyond delta")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return save_figure(fig, path)


def plot_norm(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ps = [r[0] for r in report.rows]
    ax.plot(ps, report.deviations, "o-", label=r"$|\,\|T_f\| - \|f\|_\infty|$")
    ax.plot(ps, [3.0 / p for p in ps], "--", color="0.5", label="3/p")
    ax.set_xlabel("p")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return save_figure(fig, path)
