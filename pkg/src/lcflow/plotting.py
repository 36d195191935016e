"""Figures for ``lcflow report``. matplotlib is imported lazily (optional extra)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 6.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib; install the 'plot' extra or pass --no-figures") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(STYLE)
    return plt


def figure(nrows: int = 1, ncols: int = 1, height_scale: float = 1.0):
    plt = _pyplot()
    size = (FIG_WIDTH, FIG_WIDTH * GOLDEN * height_scale)
    return plt.subplots(nrows, ncols, figsize=size, squeeze=False)


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None})
    _pyplot().close(fig)
    return path


def plot_run(records: Sequence, out_dir: str | Path) -> list[Path]:
    """Energy history and the gradient norms that drive the bootstrap functionals."""
    out_dir = Path(out_dir)
    t = [r.t for r in records]
    paths = []

    fig, axes = figure(1, 2, height_scale=0.6)
    ax = axes[0, 0]
    ax.plot(t, [r.total_energy for r in records])
    ax.set_xlabel("t")
    ax.set_ylabel("total energy")
    ax = axes[0, 1]
    mass0 = records[0].mass if records else 1.0
    ax.plot(t, [r.mass / mass0 - 1.0 for r in records])
    ax.set_xlabel("t")
    ax.set_ylabel("relative mass drift")
    fig.tight_layout()
    paths.append(save(fig, out_dir / "energy.png"))

    fig, axes = figure(1, 1)
    ax = axes[0, 0]
    series = [
        ("grad_d_l3", r"$\|\nabla d\|_{L^3}$"),
        ("grad_u_l2", r"$\|\nabla u\|_{L^2}$"),
        ("grad_rho_l2", r"$\|\nabla\rho\|_{L^2}$"),
        ("rho_dev_linf", r"$\|\rho-\bar\rho\|_{L^\infty}$"),
        ("sqrt_rho_ut_l2", r"$\|\sqrt{\rho}u_t\|_{L^2}$"),
    ]
    for name, label in series:
        values = [getattr(r, name) for r in records]
        if any(v > 0 for v in values):
            ax.semilogy(t, [max(v, 1e-300) for v in values], label=label)
    ax.set_xlabel("t")
    ax.legend(loc="best")
    paths.append(save(fig, out_dir / "norms.png"))
    return paths


def plot_regime(cells: Sequence, out_dir: str | Path) -> list[Path]:
    """Persisted fraction on the (rho_bar, director target) plane, one panel per (alpha, gamma)."""
    import numpy as np

    out_dir = Path(out_dir)
    ran = [c for c in cells if c.outcome != "config_error"]
    pairs = sorted({(c.alpha, c.gamma) for c in ran})
    if not pairs:
        return []
    rhos = sorted({c.rho_bar for c in ran})
    targets = sorted({c.grad_d_target for c in ran})
    fig, axes = figure(1, len(pairs), height_scale=0.8)
    for k, (alpha, gamma) in enumerate(pairs):
        grid = np.full((len(targets), len(rhos)), np.nan)
        for i, tg in enumerate(targets):
            for j, rb in enumerate(rhos):
                sel = [c.persisted for c in ran if (c.alpha, c.gamma, c.rho_bar, c.grad_d_target) == (alpha, gamma, rb, tg)]
                if sel:
                    grid[i, j] = sum(sel) / len(sel)
        ax = axes[0, k]
        im = ax.imshow(grid, origin="lower", vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
        ax.set_xticks(range(len(rhos)), [f"{r:g}" for r in rhos])
        ax.set_yticks(range(len(targets)), [f"{t:g}" for t in targets])
        ax.set_xlabel(r"$\bar\rho$")
        ax.set_ylabel(r"target $\|\nabla d_0\|_{L^3}$")
        ax.set_title(rf"$\alpha={alpha:g}$, $\gamma={gamma:g}$")
        ax.grid(False)
    fig.colorbar(im, ax=axes.ravel().tolist(), label="persisted fraction")
    return [save(fig, out_dir / "regime_map.png")]
