"""PNG figures for solutions, spectra, sweeps and multistart runs.

Figures are written with the non-interactive Agg backend and without the
software metadata key, so reruns produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .domain import Grid  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def _box_image(grid: Grid, v: np.ndarray) -> tuple[np.ndarray, list]:
    img = np.full(grid._box.shape, np.nan)
    img[tuple((grid.index + grid._offset).T)] = v
    K = grid._offset * grid.h
    return img.T, [-K[0], K[0], -K[1], K[1]]


def _draw(ax, grid: Grid, v: np.ndarray, label: str = ""):
    if grid.N == 1:
        order = np.argsort(grid.x[:, 0])
        ax.plot(grid.x[order, 0], v[order], lw=1.2, label=label or None)
        ax.set_xlabel("x")
        return None
    img, extent = _box_image(grid, v)
    m = np.nanmax(np.abs(img)) or 1.0
    signed = np.nanmin(img) < 0
    im = ax.imshow(
        img,
        origin="lower",
        extent=extent,
        cmap="RdBu_r" if signed else "viridis",
        vmin=-m if signed else 0.0,
        vmax=m,
        interpolation="nearest",
    )
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    if label:
        ax.set_title(label)
    return im


def plot_solution(path, grid: Grid, u, title: str = "least-energy solution", reference=None):
    """Solution profile; ``reference`` is an optional exact profile drawn on 1D plots."""
    fig, ax = plt.subplots(figsize=(6, 4) if grid.N == 1 else (5, 4.5))
    im = _draw(ax, grid, np.asarray(u), "u")
    if grid.N == 1 and reference is not None:
        order = np.argsort(grid.x[:, 0])
        ax.plot(grid.x[order, 0], np.asarray(reference)[order], "--", lw=1.0, label="reference")
        ax.legend()
    if im is not None:
        fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_eigenfunctions(path, grid: Grid, values, vectors, count: int = 2):
    count = min(count, vectors.shape[1])
    fig, axes = plt.subplots(1, count, figsize=(4.5 * count, 4), squeeze=False)
    for i in range(count):
        ax = axes[0, i]
        im = _draw(ax, grid, vectors[:, i])
        ax.set_title(f"phi_{i + 1}, mu = {values[i]:.4g}")
        if im is not None:
            fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(outdir, records, c_ref=None):
    """``mu2_vs_R.png``, ``cR_vs_R.png`` and ``dist_to_Q_vs_R.png`` from sweep records."""
    from pathlib import Path

    outdir = Path(outdir)
    ok = [r for r in records if r.converged and np.isfinite(r.mu2)]
    R = np.array([r.R for r in ok])

    fig, ax = plt.subplots(figsize=(6, 4))
    mu2 = np.array([r.mu2 for r in ok])
    ax.plot(R, mu2, "o-")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xscale("log", base=2)
    ax.set_yscale("symlog", linthresh=1e-8)
    ax.set_xlabel("R")
    ax.set_ylabel("mu_2")
    ax.set_title("second eigenvalue of the linearization")
    fig.tight_layout()
    _save(fig, outdir / "mu2_vs_R.png")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(R, [r.c_R for r in ok], "o-", label="c_R")
    if c_ref is not None and np.isfinite(c_ref):
        ax.axhline(c_ref, color="k", ls="--", lw=0.8, label="c (whole space)")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("R")
    ax.set_ylabel("energy level")
    ax.legend()
    fig.tight_layout()
    _save(fig, outdir / "cR_vs_R.png")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(R, [r.dist_to_Q for r in ok], "o-")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("R")
    ax.set_ylabel("sup |u_R - Q|")
    fig.tight_layout()
    _save(fig, outdir / "dist_to_Q_vs_R.png")


def plot_multistart(path, distances: np.ndarray, seeds):
    fig, ax = plt.subplots(figsize=(5, 4.5))
    d = np.asarray(distances, dtype=float)
    floor = 1e-17
    im = ax.imshow(np.log10(d + floor), cmap="magma", vmin=np.log10(floor), vmax=max(0.0, np.log10(d.max() + floor)))
    ax.set_xticks(range(len(seeds)), [str(s) for s in seeds])
    ax.set_yticks(range(len(seeds)), [str(s) for s in seeds])
    ax.set_xlabel("seed")
    ax.set_ylabel("seed")
    ax.set_title("log10 pairwise sup-distance")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)


def plot_rescaled(path, grid_R: Grid, u_R, grid_D: Grid, v):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, g, f, name in ((axes[0], grid_R, u_R, "u_R on R D"), (axes[1], grid_D, v, "v on D")):
        im = _draw(ax, g, np.asarray(f))
        ax.set_title(name)
        if im is not None:
            fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)
