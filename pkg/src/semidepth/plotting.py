"""Matplotlib figures written next to CLI outputs.

All functions draw onto a fresh figure, save it to ``path`` and close it, so
they are safe to call from batch jobs.  The non-interactive Agg backend is
selected on import.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import COLUMNS, HEADERS  # noqa: E402

DPI = 120
DEPTH_CMAP = "magma_r"

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.titlesize": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "figure.constrained_layout.use": True,
    }
)


def _save(fig, path):
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return str(path)


def _inverse_norm(depths, cap=80.0):
    # inverse depth is much easier to read than depth for near-field structure
    vals = np.concatenate([np.ravel(d[np.isfinite(d) & (d > 0)]) for d in depths])
    lo = 1.0 / min(cap, vals.max()) if vals.size else 0.0
    hi = 1.0 / vals.min() if vals.size else 1.0
    return lo, hi


def depth_panel(path, image, pred, truth=None, title=None, cap=80.0):
    """Image, predicted inverse depth and (if given) truth and absolute relative error."""
    panels = 2 if truth is None else 4
    fig = plt.figure(figsize=(5.2, 1.45 * panels))
    gs = fig.add_gridspec(panels, 2, width_ratios=[30, 1])
    axes = [fig.add_subplot(gs[k, 0]) for k in range(panels)]
    lo, hi = _inverse_norm([pred] + ([truth] if truth is not None else []), cap)
    axes[0].imshow(np.clip(image, 0, 1), interpolation="nearest")
    axes[0].set_title("left image")
    im = axes[1].imshow(1.0 / np.clip(pred, 1e-3, cap), cmap=DEPTH_CMAP, vmin=lo, vmax=hi, interpolation="nearest")
    axes[1].set_title("predicted inverse depth")
    fig.colorbar(im, cax=fig.add_subplot(gs[1, 1]), label="1/m")
    if truth is not None:
        axes[2].imshow(1.0 / truth, cmap=DEPTH_CMAP, vmin=lo, vmax=hi, interpolation="nearest")
        axes[2].set_title("true inverse depth")
        fig.colorbar(im, cax=fig.add_subplot(gs[2, 1]), label="1/m")
        err = np.abs(np.clip(pred, 1e-3, cap) - truth) / truth
        im = axes[3].imshow(err, cmap="viridis", vmin=0, vmax=max(0.2, float(np.percentile(err, 99))),
                            interpolation="nearest")
        axes[3].set_title("absolute relative error")
        fig.colorbar(im, cax=fig.add_subplot(gs[3, 1]))
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def loss_curves(path, trace, title="loss"):
    """Total loss and its weighted-free terms against the optimisation step."""
    steps = [t["step"] for t in trace]
    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    for key, style in (("total", "k-"), ("reconstruction", "C0--"), ("lr", "C1--"), ("supervised", "C2--"), ("smooth", "C3--")):
        vals = np.array([t[key] for t in trace], dtype=float)
        if np.any(vals > 0):
            ax.semilogy(steps, np.maximum(vals, 1e-12), style, label=key, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def sparse_overlay(path, image, depth_maps, labels, cap=80.0):
    """Scatter sparse depth maps (e.g. raw vs filtered LiDAR) over the image."""
    fig, axes = plt.subplots(len(depth_maps), 1, figsize=(5.0, 1.7 * len(depth_maps)), squeeze=False)
    lo, hi = _inverse_norm([d.depth[d.mask] for d in depth_maps if d.count], cap)
    for ax, dm, label in zip(axes[:, 0], depth_maps, labels):
        ax.imshow(np.clip(image, 0, 1), interpolation="nearest", alpha=0.6)
        ii, jj = np.nonzero(dm.mask)
        sc = ax.scatter(jj, ii, c=1.0 / dm.depth[ii, jj], s=4, cmap=DEPTH_CMAP, vmin=lo, vmax=hi, linewidths=0)
        ax.set_title(f"{label} ({dm.count} points)")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(sc, ax=axes[:, 0].tolist(), shrink=0.8, label="1/m")
    return _save(fig, path)


def metrics_bars(path, results, keys=("abs_rel", "rmse")):
    """Grouped bars of selected metrics, one group per run."""
    names = list(results)
    fig, axes = plt.subplots(1, len(keys), figsize=(2.6 * len(keys) + 1.0, 3.0), squeeze=False)
    for ax, key in zip(axes[0], keys):
        vals = [results[n]["metrics"][key] for n in names]
        ax.bar(range(len(names)), vals, color=[f"C{i}" for i in range(len(names))])
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_title(HEADERS[COLUMNS.index(key)])
    return _save(fig, path)
