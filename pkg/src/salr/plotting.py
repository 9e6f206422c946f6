"""Static SVG overlays of masks, particles, seeds and truth."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _points(ax, pts, dims, **style):
    pts = np.asarray(pts, float).reshape(-1, max(dims) + 1) if len(pts) else np.zeros((0, 2))
    if len(pts):
        ax.scatter(pts[:, dims[1]], pts[:, dims[0]], **style)


def image_overlay(path, image, mask=None, seeds=(), truth=(), particles=()):
    """Image with mask outline, initial particles, seeds and truth; rows run downward."""
    fig, ax = plt.subplots(figsize=(6, 6))
    if image is not None:
        ax.imshow(image, cmap="gray", interpolation="nearest")
    elif mask is not None:
        ax.imshow(mask, cmap="gray", interpolation="nearest")
    if mask is not None:
        ax.contour(np.asarray(mask, float), levels=[0.5], colors="tab:orange", linewidths=0.8)
    _points(ax, particles, (0, 1), s=6, c="tab:green", label="particles")
    _points(ax, truth, (0, 1), s=40, marker="o", facecolors="none", edgecolors="tab:cyan", label="truth")
    _points(ax, seeds, (0, 1), s=40, marker="x", c="tab:red", label="seeds")
    ax.set_axis_off()
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="lower right", fontsize=7)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def projection_overlay(path, points, seeds=(), dims=(0, 1), max_points=20_000, seed=0):
    """2-D projection of scatter points with seeds on top."""
    pts = np.asarray(points, float)
    if len(pts) > max_points:
        pts = pts[np.random.default_rng(seed).choice(len(pts), max_points, replace=False)]
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(pts[:, dims[0]], pts[:, dims[1]], s=1, c="0.6", alpha=0.4, linewidths=0)
    s = np.asarray(seeds, float)
    if len(s):
        ax.scatter(s[:, dims[0]], s[:, dims[1]], s=50, marker="x", c="tab:red")
    ax.set_xlabel(f"x{dims[0] + 1}")
    ax.set_ylabel(f"x{dims[1] + 1}")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
