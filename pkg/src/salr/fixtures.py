"""Synthetic masks, images and point clouds with known centres."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc


@dataclass(frozen=True)
class MaskFixture:
    mask: np.ndarray
    centers: np.ndarray  # true object centres, (k, 2) array indices


def disks_mask(shape, centers, radii) -> np.ndarray:
    """Union of filled digital disks (``|cell - centre| <= r``)."""
    grid = np.indices(shape, dtype=float)
    out = np.zeros(shape, bool)
    for c, r in zip(np.atleast_2d(centers), np.broadcast_to(radii, (len(np.atleast_2d(centers)),))):
        out |= (grid[0] - c[0]) ** 2 + (grid[1] - c[1]) ** 2 <= r * r
    return out


def disk(radius: float = 20.0, margin: int = 10) -> MaskFixture:
    size = int(np.ceil(2 * radius)) + 2 * margin + 1
    c = np.array([[size // 2, size // 2]], float)
    return MaskFixture(disks_mask((size, size), c, radius), c)


def two_disks(radius: float = 20.0, separation: float = 30.0, margin: int = 15, scale: float = 1.0) -> MaskFixture:
    """Two overlapping disks side by side along axis 0."""
    r, sep, m = radius * scale, separation * scale, int(round(margin * scale))
    h = int(np.ceil(2 * r + sep)) + 2 * m
    w = int(np.ceil(2 * r)) + 2 * m
    c0 = m + r
    mid = w // 2
    centers = np.array([[c0, mid], [c0 + sep, mid]], float)
    return MaskFixture(disks_mask((h, w), centers, r), centers)


def three_disks(radius: float = 20.0, separation: float = 30.0, margin: int = 15) -> MaskFixture:
    """Three overlapping disks on an equilateral triangle."""
    tri = np.array([[0.0, 0.0], [separation, 0.0], [0.5 * separation, np.sqrt(3) / 2 * separation]])
    tri = tri - tri.mean(axis=0)
    size = int(np.ceil(2 * radius + separation)) + 2 * margin
    centers = tri + size / 2
    return MaskFixture(disks_mask((size, size), centers, radius), centers)


def dumbbell(radius: float = 20.0, separation: float = 48.0, bar_half_width: float = 8.0,
             margin: int = 12) -> MaskFixture:
    """Two disks joined by a thick bar; a single object holding two true centres."""
    h = int(np.ceil(2 * radius + separation)) + 2 * margin
    w = int(np.ceil(2 * radius)) + 2 * margin
    mid = w // 2
    centers = np.array([[margin + radius, mid], [margin + radius + separation, mid]], float)
    mask = disks_mask((h, w), centers, radius)
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    mask |= (rows >= centers[0, 0]) & (rows <= centers[1, 0]) & (np.abs(cols - mid) <= bar_half_width)
    return MaskFixture(mask, centers)


def ellipse(semi_major: float = 20.0, semi_minor: float = 10.0, margin: int = 8) -> MaskFixture:
    h = int(np.ceil(2 * semi_major)) + 2 * margin + 1
    w = int(np.ceil(2 * semi_minor)) + 2 * margin + 1
    c = np.array([[h // 2, w // 2]], float)
    g = np.indices((h, w), dtype=float)
    mask = ((g[0] - c[0, 0]) / semi_major) ** 2 + ((g[1] - c[0, 1]) / semi_minor) ** 2 <= 1.0
    return MaskFixture(mask, c)


def mask_image(mask, foreground: float = 200.0, background: float = 10.0, noise: float = 2.0,
               seed: int = 0) -> np.ndarray:
    """Greyscale rendering of a mask with additive Gaussian noise, clipped at zero."""
    rng = np.random.default_rng(seed)
    img = np.where(mask, foreground, background) + noise * rng.standard_normal(np.shape(mask))
    return np.clip(img, 0.0, None)


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointFixture:
    points: np.ndarray
    centers: np.ndarray
    extent: np.ndarray  # (n, 2) lower/upper bounds for binning


def _sobol_normal(count: int, dim: int, seed: int) -> np.ndarray:
    # low-discrepancy standard normals: smooth densities without sampling noise
    return norm.ppf(np.clip(_sobol(count, dim, seed), 1e-12, 1 - 1e-12))


def _sobol(count: int, dim: int, seed: int) -> np.ndarray:
    m = max(int(np.ceil(np.log2(max(count, 2)))), 1)
    return qmc.Sobol(dim, scramble=True, seed=seed).random_base2(m)[:count]


def octahedron_centers(spacing: float, dim: int = 3) -> np.ndarray:
    """Origin plus the ``2 dim`` axis points at ``spacing``."""
    eye = np.eye(dim) * spacing
    return np.vstack([np.zeros(dim), eye, -eye])


def gaussian_blobs(centers, sigma: float = 6.0, points_per_blob: int = 10_000, seed: int = 0,
                   pad: float = 4.0) -> PointFixture:
    """Isotropic Gaussian blobs; ``extent`` covers every centre by ``pad`` sigma."""
    centers = np.atleast_2d(np.asarray(centers, float))
    k, dim = centers.shape
    pts = []
    for i, c in enumerate(centers):
        pts.append(c + sigma * _sobol_normal(points_per_blob, dim, seed + i))
    lo = centers.min(axis=0) - pad * sigma
    hi = centers.max(axis=0) + pad * sigma
    return PointFixture(np.vstack(pts), centers, np.column_stack([lo, hi]))


def rare_arm(core_points: int = 100_000, arm_points: int = 5_000, core_sigma: float = 6.0,
             arm_length: float = 60.0, arm_width: float = 2.5, arm_start: float = 0.0,
             seed: int = 0) -> PointFixture:
    """A dense core with a thin arm along +axis 0 whose density falls monotonically outward.

    The arm's linear density decays linearly from ``arm_start`` to the tip at
    ``arm_start + arm_length``, so along the arm's axis the total density has
    no local maximum outside the core.  ``centers`` holds the core centre and
    the arm's mid point.
    """
    core = core_sigma * _sobol_normal(core_points, 2, seed)
    u = _sobol(arm_points, 2, seed + 1)
    s = arm_length * (1.0 - np.sqrt(1.0 - u[:, 0]))  # pdf proportional to (1 - s/L)
    across = arm_width * norm.ppf(np.clip(u[:, 1], 1e-12, 1 - 1e-12))
    arm = np.column_stack([arm_start + s, across])
    tip = arm_start + arm_length
    pad = 4 * core_sigma
    extent = np.array([[-pad, tip + pad / 2], [-pad, pad]])
    centers = np.array([[0.0, 0.0], [arm_start + 0.5 * arm_length, 0.0]])
    return PointFixture(np.vstack([core, arm]), centers, extent)
