"""Regular-grid scalar fields.

Fields are plain :class:`numpy.ndarray` objects indexed by grid cell; binary
masks are boolean arrays.  Spacing, when it matters, is passed explicitly as a
scalar or one value per axis.  Every function here is pure: inputs are never
modified.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit
from scipy import ndimage

log = logging.getLogger(__name__)

_FAR = np.inf


@dataclass(frozen=True)
class ScalarField:
    """A grid array with per-axis spacing, used where fields leave the process."""

    values: np.ndarray
    spacing: tuple[float, ...] = dc_field(default=())

    def __post_init__(self):
        values = np.asarray(self.values)
        object.__setattr__(self, "values", values)
        if not self.spacing:
            object.__setattr__(self, "spacing", (1.0,) * values.ndim)
        if len(self.spacing) != values.ndim:
            raise ValueError("spacing needs one entry per axis")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape


def _per_axis(value, ndim: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (ndim,)).copy()
    return arr


# ---------------------------------------------------------------------------
# Exact Euclidean distance transform (separable lower envelope of parabolas)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lower_envelope_lines(f, w):
    # f: (lines, n) squared distances, inf where unknown; w: grid step
    lines, n = f.shape
    out = np.empty_like(f)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    w2 = w * w
    for line in range(lines):
        row = f[line]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            # z[0] = -inf stops the pop at k == 0
            while True:
                p = v[k]
                s = ((fq + w2 * q * q) - (row[p] + w2 * p * p)) / (2.0 * w2 * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                out[line, q] = np.inf
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            d = q - v[j]
            out[line, q] = w2 * d * d + row[v[j]]
    return out


def distance_transform(mask: np.ndarray, sampling=1.0) -> np.ndarray:
    """Exact Euclidean distance from every cell to the nearest ``True`` cell.

    Parameters
    ----------
    mask : ndarray of bool
        Cells to measure distance to.
    sampling : float or sequence of float
        Grid step per axis; distances come out in the same units.

    Returns
    -------
    ndarray of float
        Zero on ``True`` cells, positive elsewhere.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    steps = _per_axis(sampling, mask.ndim)
    sq = np.where(mask, 0.0, _FAR)
    for axis in range(mask.ndim):
        moved = np.moveaxis(sq, axis, -1)
        shape = moved.shape
        lines = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
        done = _lower_envelope_lines(lines, float(steps[axis]))
        sq = np.moveaxis(done.reshape(shape), -1, axis)
    return np.sqrt(sq)


# ---------------------------------------------------------------------------
# Smoothing, differentiation, sampling
# ---------------------------------------------------------------------------

def gaussian_smooth(f: np.ndarray, sigma) -> np.ndarray:
    """Separable Gaussian blur, kernel cut at 4 sigma, edges replicated."""
    sig = np.asarray(sigma, dtype=float)
    if np.any(sig < 0):
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    f = np.asarray(f, dtype=float)
    if np.all(sig == 0):
        return f.copy()
    return ndimage.gaussian_filter(f, sigma=sig, mode="nearest", truncate=4.0)


def gradient(f: np.ndarray, spacing=1.0) -> list[np.ndarray]:
    """Central differences inside, one-sided at the edges, one array per axis."""
    f = np.asarray(f, dtype=float)
    if min(f.shape) < 2:
        raise ValueError("every axis needs at least two cells")
    steps = _per_axis(spacing, f.ndim)
    grads = np.gradient(f, *steps)
    if f.ndim == 1:
        grads = [grads]
    return list(grads)


def interpolate(f: np.ndarray, pos) -> np.ndarray | float:
    """Multilinear interpolation at fractional cell indices.

    ``pos`` is one index vector or an ``(m, ndim)`` array of them.  Positions
    outside the grid are clamped to the boundary cells.
    """
    f = np.asarray(f, dtype=float)
    pts = np.asarray(pos, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != f.ndim:
        raise ValueError("position dimension does not match the field")
    hi = np.array(f.shape, dtype=float) - 1.0
    pts = np.clip(pts, 0.0, hi)
    out = ndimage.map_coordinates(f, pts.T, order=1, mode="nearest")
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Point binning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinnedPoints:
    counts: np.ndarray
    edges: list[np.ndarray]
    dropped: int

    @property
    def spacing(self) -> np.ndarray:
        return np.array([e[1] - e[0] for e in self.edges])

    @property
    def origin(self) -> np.ndarray:
        """Data coordinate of the centre of cell ``(0, ..., 0)``."""
        return np.array([e[0] + 0.5 * (e[1] - e[0]) for e in self.edges])


def bin_points(points, bins_per_axis, value_range) -> BinnedPoints:
    """Histogram n-dimensional points onto a regular grid.

    Points on the upper edge of an axis fall in its last bin; points outside
    the range are dropped and counted in ``dropped``.
    """
    value_range = [tuple(map(float, r)) for r in value_range]
    ndim = len(value_range)
    bins = np.broadcast_to(np.asarray(bins_per_axis, dtype=int), (ndim,))
    if np.any(bins < 1):
        raise ValueError("need at least one bin per axis")
    for lo, hi in value_range:
        if not hi > lo:
            raise ValueError(f"inverted or empty range ({lo}, {hi})")
    pts = np.asarray(points, dtype=float).reshape(-1, ndim)
    counts, edges = np.histogramdd(pts, bins=bins, range=value_range)
    dropped = len(pts) - int(counts.sum())
    if dropped:
        log.info("bin_points dropped %d out-of-range points", dropped)
    return BinnedPoints(counts, list(edges), dropped)


# ---------------------------------------------------------------------------
# Segmentation helpers
# ---------------------------------------------------------------------------

def connected_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Label connected ``True`` regions using the full 3**n - 1 neighbourhood."""
    mask = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(mask.ndim, mask.ndim)
    labels, count = ndimage.label(mask, structure=structure)
    return labels, int(count)


def otsu_bin(hist: np.ndarray) -> int:
    """Index of the last bin of the lower class maximising between-class variance."""
    hist = np.asarray(hist, dtype=float)
    centers = np.arange(hist.size, dtype=float)
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    mt = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0 * w0[-1]) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return int(np.argmax(between[:-1]))


def log_otsu_threshold(image: np.ndarray, nbins: int = 256) -> np.ndarray:
    """Foreground mask from Otsu's method on the histogram of ``log(1 + I)``."""
    image = np.asarray(image, dtype=float)
    if np.any(image < 0):
        raise ValueError("intensities must be non-negative")
    logs = np.log1p(image)
    lo, hi = float(logs.min()), float(logs.max())
    if hi <= lo:
        raise ValueError("no threshold separates classes")
    hist, edges = np.histogram(logs, bins=nbins, range=(lo, hi))
    k = otsu_bin(hist)
    return logs > edges[k + 1]


def _log_kernels(sigma: float, truncate: float = 4.0):
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    d2 = (x * x / sigma**4 - 1.0 / sigma**2) * g
    d2 -= g * d2.sum()  # zero sum, so constants map to zero exactly
    return g, d2


def gaussian_laplacian(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Laplacian of Gaussian with zero-sum derivative kernels, edges replicated."""
    image = np.asarray(image, dtype=float)
    g, d2 = _log_kernels(sigma)
    out = np.zeros_like(image)
    for axis in range(image.ndim):
        term = image
        for other in range(image.ndim):
            term = ndimage.correlate1d(term, d2 if other == axis else g, axis=other, mode="nearest")
        out += term
    return out


def multiscale_log_filter(image: np.ndarray, sigmas: Sequence[float] = (4, 6, 8, 10)) -> np.ndarray:
    """Sum of scale-normalised, negated Laplacian-of-Gaussian responses.

    Bright blobs come out positive.
    """
    sigmas = list(sigmas)
    if not sigmas or any(s <= 0 for s in sigmas):
        raise ValueError("sigmas must be a non-empty list of positive values")
    image = np.asarray(image, dtype=float)
    out = np.zeros_like(image)
    for s in sigmas:
        out -= s * s * gaussian_laplacian(image, s)
    return out


# ---------------------------------------------------------------------------
# Field export
# ---------------------------------------------------------------------------

def write_field(path, values: np.ndarray, spacing=1.0) -> None:
    """Write a field as CSV (2-D only, by ``.csv`` suffix) or raw binary + JSON header."""
    path = Path(path)
    values = np.asarray(values)
    if path.suffix == ".csv":
        if values.ndim != 2:
            raise ValueError("CSV export supports 2-D fields only")
        np.savetxt(path, values, delimiter=",", fmt="%.17g")
        return
    header = {
        "dims": list(values.shape),
        "spacing": _per_axis(spacing, values.ndim).tolist(),
        "dtype": "float64",
    }
    path.with_suffix(".json").write_text(json.dumps(header))
    np.ascontiguousarray(values, dtype="<f8").tofile(path)


def read_field(path) -> ScalarField:
    path = Path(path)
    if path.suffix == ".csv":
        return ScalarField(np.loadtxt(path, delimiter=",", ndmin=2))
    header = json.loads(path.with_suffix(".json").read_text())
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    values = np.fromfile(path, dtype=dtype).reshape(header["dims"])
    return ScalarField(values.astype(float), tuple(header["spacing"]))
