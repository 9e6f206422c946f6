"""Boundary analysis of 2-D mask objects.

Coordinates are array indices ``(axis0, axis1)``.  Contours are oriented so
their shoelace area in that frame is positive ("counterclockwise"), which
makes convex arcs carry positive curvature and necks between touching
objects carry negative curvature.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.spatial import ConvexHull, QhullError

from .field import interpolate

log = logging.getLogger(__name__)

# clockwise ring of 8-neighbour offsets starting west
_RING = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_RING_INDEX = {off: i for i, off in enumerate(_RING)}

DEFAULT_CURVATURE_SIGMA = 6.0


@dataclass(frozen=True)
class Contour:
    """Closed boundary polygon with optional per-vertex curvature and inward normals."""

    vertices: np.ndarray
    curvature: np.ndarray | None = None
    inward_normal: np.ndarray | None = None
    degenerate: bool = False

    def __len__(self):
        return len(self.vertices)

    @property
    def signed_area(self) -> float:
        return signed_area(self.vertices)


def signed_area(vertices) -> float:
    x, y = np.asarray(vertices, dtype=float).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def trace_contour(labels, label=None) -> Contour:
    """Moore-neighbour trace of the outer boundary of one region.

    ``labels`` is a boolean mask (``label`` omitted) or an integer label image.
    One vertex is emitted per boundary-cell visit, at the cell centre; cells
    on one-cell-wide spurs are visited twice.
    """
    labels = np.asarray(labels)
    region = labels.astype(bool) if label is None else labels == label
    if not region.any():
        raise ValueError("region is empty")
    m = np.pad(region, 1)
    start = tuple(int(i) for i in np.argwhere(m)[0])
    cur, back = start, 0
    path = [cur]
    first_move = None
    while True:
        for k in range(1, 9):
            d = (back + k) % 8
            nb = (cur[0] + _RING[d][0], cur[1] + _RING[d][1])
            if m[nb]:
                prev = _RING[(back + k - 1) % 8]
                back = _RING_INDEX[(cur[0] + prev[0] - nb[0], cur[1] + prev[1] - nb[1])]
                cur = nb
                break
        else:
            break  # isolated cell
        if first_move is None:
            first_move = (cur, back)
        elif (cur, back) == first_move:
            path.pop()
            break
        path.append(cur)
    verts = np.array(path, dtype=float) - 1.0
    area = signed_area(verts)
    if area < 0:
        verts = verts[::-1].copy()
    degenerate = len(verts) < 3 or area == 0
    return Contour(verts, degenerate=degenerate)


def _resample(vertices, per_unit=2.0):
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    t = np.concatenate([[0.0], np.cumsum(seg)])
    length = t[-1]
    n = max(int(np.ceil(per_unit * length)), 16)
    h = length / n
    u = np.arange(n) * h
    pts = np.column_stack([np.interp(u, t, closed[:, 0]), np.interp(u, t, closed[:, 1])])
    return pts, u, t[:-1], length, h


def _unshrink(kappa_s, sigma):
    # a circle of curvature k smoothed along arclength by sigma has curvature
    # k * exp(sigma^2 k^2 / 2); invert that monotone map by Newton from above
    a = np.abs(kappa_s)
    target = a.copy()
    s2 = sigma * sigma
    for _ in range(60):
        e = np.exp(0.5 * s2 * a * a)
        f = a * e - target
        a = a - f / (e * (1.0 + s2 * a * a))
        a = np.maximum(a, 0.0)
    return np.sign(kappa_s) * a


def curvature(contour: Contour, smoothing_sigma_arclength: float = DEFAULT_CURVATURE_SIGMA) -> Contour:
    """Signed curvature and inward unit normal at every vertex.

    The polygon is resampled uniformly in arclength and Gaussian smoothed
    (periodic) with the given width.  The smoothing bias on circular arcs is
    removed, and curvature refers to the cell-edge boundary half a cell outside
    the traced cell centres.  Contours with fewer than 8 vertices, or flagged
    degenerate, get zero curvature.
    """
    verts = contour.vertices
    m = len(verts)
    if contour.degenerate or m < 8:
        return replace(contour, curvature=np.zeros(m), inward_normal=np.zeros((m, 2)))
    pts, u, t_vert, length, h = _resample(verts)
    sigma = min(float(smoothing_sigma_arclength), length / (4 * np.pi))
    if sigma > 0:
        x = gaussian_filter1d(pts[:, 0], sigma / h, mode="wrap")
        y = gaussian_filter1d(pts[:, 1], sigma / h, mode="wrap")
    else:
        x, y = pts[:, 0], pts[:, 1]

    def d1(a):
        return (np.roll(a, -1) - np.roll(a, 1)) / (2 * h)

    def d2(a):
        return (np.roll(a, -1) - 2 * a + np.roll(a, 1)) / (h * h)

    xp, yp, xpp, ypp = d1(x), d1(y), d2(x), d2(y)
    speed = np.hypot(xp, yp)
    kappa = (xp * ypp - yp * xpp) / speed**3
    kappa = _unshrink(kappa, sigma)
    kappa = kappa / np.maximum(1.0 + 0.5 * kappa, 0.25)

    def at_vertices(a):
        return np.interp(t_vert, np.append(u, length), np.append(a, a[0]))

    kv = at_vertices(kappa)
    tx, ty = at_vertices(xp / speed), at_vertices(yp / speed)
    nrm = np.column_stack([-ty, tx])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return replace(contour, curvature=kv, inward_normal=nrm)


def is_convex(contour: Contour, lam: float) -> bool:
    """True when no vertex is more concave than ``-0.25 / lam``."""
    if contour.degenerate or contour.curvature is None or len(contour) < 8:
        return True
    return bool(contour.curvature.min() > -0.25 / lam)


def negative_runs(kappa) -> list[tuple[int, int]]:
    """Maximal cyclic runs ``(first, last)`` of negative curvature; ``last`` may wrap."""
    neg = np.asarray(kappa) < 0
    n = len(neg)
    if not neg.any() or neg.all():
        return []
    shift = int(np.argmin(neg))  # a non-negative vertex
    rolled = np.roll(neg, -shift)
    runs = []
    i = 0
    while i < n:
        if rolled[i]:
            j = i
            while j + 1 < n and rolled[j + 1]:
                j += 1
            runs.append(((i + shift) % n, (j + shift) % n))
            i = j + 1
        else:
            i += 1
    return runs


def _densify(chain, step=1.0):
    out = [chain[0]]
    for a, b in zip(chain[:-1], chain[1:]):
        n = max(int(np.ceil(np.linalg.norm(b - a) / step)), 1)
        for s in range(1, n + 1):
            out.append(a + (b - a) * s / n)
    return np.array(out)


def _chain_area(chain) -> float:
    x, y = chain[:, 0], chain[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def _hull_bridge(points):
    """Hull chain from ``points[0]`` to ``points[-1]`` that encloses the most area."""
    chord = np.array([points[0], points[-1]])
    try:
        hull = ConvexHull(points)
    except (QhullError, ValueError):
        return chord
    order = list(hull.vertices)
    last = len(points) - 1
    if 0 not in order or last not in order:
        return chord
    i, j = order.index(0), order.index(last)
    k = len(order)
    forward = points[[order[(i + s) % k] for s in range((j - i) % k + 1)]]
    backward = points[[order[(i - s) % k] for s in range((i - j) % k + 1)]]
    return max((forward, backward), key=_chain_area)


def _bridge_once(contour: Contour):
    neg = contour.curvature < 0
    n = len(neg)
    shift = int(np.argmin(neg))  # vertex 0 after rolling is not concave
    verts = np.roll(contour.vertices, -shift, axis=0)
    neg = np.roll(neg, -shift)
    pieces = []
    cursor = 0
    i = 1
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        lo, hi = i - 1, j + 1
        pts = verts[lo:hi + 1] if hi < n else np.vstack([verts[lo:], verts[:1]])
        pieces.append(verts[cursor:lo])
        pieces.append(_densify(_hull_bridge(pts))[:-1])
        cursor = hi
        i = hi + 1
    if cursor < n:
        pieces.append(verts[cursor:])
    new = np.vstack(pieces)
    keep = np.ones(len(new), bool)
    keep[1:] = np.any(np.abs(np.diff(new, axis=0)) > 1e-9, axis=1)
    return new[keep]


def convex_hull_negative_runs(contour: Contour,
                              smoothing_sigma_arclength: float = DEFAULT_CURVATURE_SIGMA,
                              max_passes: int = 10) -> Contour:
    """Bridge every concave run by the outer side of its convex hull.

    Each maximal run of negative-curvature vertices, together with its two
    flanking vertices, is replaced by the hull chain that fills the concavity,
    resampled at unit spacing, and curvature is recomputed.  Bridging a run
    can leave a shallower concave turn at its ends, so passes repeat until no
    run is left or the enclosed area stops growing.
    """
    if contour.curvature is None:
        contour = curvature(contour, smoothing_sigma_arclength)
    for _ in range(max_passes):
        neg = contour.curvature < 0
        if not neg.any() or neg.all():
            break
        verts = _bridge_once(contour)
        if signed_area(verts) <= contour.signed_area + 1e-9:
            break
        contour = curvature(Contour(verts, degenerate=contour.degenerate), smoothing_sigma_arclength)
    return contour


def centers_of_curvature(contour: Contour, mask, V, kappa_min: float, v_band=(0.0, 0.2)) -> np.ndarray:
    """Candidate seed positions: each vertex's centre of curvature.

    Only vertices with curvature above ``kappa_min`` contribute.  Candidates
    must land on a mask cell and have band potential within ``v_band``.
    ``V`` may be a :class:`~salr.potential.ConfiningPotential` on the mask's
    grid or a plain array of potential values.
    """
    if contour.curvature is None:
        raise ValueError("contour has no curvature; call curvature() first")
    mask = np.asarray(mask, bool)
    sel = contour.curvature > kappa_min
    if not sel.any():
        warnings.warn("no vertex has curvature above kappa_min; no candidates")
        return np.zeros((0, 2))
    cand = contour.vertices[sel] + contour.inward_normal[sel] / contour.curvature[sel, None]
    cells = np.rint(cand).astype(int)
    inside = np.all((cells >= 0) & (cells < np.array(mask.shape)), axis=1)
    cand, cells = cand[inside], cells[inside]
    inside = mask[cells[:, 0], cells[:, 1]]
    cand = cand[inside]
    if len(cand):
        values = getattr(V, "band_values", V)
        v = interpolate(values, cand)
        cand = cand[(v >= v_band[0]) & (v <= v_band[1])]
    if not len(cand):
        warnings.warn("centre-of-curvature candidate set is empty")
    return cand
