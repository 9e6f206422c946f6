"""Particle counts, lattice placement and initial state."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

STRATEGIES = ("random", "uniform-random", "cvxhll-coc")


def ball_volume(radius: float, n: int) -> float:
    """Volume of the n-ball of the given radius."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * radius**n


def particle_count(region_volume: float, rs: float, n: int) -> int:
    """Particles needed so each occupies a Wigner-Seitz ball of radius ``rs``."""
    if region_volume <= 0 or rs <= 0:
        raise ValueError("region_volume and rs must be positive")
    return max(1, int(round(region_volume / ball_volume(rs, n))))


@dataclass(frozen=True)
class InitConfig:
    rs: float = 5.0
    strategy: str = "cvxhll-coc"
    beta: float = 1.0 / 3.0
    s0: float = 0.01
    mass: float = 1.0
    v_band: tuple[float, float] = (0.0, 0.2)
    rng_seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        lo, hi = self.v_band
        if not (0 <= lo < hi <= 1):
            raise ValueError(f"v_band must satisfy 0 <= vmin < vmax <= 1, got {self.v_band}")
        if self.rs <= 0 or self.mass <= 0 or self.s0 < 0 or self.beta < 0:
            raise ValueError("rs and mass must be positive, s0 and beta non-negative")


@dataclass
class ParticleSystem:
    """Particle state in solver-space units."""

    positions: np.ndarray
    momenta: np.ndarray
    charges: np.ndarray
    masses: np.ndarray
    metric_p: float = 2.0
    info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1) / self.masses

    def copy(self) -> "ParticleSystem":
        return replace(self, positions=self.positions.copy(), momenta=self.momenta.copy(),
                       charges=self.charges.copy(), masses=self.masses.copy(), info=dict(self.info))


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------

_HEX_CORNERS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])


def lattice_keys(points, rs: float, origin) -> np.ndarray:
    """Integer lattice-cell coordinates of each point.

    2-D uses a hexagonal lattice with constant ``2 rs`` (Voronoi cells); higher
    dimensions use a hypercubic lattice whose cell volume equals the
    Wigner-Seitz ball.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[1]
    rel = pts - np.asarray(origin, dtype=float)
    if n == 2:
        a = 2.0 * rs
        basis = np.array([[a, 0.0], [0.5 * a, 0.5 * math.sqrt(3.0) * a]]).T  # columns
        frac = np.linalg.solve(basis, rel.T).T
        base = np.floor(frac).astype(np.int64)
        cand = base[:, None, :] + _HEX_CORNERS[None]
        sites = cand @ basis.T
        d2 = np.sum((sites - rel[:, None, :]) ** 2, axis=2)
        return cand[np.arange(len(pts)), np.argmin(d2, axis=1)]
    side = ball_volume(rs, n) ** (1.0 / n)
    return np.floor(rel / side).astype(np.int64)


def lattice_cells(points, rs: float, origin=None) -> list[np.ndarray]:
    """Partition point indices by lattice cell, in lexicographic cell order.

    ``origin`` defaults to the lower corner of the points' bounding box.
    """
    pts = np.asarray(points, dtype=float)
    if not len(pts):
        return []
    if origin is None:
        origin = pts.min(axis=0)
    keys = lattice_keys(pts, rs, origin)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    splits = np.flatnonzero(np.diff(inverse[order])) + 1
    return np.split(order, splits)


def hex_cell_area(rs: float) -> float:
    return 0.5 * math.sqrt(3.0) * (2.0 * rs) ** 2


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def random_unit_vectors(rng, count: int, n: int) -> np.ndarray:
    v = rng.standard_normal((count, n))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    while np.any(norms == 0):  # pragma: no cover - probability zero
        bad = norms[:, 0] == 0
        v[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def init_particles(region_points, V, cfg: InitConfig, candidates=None, solver_scale: float = 1.0,
                   cell_volume: float = 1.0, metric_p: float = 2.0) -> ParticleSystem:
    """Place particles inside a region and give them mass, charge and velocity.

    Parameters
    ----------
    region_points : (m, n) array
        Data coordinates of the region's grid cells.
    V : potential
        Anything with ``band_value_at`` (or ``value_at``) over data coordinates.
    cfg : InitConfig
    candidates : (k, n) array, optional
        Preferred positions for ``cvxhll-coc``, already inside the region.
    solver_scale : float
        Factor from data to solver coordinates.
    cell_volume : float
        Data-space volume of one grid cell (for the ``random`` particle count).
    """
    pts = np.asarray(region_points, dtype=float)
    n = pts.shape[1]
    rng = np.random.default_rng(cfg.rng_seed)
    band_of = getattr(V, "band_value_at", None) or V.value_at
    vals = band_of(pts)
    lo, hi = cfg.v_band
    ok = (vals >= lo) & (vals <= hi)
    if not ok.any():
        raise ValueError("V_band excludes entire object")
    filtered = pts[ok]
    origin = pts.min(axis=0)
    from_candidates = 0

    if cfg.strategy == "random":
        count = particle_count(len(pts) * cell_volume, cfg.rs, n)
        pick = rng.choice(len(filtered), size=count, replace=count > len(filtered))
        positions = filtered[pick]
    else:
        cells = lattice_cells(filtered, cfg.rs, origin)
        cand_groups = {}
        if cfg.strategy == "cvxhll-coc" and candidates is not None and len(candidates):
            cand = np.asarray(candidates, dtype=float)
            ckeys = lattice_keys(cand, cfg.rs, origin)
            for key, c in zip(map(tuple, ckeys), cand):
                cand_groups.setdefault(key, []).append(c)
        fkeys = lattice_keys(filtered, cfg.rs, origin)
        chosen = []
        for idx in cells:
            key = tuple(fkeys[idx[0]])
            group = cand_groups.get(key)
            if group:
                chosen.append(group[rng.integers(len(group))])
                from_candidates += 1
            else:
                chosen.append(filtered[idx[rng.integers(len(idx))]])
        positions = np.array(chosen)

    count = len(positions)
    charges = np.full(count, float(count) ** (-cfg.beta))
    masses = np.full(count, cfg.mass)
    momenta = cfg.mass * cfg.s0 * random_unit_vectors(rng, count, n)
    info = {"strategy": cfg.strategy, "from_candidates": from_candidates,
            "band_cells": int(ok.sum())}
    return ParticleSystem(positions * solver_scale, momenta, charges, masses, metric_p, info)
