"""Seed extraction from settled particles and multi-replicate consensus."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .potential import InteractionSpec


@dataclass(frozen=True)
class SeedPoint:
    position: np.ndarray
    support: int = 1
    object_id: int = 0
    replicate_id: int | str = 0


@dataclass(frozen=True)
class ConsensusConfig:
    replicates: int = 1
    min_support_fraction: float = 0.25
    link_radius: float = 2.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 < self.min_support_fraction <= 1:
            raise ValueError("min_support_fraction must lie in (0, 1]")
        if self.link_radius <= 0:
            raise ValueError("link_radius must be positive")

    @property
    def min_support(self) -> int:
        return max(1, math.ceil(self.min_support_fraction * self.replicates - 1e-9))


def single_linkage(points, radius: float, p: float = 2.0) -> np.ndarray:
    """Group labels of the components of the ``d <= radius`` neighbour graph."""
    pts = np.asarray(points, dtype=float)
    if not len(pts):
        return np.zeros(0, dtype=int)
    pairs = cKDTree(pts).query_pairs(radius, p=p, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pts), len(pts)))
    _, labels = connected_components(graph, directed=False)
    return labels


def link_distance(spec: InteractionSpec, solver_scale: float = 1.0) -> float:
    """Particle grouping distance in solver space: ``0.7 r0 + 0.3 ra`` scaled."""
    return (0.7 * spec.r0 + 0.3 * spec.ra) * solver_scale


def _grouped(points, labels):
    """Mean and size per group, ordered lexicographically by mean."""
    groups = []
    for lab in np.unique(labels):
        members = points[labels == lab]
        groups.append((members.mean(axis=0), len(members)))
    groups.sort(key=lambda g: tuple(g[0]))
    return groups


def extract_seeds(positions, spec: InteractionSpec, solver_scale: float = 1.0, metric_p: float = 2.0,
                  object_id: int = 0, replicate_id: int | str = 0) -> list[SeedPoint]:
    """One seed per single-linkage group of settled particles, in data units.

    ``positions`` are solver-space coordinates (or anything with a
    ``system.positions`` attribute, such as an integration result).
    """
    if hasattr(positions, "system"):
        positions = positions.system.positions
    pts = np.asarray(positions, dtype=float)
    labels = single_linkage(pts, link_distance(spec, solver_scale), metric_p)
    return [SeedPoint(mean / solver_scale, size, object_id, replicate_id)
            for mean, size in _grouped(pts, labels)]


def consensus(seeds_per_replicate: list[list[SeedPoint]], cfg: ConsensusConfig) -> list[SeedPoint]:
    """Pool seeds of all replicates and keep clusters found often enough.

    With a single replicate, the seeds are returned unchanged.
    """
    if not seeds_per_replicate:
        raise ValueError("need at least one replicate")
    if cfg.replicates == 1 and len(seeds_per_replicate) == 1:
        return list(seeds_per_replicate[0])
    pooled = [s for rep in seeds_per_replicate for s in rep]
    if not pooled:
        return []
    pts = np.array([s.position for s in pooled], dtype=float)
    labels = single_linkage(pts, cfg.link_radius)
    object_id = pooled[0].object_id
    return [SeedPoint(mean, size, object_id, "consensus")
            for mean, size in _grouped(pts, labels) if size >= cfg.min_support]
