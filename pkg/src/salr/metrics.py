"""Seed-to-truth matching, F1 and the seed-count error distribution."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchOutcome:
    tp: int
    fp: int
    fn: int
    assignment: list[tuple[int, int]] = field(default_factory=list)

    @property
    def delta_n(self) -> int:
        """Seed-count error ``FP - FN`` (equals seeds minus truths)."""
        return self.fp - self.fn

    def __add__(self, other: "MatchOutcome") -> "MatchOutcome":
        return MatchOutcome(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _as_points(a):
    a = np.asarray(a, dtype=float)
    return a.reshape(len(a), -1) if a.size else np.zeros((len(a), 0))


def match(seeds, truths, delta_r: float = 3.0) -> MatchOutcome:
    """Greedy one-to-one matching of seeds to truth points.

    All seed-truth pairs closer than ``delta_r`` are visited in order of
    increasing Euclidean distance (ties by seed index, then truth index); a
    pair is accepted when neither side is taken yet.
    """
    if not delta_r > 0:
        raise ValueError("delta_r must be positive")
    s, t = _as_points(seeds), _as_points(truths)
    if not len(s) or not len(t):
        return MatchOutcome(0, len(s), len(t))
    d = cdist(s, t)
    si, ti = np.nonzero(d <= delta_r)
    order = np.lexsort((ti, si, d[si, ti]))
    used_s, used_t, pairs = set(), set(), []
    for k in order:
        a, b = int(si[k]), int(ti[k])
        if a in used_s or b in used_t:
            continue
        used_s.add(a)
        used_t.add(b)
        pairs.append((a, b))
    tp = len(pairs)
    return MatchOutcome(tp, len(s) - tp, len(t) - tp, pairs)


def f1(outcome: MatchOutcome) -> float:
    denom = 2 * outcome.tp + outcome.fn + outcome.fp
    if denom == 0:
        raise ValueError("F1 undefined: no seeds and no truths")
    return 2 * outcome.tp / denom


def aggregate(outcomes) -> MatchOutcome:
    total = MatchOutcome(0, 0, 0)
    for o in outcomes:
        total = total + o
    return total


def fd_histogram(outcomes, k: int | None = None) -> dict[int, float]:
    """Fraction of objects by seed-count error ``FP - FN``.

    With ``k`` the returned keys are exactly ``-k..k`` (zeros included) and
    out-of-range objects are left out, so the fractions may sum below one.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("need at least one object")
    counts = Counter(o.delta_n for o in outcomes)
    m = len(outcomes)
    if k is None:
        return {dn: counts[dn] / m for dn in sorted(counts)}
    return {dn: counts.get(dn, 0) / m for dn in range(-k, k + 1)}


def f1_curve(seeds, truths, delta_r_list) -> list[tuple[float, float]]:
    """Aggregate F1 at each matching radius.

    ``seeds`` and ``truths`` are point arrays for a single object, or dicts
    mapping object id to point arrays (ids missing on one side count as empty).
    """
    radii = [float(r) for r in delta_r_list]
    if any(r <= 0 for r in radii) or radii != sorted(radii):
        raise ValueError("delta_r values must be positive and ascending")
    if not isinstance(seeds, dict):
        seeds, truths = {0: seeds}, {0: truths}
    ids = sorted(set(seeds) | set(truths))
    empty = np.zeros((0, 0))
    curve = []
    for r in radii:
        total = aggregate(match(seeds.get(i, empty), truths.get(i, empty), r) for i in ids)
        curve.append((r, f1(total)))
    return curve


def compare_with_optimal(seeds, truths, delta_r: float) -> tuple[int, int]:
    """Greedy TP next to the maximum-cardinality matching TP, for diagnostics."""
    s, t = _as_points(seeds), _as_points(truths)
    greedy = match(s, t, delta_r).tp
    if not len(s) or not len(t):
        return greedy, 0
    adj = csr_matrix(cdist(s, t) <= delta_r)
    best = int(np.sum(maximum_bipartite_matching(adj, perm_type="column") >= 0))
    if best != greedy:
        log.info("greedy matching found %d pairs, optimum %d", greedy, best)
    return greedy, best
