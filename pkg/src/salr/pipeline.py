"""End-to-end seed detection for greyscale images and scatter points."""
from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .cluster import ConsensusConfig, SeedPoint, consensus, extract_seeds
from .dynamics import IntegrationError, SolverConfig, integrate, to_solver_space
from .field import (bin_points, connected_components, gaussian_smooth, log_otsu_threshold,
                    multiscale_log_filter)
from .geometry import (centers_of_curvature, convex_hull_negative_runs, curvature, is_convex,
                       trace_contour)
from .metrics import MatchOutcome, f1_curve, fd_histogram, match
from .particles import InitConfig, init_particles, particle_count
from .potential import InteractionSpec, confining_from_density, confining_from_mask, interior_distance

log = logging.getLogger(__name__)

THRESHOLD_MODES = ("log-otsu", "mlog+fixed")
SCATTER_POTENTIALS = ("density", "mask")


@dataclass(frozen=True)
class PipelineConfig:
    """All model and pipeline settings; model defaults follow the reference parameter table."""

    # model
    rs: float = 5.0
    lambda_max: float = 18.0
    ra: float = 13.0
    r0: float = 2.0
    d0: float = -1.0
    v_min: float = 0.0
    v_max: float = 0.2
    beta: float = 1.0 / 3.0
    alpha_rate: float = 5e-4
    s0: float = 0.01
    mass: float = 1.0
    k: float = 1.0
    strategy: str = "cvxhll-coc"
    scale_invariant: bool = True
    metric_p: float = 2.0
    ell: float | None = None
    # solver
    rel_tol: float = 1e-3
    abs_tol: float = 1e-6
    t_end: float = 1000.0
    conv_window: float = 5.0
    conv_speed: float = 2e-3
    # replicates and consensus
    replicates: int | None = None  # None: 1 for images, 5 for scatter data
    min_support_fraction: float = 0.25
    link_radius: float | None = None  # None: r0
    rng_seed: int = 0
    # image front end
    threshold_mode: str = "log-otsu"
    mlog_sigmas: tuple = (4.0, 6.0, 8.0, 10.0)
    mlog_threshold: float = 0.0
    blur_sigma: float = 1.0
    potential_sigma: float = 1.0
    fill_holes: bool = True
    min_object_size: int = 9
    crop_margin: int = 8
    curvature_sigma: float = 6.0
    kappa_min: float | None = None  # None: 1 / (4 lambda_max)
    # scatter front end
    std_scale: bool = True
    axis_scale: tuple | None = None
    bins_per_axis: tuple | None = None
    bin_width: float | None = None
    density_sigma: float = 1.0
    density_threshold: float = 5.0
    grad_percentile: float = 0.99
    grad_target: float = 0.4
    scatter_potential: str = "density"

    def __post_init__(self):
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.scatter_potential not in SCATTER_POTENTIALS:
            raise ValueError(f"scatter_potential must be one of {SCATTER_POTENTIALS}")
        if self.replicates is not None and self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.rs <= 0:
            raise ValueError("rs must be positive")
        InteractionSpec(self.d0, self.r0, self.ra)
        self.init_config()

    # derived configs ------------------------------------------------------

    @property
    def spec(self) -> InteractionSpec:
        return InteractionSpec(self.d0, self.r0, self.ra)

    def init_config(self, strategy=None, seed=None) -> InitConfig:
        return InitConfig(self.rs, strategy or self.strategy, self.beta, self.s0, self.mass,
                          (self.v_min, self.v_max), self.rng_seed if seed is None else seed)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.alpha_rate, self.k, self.rel_tol, self.abs_tol, self.t_end,
                            self.conv_window, self.conv_speed, self.metric_p, self.ell)

    def consensus_config(self, replicates: int) -> ConsensusConfig:
        link = self.r0 if self.link_radius is None else self.link_radius
        return ConsensusConfig(replicates, self.min_support_fraction, link)

    @property
    def kappa_threshold(self) -> float:
        return 1.0 / (4.0 * self.lambda_max) if self.kappa_min is None else self.kappa_min

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(name: str, text: str, default):
    text = text.strip()
    kind = PipelineConfig.__dataclass_fields__[name].type
    if text.lower() in ("none", "") and "None" in str(kind):
        return None
    if "bool" in str(kind):
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if "tuple" in str(kind):
        return tuple(float(v) for v in text.replace(",", " ").split())
    if "int" in str(kind) and "float" not in str(kind):
        return int(text)
    if "float" in str(kind):
        return math.inf if text.lower() in ("inf", "infinity") else float(text)
    if isinstance(default, str) or "str" in str(kind):
        return text
    raise ValueError(f"{name}: cannot parse {text!r}")  # pragma: no cover


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Flat ``key = value`` text; ``#`` starts a comment; unknown keys are errors."""
    base = base or PipelineConfig()
    known = PipelineConfig.__dataclass_fields__
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            changes[key] = _parse_value(key, value, getattr(base, key))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return base.replace(**changes)


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def config_dict(cfg: PipelineConfig) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cfg).items()}


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class ObjectResult:
    object_id: int
    seeds: list[SeedPoint]
    diagnostics: dict
    replicate_seeds: list[list[SeedPoint]] = field(default_factory=list)
    initial_positions: list[np.ndarray] = field(default_factory=list)


@dataclass
class DetectionResult:
    objects: list[ObjectResult]
    config: dict
    timing: dict
    mask: np.ndarray | None = None
    labels: np.ndarray | None = None
    potential: object = None  # scatter runs: the shared confining well
    transform: "AxisTransform | None" = None

    @property
    def seeds(self) -> list[SeedPoint]:
        return [s for o in self.objects for s in o.seeds]

    def seeds_by_object(self) -> dict[int, np.ndarray]:
        out = {}
        for o in self.objects:
            n = len(o.seeds[0].position) if o.seeds else 2
            out[o.object_id] = np.array([s.position for s in o.seeds], float).reshape(-1, n)
        return out

    @property
    def all_failed(self) -> bool:
        """True when some object ran dynamics and no replicate converged anywhere."""
        ran = [o for o in self.objects if o.diagnostics.get("simulated")]
        return bool(ran) and not any(o.diagnostics.get("converged_replicates", 0) for o in ran)

    def to_json(self) -> dict:
        return {
            "objects": [
                {"object_id": o.object_id,
                 "seeds": [{"position": s.position.tolist(), "support": s.support} for s in o.seeds],
                 "diagnostics": o.diagnostics}
                for o in self.objects
            ],
            "config": self.config,
            "timing": self.timing,
        }


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def segment(image, cfg: PipelineConfig) -> np.ndarray:
    """Foreground mask: blur, threshold, then optional hole filling and small-object removal."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    blurred = gaussian_smooth(image, cfg.blur_sigma)
    if cfg.threshold_mode == "log-otsu":
        mask = log_otsu_threshold(blurred)
    else:
        mask = multiscale_log_filter(blurred, cfg.mlog_sigmas) > cfg.mlog_threshold
    if cfg.fill_holes:
        mask = ndimage.binary_fill_holes(mask)
    if cfg.min_object_size > 1:
        labels, count = connected_components(mask)
        if count:
            sizes = np.bincount(labels.ravel())
            small = sizes < cfg.min_object_size
            small[0] = False
            mask = mask & ~small[labels]
    return mask


def short_circuit(region, contour, cfg: PipelineConfig, lam: float | None = None):
    """Centroid seed and reason when an object needs no simulation, else ``None``.

    An object is settled directly when it is smaller than one particle,
    when it holds a single particle, or when its boundary is convex.
    """
    region = np.asarray(region, bool)
    cells = np.argwhere(region)
    centroid = cells.mean(axis=0)
    area = len(cells)
    if area < math.pi * cfg.rs**2:
        return centroid, "smaller than a particle"
    if particle_count(area, cfg.rs, region.ndim) == 1:
        return centroid, "single particle"
    if lam is None:
        lam = float(interior_distance(region).max())
    if contour is not None and is_convex(contour, lam):
        return centroid, "convex"
    return None


def _run_replicates(points, V, cfg: PipelineConfig, strategy, candidates, replicates, solver_scale,
                    params, cell_volume, object_id, record_init=False):
    solver = cfg.solver_config()
    per_rep, stats, inits = [], [], []
    for rep in range(replicates):
        init = init_particles(points, V, cfg.init_config(strategy, cfg.rng_seed + rep), candidates,
                              solver_scale, cell_volume, cfg.metric_p)
        if record_init:
            inits.append(init.positions / solver_scale)
        try:
            state = integrate(init, V, params, solver, solver_scale)
        except IntegrationError as exc:
            log.warning("object %d replicate %d: %s", object_id, rep, exc)
            stats.append({"replicate": rep, "error": str(exc), "converged": False})
            per_rep.append([])
            continue
        seeds = extract_seeds(state.system.positions, cfg.spec, solver_scale, cfg.metric_p,
                              object_id, rep)
        per_rep.append(seeds)
        stats.append({"replicate": rep, **state.stats, "from_candidates": init.info["from_candidates"]})
    return per_rep, stats, inits


def force_balance_ratio(V, region, solver_scale: float, ell: float) -> float:
    """Median confining force over the region relative to ``ell**-2``, both in solver units."""
    idx = np.argwhere(region)
    g = np.sqrt(sum(grad[tuple(idx.T)] ** 2 for grad in V.grad)) / solver_scale
    return float(np.median(g) * ell * ell)


def detect_image(image, cfg: PipelineConfig = PipelineConfig(), mask=None,
                 record_init: bool = False) -> DetectionResult:
    """Seed points of every object in a greyscale image.

    Parameters
    ----------
    image : 2-D array
        Intensities; ignored when ``mask`` is given.
    mask : 2-D bool array, optional
        Skip segmentation and use this foreground directly.

    Raises
    ------
    ValueError
        For a blank image or an empty foreground.
    """
    t_start = time.perf_counter()
    if mask is None:
        mask = segment(image, cfg)
    mask = np.asarray(mask, bool)
    if mask.ndim != 2:
        raise ValueError("image must be 2-D")
    if not mask.any():
        raise ValueError("empty mask after thresholding")
    labels, count = connected_components(mask)
    t_seg = time.perf_counter()
    replicates = cfg.replicates or 1
    params, solver_scale = to_solver_space(cfg.spec, cfg.ell)
    objects = []
    margin = cfg.crop_margin
    padded = np.pad(labels, margin)
    slices = ndimage.find_objects(padded)
    for lab, sl in enumerate(slices, start=1):
        t_obj = time.perf_counter()
        sl = tuple(slice(s.start - margin, s.stop + margin) for s in sl)
        offset = np.array([s.start - margin for s in sl], float)  # crop origin in image indices
        region = padded[sl] == lab
        contour = curvature(trace_contour(region), cfg.curvature_sigma)
        lam = float(interior_distance(region).max())
        quick = short_circuit(region, contour, cfg, lam)
        if quick is not None:
            centroid, reason = quick
            seeds = [SeedPoint(centroid + offset, int(region.sum()), lab, "short-circuit")]
            diag = {"simulated": False, "reason": f"{reason} short-circuit (no simulation)",
                    "area": int(region.sum()), "lambda": lam}
            objects.append(ObjectResult(lab, seeds, diag))
            continue
        V = confining_from_mask(region, cfg.lambda_max, cfg.scale_invariant, cfg.potential_sigma)
        ratio = force_balance_ratio(V, region, solver_scale, params.ra)
        if not 0.1 <= ratio <= 10:
            warnings.warn(f"object {lab}: confining and interaction forces differ by {ratio:.3g}x")
        strategy, candidates = cfg.strategy, None
        if strategy == "cvxhll-coc":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                hull = convex_hull_negative_runs(contour, cfg.curvature_sigma)
                candidates = centers_of_curvature(hull, region, V, cfg.kappa_threshold,
                                                  (cfg.v_min, cfg.v_max))
            if not len(candidates):
                warnings.warn(f"object {lab}: no curvature candidates; using uniform-random start")
                strategy = "uniform-random"
        points = np.argwhere(region).astype(float)
        per_rep, stats, inits = _run_replicates(points, V, cfg, strategy, candidates, replicates,
                                                solver_scale, params, 1.0, lab, record_init)
        if replicates > 1:
            seeds = consensus(per_rep, cfg.consensus_config(replicates))
        else:
            seeds = per_rep[0]
        seeds = [dataclasses.replace(s, position=s.position + offset, object_id=lab) for s in seeds]
        per_rep = [[dataclasses.replace(s, position=s.position + offset) for s in rep] for rep in per_rep]
        converged = sum(1 for s in stats if s.get("converged"))
        diag = {"simulated": True, "reason": None, "area": int(region.sum()), "lambda": lam,
                "strategy": strategy, "candidates": 0 if candidates is None else len(candidates),
                "replicates": stats, "converged_replicates": converged,
                "force_balance_ratio": ratio, "seconds": time.perf_counter() - t_obj}
        if not seeds:
            diag["reason"] = "no consensus seed"
        objects.append(ObjectResult(lab, seeds, diag, per_rep, [i + offset for i in inits]))
    timing = {"segmentation": t_seg - t_start, "total": time.perf_counter() - t_start}
    return DetectionResult(objects, config_dict(cfg), timing, mask, labels)


# ---------------------------------------------------------------------------
# Scatter data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisTransform:
    """Map from data units to working units: ``(x - offset) / scale``."""

    offset: np.ndarray
    scale: np.ndarray

    def forward(self, x):
        return (np.asarray(x, float) - self.offset) / self.scale

    def inverse(self, w):
        return np.asarray(w, float) * self.scale + self.offset


def axis_transform(points, cfg: PipelineConfig) -> AxisTransform:
    pts = np.asarray(points, float)
    n = pts.shape[1]
    offset = pts.mean(axis=0) if cfg.std_scale else np.zeros(n)
    scale = pts.std(axis=0) if cfg.std_scale else np.ones(n)
    if np.any(scale <= 0):
        raise ValueError("an axis has zero spread; cannot scale by its standard deviation")
    if cfg.axis_scale is not None:
        factors = np.broadcast_to(np.asarray(cfg.axis_scale, float), (n,))
        if np.any(factors <= 0):
            raise ValueError("axis_scale factors must be positive")
        scale = scale / factors
    return AxisTransform(offset, scale)


def _binning(work, cfg: PipelineConfig, value_range=None):
    n = work.shape[1]
    if value_range is None:
        lo, hi = work.min(axis=0), work.max(axis=0)
    else:
        lo, hi = (np.asarray(v, float) for v in zip(*value_range))
    if cfg.bin_width is not None:
        width = float(cfg.bin_width)
        pad = 2 * width if value_range is None else 0.0
        lo = np.floor((lo - pad) / width) * width
        bins = np.maximum(np.ceil((hi + pad - lo) / width).astype(int), 1)
        hi = lo + bins * width
    else:
        bins = np.broadcast_to(np.asarray(cfg.bins_per_axis or (33,), int), (n,)).copy()
        if value_range is None:
            span = np.where(hi > lo, hi - lo, 1.0)
            pad = 2 * span / np.maximum(bins - 4, 1)
            lo, hi = lo - pad, hi + pad
    return bin_points(work, bins, list(zip(lo, hi)))


def scatter_potential(counts_grid, cfg: PipelineConfig):
    counts, spacing, origin = counts_grid.counts, counts_grid.spacing, counts_grid.origin
    if cfg.scatter_potential == "density":
        return confining_from_density(counts, cfg.density_sigma, cfg.grad_percentile, cfg.grad_target,
                                      threshold=cfg.density_threshold, spacing=spacing, origin=origin)
    smooth = gaussian_smooth(counts, cfg.density_sigma)
    support = smooth >= cfg.density_threshold
    if not support.any():
        raise ValueError(f"no cell reaches the density threshold {cfg.density_threshold}")
    return confining_from_mask(support, cfg.lambda_max, cfg.scale_invariant, cfg.potential_sigma,
                               origin=origin, spacing=spacing)


def detect_scatter(points, cfg: PipelineConfig = PipelineConfig(strategy="uniform-random"),
                   value_range=None, record_init: bool = False) -> DetectionResult:
    """Cluster centres of n-D scatter points.

    Points are mapped to working units (per-axis standard deviation and
    optional ``axis_scale`` factors), binned, turned into a confining well and
    fed to the particle dynamics; seeds come back in data units.  Model
    lengths (``rs``, ``r0``, ``ra``) are in working units.  ``value_range``
    optionally fixes the binning extent in working units.
    """
    t_start = time.perf_counter()
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError("points must be an (m, n) array with n >= 2")
    if not len(pts):
        raise ValueError("no points")
    transform = axis_transform(pts, cfg)
    work = transform.forward(pts)
    grid = _binning(work, cfg, value_range)
    V = scatter_potential(grid, cfg)
    t_pot = time.perf_counter()
    strategy = cfg.strategy
    if strategy == "cvxhll-coc":
        warnings.warn("curvature initialisation needs a 2-D mask; using uniform-random for scatter data")
        strategy = "uniform-random"
    replicates = cfg.replicates or 5
    params, solver_scale = to_solver_space(cfg.spec, cfg.ell)
    support = V.support
    points_w = V.to_data(np.argwhere(support))
    cell_volume = float(np.prod(V.spacing))
    per_rep, stats, inits = _run_replicates(points_w, V, cfg, strategy, None, replicates, solver_scale,
                                            params, cell_volume, 0, record_init)
    if replicates > 1:
        seeds = consensus(per_rep, cfg.consensus_config(replicates))
    else:
        seeds = per_rep[0]

    def to_data(s):
        return dataclasses.replace(s, position=transform.inverse(s.position))

    seeds = [to_data(s) for s in seeds]
    per_rep_data = [[to_data(s) for s in rep] for rep in per_rep]
    converged = sum(1 for s in stats if s.get("converged"))
    diag = {"simulated": True, "reason": None if seeds else "no consensus seed",
            "support_cells": int(support.sum()), "support_volume": int(support.sum()) * cell_volume,
            "particles": [s.get("particles") for s in stats], "grad_scale": V.grad_scale,
            "replicates": stats, "converged_replicates": converged, "bins": list(grid.counts.shape),
            "dropped_points": grid.dropped}
    obj = ObjectResult(0, seeds, diag, per_rep_data, [transform.inverse(i) for i in inits])
    timing = {"potential": t_pot - t_start, "total": time.perf_counter() - t_start}
    return DetectionResult([obj], config_dict(cfg), timing, potential=V, transform=transform)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def _plateau_maxima(values, region) -> np.ndarray:
    footprint = ndimage.generate_binary_structure(values.ndim, values.ndim)
    peak = (values == ndimage.maximum_filter(values, footprint=footprint, mode="constant",
                                             cval=-np.inf)) & region
    labels, count = connected_components(peak)
    if not count:
        return np.zeros((0, values.ndim))
    centroids = ndimage.center_of_mass(peak, labels, np.arange(1, count + 1))
    return np.array(centroids, dtype=float).reshape(count, values.ndim)


def run_baseline_dt_maxima(mask) -> dict[int, np.ndarray]:
    """Local maxima of the interior distance transform, per object.

    Plateaus of equal maxima (full neighbourhood) are merged into their centroid.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("empty mask")
    labels, count = connected_components(mask)
    out = {}
    for lab in range(1, count + 1):
        region = labels == lab
        dt = np.where(region, interior_distance(region), 0.0)
        out[lab] = _plateau_maxima(dt, region)
    return out


def run_baseline_density_peaks(points, cfg: PipelineConfig = PipelineConfig(), value_range=None) -> np.ndarray:
    """Local maxima of the smoothed bin density over the support, in data units."""
    pts = np.asarray(points, float)
    transform = axis_transform(pts, cfg)
    grid = _binning(transform.forward(pts), cfg, value_range)
    smooth = gaussian_smooth(grid.counts, cfg.density_sigma)
    peaks = _plateau_maxima(smooth, smooth >= cfg.density_threshold)
    return transform.inverse(peaks * grid.spacing + grid.origin)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    f1_curve: list[tuple[float, float]]
    fd: dict[int, float]
    per_object: list[dict]
    baseline: "EvalReport | None" = None

    def to_json(self) -> dict:
        out = {"F1_curve": [list(p) for p in self.f1_curve],
               "FD": {str(k): v for k, v in self.fd.items()},
               "per_object": self.per_object}
        if self.baseline is not None:
            out["baseline"] = self.baseline.to_json()
        return out


def _evaluate(seeds: dict, truth: dict, delta_r_list, delta_r_fd) -> EvalReport:
    curve = f1_curve(seeds, truth, delta_r_list)
    outcomes: list[MatchOutcome] = []
    per_object = []
    for oid in sorted(truth):
        o = match(seeds[oid], truth[oid], delta_r_fd)
        outcomes.append(o)
        per_object.append({"object_id": oid, "tp": o.tp, "fp": o.fp, "fn": o.fn, "delta_n": o.delta_n})
    return EvalReport(curve, fd_histogram(outcomes), per_object)


def benchmark(results, truth: dict, delta_r_list=tuple(range(1, 11)), baseline: dict | None = None,
              delta_r_fd: float = 3.0) -> EvalReport:
    """F1 curve and seed-count error distribution of a detection against truth.

    ``results`` is a :class:`DetectionResult` or a dict of per-object seed
    arrays.  ``baseline`` (per-object seed arrays, e.g. from
    :func:`run_baseline_dt_maxima`) is scored the same way.

    Raises
    ------
    ValueError
        When object ids of seeds and truth differ.
    """
    seeds = results.seeds_by_object() if isinstance(results, DetectionResult) else dict(results)
    missing = sorted(set(truth) - set(seeds))
    extra = sorted(set(seeds) - set(truth))
    if missing or extra:
        raise ValueError(f"object ids differ: truth-only {missing}, seeds-only {extra}")
    report = _evaluate(seeds, truth, delta_r_list, delta_r_fd)
    if baseline is not None:
        base = {oid: baseline.get(oid, np.zeros((0, 2))) for oid in truth}
        report.baseline = _evaluate(base, truth, delta_r_list, delta_r_fd)
    return report
