"""SALR pair interaction and data-derived confining wells."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .field import connected_components, distance_transform, gaussian_smooth, gradient, interpolate

log = logging.getLogger(__name__)

EPSILON = 0.2


class FitError(RuntimeError):
    """The interaction-parameter fit failed to reach the residual tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (best residual {residual:.3g})")
        self.residual = residual


@dataclass(frozen=True)
class InteractionSpec:
    """User-facing shape of the pair potential: depth, minimum, attractive extent."""

    d0: float = -1.0
    r0: float = 2.0
    ra: float = 13.0

    def __post_init__(self):
        if not self.d0 < 0:
            raise ValueError(f"d0 must be negative, got {self.d0}")
        if not 0 < self.r0 < self.ra:
            raise ValueError(f"need 0 < r0 < ra, got r0={self.r0}, ra={self.ra}")

    def scaled(self, factor: float) -> "InteractionSpec":
        return InteractionSpec(self.d0, self.r0 * factor, self.ra * factor)


@dataclass(frozen=True)
class InteractionParams:
    A: float
    mu: float
    sigma: float
    epsilon: float = EPSILON
    d0: float | None = None
    r0: float | None = None
    ra: float | None = None

    def to_json(self) -> str:
        d = asdict(self)
        order = ["d0", "r0", "ra", "A", "mu", "sigma", "epsilon"]
        return json.dumps({k: d[k] for k in order})


def v_int(r, params: InteractionParams):
    """Pair potential ``1/(r + eps) - A exp(-(r - mu)^2 / (2 sigma^2))``."""
    r = np.asarray(r, dtype=float)
    g = np.exp(-((r - params.mu) ** 2) / (2.0 * params.sigma**2))
    return 1.0 / (r + params.epsilon) - params.A * g


def v_int_prime(r, params: InteractionParams):
    """Radial derivative of :func:`v_int`; the pair force magnitude is its negative."""
    r = np.asarray(r, dtype=float)
    s2 = params.sigma**2
    g = np.exp(-((r - params.mu) ** 2) / (2.0 * s2))
    return -1.0 / (r + params.epsilon) ** 2 + params.A * (r - params.mu) / s2 * g


def _residuals(x, spec: InteractionSpec, eps: float):
    A, mu, s = x
    p = InteractionParams(A, mu, s, eps)
    return np.array([
        v_int(spec.r0, p) - spec.d0,
        v_int_prime(spec.r0, p),
        v_int_prime(spec.ra, p),
    ])


def _jacobian(x, spec: InteractionSpec, eps: float):
    A, mu, s = x
    rows = []
    for r, kind in ((spec.r0, "value"), (spec.r0, "slope"), (spec.ra, "slope")):
        u = r - mu
        g = np.exp(-(u * u) / (2 * s * s))
        if kind == "value":
            rows.append([-g, -A * g * u / s**2, -A * g * u * u / s**3])
        else:
            rows.append([
                u / s**2 * g,
                A * g / s**2 * (u * u / s**2 - 1.0),
                A * u * g / s**3 * (u * u / s**2 - 2.0),
            ])
    return np.array(rows)


def _damped_gauss_newton(x0, spec, eps, max_iter=200):
    x = np.array(x0, dtype=float)
    res = _residuals(x, spec, eps)
    cost = res @ res
    damping = 1e-3
    for _ in range(max_iter):
        if cost < 1e-26:
            break
        J = _jacobian(x, spec, eps)
        JtJ = J.T @ J
        g = J.T @ res
        improved = False
        for _ in range(30):
            try:
                step = np.linalg.solve(JtJ + damping * np.diag(np.diag(JtJ) + 1e-12), -g)
            except np.linalg.LinAlgError:
                damping *= 10
                continue
            trial = x + step
            if trial[0] > 0 and trial[2] > 0:
                tres = _residuals(trial, spec, eps)
                tcost = tres @ tres
                if np.isfinite(tcost) and tcost < cost:
                    x, res, cost = trial, tres, tcost
                    damping = max(damping / 3, 1e-12)
                    improved = True
                    break
            damping *= 4
        if not improved:
            break
    return x, float(np.sqrt(cost))


def solve_interaction_params(
    spec: InteractionSpec,
    epsilon: float = EPSILON,
    restarts: int = 20,
    tol: float = 1e-4,
    seed: int = 0,
) -> InteractionParams:
    """Fit ``(A, mu, sigma)`` so the pair potential has depth ``d0`` at ``r0``
    and turns from attractive to repulsive at ``ra``.

    Three residuals (value at ``r0``, slope at ``r0``, slope at ``ra``) are driven
    to zero by damped Gauss-Newton from ``(1.5, r0/2, 0.3 ra)``; if that start
    fails, up to ``restarts`` perturbed starts are tried.

    Raises
    ------
    FitError
        If no start brings the residual norm below ``tol``.
    """
    guess = np.array([1.5, 0.5 * spec.r0, 0.3 * spec.ra])
    rng = np.random.default_rng(seed)
    best_x, best_res = guess, np.inf
    for attempt in range(restarts + 1):
        if attempt == 0:
            x0 = guess
        else:
            x0 = guess * np.array([np.exp(rng.normal(0, 0.5)), 1.0, np.exp(rng.normal(0, 0.5))])
            x0[1] = guess[1] + rng.normal(0, 0.3 * spec.ra)
        x, res = _damped_gauss_newton(x0, spec, epsilon)
        if res < best_res:
            best_x, best_res = x, res
        if res < tol:
            break
    if best_res >= tol:
        raise FitError(f"interaction fit did not converge for {spec}", best_res)
    A, mu, s = best_x
    return InteractionParams(float(A), float(mu), float(s), epsilon, spec.d0, spec.r0, spec.ra)


# ---------------------------------------------------------------------------
# Confining potentials
# ---------------------------------------------------------------------------

class ConfiningPotential:
    """Grid-sampled confining well with a precomputed gradient.

    Grid cell ``i`` sits at data coordinate ``origin + i * spacing``.  All
    sampling methods take and return data-space quantities.

    Attributes
    ----------
    values : ndarray
        The (smoothed, gradient-scaled) potential the particles feel.
    grad : list of ndarray
        ``gradient(values)`` in data units, one array per axis.
    band_values : ndarray
        Potential used for the initial-position band; unscaled ``1/density``
        for density wells, identical to ``values`` for mask wells.
    """

    def __init__(self, values, lam, kind, spacing=1.0, origin=0.0, unsmoothed=None,
                 band_values=None, support=None, grad_scale=1.0):
        self.values = np.asarray(values, dtype=float)
        ndim = self.values.ndim
        self.spacing = np.broadcast_to(np.asarray(spacing, float), (ndim,)).copy()
        self.origin = np.broadcast_to(np.asarray(origin, float), (ndim,)).copy()
        self.grad = gradient(self.values, self.spacing)
        self.lam = float(lam)
        self.kind = kind
        self.unsmoothed = unsmoothed
        self.band_values = self.values if band_values is None else band_values
        self.support = support
        self.grad_scale = float(grad_scale)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def to_index(self, points):
        return (np.asarray(points, dtype=float) - self.origin) / self.spacing

    def to_data(self, index):
        return np.asarray(index, dtype=float) * self.spacing + self.origin

    def value_at(self, points):
        return interpolate(self.values, np.atleast_2d(self.to_index(points)))

    def band_value_at(self, points):
        return interpolate(self.band_values, np.atleast_2d(self.to_index(points)))

    def grad_at(self, points) -> np.ndarray:
        idx = np.atleast_2d(self.to_index(points))
        return np.stack([interpolate(g, idx) for g in self.grad], axis=1)


class QuadraticWell:
    """Analytic ``V(r) = 0.5 * stiffness * |r - center|^2``; used as a test fixture."""

    kind = "analytic"

    def __init__(self, center, stiffness=1.0):
        self.center = np.asarray(center, dtype=float)
        self.stiffness = float(stiffness)

    def value_at(self, points):
        d = np.atleast_2d(points) - self.center
        return 0.5 * self.stiffness * np.sum(d * d, axis=1)

    def grad_at(self, points):
        return self.stiffness * (np.atleast_2d(points) - self.center)


class FlatPotential:
    kind = "analytic"

    def value_at(self, points):
        return np.zeros(len(np.atleast_2d(points)))

    def grad_at(self, points):
        return np.zeros_like(np.atleast_2d(points), dtype=float)


def interior_distance(mask: np.ndarray) -> np.ndarray:
    """Distance to the nearest background cell, treating off-grid cells as background."""
    padded = np.pad(np.asarray(mask, bool), 1)
    dt = distance_transform(~padded)
    return dt[(slice(1, -1),) * mask.ndim]


def mask_interior_potential(mask, lambda_max=18.0, scale_invariant=True):
    """Interior part of the mask well: ``1/dt`` or its per-object rescaled form.

    Returns the interior values (NaN outside the mask) and the largest
    per-object maximum distance.
    """
    mask = np.asarray(mask, bool)
    dt_in = interior_distance(mask)
    out = np.full(mask.shape, np.nan)
    labels, count = connected_components(mask)
    lams = np.atleast_1d(ndimage.maximum(dt_in, labels, np.arange(1, count + 1)))
    for lab, lam in zip(range(1, count + 1), lams):
        sel = labels == lab
        if scale_invariant and lam > 1.0:
            out[sel] = 1.0 / (1.0 + (lambda_max - 1.0) / (lam - 1.0) * (dt_in[sel] - 1.0))
        else:
            out[sel] = 1.0 / dt_in[sel]
    return out, float(lams.max())


def confining_from_mask(mask, lambda_max=18.0, scale_invariant=True, smooth_sigma=1.0,
                        origin=0.0, spacing=1.0) -> ConfiningPotential:
    """Well that is low deep inside each object and grows quadratically outside.

    Inside: ``1/dt(~mask)``, or with ``scale_invariant`` the form that maps every
    object's maximum interior distance ``lam`` onto ``lambda_max``.  Outside:
    ``dt(mask)**2 + 1``.  The assembled field is Gaussian smoothed.  Distances
    are measured in cells; ``spacing`` and ``origin`` only place the grid in
    data space.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("empty mask")
    if not lambda_max > 1:
        raise ValueError("lambda_max must exceed 1")
    inside, lam = mask_interior_potential(mask, lambda_max, scale_invariant)
    raw = np.where(mask, inside, distance_transform(mask) ** 2 + 1.0)
    smooth = gaussian_smooth(raw, smooth_sigma)
    return ConfiningPotential(smooth, lam, "mask", spacing=spacing, origin=origin, unsmoothed=raw,
                              support=mask)


def scale_gradient(values, grads, support, percentile=0.99, target=0.4):
    """Factor that brings the ``percentile`` quantile of ``|grad|`` over ``support`` to ``target``."""
    mag = np.sqrt(sum(g * g for g in grads))[support]
    q = float(np.quantile(mag, percentile)) if mag.size else 0.0
    if q <= 0:
        warnings.warn("confining gradient vanishes on the support; leaving it unscaled")
        return 1.0
    return target / q


def confining_from_density(counts, smooth_sigma=1.0, grad_percentile=0.99, grad_target=0.4,
                           floor=None, threshold=5.0, spacing=1.0, origin=0.0) -> ConfiningPotential:
    """Well built from a binned point density.

    Inside the support (smoothed count >= ``threshold``) the well is
    ``1/max(count, floor)``; outside it grows as the squared distance to the
    support, offset so it never drops below the support maximum.  Values and
    gradient are then scaled together so the ``grad_percentile`` quantile of
    ``|grad V|`` over the support equals ``grad_target``.
    """
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    if not counts.any():
        raise ValueError("all-zero counts")
    smooth = gaussian_smooth(counts, smooth_sigma)
    support = smooth >= threshold
    if not support.any():
        raise ValueError(f"no cell reaches the density threshold {threshold}")
    if floor is None:
        floor = float(smooth[smooth > 0].min())
    if not floor > 0:
        raise ValueError("floor must be positive")
    inside = 1.0 / np.maximum(smooth, floor)
    edge = float(inside[support].max())
    steps = np.broadcast_to(np.asarray(spacing, float), (counts.ndim,))
    if support.all():
        raw = inside
    else:
        raw = np.where(support, inside, edge + distance_transform(support, steps) ** 2)
    grads = gradient(raw, steps)
    scale = scale_gradient(raw, grads, support, grad_percentile, grad_target)
    lam = float(interior_distance(support).max())
    return ConfiningPotential(raw * scale, lam, "density", spacing=steps, origin=origin,
                              unsmoothed=raw, band_values=raw, support=support,
                              grad_scale=scale)
