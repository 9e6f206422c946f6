"""Damped Hamiltonian particle dynamics.

State lives in solver space: data coordinates times ``solver_scale``.  The
confining potential is sampled in data space, so its gradient is divided by
``solver_scale`` on the way in.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .particles import ParticleSystem
from .potential import InteractionParams, InteractionSpec, solve_interaction_params, v_int, v_int_prime

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    alpha_rate: float = 5e-4
    coupling_k: float = 1.0
    rel_tol: float = 1e-3
    abs_tol: float = 1e-6
    t_end: float = 1000.0
    conv_window: float = 5.0
    conv_speed: float = 2e-3
    metric_p: float = 2.0
    ell: float | None = None
    h_max: float | None = None
    max_steps: int = 200_000
    neighbor_cutoff: float | None = None  # in units of ra (solver space); None = all pairs
    record: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not self.t_end > self.conv_window > 0:
            raise ValueError("need t_end > conv_window > 0")
        if self.metric_p < 1:
            raise ValueError("metric_p must be >= 1")
        if self.alpha_rate < 0:
            raise ValueError("alpha_rate must be non-negative")


def minkowski_distance(x, y, p: float = 2.0) -> float:
    if p < 1:
        raise ValueError("Minkowski order p must be >= 1")
    d = np.abs(np.asarray(x, float) - np.asarray(y, float))
    if d.shape[-1:] != np.shape(x)[-1:]:
        raise ValueError("dimension mismatch")
    if math.isinf(p):
        return float(d.max())
    return float(np.sum(d**p) ** (1.0 / p))


def _pair_geometry(positions, p):
    """Pairwise distances and gradients of d(r_i, r_j) with respect to r_i."""
    diff = positions[:, None, :] - positions[None, :, :]
    ad = np.abs(diff)
    if math.isinf(p):
        axis = np.argmax(ad, axis=2)  # first maximum: lowest axis on ties
        d = np.take_along_axis(ad, axis[..., None], axis=2)[..., 0]
        grad = np.zeros_like(diff)
        np.put_along_axis(grad, axis[..., None], np.sign(np.take_along_axis(diff, axis[..., None], axis=2)), axis=2)
        return d, grad
    if p == 2:
        d = np.sqrt(np.sum(diff * diff, axis=2))
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = diff / d[..., None]
    else:
        d = np.sum(ad**p, axis=2) ** (1.0 / p)
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = np.sign(diff) * (ad / d[..., None]) ** (p - 1)
    grad[d == 0] = 0.0
    return d, grad


@njit(cache=True)
def _pair_forces(pos, q, A, mu, sigma, eps, k, p):
    # direct sum in fixed (i, j) order; p <= 0 encodes the max metric
    N, n = pos.shape
    out = np.zeros((N, n))
    s2 = sigma * sigma
    diff = np.empty(n)
    for i in range(N):
        for j in range(i + 1, N):
            d = 0.0
            axis = 0
            for a in range(n):
                diff[a] = pos[i, a] - pos[j, a]
                ad = abs(diff[a])
                if p <= 0.0:
                    if ad > d:
                        d = ad
                        axis = a
                elif p == 2.0:
                    d += ad * ad
                else:
                    d += ad ** p
            if p == 2.0:
                d = np.sqrt(d)
            elif p > 0.0:
                d = d ** (1.0 / p)
            if d == 0.0:
                continue
            u = d - mu
            dv = -1.0 / (d + eps) ** 2 + A * u / s2 * np.exp(-u * u / (2.0 * s2))
            coef = -k * q[i] * q[j] * dv
            for a in range(n):
                if p <= 0.0:
                    g = (1.0 if diff[a] > 0 else -1.0) if a == axis else 0.0
                elif p == 2.0:
                    g = diff[a] / d
                else:
                    ad = abs(diff[a])
                    g = (1.0 if diff[a] > 0 else (-1.0 if diff[a] < 0 else 0.0)) * (ad / d) ** (p - 1.0)
                out[i, a] += coef * g
                out[j, a] -= coef * g
    return out


def pairwise_force(positions, charges, params: InteractionParams, k: float = 1.0, p: float = 2.0,
                   cutoff: float | None = None) -> np.ndarray:
    """Force on each particle from every other, ``-sum_j k q_i q_j grad_i V_int(d_ij)``.

    With ``cutoff`` set, only pairs closer than ``cutoff`` interact.
    """
    positions = np.ascontiguousarray(positions, dtype=float)
    charges = np.ascontiguousarray(charges, dtype=float)
    if cutoff is not None:
        return _pruned_force(positions, charges, params, k, p, cutoff)
    code = -1.0 if math.isinf(p) else float(p)
    return _pair_forces(positions, charges, params.A, params.mu, params.sigma, params.epsilon,
                        float(k), code)


@njit(cache=True)
def _multilinear(fields, shape, pos):
    # fields: (c, cells) flattened C-order grids; pos: (N, n) fractional indices
    N, n = pos.shape
    c = fields.shape[0]
    out = np.zeros((N, c))
    strides = np.empty(n, dtype=np.int64)
    acc = 1
    for a in range(n - 1, -1, -1):
        strides[a] = acc
        acc *= shape[a]
    base = np.empty(n, dtype=np.int64)
    frac = np.empty(n)
    for i in range(N):
        for a in range(n):
            x = min(max(pos[i, a], 0.0), shape[a] - 1.0)
            b = min(int(np.floor(x)), shape[a] - 2) if shape[a] > 1 else 0
            base[a] = b
            frac[a] = x - b
        for corner in range(1 << n):
            w = 1.0
            flat = 0
            for a in range(n):
                if (corner >> a) & 1:
                    w *= frac[a]
                    flat += (base[a] + 1) * strides[a]
                else:
                    w *= 1.0 - frac[a]
                    flat += base[a] * strides[a]
            if w != 0.0:
                for f in range(c):
                    out[i, f] += w * fields[f, flat]
    return out


class _GridGradient:
    """Fast sampler for the precomputed gradient of a grid potential."""

    def __init__(self, V):
        self.fields = np.ascontiguousarray(np.stack([g.ravel() for g in V.grad]))
        self.shape = np.array(V.values.shape, dtype=np.int64)
        self.origin = V.origin
        self.spacing = V.spacing

    def __call__(self, points):
        idx = np.ascontiguousarray((points - self.origin) / self.spacing)
        return _multilinear(self.fields, self.shape, idx)


def _pruned_force(positions, charges, params, k, p, cutoff):
    tree = cKDTree(positions)
    pairs = tree.query_pairs(cutoff, p=p, output_type="ndarray")
    force = np.zeros_like(positions)
    if not len(pairs):
        return force
    i, j = pairs[:, 0], pairs[:, 1]
    diff = positions[i] - positions[j]
    ad = np.abs(diff)
    if math.isinf(p):
        axis = np.argmax(ad, axis=1)
        d = ad[np.arange(len(i)), axis]
        grad = np.zeros_like(diff)
        grad[np.arange(len(i)), axis] = np.sign(diff[np.arange(len(i)), axis])
    else:
        d = np.sum(ad**p, axis=1) ** (1.0 / p)
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = np.sign(diff) * (ad / d[:, None]) ** (p - 1)
        grad[d == 0] = 0.0
    coef = -k * charges[i] * charges[j] * v_int_prime(d, params)
    f = coef[:, None] * grad
    np.add.at(force, i, f)
    np.add.at(force, j, -f)
    return force


def interaction_energy(positions, charges, params: InteractionParams, k: float = 1.0, p: float = 2.0) -> float:
    d, _ = _pair_geometry(np.asarray(positions, float), p)
    iu = np.triu_indices(len(positions), 1)
    q = np.asarray(charges, float)
    return float(np.sum(k * np.outer(q, q)[iu] * v_int(d[iu], params)))


def hamiltonian(system: ParticleSystem, V, params: InteractionParams, k: float = 1.0,
                solver_scale: float = 1.0) -> float:
    """Total energy: kinetic + confining + pair interaction."""
    kinetic = float(np.sum(np.sum(system.momenta**2, axis=1) / (2 * system.masses)))
    confining = float(np.sum(V.value_at(system.positions / solver_scale)))
    return kinetic + confining + interaction_energy(system.positions, system.charges, params, k, system.metric_p)


def to_solver_space(spec: InteractionSpec, ell: float | None = None):
    """Interaction parameters fitted in solver space and the data-to-solver scale ``ell / ra``."""
    if ell is None:
        ell = spec.ra
    if ell <= 0:
        raise ValueError("ell must be positive")
    scale = ell / spec.ra
    return solve_interaction_params(spec.scaled(scale)), scale


# ---------------------------------------------------------------------------
# Equations of motion
# ---------------------------------------------------------------------------

@dataclass
class _Model:
    V: object
    params: InteractionParams
    cfg: SolverConfig
    charges: np.ndarray
    masses: np.ndarray
    solver_scale: float
    p: float
    shape: tuple[int, int]
    cutoff: float | None = None
    grad_at: object = None

    def __post_init__(self):
        self.grad_at = _GridGradient(self.V) if hasattr(self.V, "grad") else self.V.grad_at

    def __call__(self, t, y):
        N, n = self.shape
        pos = y[: N * n].reshape(N, n)
        mom = y[N * n:].reshape(N, n)
        m = self.masses[:, None]
        drdt = mom / m
        dpdt = -self.grad_at(pos / self.solver_scale) / self.solver_scale
        dpdt -= (self.cfg.alpha_rate * t) / m * mom
        dpdt += pairwise_force(pos, self.charges, self.params, self.cfg.coupling_k, self.p, self.cutoff)
        return np.concatenate([drdt.ravel(), dpdt.ravel()])


def _model(system, V, params, cfg, solver_scale):
    cutoff = None
    if cfg.neighbor_cutoff is not None:
        ra = params.ra if params.ra is not None else 1.0
        cutoff = cfg.neighbor_cutoff * ra
    return _Model(V, params, cfg, system.charges, system.masses, solver_scale, system.metric_p,
                  system.positions.shape, cutoff)


def rhs(t: float, system: ParticleSystem, V, params: InteractionParams, cfg: SolverConfig,
        solver_scale: float = 1.0):
    """Time derivatives ``(dr/dt, dp/dt)`` of positions and momenta."""
    f = _model(system, V, params, cfg, solver_scale)
    y = np.concatenate([system.positions.ravel(), system.momenta.ravel()])
    out = f(t, y)
    N, n = system.positions.shape
    return out[: N * n].reshape(N, n), out[N * n:].reshape(N, n)


# ---------------------------------------------------------------------------
# Bogacki-Shampine 3(2) with PI step control
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryState:
    t: float
    system: ParticleSystem
    converged: bool
    step_count: int
    rejected: int
    speed_window: deque = field(default_factory=deque)
    history: list | None = None  # (t, positions, momenta) per accepted step when recording

    @property
    def stats(self) -> dict:
        return {"t_final": self.t, "steps": self.step_count, "rejected": self.rejected,
                "converged": self.converged, "particles": self.system.N}


def _windowed_mean(samples) -> float:
    if len(samples) == 1:
        return samples[0][1]
    ts = np.array([s[0] for s in samples])
    vs = np.array([s[1] for s in samples])
    span = ts[-1] - ts[0]
    if span <= 0:
        return float(vs.mean())
    return float(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts)) / span)


def _mean_speed(y, N, n, masses):
    mom = y[N * n:].reshape(N, n)
    return float(np.mean(np.linalg.norm(mom, axis=1) / masses))


def integrate(system: ParticleSystem, V, params: InteractionParams, cfg: SolverConfig = SolverConfig(),
              solver_scale: float = 1.0, t0: float = 0.0, stop_on_convergence: bool = True) -> TrajectoryState:
    """Integrate the damped equations of motion until the particles settle.

    Stops once the time-averaged mean particle speed over the trailing
    ``conv_window`` drops below ``conv_speed`` (``converged=True``) or at
    ``t_end`` (``converged=False``; the final state is still returned).

    Raises
    ------
    IntegrationError
        If the step size underflows.
    """
    f = _model(system, V, params, cfg, solver_scale)
    N, n = system.positions.shape
    y = np.concatenate([system.positions.ravel(), system.momenta.ravel()])
    t = t0
    k1 = f(t, y)
    atol, rtol = cfg.abs_tol, cfg.rel_tol
    h_max = cfg.h_max if cfg.h_max is not None else cfg.conv_window / 4

    # starting step (Hairer, Norsett & Wanner II.4 heuristic, order 3)
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, h_max)

    window = deque([(t, _mean_speed(y, N, n, system.masses))])
    history = [(t, y[: N * n].reshape(N, n).copy(), y[N * n:].reshape(N, n).copy())] if cfg.record else None
    err_prev = 1.0
    steps = rejected = 0
    converged = False
    while t < cfg.t_end and steps < cfg.max_steps:
        h = min(h, cfg.t_end - t)
        if h < 1e-12:
            raise IntegrationError(f"step size underflow at t={t:.6g} after {steps} steps "
                                   f"({rejected} rejected), h={h:.3g}")
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.75 * h, y + 0.75 * h * k2)
        y_new = y + h * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3)
        k4 = f(t + h, y_new)
        e = h * (-5.0 / 72.0 * k1 + 1.0 / 12.0 * k2 + 1.0 / 9.0 * k3 - 1.0 / 8.0 * k4)
        tol = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(e) / tol))
        if not np.isfinite(err):
            rejected += 1
            h *= 0.2
            continue
        if err <= 1.0:
            t += h
            y, k1 = y_new, k4
            steps += 1
            if err == 0:
                fac = 5.0
            else:
                fac = 0.9 * err ** (-0.7 / 3.0) * err_prev ** (0.4 / 3.0)
            err_prev = max(err, 1e-4)
            h = min(h * min(5.0, max(0.2, fac)), h_max)
            window.append((t, _mean_speed(y, N, n, system.masses)))
            while window[0][0] < t - cfg.conv_window:
                window.popleft()
            if history is not None:
                history.append((t, y[: N * n].reshape(N, n).copy(), y[N * n:].reshape(N, n).copy()))
            if stop_on_convergence and t - t0 >= cfg.conv_window and _windowed_mean(window) < cfg.conv_speed:
                converged = True
                break
        else:
            rejected += 1
            h *= max(0.2, 0.9 * err ** (-1.0 / 3.0))
    final = system.copy()
    final.positions = y[: N * n].reshape(N, n).copy()
    final.momenta = y[N * n:].reshape(N, n).copy()
    return TrajectoryState(t, final, converged, steps, rejected, window, history)
