"""Synthetic experiment generation.

Trajectories follow the constant-velocity model regardless of the prior used
at solve time (estimation may deliberately mismatch the generator). Anchors
are drawn uniformly in the unit box and affinely mapped to the trajectory's
bounding box, or placed near a random line to produce the degenerate
geometries that create mirrored local minima. Distance noise is added to the
true distances, before any squaring, and clamped at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prior import (KIND_CONSTANT_VELOCITY, interval_covariance, transition)
from .problem import (SQUARED_CONSTANT, AnchorSet, MeasurementSet, NoiseModel,
                      ProblemData)

SCHEDULE_ALL = "all-anchors"
SCHEDULE_ROUND_ROBIN = "round-robin-one"
SCHEDULES = (SCHEDULE_ALL, SCHEDULE_ROUND_ROBIN)

ANCHORS_UNIFORM = "uniform-box"
ANCHORS_NEAR_COLINEAR = "near-colinear"
ANCHOR_MODES = (ANCHORS_UNIFORM, ANCHORS_NEAR_COLINEAR)

#: minimum bounding-box extent per coordinate when placing anchors
EXTENT_FLOOR = 1e-3


@dataclass(frozen=True)
class SimConfig:
    n_times: int = 100
    n_anchors: int = 6
    dim: int = 2
    sigma_a: float = 0.2
    sigma_d: float = 1e-2
    schedule: str = SCHEDULE_ALL
    anchor_mode: str = ANCHORS_UNIFORM
    colinear_eps: float = 1e-2
    delta_t: float = 1.0
    velocity_scale: float = 1.0
    variance_policy: str = SQUARED_CONSTANT
    sigma_sq: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_times < 1 or self.n_anchors < 1:
            raise ValueError("need at least one time and one anchor")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.sigma_a < 0 or self.sigma_d < 0 or self.colinear_eps < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.anchor_mode not in ANCHOR_MODES:
            raise ValueError(f"unknown anchor mode {self.anchor_mode!r}")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.velocity_scale < 0:
            raise ValueError("velocity_scale must be nonnegative")

    def times(self) -> np.ndarray:
        return self.delta_t * np.arange(self.n_times, dtype=float)


def _rng_for(config: SimConfig, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(config.rng_seed)


def sample_trajectory(config: SimConfig,
                      rng: np.random.Generator | None = None):
    """Ground-truth states (times, (N, 2D) position+velocity stack).

    Initial position and velocity are uniform per coordinate in [-1, 1]
    (velocity additionally scaled by ``velocity_scale``); later states follow
    the constant-velocity transition plus integrated process noise with
    power spectral density ``sigma_a * I``.
    """
    rng = _rng_for(config, rng)
    d = config.dim
    n = config.n_times
    times = config.times()
    states = np.empty((n, 2 * d))
    states[0, :d] = rng.uniform(-1.0, 1.0, d)
    states[0, d:] = config.velocity_scale * rng.uniform(-1.0, 1.0, d)
    phi = transition(KIND_CONSTANT_VELOCITY, config.delta_t, 0.0, d)
    chol = None
    if config.sigma_a > 0:
        w = interval_covariance(KIND_CONSTANT_VELOCITY,
                                config.sigma_a * np.eye(d), config.delta_t)
        chol = np.linalg.cholesky(w)
    for i in range(1, n):
        states[i] = phi @ states[i - 1]
        if chol is not None:
            states[i] += chol @ rng.standard_normal(2 * d)
    return times, states


def _bounding_box(positions: np.ndarray):
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    ext = hi - lo
    narrow = ext < EXTENT_FLOOR
    if np.any(narrow):
        center = 0.5 * (lo + hi)
        lo = np.where(narrow, center - 0.5 * EXTENT_FLOOR, lo)
        hi = np.where(narrow, center + 0.5 * EXTENT_FLOOR, hi)
        ext = hi - lo
    return lo, hi, ext


def place_anchors(config: SimConfig, trajectory: np.ndarray,
                  rng: np.random.Generator | None = None) -> AnchorSet:
    """Anchor positions for a trajectory (states or bare positions accepted)."""
    rng = _rng_for(config, rng)
    d = config.dim
    positions = np.asarray(trajectory, dtype=float)[:, :d]
    lo, _, ext = _bounding_box(positions)
    m = config.n_anchors
    if config.anchor_mode == ANCHORS_UNIFORM:
        coords = lo + rng.uniform(0.0, 1.0, (m, d)) * ext
    else:
        coords = _near_colinear(config, lo, ext, m, d, rng)
    ids = tuple(f"A{i}" for i in range(m))
    return AnchorSet(coords.T, ids)


def _near_colinear(config: SimConfig, lo, ext, m, d, rng):
    """Anchors along a random line through the box center, perturbed
    perpendicular to it by at most ``colinear_eps``."""
    center = lo + 0.5 * ext
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    span = float(np.linalg.norm(ext))
    offsets = rng.uniform(-0.5, 0.5, m)[:, None] * span * direction
    eps = config.colinear_eps
    if d == 2:
        normal = np.array([-direction[1], direction[0]])
        perp = rng.uniform(-eps, eps, m)[:, None] * normal
    else:
        ref = rng.standard_normal(d)
        w1 = ref - (ref @ direction) * direction
        w1 /= np.linalg.norm(w1)
        w2 = np.cross(direction, w1)
        radius = eps * np.sqrt(rng.uniform(0.0, 1.0, m))
        angle = rng.uniform(0.0, 2.0 * np.pi, m)
        perp = (radius * np.cos(angle))[:, None] * w1 + \
               (radius * np.sin(angle))[:, None] * w2
    return center + offsets + perp


def synthesize_measurements(trajectory: np.ndarray, anchors: AnchorSet,
                            config: SimConfig,
                            rng: np.random.Generator | None = None) -> MeasurementSet:
    """Noisy raw distances on the configured schedule.

    all-anchors emits every anchor at every time; round-robin-one emits a
    single row per time, cycling anchors in id order.
    """
    rng = _rng_for(config, rng)
    d = config.dim
    positions = np.asarray(trajectory, dtype=float)[:, :d]
    n = positions.shape[0]
    m = anchors.count
    times = config.times()[:n]
    if config.schedule == SCHEDULE_ALL:
        aidx = np.tile(np.arange(m), n)
        tidx = np.repeat(np.arange(n), m)
        offsets = m * np.arange(n + 1)
    else:
        aidx = np.arange(n) % m
        tidx = np.arange(n)
        offsets = np.arange(n + 1)
    diff = anchors.coordinates.T[aidx] - positions[tidx]
    dist = np.linalg.norm(diff, axis=1)
    if config.sigma_d > 0:
        dist = dist + rng.normal(0.0, config.sigma_d, dist.shape)
        dist = np.maximum(dist, 0.0)
    return MeasurementSet(times, aidx, dist, offsets)


def simulate(config: SimConfig) -> tuple[ProblemData, np.ndarray]:
    """End-to-end synthetic problem; returns (problem, true states).

    The problem's ground truth holds the true positions at the measurement
    times. A noiseless configuration still needs a positive weighting std,
    so sigma_d = 0 substitutes 1.0 there (residuals are zero anyway).
    """
    rng = np.random.default_rng(config.rng_seed)
    times, states = sample_trajectory(config, rng)
    anchors = place_anchors(config, states, rng)
    measurements = synthesize_measurements(states, anchors, config, rng)
    weight_sigma = config.sigma_d if config.sigma_d > 0 else 1.0
    noise = NoiseModel(weight_sigma, config.variance_policy, config.sigma_sq)
    positions = states[:, :config.dim].copy()
    problem = ProblemData(anchors, measurements, noise,
                          ground_truth=(times.copy(), positions))
    return problem, states
