"""Sparse Gauss-Newton solver with multi-restart orchestration.

The normal matrix ``R + (N/E) J' Sigma^{-1} J`` is block-tridiagonal, so each
iteration assembles it directly in LAPACK lower-banded storage (scalar
bandwidth 2K-1) and factorizes with the banded Cholesky routines. Work and
memory are O(N) per iteration; there is no fill-in outside the band by
construction.

Plain Gauss-Newton, no damping and no line search. Divergence is reported
through a flag on the returned estimate, never repaired; judging the quality
of a converged point is the certificate's job, not the solver's.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpbtrf, dpbtrs

from .model import TrajectoryEstimate, row_residuals
from .prior import (KIND_NONE, MotionPrior, _batched_phi_winv,
                    _energy_from_blocks, assemble_R)
from .problem import ProblemData, flatten

INIT_RANDOM_IN_BOX = "random-in-box"
INIT_GROUND_TRUTH = "ground-truth"
INIT_USER_SUPPLIED = "user-supplied"
INIT_STRATEGIES = (INIT_RANDOM_IN_BOX, INIT_GROUND_TRUTH, INIT_USER_SUPPLIED)


class RankDeficiencyError(np.linalg.LinAlgError):
    """Normal matrix not positive definite during the banded factorization.

    ``block_index`` is the first failing time block (0-based). Typical cause:
    too few anchors per time with no motion prior to tie states together.
    """

    def __init__(self, block_index: int, detail: str):
        super().__init__(detail)
        self.block_index = block_index


@dataclass(frozen=True)
class SolveConfig:
    max_iterations: int = 50
    step_tolerance: float = 1e-10
    n_restarts: int = 10
    init_strategy: str = INIT_RANDOM_IN_BOX
    rng_seed: int = 0
    init_box_scale: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.step_tolerance > 0:
            raise ValueError("step_tolerance must be positive")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init_strategy!r}")
        if not self.init_box_scale > 0:
            raise ValueError("init_box_scale must be positive")


class _Workspace:
    """Per-problem arrays shared across iterations and restarts."""

    def __init__(self, problem: ProblemData, prior: MotionPrior):
        if prior.dim != problem.dim:
            raise ValueError("prior dimension does not match problem dimension")
        self.problem = problem
        self.prior = prior
        self.flat = flatten(problem)
        self.times = problem.measurements.times
        self.n = problem.n_times
        self.d = problem.dim
        self.k = prior.state_dim
        self.e_total = self.flat.total
        self.rmat = assemble_R(prior, self.times)
        if prior.kind != KIND_NONE and self.n > 1:
            self.phi, self.w_inv = _batched_phi_winv(prior, self.times)
        else:
            self.phi = self.w_inv = None
        self.banded_prior = self._banded_from_blocks()

    def _banded_from_blocks(self) -> np.ndarray:
        """Prior matrix in LAPACK lower-banded storage, shape (2K, NK)."""
        n, k = self.n, self.k
        ab = np.zeros((2 * k, n * k))
        diag, upper = self.rmat.diag, self.rmat.upper
        for r in range(k):
            for c in range(r + 1):
                ab[r - c, c::k] = diag[:, r, c]
        for r in range(k):
            for c in range(k):
                # sub-diagonal block entry A[(n+1)K+r, nK+c] = upper[n][c, r]
                ab[k + r - c, c::k][:n - 1] = upper[:, c, r]
        return ab

    def cost_at(self, theta: np.ndarray) -> float:
        pos = theta.reshape(self.n, self.k)[:, :self.d]
        e, _ = row_residuals(self.flat, pos)
        cost = float(np.dot(self.flat.weight * e, e) / self.e_total)
        if self.phi is not None:
            cost += _energy_from_blocks(self.phi, self.w_inv,
                                        theta.reshape(self.n, self.k)) / self.n
        return cost

    def step(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        """One Gauss-Newton step from ``theta``; returns (delta, cost at theta)."""
        n, k, d = self.n, self.k, self.d
        flat = self.flat
        states = theta.reshape(n, k)
        e, u = row_residuals(flat, states[:, :d])
        we = flat.weight * e
        cost = float(np.dot(we, e) / self.e_total)
        if self.phi is not None:
            cost += _energy_from_blocks(self.phi, self.w_inv, states) / n

        scale = n / self.e_total
        ab = self.banded_prior.copy()
        for i in range(d):
            for j in range(i + 1):
                acc = np.bincount(flat.time_index,
                                  weights=flat.weight * u[:, i] * u[:, j], minlength=n)
                ab[i - j, j::k] += 4.0 * scale * acc

        rhs = -self.rmat.matvec(theta).reshape(n, k)
        for j in range(d):
            rhs[:, j] += -2.0 * scale * np.bincount(
                flat.time_index, weights=we * u[:, j], minlength=n)

        factor, info = dpbtrf(ab, lower=1, overwrite_ab=1)
        if info > 0:
            block = (info - 1) // k
            raise RankDeficiencyError(
                block,
                f"normal matrix is rank deficient at time block {block} "
                f"(pivot {info} of {n * k})")
        if info < 0:
            raise np.linalg.LinAlgError(f"banded factorization failed (info={info})")
        delta, info = dpbtrs(factor, rhs.reshape(-1, 1), lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"banded solve failed (info={info})")
        return delta[:, 0], cost


def gn_step(theta: np.ndarray, problem: ProblemData,
            prior: MotionPrior) -> tuple[np.ndarray, float]:
    """Single Gauss-Newton step; returns the step and the cost at the
    stepped point."""
    ws = _Workspace(problem, prior)
    theta = np.asarray(theta, dtype=float)
    delta, _ = ws.step(theta)
    return delta, ws.cost_at(theta + delta)


def solve(problem: ProblemData, prior: MotionPrior, config: SolveConfig,
          theta0: np.ndarray, restart: int | None = None,
          workspace: _Workspace | None = None) -> TrajectoryEstimate:
    """Iterate Gauss-Newton from ``theta0`` until the RMS step drops below
    ``config.step_tolerance`` or the iteration budget runs out.

    The reported iteration count covers updates whose RMS step met or
    exceeded the tolerance. The terminating below-tolerance step is applied
    (it costs nothing extra and improves the returned stationary point) but
    recorded as the convergence event rather than as an update.
    """
    ws = workspace if workspace is not None else _Workspace(problem, prior)
    theta = np.asarray(theta0, dtype=float).copy()
    if theta.shape != (ws.n * ws.k,):
        raise ValueError(f"theta0 must have length {ws.n * ws.k}")
    rms_scale = 1.0 / math.sqrt(ws.n * ws.k)
    converged = False
    diverged = False
    iterations = 0
    while iterations < config.max_iterations:
        delta, cost_here = ws.step(theta)
        if not math.isfinite(cost_here) or not np.all(np.isfinite(delta)):
            diverged = True
            break
        theta_next = theta + delta
        if not np.all(np.isfinite(theta_next)):
            diverged = True
            break
        if float(np.linalg.norm(delta)) * rms_scale < config.step_tolerance:
            # The first below-tolerance step ends the loop. It is applied,
            # since it is already computed and sharpens the stationarity of
            # the returned point, but it is not counted: ``iterations``
            # reports updates that moved the iterate by at least the
            # tolerance.
            theta = theta_next
            converged = True
            break
        theta = theta_next
        iterations += 1
    cost = ws.cost_at(theta)
    if not math.isfinite(cost):
        diverged = True
        converged = False
    return TrajectoryEstimate(
        theta=theta, times=ws.times.copy(), state_dim=ws.k, dim=ws.d,
        cost=cost, iterations=iterations, converged=converged,
        diverged=diverged, restart=restart,
    )


def _anchor_box(problem: ProblemData, scale: float) -> tuple[np.ndarray, np.ndarray]:
    coords = problem.anchors.coordinates
    lo = coords.min(axis=1)
    hi = coords.max(axis=1)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * scale
    return center - half, center + half


def _init_from_truth(problem: ProblemData, prior: MotionPrior) -> np.ndarray:
    """Initial state from ground truth; velocities by finite differences."""
    if problem.ground_truth is None:
        raise ValueError("ground-truth initialization requires ground truth data")
    t_gt, x_gt = problem.ground_truth
    times = problem.measurements.times
    if t_gt.shape[0] != times.shape[0] or np.max(np.abs(t_gt - times)) > 1e-6:
        raise ValueError("ground truth does not cover the measurement times")
    n, d, k = times.shape[0], problem.dim, prior.state_dim
    theta = np.zeros((n, k))
    theta[:, :d] = x_gt
    if k == 2 * d and n > 1:
        dt = np.diff(times)[:, None]
        vel = np.diff(x_gt, axis=0) / dt
        theta[:-1, d:] = vel
        theta[-1, d:] = vel[-1]
    return theta.reshape(-1)


def _random_init(problem: ProblemData, prior: MotionPrior, scale: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Positions uniform in the (scaled) anchor bounding box, velocities zero."""
    lo, hi = _anchor_box(problem, scale)
    n, d, k = problem.n_times, problem.dim, prior.state_dim
    theta = np.zeros((n, k))
    theta[:, :d] = rng.uniform(lo, hi, size=(n, d))
    return theta.reshape(-1)


def multi_restart(problem: ProblemData, prior: MotionPrior, config: SolveConfig,
                  theta0: np.ndarray | None = None) -> list[TrajectoryEstimate]:
    """Run ``config.n_restarts`` solves and sort results by cost ascending.

    Deterministic for a fixed ``config.rng_seed``; diverged runs sort last.
    """
    ws = _Workspace(problem, prior)
    rng = np.random.default_rng(config.rng_seed)
    estimates = []
    for r in range(config.n_restarts):
        if config.init_strategy == INIT_GROUND_TRUTH:
            init = _init_from_truth(problem, prior)
        elif config.init_strategy == INIT_USER_SUPPLIED:
            if theta0 is None:
                raise ValueError("user-supplied initialization requires theta0")
            init = np.asarray(theta0, dtype=float)
        else:
            init = _random_init(problem, prior, config.init_box_scale, rng)
        estimates.append(solve(problem, prior, config, init,
                               restart=r, workspace=ws))
    estimates.sort(key=lambda est: (est.diverged,
                                    est.cost if math.isfinite(est.cost) else math.inf,
                                    est.restart))
    return estimates


BEST_COST = "best-cost"
SUBOPTIMAL = "suboptimal"


def label_by_best_cost(estimates: list[TrajectoryEstimate],
                       gap_tolerance: float = 1e-6) -> list[str]:
    """Label estimates whose cost sits within ``gap_tolerance`` (relative) of
    the smallest non-diverged cost as best-cost, the rest suboptimal."""
    if not estimates:
        raise ValueError("need at least one estimate")
    finite = [est.cost for est in estimates
              if not est.diverged and math.isfinite(est.cost)]
    if not finite:
        return [SUBOPTIMAL] * len(estimates)
    best = min(finite)
    cut = best + gap_tolerance * (1.0 + abs(best))
    return [BEST_COST if (not est.diverged and est.cost <= cut) else SUBOPTIMAL
            for est in estimates]


def cost_clusters(costs: np.ndarray, rel_gap: float = 1e-2) -> np.ndarray:
    """Group costs into clusters split where the sorted consecutive gap
    exceeds ``rel_gap * (1 + best)``; returns a cluster id per input cost,
    0 for the best cluster."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        return np.zeros(0, dtype=int)
    order = np.argsort(costs)
    sorted_costs = costs[order]
    threshold = rel_gap * (1.0 + abs(sorted_costs[0]))
    ids_sorted = np.zeros(costs.size, dtype=int)
    for i in range(1, costs.size):
        gap = sorted_costs[i] - sorted_costs[i - 1]
        bump = 1 if (math.isfinite(gap) and gap > threshold) else 0
        if not math.isfinite(sorted_costs[i]) and math.isfinite(sorted_costs[i - 1]):
            bump = 1
        ids_sorted[i] = ids_sorted[i - 1] + bump
    out = np.empty(costs.size, dtype=int)
    out[order] = ids_sorted
    return out
