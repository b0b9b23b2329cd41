"""Squared-range measurement model, residuals, Jacobians and costs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prior import MotionPrior, assemble_R, prior_energy, state_dim_for
from .problem import FlatMeasurements, ProblemData, flatten


@dataclass(eq=False)
class TrajectoryEstimate:
    """Stacked state estimate at the N measurement times plus solver metadata."""

    theta: np.ndarray
    times: np.ndarray
    state_dim: int
    dim: int
    cost: float
    iterations: int
    converged: bool
    diverged: bool = False
    restart: int | None = None

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    def states(self) -> np.ndarray:
        return self.theta.reshape(self.n_times, self.state_dim)

    def positions(self) -> np.ndarray:
        return self.states()[:, :self.dim]

    def velocities(self) -> np.ndarray | None:
        if self.state_dim == self.dim:
            return None
        return self.states()[:, self.dim:]


def predict(n: int, x: np.ndarray, problem: ProblemData) -> np.ndarray:
    """Model prediction at time index ``n``: squared distances to the
    anchors observed there."""
    aidx, _ = problem.measurements.observations(n)
    diff = problem.anchors.coordinates[:, aidx] - np.asarray(x, dtype=float)[:, None]
    return np.sum(diff**2, axis=0)


def residual(n: int, x: np.ndarray, problem: ProblemData) -> np.ndarray:
    """Squared-domain residual: squared raw distances minus prediction."""
    _, dist = problem.measurements.observations(n)
    return dist**2 - predict(n, x, problem)


def residual_via_expansion(n: int, x: np.ndarray, problem: ProblemData) -> np.ndarray:
    """Residual through the expanded form (squared measurement minus anchor
    norm, plus twice the anchor projection, minus the position norm).

    Algebraically identical to :func:`residual`; kept as the cross-check the
    lifted cost construction relies on.
    """
    aidx, dist = problem.measurements.observations(n)
    x = np.asarray(x, dtype=float)
    y = problem.anchors.coordinates[:, aidx]
    gamma = np.sum(y**2, axis=0)
    return dist**2 - gamma + 2.0 * (y.T @ x) - float(x @ x)


def jacobian(n: int, x: np.ndarray, problem: ProblemData) -> np.ndarray:
    """Jacobian of the prediction wrt the position, one row per anchor."""
    aidx, _ = problem.measurements.observations(n)
    diff = problem.anchors.coordinates[:, aidx] - np.asarray(x, dtype=float)[:, None]
    return -2.0 * diff.T


def row_residuals(flat: FlatMeasurements, positions: np.ndarray):
    """Residuals for every measurement row at once.

    Returns ``(e, u)`` with ``e`` the per-row residual and ``u`` the per-row
    anchor-minus-position vectors (reused by the solver's normal equations).
    """
    u = flat.anchor_pos - positions[flat.time_index]
    return flat.distance_sq - np.einsum("ij,ij->i", u, u), u


def _positions_of(theta: np.ndarray, problem: ProblemData) -> np.ndarray:
    n = problem.n_times
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] % n != 0:
        raise ValueError(f"state vector length {theta.shape} not a multiple of N={n}")
    k = theta.shape[0] // n
    d = problem.dim
    if k < d:
        raise ValueError(f"state dim {k} smaller than position dim {d}")
    return theta.reshape(n, k)[:, :d]


def data_cost(theta: np.ndarray, problem: ProblemData) -> float:
    """Weighted mean of squared residuals over all E measurement rows."""
    flat = flatten(problem)
    e, _ = row_residuals(flat, _positions_of(theta, problem))
    return float(np.dot(flat.weight * e, e) / flat.total)


def total_cost(theta: np.ndarray, problem: ProblemData, prior: MotionPrior) -> float:
    """Data cost plus prior energy."""
    return data_cost(theta, problem) + prior_energy(
        prior, problem.measurements.times, np.asarray(theta, dtype=float))


def gradient(theta: np.ndarray, problem: ProblemData, prior: MotionPrior) -> np.ndarray:
    """Analytic gradient of :func:`total_cost` wrt the full state vector."""
    theta = np.asarray(theta, dtype=float)
    n = problem.n_times
    k = state_dim_for(prior.kind, problem.dim)
    if theta.shape != (n * k,):
        raise ValueError(f"theta must have length {n * k}")
    d = problem.dim
    flat = flatten(problem)
    e, u = row_residuals(flat, theta.reshape(n, k)[:, :d])
    we = flat.weight * e
    grad = np.zeros((n, k))
    for j in range(d):
        grad[:, j] = (4.0 / flat.total) * np.bincount(
            flat.time_index, weights=we * u[:, j], minlength=n)
    rmat = assemble_R(prior, problem.measurements.times)
    grad += (2.0 / n) * rmat.matvec(theta).reshape(n, k)
    return grad.reshape(-1)
