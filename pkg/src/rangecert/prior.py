"""Motion priors for continuous-time trajectories.

Three prior kinds are supported:

* ``none``              no regularization, state is the position (K = D).
* ``zero-velocity``     random walk on the position (K = D). Transition is
  the identity, interval covariance ``W = dt * Q_C``.
* ``constant-velocity`` white noise on acceleration, state stacks position
  and velocity (K = 2D). Transition ``[[I, dt*I], [0, I]]``, interval
  covariance ``[[dt^3/3, dt^2/2], [dt^2/2, dt]] (x) Q_C``.

``Q_C`` is the power spectral density of the driving white noise, typically
``sigma_a * I``. The prior energy of a trajectory ``theta`` is

    r(theta) = (1/N) * sum_n e_n' W_n^{-1} e_n,
    e_n = Phi_n @ theta_{n-1} - theta_n + B_n u_n,

with inputs ``u_n`` identically zero for the shipped priors. The same energy
is expressible as the quadratic form ``(1/N) theta' R theta`` with R the
block-tridiagonal matrix assembled here; the two routes are kept separate so
they can be checked against each other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KIND_NONE = "none"
KIND_ZERO_VELOCITY = "zero-velocity"
KIND_CONSTANT_VELOCITY = "constant-velocity"
PRIOR_KINDS = (KIND_NONE, KIND_ZERO_VELOCITY, KIND_CONSTANT_VELOCITY)


def state_dim_for(kind: str, dim: int) -> int:
    """State dimension K for a prior kind in ambient dimension ``dim``."""
    if kind not in PRIOR_KINDS:
        raise ValueError(f"unknown prior kind {kind!r}")
    return 2 * dim if kind == KIND_CONSTANT_VELOCITY else dim


@dataclass(frozen=True, eq=False)
class MotionPrior:
    """Prior kind plus its power spectral density.

    ``q_c`` may be None only for ``kind='none'`` (it is never used there).
    """

    kind: str
    q_c: np.ndarray | None
    dim: int

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.kind == KIND_NONE:
            return
        if self.q_c is None:
            raise ValueError(f"kind {self.kind!r} requires a power spectral density")
        q = np.ascontiguousarray(self.q_c, dtype=float)
        object.__setattr__(self, "q_c", q)
        if q.shape != (self.dim, self.dim):
            raise ValueError(f"Q_C must be {self.dim}x{self.dim}")
        if not np.allclose(q, q.T, rtol=0, atol=1e-12):
            raise ValueError("Q_C must be symmetric")
        try:
            np.linalg.cholesky(q)
        except np.linalg.LinAlgError:
            raise ValueError("Q_C must be positive definite") from None

    @classmethod
    def isotropic(cls, kind: str, sigma_a: float, dim: int) -> "MotionPrior":
        """Prior with ``Q_C = sigma_a * I`` (the usual experimental choice)."""
        if kind == KIND_NONE:
            return cls(kind, None, dim)
        if not sigma_a > 0:
            raise ValueError("sigma_a must be positive")
        return cls(kind, sigma_a * np.eye(dim), dim)

    @property
    def state_dim(self) -> int:
        return state_dim_for(self.kind, self.dim)


def transition(kind: str, t_to: float, t_from: float, dim: int) -> np.ndarray:
    """State transition matrix over ``[t_from, t_to]``.

    Zero-velocity (and none): identity. Constant-velocity:
    ``[[I, (t_to - t_from) I], [0, I]]``.
    """
    if t_to < t_from:
        raise ValueError(f"t_to={t_to} precedes t_from={t_from}")
    k = state_dim_for(kind, dim)
    phi = np.eye(k)
    if kind == KIND_CONSTANT_VELOCITY:
        phi[:dim, dim:] = (t_to - t_from) * np.eye(dim)
    return phi


def interval_covariance(kind: str, q_c: np.ndarray, dt: float) -> np.ndarray:
    """Integrated process noise covariance W over an interval of length ``dt``.

    Closed forms (the defining integral is kept as a test oracle):
    zero-velocity ``dt * Q_C``; constant-velocity
    ``[[dt^3/3, dt^2/2], [dt^2/2, dt]] (x) Q_C``.
    """
    if kind == KIND_NONE:
        raise ValueError("kind 'none' has no interval covariance")
    if not dt > 0:
        raise ValueError(f"interval length must be positive, got {dt}")
    q_c = np.asarray(q_c, dtype=float)
    if kind == KIND_ZERO_VELOCITY:
        return dt * q_c
    top = np.hstack([dt**3 / 3.0 * q_c, dt**2 / 2.0 * q_c])
    bot = np.hstack([dt**2 / 2.0 * q_c, dt * q_c])
    return np.vstack([top, bot])


def interval_covariance_inverse(kind: str, q_c: np.ndarray, dt: float) -> np.ndarray:
    """Closed-form inverse of :func:`interval_covariance`."""
    if kind == KIND_NONE:
        raise ValueError("kind 'none' has no interval covariance")
    if not dt > 0:
        raise ValueError(f"interval length must be positive, got {dt}")
    q_inv = np.linalg.inv(np.asarray(q_c, dtype=float))
    if kind == KIND_ZERO_VELOCITY:
        return q_inv / dt
    top = np.hstack([12.0 / dt**3 * q_inv, -6.0 / dt**2 * q_inv])
    bot = np.hstack([-6.0 / dt**2 * q_inv, 4.0 / dt * q_inv])
    return np.vstack([top, bot])


@dataclass(frozen=True, eq=False)
class IntervalFactors:
    """Binary factor linking consecutive states over one interval."""

    phi: np.ndarray
    w: np.ndarray
    w_inv: np.ndarray
    u: np.ndarray
    dt: float


def interval_factors(prior: MotionPrior, times: np.ndarray) -> list[IntervalFactors]:
    """Per-interval transition and covariance factors (empty for kind none)."""
    times = np.asarray(times, dtype=float)
    _check_times(times)
    if prior.kind == KIND_NONE:
        return []
    k = prior.state_dim
    out = []
    for i in range(times.shape[0] - 1):
        dt = float(times[i + 1] - times[i])
        out.append(IntervalFactors(
            phi=transition(prior.kind, times[i + 1], times[i], prior.dim),
            w=interval_covariance(prior.kind, prior.q_c, dt),
            w_inv=interval_covariance_inverse(prior.kind, prior.q_c, dt),
            u=np.zeros(k),
            dt=dt,
        ))
    return out


def _check_times(times: np.ndarray) -> None:
    if times.ndim != 1 or times.shape[0] < 1:
        raise ValueError("times must be a nonempty 1-D array")
    if np.any(np.diff(times) <= 0):
        from .problem import OrderingError
        raise OrderingError("times must be strictly increasing")


def _batched_phi_winv(prior: MotionPrior, times: np.ndarray):
    """Vectorized (N-1, K, K) transition and inverse-covariance stacks."""
    dt = np.diff(times)
    d, k = prior.dim, prior.state_dim
    n_iv = dt.shape[0]
    q_inv = np.linalg.inv(prior.q_c)
    phi = np.broadcast_to(np.eye(k), (n_iv, k, k)).copy()
    w_inv = np.zeros((n_iv, k, k))
    if prior.kind == KIND_ZERO_VELOCITY:
        w_inv[:] = q_inv / dt[:, None, None]
        return phi, w_inv
    phi[:, :d, d:] = dt[:, None, None] * np.eye(d)
    w_inv[:, :d, :d] = (12.0 / dt**3)[:, None, None] * q_inv
    w_inv[:, :d, d:] = (-6.0 / dt**2)[:, None, None] * q_inv
    w_inv[:, d:, :d] = w_inv[:, :d, d:]
    w_inv[:, d:, d:] = (4.0 / dt)[:, None, None] * q_inv
    return phi, w_inv


@dataclass(frozen=True, eq=False)
class PriorMatrix:
    """Symmetric block-tridiagonal prior matrix R in block storage.

    ``diag[n]`` is the K x K block R_{nn}; ``upper[n]`` is R_{n,n+1}. The
    quadratic form ``(1/N) theta' R theta`` equals the prior energy.
    """

    diag: np.ndarray
    upper: np.ndarray
    state_dim: int

    @property
    def n_times(self) -> int:
        return self.diag.shape[0]

    def is_zero(self) -> bool:
        return not (np.any(self.diag) or np.any(self.upper))

    def matvec(self, theta: np.ndarray) -> np.ndarray:
        """R @ theta for a stacked NK state vector."""
        n, k = self.n_times, self.state_dim
        th = theta.reshape(n, k)
        out = np.einsum("nij,nj->ni", self.diag, th)
        if n > 1:
            out[:-1] += np.einsum("nij,nj->ni", self.upper, th[1:])
            out[1:] += np.einsum("nji,nj->ni", self.upper, th[:-1])
        return out.reshape(-1)

    def quadratic(self, theta: np.ndarray) -> float:
        """theta' R theta (no 1/N factor)."""
        n, k = self.n_times, self.state_dim
        th = theta.reshape(n, k)
        val = np.einsum("ni,nij,nj->", th, self.diag, th)
        if n > 1:
            val += 2.0 * np.einsum("ni,nij,nj->", th[:-1], self.upper, th[1:])
        return float(val)

    def to_dense(self) -> np.ndarray:
        n, k = self.n_times, self.state_dim
        if n * k > 20000:
            raise ValueError("dense prior matrix requested for a large problem")
        dense = np.zeros((n * k, n * k))
        for i in range(n):
            dense[i * k:(i + 1) * k, i * k:(i + 1) * k] = self.diag[i]
            if i + 1 < n:
                dense[i * k:(i + 1) * k, (i + 1) * k:(i + 2) * k] = self.upper[i]
                dense[(i + 1) * k:(i + 2) * k, i * k:(i + 1) * k] = self.upper[i].T
        return dense


def assemble_R(prior: MotionPrior, times: np.ndarray) -> PriorMatrix:
    """Assemble the block-tridiagonal prior matrix.

    Boundary blocks follow the factor structure: the first diagonal block has
    no W_1^{-1} term (no prior on the initial state) and the last is plain
    W_N^{-1}. For kind none, or a single state, R is zero.
    """
    times = np.asarray(times, dtype=float)
    _check_times(times)
    n = times.shape[0]
    k = state_dim_for(prior.kind, prior.dim)
    if prior.kind == KIND_NONE or n == 1:
        return PriorMatrix(np.zeros((n, k, k)), np.zeros((max(n - 1, 0), k, k)), k)
    phi, w_inv = _batched_phi_winv(prior, times)
    phit_winv = np.einsum("nji,njk->nik", phi, w_inv)
    diag = np.zeros((n, k, k))
    diag[:-1] += np.einsum("nij,njk->nik", phit_winv, phi)
    diag[1:] += w_inv
    upper = -phit_winv
    return PriorMatrix(diag, upper, k)


def prior_energy(prior: MotionPrior, times: np.ndarray, theta: np.ndarray) -> float:
    """Factor-sum prior energy r(theta) = (1/N) sum_n e_n' W_n^{-1} e_n.

    This is the route independent of :func:`assemble_R`; the quadratic-form
    route is ``PriorMatrix.quadratic(theta) / N``.
    """
    times = np.asarray(times, dtype=float)
    _check_times(times)
    n = times.shape[0]
    k = state_dim_for(prior.kind, prior.dim)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n * k,):
        raise ValueError(f"theta must have length N*K = {n * k}, got {theta.shape}")
    if prior.kind == KIND_NONE or n == 1:
        return 0.0
    phi, w_inv = _batched_phi_winv(prior, times)
    th = theta.reshape(n, k)
    return _energy_from_blocks(phi, w_inv, th) / n


def _energy_from_blocks(phi: np.ndarray, w_inv: np.ndarray, th: np.ndarray) -> float:
    """Unnormalized factor-sum energy; inputs u are zero for shipped priors."""
    err = np.einsum("nij,nj->ni", phi, th[:-1]) - th[1:]
    return float(np.einsum("ni,nij,nj->", err, w_inv, err))
