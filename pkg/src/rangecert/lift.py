"""Lifted homogeneous QCQP for the squared-range cost.

The substitution ``z_n = ||x_n||^2`` plus a homogenization variable ``ell``
turns the quartic data cost into a quadratic form. The lifted vector is
ordered block-wise,

    g = (theta_1, z_1, theta_2, z_2, ..., theta_N, z_N, ell),

with ``F_g = N*(K+1) + 1`` entries. Per time index, with anchor matrix Y_n
(anchors in columns), anchor squared norms gamma_n and squared raw
measurements, the residual is written

    e_n = C_n f_n + b_n * ell,   C_n = [2*Y_n', -1]  (M_n x (D+1)),
    f_n = (x_n, z_n),            b_n = d_n^2 - gamma_n,

which fixes the convention for every matrix built here. The data cost equals
``(1/E) g' Q g`` with Q holding Gram blocks ``C_n' Sigma_n^{-1} C_n`` on the
diagonal, arrow column ``q_n = C_n' Sigma_n^{-1} b_n`` and corner
``q_0 = sum_n b_n' Sigma_n^{-1} b_n``.

Constraint matrices: ``A_n`` encodes ``||x_n||^2 - z_n * ell = 0`` and
``A_0`` encodes ``ell^2 = 1``. The prior matrix R acts on the state entries
only; its zero-padding to lifted coordinates is an index map, never a dense
materialization, so everything stays O(N).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .prior import MotionPrior, PriorMatrix, assemble_R
from .problem import ProblemData, flatten

#: refuse dense materializations above this lifted size
DENSE_GUARD = 20000


@dataclass(frozen=True, eq=False)
class LiftedVector:
    """Lifted coordinates of a trajectory."""

    values: np.ndarray
    n_times: int
    state_dim: int
    dim: int

    def __post_init__(self):
        expect = self.n_times * (self.state_dim + 1) + 1
        if self.values.shape != (expect,):
            raise ValueError(f"lifted vector must have {expect} entries")

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def blocks(self) -> np.ndarray:
        """View of the per-time blocks, shape ``(N, K+1)``."""
        return self.values[:-1].reshape(self.n_times, self.state_dim + 1)

    @property
    def ell(self) -> float:
        return float(self.values[-1])

    def z(self, n: int) -> float:
        return float(self.blocks()[n, self.state_dim])

    def position(self, n: int) -> np.ndarray:
        return self.blocks()[n, :self.dim]


def lift(theta: np.ndarray, prior: MotionPrior) -> LiftedVector:
    """Lift a stacked state vector: insert ``z_n = ||x_n||^2`` per block and
    append ``ell = 1``. Velocities (if any) are carried through unchanged."""
    theta = np.asarray(theta, dtype=float)
    k, d = prior.state_dim, prior.dim
    if theta.ndim != 1 or theta.shape[0] % k != 0:
        raise ValueError(f"state vector length {theta.shape} is not a multiple of K={k}")
    n = theta.shape[0] // k
    states = theta.reshape(n, k)
    values = np.empty(n * (k + 1) + 1)
    blocks = values[:-1].reshape(n, k + 1)
    blocks[:, :k] = states
    blocks[:, k] = np.sum(states[:, :d] ** 2, axis=1)
    values[-1] = 1.0
    return LiftedVector(values, n, k, d)


@dataclass(frozen=True, eq=False)
class LiftedMatrices:
    """Sparse lifted matrices in block storage.

    ``q_diag[n]`` is the (D+1)x(D+1) Gram block over ``(x_n, z_n)``,
    ``q_arrow[n]`` the arrow column entries for those coordinates and
    ``q_corner`` the homogeneous scalar. ``r_matrix`` is the unpadded prior
    matrix. ``sub_index`` maps the Gram coordinates into the padded block
    layout ``(theta_n, z_n)`` of width K+1.
    """

    n_times: int
    state_dim: int
    dim: int
    n_measurements: int
    q_diag: np.ndarray
    q_arrow: np.ndarray
    q_corner: float
    r_matrix: PriorMatrix

    @property
    def block_size(self) -> int:
        return self.state_dim + 1

    @property
    def lifted_size(self) -> int:
        return self.n_times * self.block_size + 1

    @property
    def sub_index(self) -> np.ndarray:
        """Padded-block coordinates of ``(x_n, z_n)``: positions then z."""
        return np.asarray(list(range(self.dim)) + [self.state_dim])

    def _split(self, g: LiftedVector) -> tuple[np.ndarray, np.ndarray, float]:
        blocks = g.blocks()
        return blocks, blocks[:, self.sub_index], g.ell

    # quadratic forms -----------------------------------------------------

    def q_quadratic(self, g: LiftedVector) -> float:
        """g' Q g (no 1/E factor)."""
        _, sub, ell = self._split(g)
        val = np.einsum("ni,nij,nj->", sub, self.q_diag, sub)
        val += 2.0 * ell * np.einsum("ni,ni->", self.q_arrow, sub)
        return float(val + ell * ell * self.q_corner)

    def r_quadratic(self, g: LiftedVector) -> float:
        """g' R_padded g (no 1/N factor); z and ell rows are zero padding."""
        blocks, _, _ = self._split(g)
        theta = blocks[:, :self.state_dim].reshape(-1)
        return self.r_matrix.quadratic(theta)

    def constraint_quadratic(self, g: LiftedVector, n: int) -> float:
        """g' A_n g = ||x_n||^2 - z_n * ell."""
        blocks, _, ell = self._split(g)
        x = blocks[n, :self.dim]
        return float(x @ x - blocks[n, self.state_dim] * ell)

    def homogenization_quadratic(self, g: LiftedVector) -> float:
        """g' A_0 g = ell^2."""
        return g.ell ** 2

    # matrix-vector products ---------------------------------------------

    def q_matvec(self, g: LiftedVector) -> np.ndarray:
        out = np.zeros(self.lifted_size)
        blocks_out = out[:-1].reshape(self.n_times, self.block_size)
        _, sub, ell = self._split(g)
        blocks_out[:, self.sub_index] = np.einsum("nij,nj->ni", self.q_diag, sub)
        blocks_out[:, self.sub_index] += ell * self.q_arrow
        out[-1] = np.einsum("ni,ni->", self.q_arrow, sub) + ell * self.q_corner
        return out

    def r_matvec(self, g: LiftedVector) -> np.ndarray:
        out = np.zeros(self.lifted_size)
        blocks, _, _ = self._split(g)
        theta = blocks[:, :self.state_dim].reshape(-1)
        blocks_out = out[:-1].reshape(self.n_times, self.block_size)
        blocks_out[:, :self.state_dim] = self.r_matrix.matvec(theta).reshape(
            self.n_times, self.state_dim)
        return out

    def constraint_matvec(self, g: LiftedVector, n: int) -> np.ndarray:
        out = np.zeros(self.lifted_size)
        blocks, _, ell = self._split(g)
        block_out = out[n * self.block_size:(n + 1) * self.block_size]
        block_out[:self.dim] = blocks[n, :self.dim]
        block_out[self.state_dim] = -0.5 * ell
        out[-1] = -0.5 * blocks[n, self.state_dim]
        return out

    def a0_matvec(self, g: LiftedVector) -> np.ndarray:
        out = np.zeros(self.lifted_size)
        out[-1] = g.ell
        return out

    # dense materializations (test oracles only) --------------------------

    def _dense_guard(self) -> None:
        if self.lifted_size > DENSE_GUARD:
            raise ValueError(f"dense lifted matrix of size {self.lifted_size} refused")

    def dense_q(self) -> np.ndarray:
        self._dense_guard()
        f = self.lifted_size
        b = self.block_size
        out = np.zeros((f, f))
        idx = self.sub_index
        for n in range(self.n_times):
            base = n * b
            out[np.ix_(base + idx, base + idx)] = self.q_diag[n]
            out[base + idx, -1] = self.q_arrow[n]
            out[-1, base + idx] = self.q_arrow[n]
        out[-1, -1] = self.q_corner
        return out

    def dense_r(self) -> np.ndarray:
        self._dense_guard()
        f = self.lifted_size
        b = self.block_size
        k = self.state_dim
        out = np.zeros((f, f))
        rd = self.r_matrix
        for n in range(self.n_times):
            base = n * b
            out[base:base + k, base:base + k] = rd.diag[n]
            if n + 1 < self.n_times:
                nxt = (n + 1) * b
                out[base:base + k, nxt:nxt + k] = rd.upper[n]
                out[nxt:nxt + k, base:base + k] = rd.upper[n].T
        return out

    def dense_constraint(self, n: int) -> np.ndarray:
        self._dense_guard()
        f = self.lifted_size
        out = np.zeros((f, f))
        base = n * self.block_size
        for j in range(self.dim):
            out[base + j, base + j] = 1.0
        out[base + self.state_dim, -1] = -0.5
        out[-1, base + self.state_dim] = -0.5
        return out

    def dense_a0(self) -> np.ndarray:
        self._dense_guard()
        out = np.zeros((self.lifted_size, self.lifted_size))
        out[-1, -1] = 1.0
        return out


def build_matrices(problem: ProblemData, prior: MotionPrior) -> LiftedMatrices:
    """Assemble the lifted matrices for a problem in O(E + N)."""
    flat = flatten(problem)
    n, d = flat.n_times, flat.dim
    k = prior.state_dim
    if prior.dim != d:
        raise ValueError("prior dimension does not match problem dimension")
    w = flat.weight
    b = flat.distance_sq - flat.anchor_norm_sq
    # per-row lifted coefficient rows c = [2*a, -1] over (x, z)
    c = np.empty((flat.total, d + 1))
    c[:, :d] = 2.0 * flat.anchor_pos
    c[:, d] = -1.0
    q_diag = np.empty((n, d + 1, d + 1))
    q_arrow = np.empty((n, d + 1))
    for i in range(d + 1):
        for j in range(i, d + 1):
            acc = np.bincount(flat.time_index, weights=w * c[:, i] * c[:, j], minlength=n)
            q_diag[:, i, j] = acc
            q_diag[:, j, i] = acc
        q_arrow[:, i] = np.bincount(flat.time_index, weights=w * b * c[:, i], minlength=n)
    q_corner = float(np.dot(w * b, b))
    r_matrix = assemble_R(prior, problem.measurements.times)
    return LiftedMatrices(
        n_times=n, state_dim=k, dim=d, n_measurements=flat.total,
        q_diag=q_diag, q_arrow=q_arrow, q_corner=q_corner, r_matrix=r_matrix,
    )


def dump_sparsity(matrices: LiftedMatrices, path: str | Path) -> int:
    """Write the certificate-relevant sparsity pattern as a coordinate list.

    Emits one ``row,col,value`` line per structurally nonzero entry of
    ``(1/E) Q_padded + (1/N) R_padded`` (the cost part of the certificate
    matrix). Returns the number of entries written.
    """
    b = matrices.block_size
    k = matrices.state_dim
    idx = matrices.sub_index
    inv_e = 1.0 / matrices.n_measurements
    inv_n = 1.0 / matrices.n_times
    entries: dict[tuple[int, int], float] = {}

    def add(r: int, col: int, val: float) -> None:
        if val != 0.0:
            entries[(r, col)] = entries.get((r, col), 0.0) + val

    for n in range(matrices.n_times):
        base = n * b
        for i in range(idx.shape[0]):
            for j in range(idx.shape[0]):
                add(base + int(idx[i]), base + int(idx[j]), inv_e * matrices.q_diag[n, i, j])
            add(base + int(idx[i]), matrices.lifted_size - 1, inv_e * matrices.q_arrow[n, i])
            add(matrices.lifted_size - 1, base + int(idx[i]), inv_e * matrices.q_arrow[n, i])
        for i in range(k):
            for j in range(k):
                add(base + i, base + j, inv_n * matrices.r_matrix.diag[n, i, j])
                if n + 1 < matrices.n_times:
                    nxt = (n + 1) * b
                    add(base + i, nxt + j, inv_n * matrices.r_matrix.upper[n, i, j])
                    add(nxt + j, base + i, inv_n * matrices.r_matrix.upper[n, i, j])
    add(matrices.lifted_size - 1, matrices.lifted_size - 1, inv_e * matrices.q_corner)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# row,col,value\n")
        for (r, col) in sorted(entries):
            fh.write(f"{r},{col},{entries[(r, col)]!r}\n")
    return len(entries)
