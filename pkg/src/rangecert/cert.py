"""Global-optimality certificate for converged estimates.

Pipeline: recover the dual variables in closed form from the residuals,
assemble the certificate matrix

    H = (1/E) Q_padded + (1/N) R_padded + rho * A0_padded + sum_n lambda_n * A_n_padded,

then check the two certificate conditions that are not true by construction:
H is positive semidefinite, and H annihilates the lifted candidate (the
stationarity residual bounds the solver's convergence slack, since the
closed-form duals make the residual analytically zero at an exact stationary
point). Primal feasibility holds by construction of the lifted vector.

The PSD test runs a block-tridiagonal-arrowhead LDL' recursion in O(N): small
LDL' factorizations of the Schur-complemented diagonal blocks, forward
substitutions for the coupling and arrow rows, and a final corner scalar. A
negative pivot aborts the recursion early with a not-psd verdict; a pivot
smaller than ``pivot_tolerance`` in magnitude yields a marginal verdict
instead of a boolean. The test operates on H + beta*I (beta uniform across
all rows, homogeneous row included); reports always carry the beta used.

A dense eigenvalue oracle over the same matrix cross-checks the recursion at
desk scale; it is deliberately independent of the block path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lift import DENSE_GUARD, LiftedMatrices, LiftedVector, build_matrices, lift
from .model import TrajectoryEstimate, row_residuals, total_cost
from .prior import MotionPrior, prior_energy
from .problem import ProblemData, flatten

CERTIFIED = "certified"
NOT_CERTIFIED = "not-certified"
MARGINAL = "numerically-marginal"

DEFAULT_BETA = 1e-3
DEFAULT_STATIONARITY_THRESHOLD = 1e-5
DEFAULT_PIVOT_TOLERANCE = 1e-14


@dataclass(frozen=True)
class DualVariables:
    """Closed-form Lagrange multipliers of the lifted constraints."""

    lam: np.ndarray
    rho: float


@dataclass(frozen=True, eq=False)
class CertificateReport:
    duals: DualVariables
    psd: bool | None
    min_diag: float
    stationarity_residual: float
    beta_used: float
    duality_gap: float
    verdict: str


@dataclass(frozen=True, eq=False)
class BlockArrowMatrix:
    """Symmetric block-tridiagonal matrix with a dense last row/column.

    ``diag[n]`` are B x B diagonal blocks, ``off[n]`` the super-diagonal
    blocks (block row n, block column n+1), ``arrow[n]`` the last-column
    entries of block n and ``corner`` the bottom-right scalar.
    """

    diag: np.ndarray
    off: np.ndarray
    arrow: np.ndarray
    corner: float

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[1]

    @property
    def size(self) -> int:
        return self.n_blocks * self.block_size + 1

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        n, b = self.n_blocks, self.block_size
        blocks = vec[:-1].reshape(n, b)
        ell = vec[-1]
        out = np.empty_like(vec)
        out_blocks = out[:-1].reshape(n, b)
        np.einsum("nij,nj->ni", self.diag, blocks, out=out_blocks)
        if n > 1:
            out_blocks[:-1] += np.einsum("nij,nj->ni", self.off, blocks[1:])
            out_blocks[1:] += np.einsum("nji,nj->ni", self.off, blocks[:-1])
        out_blocks += ell * self.arrow
        out[-1] = float(np.einsum("ni,ni->", self.arrow, blocks)) + self.corner * ell
        return out

    def inf_norm(self) -> float:
        """Exact infinity norm (max absolute row sum)."""
        n = self.n_blocks
        row_sums = np.sum(np.abs(self.diag), axis=2)
        if n > 1:
            row_sums[:-1] += np.sum(np.abs(self.off), axis=2)
            row_sums[1:] += np.sum(np.abs(self.off), axis=1)
        row_sums += np.abs(self.arrow)
        corner_row = float(np.sum(np.abs(self.arrow)) + abs(self.corner))
        return max(float(row_sums.max()), corner_row)

    def to_dense(self) -> np.ndarray:
        if self.size > DENSE_GUARD:
            raise ValueError(f"dense certificate matrix of size {self.size} refused")
        n, b = self.n_blocks, self.block_size
        out = np.zeros((self.size, self.size))
        for i in range(n):
            out[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
            if i + 1 < n:
                out[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = self.off[i]
                out[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.off[i].T
            out[i * b:(i + 1) * b, -1] = self.arrow[i]
            out[-1, i * b:(i + 1) * b] = self.arrow[i]
        out[-1, -1] = self.corner
        return out


@dataclass(frozen=True, eq=False)
class ArrowheadFactorization:
    """Completed LDL' factors of H + beta*I in block form.

    ``j_blocks[n]`` are the unit-lower in-block factors, ``d_blocks[n]`` the
    pivot vectors, ``sub_blocks[n]`` the block-row n+1 / block-column n
    coupling factors, ``arrow_rows[n]`` the last-row factors and ``delta``
    the corner pivot.
    """

    j_blocks: np.ndarray
    d_blocks: np.ndarray
    sub_blocks: np.ndarray
    arrow_rows: np.ndarray
    delta: float

    def reassemble(self) -> BlockArrowMatrix:
        """Multiply the factors back out (block structure preserved)."""
        n, b = self.d_blocks.shape
        jd = self.j_blocks * self.d_blocks[:, None, :]
        diag = np.einsum("nik,njk->nij", jd, self.j_blocks)
        if n > 1:
            sd = self.sub_blocks * self.d_blocks[:-1, None, :]
            diag[1:] += np.einsum("nik,njk->nij", sd, self.sub_blocks)
            off = np.einsum("nik,njk->nij", jd[:-1], self.sub_blocks)
        else:
            off = np.zeros((0, b, b))
        arrow = np.einsum("nij,nj->ni", jd, self.arrow_rows)
        if n > 1:
            arrow[1:] += np.einsum("nij,nj->ni", sd, self.arrow_rows[:-1])
        corner = self.delta + float(
            np.einsum("ni,ni,ni->", self.arrow_rows, self.d_blocks, self.arrow_rows))
        return BlockArrowMatrix(diag, off, arrow, corner)


@dataclass(frozen=True)
class PsdResult:
    """Outcome of the arrowhead PSD test.

    ``psd`` is None when the recursion hit a numerically singular pivot and
    no verdict can be given (``marginal`` is then True).
    """

    psd: bool | None
    min_diag: float
    marginal: bool
    blocks_processed: int
    factorization: ArrowheadFactorization | None = None


_OK, _NEGATIVE, _TINY = 0, 1, 2


def _ldl_small(s: np.ndarray, pivot_tol: float):
    """Right-looking LDL' of a small symmetric block without pivoting.

    Returns (J, d, n_done, status). On a negative or tiny pivot the
    factorization stops with the offending pivot recorded in ``d``.
    """
    b = s.shape[0]
    j = np.eye(b)
    d = np.zeros(b)
    work = s.copy()
    for i in range(b):
        piv = work[i, i]
        d[i] = piv
        if abs(piv) < pivot_tol:
            return j, d, i, _TINY
        if piv < 0.0:
            return j, d, i, _NEGATIVE
        if i + 1 < b:
            col = work[i + 1:, i] / piv
            j[i + 1:, i] = col
            work[i + 1:, i + 1:] -= np.outer(col, work[i + 1:, i])
    return j, d, b, _OK


def _forward_unit_lower(j: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve J x = rhs with J unit lower triangular (rhs vector or matrix)."""
    x = rhs.astype(float).copy()
    for i in range(1, j.shape[0]):
        x[i] -= j[i, :i] @ x[:i]
    return x


def psd_arrowhead(h: BlockArrowMatrix, beta: float = 0.0,
                  pivot_tolerance: float = DEFAULT_PIVOT_TOLERANCE,
                  want_factors: bool = False) -> PsdResult:
    """O(N) positive-semidefiniteness test of H + beta*I.

    Runs the block recursion in order D_1, J_1, L_1, ..., D_N, J_N together
    with the arrow rows l_1..l_N and the corner pivot delta. Aborts at the
    first negative pivot; a pivot below ``pivot_tolerance`` in magnitude
    gives a marginal (no-verdict) result.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    n, b = h.n_blocks, h.block_size
    beta_eye = beta * np.eye(b)
    min_diag = math.inf
    schur_carry = np.zeros((b, b))
    arrow_carry = np.zeros(b)
    corner_acc = 0.0
    if want_factors:
        j_all = np.empty((n, b, b))
        d_all = np.empty((n, b))
        sub_all = np.empty((max(n - 1, 0), b, b))
        m_all = np.empty((n, b))
    for i in range(n):
        s = h.diag[i] + beta_eye - schur_carry
        j, d, n_done, status = _ldl_small(s, pivot_tolerance)
        if status == _OK:
            min_diag = min(min_diag, float(d.min()))
        else:
            min_diag = min(min_diag, float(d[:n_done + 1].min()))
            if status == _TINY:
                return PsdResult(None, min_diag, True, i + 1)
            return PsdResult(False, min_diag, False, i + 1)
        m = _forward_unit_lower(j, h.arrow[i] - arrow_carry) / d
        corner_acc += float(np.dot(m * d, m))
        if i + 1 < n:
            lam_t = _forward_unit_lower(j, h.off[i]) / d[:, None]
            schur_carry = lam_t.T @ (d[:, None] * lam_t)
            arrow_carry = lam_t.T @ (d * m)
            if want_factors:
                sub_all[i] = lam_t.T
        if want_factors:
            j_all[i], d_all[i], m_all[i] = j, d, m
    delta = h.corner + beta - corner_acc
    min_diag = min(min_diag, delta)
    if abs(delta) < pivot_tolerance:
        return PsdResult(None, min_diag, True, n)
    factors = None
    if want_factors:
        factors = ArrowheadFactorization(j_all, d_all, sub_all, m_all, delta)
    return PsdResult(delta >= 0.0, min_diag, False, n, factors)


def dense_min_eig_oracle(h: BlockArrowMatrix) -> float:
    """Smallest eigenvalue of the densified matrix (desk-scale guard 5000)."""
    if h.size > 5000:
        raise ValueError(f"dense eigenvalue oracle refused for size {h.size}")
    return float(np.linalg.eigvalsh(h.to_dense())[0])


def compute_duals(estimate: TrajectoryEstimate, problem: ProblemData,
                  prior: MotionPrior) -> DualVariables:
    """Closed-form dual variables from the residuals at the estimate.

    Per time index, lambda_n is minus twice the weighted residual sum over
    that index divided by E; rho is minus the data cost minus the prior
    energy. The prior term goes through the factor-sum route, which forms
    each interval increment before squaring; the assembled quadratic form
    loses the tiny energies of near-feasible trajectories to cancellation.
    O(E + N) work.
    """
    flat = flatten(problem)
    e, _ = row_residuals(flat, estimate.positions())
    we = flat.weight * e
    offs = flat.offsets
    n = flat.n_times
    lam = np.empty(n)
    for i in range(n):
        lam[i] = we[offs[i]:offs[i + 1]].sum()
    lam *= -2.0 / flat.total
    rho = -float(np.dot(we, e)) / flat.total
    rho -= prior_energy(prior, problem.measurements.times, estimate.theta)
    return DualVariables(lam, rho)


def assemble_H(duals: DualVariables, lifted: LiftedMatrices,
               prior: MotionPrior) -> BlockArrowMatrix:
    """Certificate matrix in block-arrow storage."""
    n, k, d = lifted.n_times, lifted.state_dim, lifted.dim
    if prior.state_dim != k:
        raise ValueError("prior state dimension does not match lifted matrices")
    if duals.lam.shape != (n,):
        raise ValueError(f"need {n} multipliers, got {duals.lam.shape}")
    b = k + 1
    inv_e = 1.0 / lifted.n_measurements
    inv_n = 1.0 / n
    idx = lifted.sub_index
    diag = np.zeros((n, b, b))
    diag[:, idx[:, None], idx[None, :]] = inv_e * lifted.q_diag
    diag[:, :k, :k] += inv_n * lifted.r_matrix.diag
    for j in range(d):
        diag[:, j, j] += duals.lam
    off = inv_n * lifted.r_matrix.upper
    pad = np.zeros((max(n - 1, 0), b, b))
    pad[:, :k, :k] = off
    arrow = np.zeros((n, b))
    arrow[:, idx] = inv_e * lifted.q_arrow
    arrow[:, k] -= 0.5 * duals.lam
    corner = inv_e * lifted.q_corner + duals.rho
    return BlockArrowMatrix(diag, pad, arrow, corner)


def check_stationarity(h: BlockArrowMatrix, g: LiftedVector) -> float:
    """Scaled stationarity residual at the lifted candidate."""
    hv = h.matvec(g.values)
    return float(np.max(np.abs(hv)) / (1.0 + np.max(np.abs(g.values))))


def stationarity_system(lifted: LiftedMatrices, g: LiftedVector):
    """Explicit stationarity linear system in the dual unknowns.

    Returns (S, rhs) with S of shape (F_g, N+1): column n holds A_n g for
    n = 1..N, the last column holds A_0 g, and the right-hand side is
    ``-(1/E) Q g - (1/N) R g``. Desk-scale only (dense guard applies).
    """
    f = lifted.lifted_size
    if f > DENSE_GUARD:
        raise ValueError(f"explicit stationarity system of size {f} refused")
    n = lifted.n_times
    s = np.empty((f, n + 1))
    for i in range(n):
        s[:, i] = lifted.constraint_matvec(g, i)
    s[:, n] = lifted.a0_matvec(g)
    rhs = -(lifted.q_matvec(g) / lifted.n_measurements + lifted.r_matvec(g) / n)
    return s, rhs


def certify(estimate: TrajectoryEstimate, problem: ProblemData,
            prior: MotionPrior, beta: float = DEFAULT_BETA,
            stationarity_threshold: float = DEFAULT_STATIONARITY_THRESHOLD,
            pivot_tolerance: float = DEFAULT_PIVOT_TOLERANCE,
            lifted: LiftedMatrices | None = None) -> CertificateReport:
    """Full certificate pipeline for a converged estimate.

    Raises ``ValueError`` for diverged or non-finite estimates. The verdict
    is certified only when the PSD test passes and the stationarity residual
    is below the threshold; a numerically singular pivot yields the marginal
    verdict instead.
    """
    if estimate.diverged or not np.all(np.isfinite(estimate.theta)):
        raise ValueError("refusing to certify a diverged estimate")
    duals = compute_duals(estimate, problem, prior)
    if lifted is None:
        lifted = build_matrices(problem, prior)
    g = lift(estimate.theta, prior)
    h = assemble_H(duals, lifted, prior)
    residual = check_stationarity(h, g)
    psd_res = psd_arrowhead(h, beta, pivot_tolerance)
    gap = abs(total_cost(estimate.theta, problem, prior) - (-duals.rho))
    if psd_res.marginal:
        verdict = MARGINAL
    elif psd_res.psd and residual < stationarity_threshold:
        verdict = CERTIFIED
    else:
        verdict = NOT_CERTIFIED
    return CertificateReport(
        duals=duals, psd=psd_res.psd, min_diag=psd_res.min_diag,
        stationarity_residual=residual, beta_used=beta,
        duality_gap=gap, verdict=verdict,
    )
