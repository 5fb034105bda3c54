"""Exact solvers for the block systems and the solution-quality quantities.

``solve_block_forward`` walks the block-lower-triangular structure one step at
a time, factoring the (identical) diagonal block once.  ``solve_dense`` is the
deliberately-naive oracle the structured path is tested against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateTargetError,
    SingularBlockError,
    SizeError,
    SolveResidualError,
)
from .system_builder import BlockSystem, alternating_signs

DENSE_DIM_CAP = 4096


@dataclass(frozen=True)
class SolutionBundle:
    """Per-step auxiliary blocks, terminal state, and measurement quantities.

    ``z_blocks[s, j]`` holds the auxiliary vector with subscript j of step
    s+1 (subscript order, not stack order).  ``norm_c`` is the global
    normalization C with C^2 = sum ||z||^2 + p ||terminal||^2.
    """

    scheme: str
    z_blocks: np.ndarray
    terminal: np.ndarray
    padding_count: int
    norm_c: float
    p_succ: float
    residual: float

    def step_iterates(self) -> np.ndarray:
        """Terminal iterate of every step: signed sum (rational scheme) or plain sum."""
        m, width, _ = self.z_blocks.shape
        if self.scheme == "pade":
            signs = np.array([(-1.0) ** j for j in range(width)])
            return np.einsum("j,sjn->sn", signs, self.z_blocks)
        return self.z_blocks.sum(axis=1)


def _norms(z_blocks: np.ndarray, terminal: np.ndarray, padding: int) -> tuple[float, float]:
    total_z = float(np.sum(np.abs(z_blocks) ** 2))
    term = float(np.sum(np.abs(terminal) ** 2))
    c2 = total_z + padding * term
    if c2 <= 0.0:
        raise DegenerateTargetError("solution vector has zero norm")
    return np.sqrt(c2), padding * term / c2


def _full_vector(z_blocks: np.ndarray, terminal: np.ndarray, padding: int, scheme: str) -> np.ndarray:
    m, width, n = z_blocks.shape
    parts = []
    for s in range(m):
        stacked = z_blocks[s, ::-1] if scheme == "pade" else z_blocks[s]
        parts.append(stacked.reshape(width * n))
    parts.append(np.tile(terminal, padding))
    return np.concatenate(parts)


def solve_block_forward(system: BlockSystem, check_residual: bool = True,
                        residual_tol: float = 1e-10) -> SolutionBundle:
    """Forward substitution over block rows with a single diagonal-block LU.

    The residual against the assembled sparse operator is always computed
    and recorded; with ``check_residual`` it must stay within
    ``residual_tol * ||rhs||`` (meaningful for reasonably conditioned
    systems; sweeps over unstable regimes may disable the gate).
    """
    lay = system.layout
    n, m, k, p, h = lay.n, lay.m, lay.k, lay.p, lay.h
    width = k + 1
    diag = system.matrix[: n * width, : n * width].toarray()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(diag)
    except (sla.LinAlgError, ValueError) as exc:
        raise SingularBlockError(f"diagonal block is singular: {exc}", step_index=1) from exc
    # extreme step norms produce wildly scaled yet nonsingular pivots, so only
    # an essentially exact zero flags singularity here; near-singular damage
    # is caught by the non-finite and residual gates downstream
    pivots = np.abs(np.diag(lu[0]))
    if pivots.min() <= 1e-20 * max(pivots.max(), 1e-300):
        raise SingularBlockError(
            f"diagonal block pivot ratio {pivots.min() / max(pivots.max(), 1e-300):.2e}",
            step_index=1)

    signs = alternating_signs(k)
    s15 = 1.0 / np.sqrt(width)
    z_blocks = np.empty((m, width, n), dtype=complex)
    rhs = system.rhs
    prev_stack = None
    for step in range(m):
        block_rhs = rhs[step * width * n:(step + 1) * width * n].copy()
        if step > 0:
            if system.scheme == "pade":
                coupling = s15 * np.einsum("j,jn->n", signs, prev_stack)
            else:
                coupling = -prev_stack.sum(axis=0)
            block_rhs[:n] -= coupling
        sol = sla.lu_solve(lu, block_rhs)
        if not np.isfinite(sol).all():
            raise SingularBlockError("non-finite step solution", step_index=step + 1)
        prev_stack = sol.reshape(width, n)
        # stack order is z_k..z_0 for the rational scheme, z_0..z_k otherwise
        z_blocks[step] = prev_stack[::-1] if system.scheme == "pade" else prev_stack
    if system.scheme == "pade":
        terminal = -np.einsum("j,jn->n", signs, prev_stack)
    else:
        terminal = prev_stack.sum(axis=0)

    full = _full_vector(z_blocks, terminal, p, system.scheme)
    residual = float(np.linalg.norm(system.matrix @ full - rhs))
    rhs_norm = float(np.linalg.norm(rhs))
    if check_residual and residual > residual_tol * max(rhs_norm, 1e-300):
        raise SolveResidualError(
            f"forward-substitution residual {residual:.3e} exceeds {residual_tol:.1e}*||rhs||")
    norm_c, p_succ = _norms(z_blocks, terminal, p)
    return SolutionBundle(system.scheme, z_blocks, terminal, p, norm_c, p_succ, residual)


def solve_dense(system: BlockSystem, check_residual: bool = True,
                residual_tol: float = 1e-12) -> np.ndarray:
    """Ground-truth oracle: partial-pivoted LU on the densified matrix."""
    lay = system.layout
    if lay.dim > DENSE_DIM_CAP:
        raise SizeError(f"dense oracle capped at dimension {DENSE_DIM_CAP}, got {lay.dim}")
    dense = system.matrix.toarray()
    lu = sla.lu_factor(dense)
    sol = sla.lu_solve(lu, system.rhs)
    sol += sla.lu_solve(lu, system.rhs - dense @ sol)
    residual = float(np.linalg.norm(dense @ sol - system.rhs))
    if check_residual and residual > residual_tol * max(float(np.linalg.norm(system.rhs)), 1e-300):
        raise SolveResidualError(f"dense residual {residual:.3e} exceeds contract")
    return sol


def bundle_from_vector(system: BlockSystem, solution: np.ndarray) -> SolutionBundle:
    """Interpret a raw solution vector of the full system as a SolutionBundle."""
    lay = system.layout
    n, m, k, p = lay.n, lay.m, lay.k, lay.p
    width = k + 1
    z = np.empty((m, width, n), dtype=complex)
    for s in range(m):
        stack = solution[s * width * n:(s + 1) * width * n].reshape(width, n)
        z[s] = stack[::-1] if system.scheme == "pade" else stack
    terminal = solution[lay.terminal_row() * n:(lay.terminal_row() + 1) * n]
    residual = float(np.linalg.norm(system.matrix @ solution - system.rhs))
    norm_c, p_succ = _norms(z, terminal, p)
    return SolutionBundle(system.scheme, z, terminal, p, norm_c, p_succ, residual)


def success_probability(bundle: SolutionBundle) -> float:
    """p ||terminal||^2 / (sum ||z||^2 + p ||terminal||^2), straight from the bundle."""
    if bundle.norm_c <= 0:
        raise DegenerateTargetError("zero normalization")
    term = float(np.sum(np.abs(bundle.terminal) ** 2))
    return bundle.padding_count * term / bundle.norm_c**2


def state_distance(u, v) -> float:
    """L2 distance between the normalized versions of two vectors."""
    u = np.asarray(u, dtype=complex).ravel()
    v = np.asarray(v, dtype=complex).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateTargetError("cannot normalize a zero vector")
    return float(np.linalg.norm(u / nu - v / nv))


def normalized_distance_bound(alpha: float, beta: float) -> float:
    """Distance bound 2*beta/alpha for ||u|| >= alpha and ||u - v|| <= beta."""
    if alpha <= 0:
        raise DegenerateTargetError("alpha must be positive")
    return 2.0 * beta / alpha


def amplitude_lower_bound(alpha: float, delta: float) -> float:
    """Surviving amplitude lower bound alpha - delta after a delta-perturbation."""
    return alpha - delta
