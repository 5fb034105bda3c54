"""Assembly of the block-sparse time-stepping systems and the exact reference.

Two rival encodings of the m-step propagation are built over the same block
layout: the rational one couples each step through an upper-Hessenberg block
with a summation row, the polynomial (truncated-series) one through a lower
bidiagonal block.  Both append p trailing copies of the terminal state behind
an identity-bidiagonal chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import pade_core
from .errors import ConsistencyError, DegenerateTargetError, ShapeError
from .error_bounds import SolverParams
from .pade_core import OdeProblem, reference_expm


@dataclass(frozen=True)
class BlockLayout:
    """Block geometry shared by both schemes."""

    n: int
    m: int
    k: int
    p: int
    h: float

    @property
    def step_width(self) -> int:
        return self.k + 1

    @property
    def block_rows(self) -> int:
        return self.m * (self.k + 1) + self.p

    @property
    def dim(self) -> int:
        return self.n * self.block_rows

    @property
    def nnz_cap(self) -> int:
        # a coupled summation row touches 2(k+1) identity-type blocks; interior
        # rows one identity block plus one dense n-wide block
        return self.dim * max(2 * (self.k + 1), self.n + 1) + self.dim

    def terminal_row(self) -> int:
        return self.m * (self.k + 1)


@dataclass(frozen=True)
class BlockSystem:
    """An assembled sparse system together with its block metadata."""

    scheme: str
    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: BlockLayout
    scale_row_factor: float

    def __post_init__(self):
        if self.matrix.shape != (self.layout.dim, self.layout.dim):
            raise ConsistencyError("matrix dimension disagrees with layout")
        if self.rhs.shape != (self.layout.dim,):
            raise ConsistencyError("rhs dimension disagrees with layout")
        if self.matrix.nnz > self.layout.nnz_cap:
            raise ConsistencyError("nonzero count exceeds the block-sparsity cap")

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


class _BlockCoo:
    """Coordinate assembly grouped by block row."""

    def __init__(self, layout: BlockLayout):
        self.layout = layout
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, block_row: int, block_col: int, block: np.ndarray):
        n = self.layout.n
        if block.shape != (n, n):
            raise ConsistencyError("block has wrong shape")
        r, c = np.nonzero(block)
        self.rows.append(r + block_row * n)
        self.cols.append(c + block_col * n)
        self.vals.append(block[r, c])

    def to_csr(self) -> sp.csr_matrix:
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals).astype(complex)
        d = self.layout.dim
        return sp.coo_matrix((vals, (rows, cols)), shape=(d, d)).tocsr()


def alternating_signs(k: int) -> np.ndarray:
    """Signs (-1)^{k+1}, (-1)^k, ..., -1 along the stacked step positions."""
    return np.array([(-1.0) ** (k + 1 - j) for j in range(k + 1)])


def _check(problem: OdeProblem, params: SolverParams, scheme: str) -> BlockLayout:
    if params.scheme != scheme:
        raise ConsistencyError(f"params.scheme={params.scheme!r}, builder wants {scheme!r}")
    return BlockLayout(n=problem.dim, m=params.steps, k=params.order,
                       p=params.padding, h=params.step_size)


def build_pade_system(problem: OdeProblem, params: SolverParams) -> BlockSystem:
    """Assemble the rational-scheme system and right-hand side.

    Within one step the unknowns are stacked top-down as z_k, ..., z_0; the
    first (summation) and terminal rows carry the 1/sqrt(k+1) scaling, the
    inter-step coupling places the alternating-sign row into the next step's
    summation row.
    """
    lay = _check(problem, params, "pade")
    n, m, k, p, h = lay.n, lay.m, lay.k, lay.p, lay.h
    eye = np.eye(n)
    ah = problem.matrix_a * h
    coeffs = pade_core.pade_coefficients(k, k)
    beta = coeffs.beta_floats  # beta[j] = beta_{j+1}
    s = 1.0 / np.sqrt(k + 1)
    signs = alternating_signs(k)
    width = k + 1

    asm = _BlockCoo(lay)
    for step in range(m):
        off = step * width
        for j in range(width):
            asm.add(off, off + j, s * eye)
        for i in range(1, width):
            asm.add(off + i, off + i - 1, eye)
            asm.add(off + i, off + i, beta[k - i] * ah)
        if step > 0:
            prev = (step - 1) * width
            for j in range(width):
                asm.add(off, prev + j, s * signs[j] * eye)
    term = lay.terminal_row()
    for j in range(width):
        asm.add(term, (m - 1) * width + j, s * signs[j] * eye)
    asm.add(term, term, s * eye)
    for u in range(1, p):
        asm.add(term + u, term + u - 1, -eye)
        asm.add(term + u, term + u, eye)

    rhs = np.zeros(lay.dim, dtype=complex)
    rhs[:n] = s * problem.vec_x0
    tail = -float(coeffs.den_coeffs[1]) * h * problem.vec_b
    for step in range(m):
        row = step * width + k
        rhs[row * n:(row + 1) * n] = tail
    return BlockSystem("pade", asm.to_csr(), rhs, lay, s)


def build_taylor_system(problem: OdeProblem, params: SolverParams) -> BlockSystem:
    """Assemble the truncated-series system: lower-bidiagonal steps, -Ah/j blocks."""
    lay = _check(problem, params, "taylor")
    n, m, k, p, h = lay.n, lay.m, lay.k, lay.p, lay.h
    eye = np.eye(n)
    ah = problem.matrix_a * h
    width = k + 1

    asm = _BlockCoo(lay)
    for step in range(m):
        off = step * width
        for i in range(width):
            asm.add(off + i, off + i, eye)
            if i >= 1:
                asm.add(off + i, off + i - 1, -ah / i)
        if step > 0:
            prev = (step - 1) * width
            for j in range(width):
                asm.add(off, prev + j, -eye)
    term = lay.terminal_row()
    for j in range(width):
        asm.add(term, (m - 1) * width + j, -eye)
    asm.add(term, term, eye)
    for u in range(1, p):
        asm.add(term + u, term + u - 1, -eye)
        asm.add(term + u, term + u, eye)

    rhs = np.zeros(lay.dim, dtype=complex)
    rhs[:n] = problem.vec_x0
    for step in range(m):
        row = step * width + 1
        rhs[row * n:(row + 1) * n] = h * problem.vec_b
    return BlockSystem("taylor", asm.to_csr(), rhs, lay, 1.0)


def build_unreduced_pair(problem: OdeProblem, params: SolverParams,
                         prev_state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One unreduced step system (backward + forward halves) and its rhs.

    Unknown stacking: z_k, ..., z_0, then zt_1, ..., zt_k, then the step
    output.  Exists only to check the sign-parity identity between the two
    halves; the production encoding eliminates the forward half.
    """
    lay = _check(problem, params, "pade")
    n, k, h = lay.n, lay.k, lay.h
    eye = np.eye(n)
    ah = problem.matrix_a * h
    coeffs = pade_core.pade_coefficients(k, k)
    beta = coeffs.beta_floats
    rows = 2 * k + 2
    mat = np.zeros((rows * n, rows * n), dtype=complex)

    def blk(i, j):
        return (slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n))

    for j in range(k + 1):
        mat[blk(0, j)] = eye
    for i in range(1, k + 1):
        mat[blk(i, i - 1)] = eye
        mat[blk(i, i)] = beta[k - i] * ah
    for j in range(1, k + 1):
        # forward half: alpha_j = beta_j for equal orders
        mat[blk(k + j, k + j - 1 if j > 1 else k)] = -beta[j - 1] * ah
        mat[blk(k + j, k + j)] = eye
    last = rows - 1
    for j in range(k, 2 * k + 1):
        mat[blk(last, j)] = -eye
    mat[blk(last, last)] = eye

    rhs = np.zeros(rows * n, dtype=complex)
    rhs[:n] = prev_state
    rhs[k * n:(k + 1) * n] = -float(coeffs.den_coeffs[1]) * h * problem.vec_b
    rhs[(k + 1) * n:(k + 2) * n] = float(coeffs.num_coeffs[1]) * h * problem.vec_b
    return mat, rhs


@dataclass(frozen=True)
class TrajectoryReference:
    """Exact states on the step grid, via the augmented-generator exponential."""

    times: np.ndarray
    states: np.ndarray
    terminal_norm: float
    max_norm: float

    @property
    def degenerate(self) -> bool:
        return self.terminal_norm <= 1e-300

    def g(self, b_norm: float) -> float:
        """max{max_t ||x(t)||, ||b||} / ||x(T)||."""
        if self.degenerate:
            raise DegenerateTargetError("terminal norm is zero; g is undefined")
        return max(self.max_norm, b_norm) / self.terminal_norm


def classical_reference_trajectory(problem: OdeProblem, params: SolverParams) -> TrajectoryReference:
    """States x(0), x(h), ..., x(mh) without ever forming A^{-1}.

    One extra generator column carries b, so singular A is handled uniformly.
    """
    n, m, h = problem.dim, params.steps, params.step_size
    aug = np.zeros((n + 1, n + 1), dtype=complex)
    aug[:n, :n] = problem.matrix_a
    aug[:n, n] = problem.vec_b
    prop = reference_expm(aug, h)
    state = np.concatenate([problem.vec_x0, [1.0]])
    states = np.empty((m + 1, n), dtype=complex)
    states[0] = state[:n]
    for i in range(1, m + 1):
        state = prop @ state
        states[i] = state[:n]
    norms = np.linalg.norm(states, axis=1)
    return TrajectoryReference(
        times=np.arange(m + 1) * h,
        states=states,
        terminal_norm=float(norms[-1]),
        max_norm=float(norms.max()),
    )


# --------------------------------------------------------------------------
# external formats

def problem_to_json(problem: OdeProblem) -> dict:
    def c(z):
        return {"re": float(np.real(z)), "im": float(np.imag(z))}

    return {
        "n": problem.dim,
        "a": [[c(z) for z in row] for row in problem.matrix_a],
        "b": [c(z) for z in problem.vec_b],
        "x0": [c(z) for z in problem.vec_x0],
        "T": float(problem.horizon),
    }


def _from_entry(e) -> complex:
    if isinstance(e, dict):
        return complex(e.get("re", 0.0), e.get("im", 0.0))
    return complex(e)


def problem_from_json(doc: dict) -> OdeProblem:
    n = int(doc["n"])
    a = np.array([[_from_entry(e) for e in row] for row in doc["a"]], dtype=complex)
    b = np.array([_from_entry(e) for e in doc["b"]], dtype=complex)
    x0 = np.array([_from_entry(e) for e in doc["x0"]], dtype=complex)
    if a.shape != (n, n):
        raise ShapeError(f"matrix shape {a.shape} disagrees with n={n}")
    return OdeProblem(matrix_a=a, vec_b=b, vec_x0=x0, horizon=float(doc["T"]))


def load_problem(path) -> OdeProblem:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_json(json.load(fh))


def save_problem(problem: OdeProblem, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_json(problem), fh, indent=1)


def export_coordinate(system: BlockSystem, path):
    """Text export: header `dim nnz scheme n m k p h`, then `row col re im` lines."""
    coo = system.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lay = system.layout
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{lay.dim} {coo.nnz} {system.scheme} {lay.n} {lay.m} {lay.k} {lay.p} {lay.h:.17g}\n")
        for i in order:
            v = coo.data[i]
            fh.write(f"{coo.row[i]} {coo.col[i]} {v.real:.17g} {v.imag:.17g}\n")
