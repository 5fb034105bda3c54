"""Spectral quantities, every bound as a checkable inequality, and reports.

Measured norms are ground truth (dense SVD at desk scale, Lanczos with a
sparse factorization above it), never estimates, because the point is to
compare them against the closed-form bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import pade_core
from .errors import ClassificationError, ConvergenceError, ShapeError, SizeError
from .error_bounds import SolverParams, make_params
from .pade_core import OdeProblem, pade_coefficients, pade_propagator, reference_expm
from .system_builder import (
    BlockSystem,
    alternating_signs,
    build_pade_system,
    classical_reference_trajectory,
)

DENSE_SVD_CAP = 4096
_POWER_MAXITER = 10_000


def spectral_norm(matrix, method: str = "auto", tol: float = 1e-10, seed: int = 0) -> float:
    """2-norm, by dense SVD at small size or power iteration on M^H M.

    ``method`` is one of auto | svd | power.  The power iteration starts from
    a seeded vector and must converge within 10k iterations.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2:
        raise ShapeError("expected a matrix")
    if not np.isfinite(m).all():
        raise ShapeError("entries must be finite")
    if method == "auto":
        method = "svd" if max(m.shape) <= 512 else "power"
    if method == "svd":
        return float(np.linalg.norm(m, 2))
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=m.shape[1]) + 1j * rng.normal(size=m.shape[1])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(_POWER_MAXITER):
        w = m.conj().T @ (m @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        sigma = math.sqrt(lam)
        if abs(sigma - prev) <= tol * max(sigma, 1e-300):
            return sigma
        prev = sigma
    raise ConvergenceError("power iteration did not converge in 10000 iterations")


def extreme_singular_values(matrix, seed: int = 0) -> tuple[float, float]:
    """(sigma_max, sigma_min) of a sparse or dense operator.

    Dense SVD up to 512; above it, Lanczos on M^H M for the top and on the
    factorized inverse for the bottom.
    """
    if sp.issparse(matrix):
        dim = matrix.shape[0]
        if dim <= 512:
            svals = np.linalg.svd(matrix.toarray(), compute_uv=False)
            return float(svals[0]), float(svals[-1])
        csr = matrix.tocsr()
        rng = np.random.default_rng(seed)
        v0 = rng.normal(size=dim) + 1j * rng.normal(size=dim)

        top_op = spla.LinearOperator(
            (dim, dim), matvec=lambda x: csr.conj().T @ (csr @ x), dtype=complex)
        top = spla.eigsh(top_op, k=1, which="LA", v0=v0, tol=1e-12,
                         return_eigenvectors=False)
        lu = spla.splu(matrix.tocsc())
        inv_op = spla.LinearOperator(
            (dim, dim), matvec=lambda x: lu.solve(lu.solve(x, trans="H"), trans="N"),
            dtype=complex)
        bottom = spla.eigsh(inv_op, k=1, which="LA", v0=v0, tol=1e-12,
                            return_eigenvectors=False)
        return float(np.sqrt(top[0])), float(1.0 / np.sqrt(bottom[0]))
    dense = np.asarray(matrix, dtype=complex)
    if dense.shape[0] > DENSE_SVD_CAP:
        raise SizeError(f"dense SVD capped at {DENSE_SVD_CAP}")
    svals = np.linalg.svd(dense, compute_uv=False)
    return float(svals[0]), float(svals[-1])


def is_hermitian_nsd(matrix_a, tol: float = 1e-10) -> bool:
    if not pade_core.is_hermitian(matrix_a):
        return False
    w = np.linalg.eigvalsh(np.asarray(matrix_a, dtype=complex))
    scale = max(1.0, float(np.abs(w).max()))
    return bool(w.max() <= tol * scale)


# ---------------------------------------------------------------- bounds ---

def w_inverse_bound(k: int, case: str) -> float:
    """Inverse-norm bound for the one-step block: sqrt((k+1)(4 log(k+1) + 1)),
    with the extra 2 sqrt(e)/(3-e) prefactor in the unit-norm case."""
    base = math.sqrt((k + 1) * (4.0 * math.log(k + 1) + 1.0))
    if case == "hermitian_nsd":
        return base
    if case == "unit_norm":
        return 2.0 * math.sqrt(math.e) / (3.0 - math.e) * base
    raise ClassificationError(f"unknown case {case!r}")


def signed_row_contraction_bound(k: int) -> float:
    """Bound sqrt(5k+1) on the alternating-sign row applied to the block inverse."""
    return math.sqrt(5.0 * k + 1.0)


def l_inverse_bound(m: int, p: int, k: int) -> float:
    """6 (m+p) sqrt(k log k), valid for Hermitian NSD inputs and k >= 3."""
    if k < 3:
        raise ClassificationError("the full-system bound needs k >= 3")
    return 6.0 * (m + p) * math.sqrt(k * math.log(k))


def kappa_bound(m: int, p: int, k: int, norm_ah: float) -> float:
    """3 (m+p) sqrt(k log k) (6 + ||A h||), Hermitian NSD case, k >= 3."""
    if k < 3:
        raise ClassificationError("the condition bound needs k >= 3")
    return 3.0 * (m + p) * math.sqrt(k * math.log(k)) * (6.0 + norm_ah)


def l_norm_bound(k: int, h: float, norm_a: float) -> float:
    """||L||_2 <= beta_1 h ||A|| + 3 with beta_1 = 1/2 for equal orders."""
    beta1 = float(pade_coefficients(k, k).ratio_beta[0])
    return beta1 * h * norm_a + 3.0


# ------------------------------------------------------------- W inverse ---

def _dense_w_block(matrix_a, step: float, order: int) -> np.ndarray:
    n = matrix_a.shape[0]
    eye = np.eye(n)
    ah = np.asarray(matrix_a, dtype=complex) * step
    k = order
    beta = pade_coefficients(k, k).beta_floats
    s = 1.0 / math.sqrt(k + 1)
    w = np.zeros((n * (k + 1), n * (k + 1)), dtype=complex)

    def blk(i, j):
        return (slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n))

    for j in range(k + 1):
        w[blk(0, j)] = s * eye
    for i in range(1, k + 1):
        w[blk(i, i - 1)] = eye
        w[blk(i, i)] = beta[k - i] * ah
    return w


def explicit_w_inverse(matrix_a, step: float, order: int) -> np.ndarray:
    """Closed-form blocks of the one-step inverse: powers of -Ah, coefficient
    ratios, and a single denominator inverse as prefactor."""
    a = np.asarray(matrix_a, dtype=complex)
    n = a.shape[0]
    k = order
    d = pade_coefficients(k, k).den_floats
    x = a * step
    powers = [np.eye(n, dtype=complex)]
    for _ in range(k):
        powers.append(powers[-1] @ (-x))
    den = sum(d[j] * powers[j] for j in range(k + 1))
    lu = sla.lu_factor(den)
    out = np.zeros((n * (k + 1), n * (k + 1)), dtype=complex)

    def blk(i, j):
        return (slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n))

    root = math.sqrt(k + 1)
    for r in range(1, k + 2):
        lam = k + 1 - r
        for s in range(1, k + 2):
            if s == 1:
                b = root * d[lam] * powers[lam]
            else:
                t = k + 2 - s
                if lam >= t:
                    b = (d[lam] / d[t]) * sum(d[j] * powers[j + lam - t] for j in range(t))
                else:
                    b = -(d[lam] / d[t]) * sum(d[j] * powers[j + lam - t] for j in range(t, k + 1))
            out[blk(r - 1, s - 1)] = sla.lu_solve(lu, b)
    return out


def taylor_inverse_growth(matrix_a, step: float, order: int) -> tuple[float, float]:
    """(lower bound, measured) for the inverse norm of the truncated-series block.

    The lower bound sqrt(sum ||A h||^{2j} / (j!)^2) grows like
    exp(||A h||)/sqrt(k+1); the rational block stays bounded instead.
    """
    a = np.asarray(matrix_a, dtype=complex)
    if not pade_core.is_hermitian(a):
        raise ClassificationError("growth bound derived for Hermitian input")
    n = a.shape[0]
    k = order
    nah = float(np.linalg.norm(a * step, 2))
    bound = math.sqrt(sum(nah ** (2 * j) / math.factorial(j) ** 2 for j in range(k + 1)))
    eye = np.eye(n)
    m = np.zeros((n * (k + 1), n * (k + 1)), dtype=complex)
    for i in range(k + 1):
        m[i * n:(i + 1) * n, i * n:(i + 1) * n] = eye
        if i >= 1:
            m[i * n:(i + 1) * n, (i - 1) * n:i * n] = -a * step / i
    measured = float(np.linalg.norm(np.linalg.inv(m), 2))
    return bound, measured


@dataclass(frozen=True)
class DriftReport:
    drift_max: float
    per_step: np.ndarray
    hypothesis_ok: bool


def propagator_drift(matrix_a, step: float, order: int, steps: int) -> DriftReport:
    """max_i ||I - exp(-i A h) R^i(A h)||_2 and the <=1 hypothesis flag."""
    a = np.asarray(matrix_a, dtype=complex)
    n = a.shape[0]
    r = pade_propagator(a, step, order)
    back = reference_expm(a, -step)
    gmat = back @ r  # exp(-Ah) and R commute, both functions of A
    eye = np.eye(n)
    acc = np.eye(n, dtype=complex)
    vals = np.empty(steps)
    for i in range(steps):
        acc = acc @ gmat
        vals[i] = np.linalg.norm(eye - acc, 2)
    dmax = float(vals.max())
    return DriftReport(drift_max=dmax, per_step=vals, hypothesis_ok=bool(dmax <= 1.0))


# ------------------------------------------------------------ reports ------

@dataclass(frozen=True)
class AnalysisReport:
    """Measured spectral quantities beside their theoretical bounds."""

    norm_l: float | None = None
    norm_l_inv: float | None = None
    kappa: float | None = None
    bound_l_inv: float | None = None
    bound_kappa: float | None = None
    bound_l_norm: float | None = None
    c_of_a: float | None = None
    g_ratio: float | None = None
    drift_max: float | None = None
    case: str | None = None
    measured_w_inv: float | None = None
    bound_w_inv: float | None = None
    measured_signed_row: float | None = None
    bound_signed_row: float | None = None
    satisfied: dict = field(default_factory=dict)


def inverse_norm_bounds(params: SolverParams, matrix_a, case: str) -> AnalysisReport:
    """Bounds and measured inverse norms for one step block and the full system.

    ``case`` must match the matrix: hermitian_nsd (checked through the
    eigenvalues) or unit_norm (checked through ||A h||_2 <= 1).
    """
    a = np.asarray(matrix_a, dtype=complex)
    n = a.shape[0]
    k, m, p, h = params.order, params.steps, params.padding, params.step_size
    if case == "hermitian_nsd":
        if not is_hermitian_nsd(a):
            raise ClassificationError("matrix is not Hermitian negative semi-definite")
    elif case == "unit_norm":
        if np.linalg.norm(a * h, 2) > 1.0 + 1e-12:
            raise ClassificationError("||A h||_2 exceeds 1")
    else:
        raise ClassificationError(f"unknown case {case!r}")

    w = _dense_w_block(a, h, k)
    winv = np.linalg.inv(w)
    measured_w = float(np.linalg.norm(winv, 2))
    signs = alternating_signs(k)
    row = np.kron(signs, np.eye(n))
    measured_row = float(np.linalg.norm(row @ winv, 2))

    problem = OdeProblem(matrix_a=a, vec_b=np.zeros(n), vec_x0=np.zeros(n),
                         horizon=params.horizon)
    system = build_pade_system(problem, params)
    smax, smin = extreme_singular_values(system.matrix)
    norm_l, norm_l_inv = smax, 1.0 / smin

    b_w = w_inverse_bound(k, case)
    b_row = signed_row_contraction_bound(k)
    b_linv = l_inverse_bound(m, p, k) if (case == "hermitian_nsd" and k >= 3) else None
    nah = float(np.linalg.norm(a * h, 2))
    b_kappa = kappa_bound(m, p, k, nah) if (case == "hermitian_nsd" and k >= 3) else None
    sats = {"w_inv": measured_w <= b_w}
    if case == "hermitian_nsd":
        sats["signed_row"] = measured_row <= b_row
    if b_linv is not None:
        sats["l_inv"] = norm_l_inv <= b_linv
    if b_kappa is not None:
        sats["kappa"] = norm_l * norm_l_inv <= b_kappa
    return AnalysisReport(
        norm_l=norm_l, norm_l_inv=norm_l_inv, kappa=norm_l * norm_l_inv,
        bound_l_inv=b_linv, bound_kappa=b_kappa,
        bound_l_norm=l_norm_bound(k, h, float(np.linalg.norm(a, 2))),
        case=case, measured_w_inv=measured_w, bound_w_inv=b_w,
        measured_signed_row=measured_row, bound_signed_row=b_row,
        satisfied=sats,
    )


def transient_growth(matrix_a, horizon: float, steps: int, refine: int = 10) -> float:
    """max over the refined step grid of ||exp(A t)||_2."""
    a = np.asarray(matrix_a, dtype=complex)
    ts = np.linspace(0.0, horizon, steps * refine + 1)
    if pade_core.is_hermitian(a):
        w = np.linalg.eigvalsh(a)
        return float(max(np.exp(w.max() * t) for t in ts))
    return float(max(np.linalg.norm(reference_expm(a, t), 2) for t in ts))


def condition_report(system: BlockSystem, problem: OdeProblem,
                     dim_cap: int = DENSE_SVD_CAP) -> AnalysisReport:
    """Measured condition number of an assembled system plus every applicable bound.

    ``dim_cap`` guards the exact inverse-norm computation; raise it explicitly
    for larger sweeps (the Lanczos path handles them fine).
    """
    lay = system.layout
    if lay.dim > dim_cap:
        raise SizeError(f"condition report capped at dimension {dim_cap}, got {lay.dim}")
    smax, smin = extreme_singular_values(system.matrix)
    norm_l, norm_l_inv = smax, 1.0 / smin
    kappa = norm_l * norm_l_inv
    a = problem.matrix_a
    k, m, p, h = lay.k, lay.m, lay.p, lay.h
    nah = float(np.linalg.norm(a * h, 2))
    na = float(np.linalg.norm(a, 2))

    hermitian_nsd = is_hermitian_nsd(a)
    case = "hermitian_nsd" if hermitian_nsd else ("unit_norm" if nah <= 1.0 + 1e-12 else None)
    b_linv = b_kappa = None
    if system.scheme == "pade" and hermitian_nsd and k >= 3:
        b_linv = l_inverse_bound(m, p, k)
        b_kappa = kappa_bound(m, p, k, nah)
    b_lnorm = l_norm_bound(k, h, na) if system.scheme == "pade" else None

    traj = classical_reference_trajectory(
        problem, make_params(m, k, p, lay.h * m, system.scheme))
    g = traj.g(float(np.linalg.norm(problem.vec_b))) if not traj.degenerate else None
    c_of_a = transient_growth(a, lay.h * m, m)
    drift = propagator_drift(a, h, k, m).drift_max if system.scheme == "pade" else None

    sats = {}
    if b_linv is not None:
        sats["l_inv"] = norm_l_inv <= b_linv
    if b_kappa is not None:
        sats["kappa"] = kappa <= b_kappa
    if b_lnorm is not None:
        sats["l_norm"] = norm_l <= b_lnorm
    return AnalysisReport(
        norm_l=norm_l, norm_l_inv=norm_l_inv, kappa=kappa,
        bound_l_inv=b_linv, bound_kappa=b_kappa, bound_l_norm=b_lnorm,
        c_of_a=c_of_a, g_ratio=g, drift_max=drift, case=case,
        satisfied=sats,
    )
