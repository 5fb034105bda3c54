"""Sweeps over step counts and approximation orders, with seeded random suites.

All randomness flows through ``numpy.random.default_rng(seed)`` so identical
invocations reproduce bit-identical reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import extreme_singular_values
from .classical_solver import solve_block_forward
from .errors import DegenerateTargetError, SearchError
from .error_bounds import make_params
from .pade_core import OdeProblem
from .system_builder import (
    build_pade_system,
    build_taylor_system,
    classical_reference_trajectory,
)

K_SEARCH_CAP = 64
M_SEARCH_CAP = 1 << 14

_BUILDERS = {"pade": build_pade_system, "taylor": build_taylor_system}


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    horizon: float
    steps: int
    order: int
    padding: int
    rel_error: float
    kappa: float
    p_succ: float

    def csv(self) -> str:
        return (f"{self.scheme},{self.horizon:.12g},{self.steps},{self.order},"
                f"{self.padding},{self.rel_error:.12e},{self.kappa:.12e},{self.p_succ:.12e}")


CSV_HEADER = "scheme,T,m,k,p,rel_error,kappa,p_succ"


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def to_json(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "aggregate": self.aggregate,
            "metadata": self.metadata,
        }


def random_stable_matrix(dim: int, seed: int, unit_norm: bool = False) -> np.ndarray:
    """Random complex matrix whose eigenvalues all have negative real part.

    Sampler (recorded for reproducibility, no claim of any canonical
    distribution): eigenvalues with Re in [-2, -0.05] and Im in [-2, 2],
    conjugated by a random unitary pair with singular values log-spaced in
    [1, 8] (condition 8, well under the 50 cap).  With ``unit_norm`` the
    result is rescaled to spectral norm 1 up to 1e-10.
    """
    rng = np.random.default_rng(seed)
    eig = -rng.uniform(0.05, 2.0, size=dim) + 1j * rng.uniform(-2.0, 2.0, size=dim)
    q1, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    q2, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    sim = q1 @ np.diag(np.logspace(0.0, np.log10(8.0), dim)) @ q2.conj().T
    a = sim @ np.diag(eig) @ np.linalg.inv(sim)
    if unit_norm:
        a = a / np.linalg.norm(a, 2)
    return a


def _solve_rel_error(problem: OdeProblem, scheme: str, m: int, k: int, p: int):
    """(rel_error, bundle, system) for one configuration."""
    params = make_params(m, k, p, problem.horizon, scheme)
    system = _BUILDERS[scheme](problem, params)
    bundle = solve_block_forward(system, check_residual=False)
    traj = classical_reference_trajectory(problem, params)
    if traj.degenerate:
        raise DegenerateTargetError("reference terminal state has zero norm")
    err = np.linalg.norm(bundle.terminal - traj.states[-1]) / traj.terminal_norm
    return float(err), bundle, system


def find_min_steps(problem: OdeProblem, scheme: str, order: int, eps: float,
                   padding: int = 1, m_cap: int = M_SEARCH_CAP) -> int:
    """Smallest m reaching rel_error < eps: double until pass, then bisect back."""
    def ok(m: int) -> bool:
        err, _, _ = _solve_rel_error(problem, scheme, m, order, padding)
        return err < eps

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > m_cap:
            raise SearchError(f"no m <= {m_cap} reaches eps={eps} for {scheme}")
    lo = hi // 2  # lo fails (or hi == 1)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def find_min_order(problem: OdeProblem, scheme: str, eps: float,
                   k_cap: int = K_SEARCH_CAP) -> int:
    """Smallest k reaching rel_error < eps at m = p = 1."""
    for k in range(1, k_cap + 1):
        err, _, _ = _solve_rel_error(problem, scheme, 1, k, 1)
        if err < eps:
            return k
    raise SearchError(f"no order <= {k_cap} reaches eps={eps} for {scheme}")


def sweep_m(problem: OdeProblem, order: int, eps: float, m_range,
            padding: int = 1, schemes=("pade", "taylor"),
            with_kappa: bool = True) -> SweepReport:
    """Relative error, condition number and success probability over a step grid."""
    m_list = sorted(set(int(m) for m in m_range))
    if not m_list:
        raise SearchError("empty step range")
    t0 = time.perf_counter()
    report = SweepReport()
    m_star: dict[str, int | None] = {}
    for scheme in schemes:
        best = None
        for m in m_list:
            err, bundle, system = _solve_rel_error(problem, scheme, m, order, padding)
            if with_kappa:
                smax, smin = extreme_singular_values(system.matrix)
                kappa = smax / smin
            else:
                kappa = float("nan")
            report.rows.append(SweepRow(scheme, problem.horizon, m, order, padding,
                                        err, kappa, bundle.p_succ))
            if best is None and err < eps:
                best = m
        m_star[scheme] = best
    report.aggregate = {"m_star": m_star}
    report.metadata = {
        "eps": eps, "order": order, "padding": padding,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    return report


def sweep_k(problem: OdeProblem, eps: float, schemes=("pade", "taylor"),
            k_cap: int = K_SEARCH_CAP) -> SweepReport:
    """Smallest adequate order per scheme at m = p = 1, with its condition number."""
    t0 = time.perf_counter()
    report = SweepReport()
    k_star: dict[str, int] = {}
    for scheme in schemes:
        k = find_min_order(problem, scheme, eps, k_cap)
        err, bundle, system = _solve_rel_error(problem, scheme, 1, k, 1)
        smax, smin = extreme_singular_values(system.matrix)
        report.rows.append(SweepRow(scheme, problem.horizon, 1, k, 1,
                                    err, smax / smin, bundle.p_succ))
        k_star[scheme] = k
    report.aggregate = {"k_star": k_star}
    report.metadata = {"eps": eps, "wall_time_s": round(time.perf_counter() - t0, 3)}
    return report


def random_suite_m_star(dims: int, seeds, horizons, eps: float, order: int,
                        padding: int = 1) -> SweepReport:
    """Experiment-3 style suite: minimal step count per seed, horizon and scheme.

    One row per (scheme, horizon, seed) at the found m*, with the achieved
    error and success probability; per-row condition numbers are skipped at
    suite scale and can be recomputed via the analyze subcommand.
    """
    t0 = time.perf_counter()
    report = SweepReport()
    ones = np.ones(dims)
    means: dict[str, dict[float, float]] = {"pade": {}, "taylor": {}}
    stds: dict[str, dict[float, float]] = {"pade": {}, "taylor": {}}
    for horizon in horizons:
        samples: dict[str, list[int]] = {"pade": [], "taylor": []}
        for seed in seeds:
            a = random_stable_matrix(dims, seed)
            problem = OdeProblem(matrix_a=a, vec_b=ones, vec_x0=ones, horizon=float(horizon))
            for scheme in ("pade", "taylor"):
                m_star = find_min_steps(problem, scheme, order, eps, padding)
                err, bundle, _ = _solve_rel_error(problem, scheme, m_star, order, padding)
                samples[scheme].append(m_star)
                report.rows.append(SweepRow(scheme, float(horizon), m_star, order,
                                            padding, err, float("nan"), bundle.p_succ))
        for scheme in ("pade", "taylor"):
            arr = np.array(samples[scheme], dtype=float)
            means[scheme][horizon] = float(arr.mean())
            stds[scheme][horizon] = float(arr.std())
    report.aggregate = {"mean_m_star": means, "std_m_star": stds}
    report.metadata = {"seeds": list(seeds), "eps": eps, "order": order,
                       "wall_time_s": round(time.perf_counter() - t0, 3)}
    return report
