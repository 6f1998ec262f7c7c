"""Safety-filter projection: min ||u - kd||^2 subject to A u >= b.

The solver is a dual active-set method specialized to the identity Hessian.
It starts from the unconstrained minimizer u = kd and repeatedly installs the
most-violated row (lowest index on ties).  Installing a row moves the iterate
along the row normal's component orthogonal to the working set while updating
the multipliers; a blocking multiplier that would turn negative drops its row
first (dual ratio test, lowest index on ties).  Each working-set change is
re-anchored by an exact KKT solve of the equality-constrained subproblem.  A
violated row whose normal is a nonpositive combination of the working set's
normals makes the dual unbounded, which certifies infeasibility with Farkas
weights.  The dual objective increases strictly at every installation, so the
method terminates; all tie-breaking is index-based, so identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constraints import ConstraintRow

__all__ = [
    "OPTIMAL",
    "INFEASIBLE",
    "ITERATION_LIMIT",
    "QPProblem",
    "QPSolution",
    "KKTReport",
    "solve",
    "verify_kkt",
    "solve_bruteforce",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

# Pivot threshold for declaring a row normal dependent on the working set.
_DEP_TOL = 1e-12


@dataclass(frozen=True)
class QPProblem:
    """Desired control kd and the inequality rows a_k . u >= b_k."""

    kd: np.ndarray
    rows: tuple[ConstraintRow, ...]

    def __post_init__(self) -> None:
        kd = np.asarray(self.kd, dtype=float)
        object.__setattr__(self, "kd", kd)
        object.__setattr__(self, "rows", tuple(self.rows))
        m = kd.size
        for i, row in enumerate(self.rows):
            if np.asarray(row.a).shape != (m,):
                raise ValueError(f"row {i} has coefficient shape {np.asarray(row.a).shape}, "
                                 f"expected ({m},)")

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with one row per constraint; empty (0, m) stack when unconstrained."""
        m = self.kd.size
        if not self.rows:
            return np.zeros((0, m)), np.zeros(0)
        A = np.array([np.asarray(r.a, dtype=float) for r in self.rows])
        b = np.array([float(r.b) for r in self.rows])
        return A, b

    def to_dict(self) -> dict:
        return {
            "kd": self.kd.tolist(),
            "rows": [{"a": np.asarray(r.a).tolist(), "b": float(r.b),
                      "source_index": int(r.source_index)} for r in self.rows],
        }


@dataclass(frozen=True)
class QPSolution:
    """Solver verdict with duals, active set, and diagnostics.

    ``duals`` has one entry per problem row (zero off the active set).  On an
    infeasible verdict ``certificate`` holds nonnegative row weights w with
    w^T A = 0 and w^T b > 0.  ``min_slack`` is the smallest row slack at u, a
    conditioning diagnostic for near-degenerate feasible sets.
    """

    status: str
    u: np.ndarray
    duals: np.ndarray
    active_set: tuple[int, ...]
    iterations: int
    certificate: np.ndarray | None = None
    min_slack: float = float("inf")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "u": self.u.tolist(),
            "duals": self.duals.tolist(),
            "active_set": list(self.active_set),
            "iterations": self.iterations,
            "certificate": None if self.certificate is None else self.certificate.tolist(),
            "min_slack": self.min_slack,
        }


def _solve_eqp(A: np.ndarray, b: np.ndarray, kd: np.ndarray,
               work: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Projection onto {a_i . u = b_i, i in work} via the augmented KKT system.

    Stationarity 2(u - kd) = A_W^T mu together with A_W u = b_W.  The
    augmented solve (plus one refinement step) keeps the conditioning of A_W
    itself rather than its square, which matters for nearly parallel actives.
    """
    m = kd.size
    if not work:
        return kd.copy(), np.zeros(0)
    Aw = A[work]
    k = len(work)
    K = np.zeros((m + k, m + k))
    K[:m, :m] = 2.0 * np.eye(m)
    K[:m, m:] = -Aw.T
    K[m:, :m] = Aw
    rhs = np.concatenate([2.0 * kd, b[work]])
    try:
        sol = np.linalg.solve(K, rhs)
        sol = sol + np.linalg.solve(K, rhs - K @ sol)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:m], sol[m:]


def _projection_split(A: np.ndarray, work: list[int],
                      aj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose aj = A_W^T c + z with z orthogonal to the working-set normals.

    Uses an SVD-backed least-squares solve so the residual z is accurate to
    the conditioning of A_W, not its square; the dependence classification
    below relies on that.
    """
    if not work:
        return np.zeros(0), aj.copy()
    Aw = A[work]
    c = np.linalg.lstsq(Aw.T, aj, rcond=None)[0]
    return c, aj - Aw.T @ c


def _polish(A: np.ndarray, b: np.ndarray, work: list[int],
            u: np.ndarray) -> np.ndarray:
    """Refine u against the active equalities with extended-precision residuals.

    Mixed-precision iteration: the slack residual is formed in long double and
    the least-norm correction solved in float64.  This parks the active-row
    slacks at the float64 placement floor (about an ulp of u), so the
    complementarity products mu_k * slack_k stay tiny even when nearly
    parallel active rows make the multipliers huge.  The multipliers
    themselves come from the anchored KKT solve and are left untouched: the
    correction to u is orders of magnitude below their scale.
    """
    if not work:
        return u
    Aw = A[work]
    Aw_hi = Aw.astype(np.longdouble)
    b_hi = b[work].astype(np.longdouble)
    for _ in range(3):
        r = np.asarray(b_hi - Aw_hi @ u.astype(np.longdouble), dtype=float)
        if not np.any(r):
            break
        du = np.linalg.lstsq(Aw, r, rcond=None)[0]
        u = u + du
    return u


def _anchor(A: np.ndarray, b: np.ndarray, kd: np.ndarray, work: list[int],
            tol: float) -> tuple[np.ndarray, list[float]]:
    """Exact EQP solution for the working set, shedding negative multipliers.

    Mutates ``work``: rows whose multiplier comes out below -tol are removed
    (most negative first, lowest index on ties) and the subproblem re-solved,
    so the returned point is dual-feasible for what remains.
    """
    u, mu_arr = _solve_eqp(A, b, kd, work)
    mu = list(mu_arr)
    while work and min(mu) < -tol:
        work.pop(mu.index(min(mu)))
        u, mu_arr = _solve_eqp(A, b, kd, work)
        mu = list(mu_arr)
    return u, mu


def solve(problem: QPProblem, tol: float = 1e-9, max_iter: int = 200,
          warm_start: Sequence[int] = ()) -> QPSolution:
    """Solve the projection QP; statuses are optimal / infeasible / iteration_limit.

    ``warm_start`` seeds the working set with row indices (typically the
    previous simulation step's active set); out-of-range or dependent seeds
    are dropped, and the result never depends on the seed beyond round-off.
    ``max_iter`` bounds the number of working-set installations; hitting it is
    surfaced as its own status, never silently truncated.
    """
    kd = np.asarray(problem.kd, dtype=float)
    A, b = problem.stacked()
    if not (np.all(np.isfinite(kd)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("QP inputs must be finite")
    p = len(problem.rows)

    work: list[int] = []
    for i in sorted(set(int(j) for j in warm_start)):
        if 0 <= i < p and _is_independent(A, work, i):
            work.append(i)
    # A valid starting point needs dual-feasible multipliers; shed any rows
    # the projection does not actually push against.
    u, mu = _anchor(A, b, kd, work, tol)

    iterations = 0
    while iterations < max_iter:
        iterations += 1
        if p == 0:
            return QPSolution(OPTIMAL, u, np.zeros(0), (), iterations)
        slacks = A @ u - b
        j = int(np.argmin(slacks))
        min_slack = float(slacks[j])
        if min_slack >= -tol:
            u = _polish(A, b, work, u)
            duals = np.zeros(p)
            for w, m_ in zip(work, mu):
                duals[w] = m_
            min_slack = float(np.min(A @ u - b))
            return QPSolution(OPTIMAL, u, duals, tuple(work), iterations,
                              min_slack=min_slack)

        # Install row j, dropping blockers as the dual ratio test dictates.
        mu_j = 0.0
        aj = A[j]
        scale = max(1.0, float(np.max(np.abs(aj))))
        while True:
            c, z = _projection_split(A, work, aj)
            z_norm = float(np.max(np.abs(z)))
            if z_norm > _DEP_TOL * scale:
                sj = float(aj @ u - b[j])
                t1 = -sj / float(aj @ z)
                t2 = np.inf
                drop = -1
                for idx in range(len(work)):
                    if c[idx] > _DEP_TOL:
                        ratio = max(mu[idx], 0.0) / (2.0 * c[idx])
                        if ratio < t2:
                            t2, drop = ratio, idx
                t = min(t1, t2)
                u = u + t * z
                for idx in range(len(work)):
                    mu[idx] -= 2.0 * t * c[idx]
                mu_j += 2.0 * t
                if t1 <= t2:
                    pos = bisect.bisect_left(work, j)
                    work.insert(pos, j)
                    # Re-anchor on the exact equality-constrained KKT solution.
                    u, mu = _anchor(A, b, kd, work, tol)
                    break
                work.pop(drop)
                mu.pop(drop)
            else:
                c_scale = max(1.0, float(np.max(np.abs(c))) if c.size else 0.0)
                positive = [idx for idx in range(len(work)) if c[idx] > _DEP_TOL * c_scale]
                if not positive:
                    # Dual unbounded: a_j is a nonpositive combination of the
                    # active normals, so b_j can never be reached on their
                    # feasible side.  Farkas certificate: 1 on j, -c on W.
                    cert = np.zeros(p)
                    cert[j] = 1.0
                    for idx, w in enumerate(work):
                        cert[w] = max(-float(c[idx]), 0.0)
                    duals = np.zeros(p)
                    for w, m_ in zip(work, mu):
                        duals[w] = m_
                    return QPSolution(INFEASIBLE, u, duals, tuple(work), iterations,
                                      certificate=cert,
                                      min_slack=float(np.min(A @ u - b)))
                t2, drop = min((max(mu[idx], 0.0) / float(c[idx]), idx) for idx in positive)
                for idx in range(len(work)):
                    mu[idx] -= t2 * float(c[idx])
                mu_j += t2
                work.pop(drop)
                mu.pop(drop)

    duals = np.zeros(p)
    for w, m_ in zip(work, mu):
        duals[w] = m_
    slacks = A @ u - b if p else np.zeros(0)
    return QPSolution(ITERATION_LIMIT, u, duals, tuple(work), iterations,
                      min_slack=float(np.min(slacks)) if p else float("inf"))


def _is_independent(A: np.ndarray, work: list[int], j: int) -> bool:
    """True if row j's normal lies outside the span of the working set's normals."""
    aj = A[j]
    scale = max(1.0, float(np.max(np.abs(aj))))
    _, z = _projection_split(A, work, aj)
    return float(np.max(np.abs(z))) > _DEP_TOL * scale


@dataclass(frozen=True)
class KKTReport:
    """Residuals of the four optimality conditions at a claimed optimum."""

    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def verify_kkt(problem: QPProblem, solution: QPSolution) -> KKTReport:
    """Residuals: ||2(u - kd) - A^T mu||_inf, primal max(b - Au), min dual, max |mu * slack|."""
    if solution.status != OPTIMAL:
        raise ValueError(f"KKT verification requires an optimal solution, got "
                         f"{solution.status!r}")
    A, b = problem.stacked()
    u = np.asarray(solution.u, dtype=float)
    mu = np.asarray(solution.duals, dtype=float)
    stat = 2.0 * (u - problem.kd)
    if len(problem.rows):
        stat = stat - A.T @ mu
        slacks = A @ u - b
        primal = max(0.0, float(np.max(-slacks)))
        dual = max(0.0, float(np.max(-mu)))
        comp = float(np.max(np.abs(mu * slacks)))
    else:
        primal = dual = comp = 0.0
    return KKTReport(float(np.max(np.abs(stat))) if stat.size else 0.0,
                     primal, dual, comp)


_BRUTE_MAX_DIM = 3
_BRUTE_MAX_ROWS = 12
_BRUTE_FEAS_TOL = 1e-8


def solve_bruteforce(problem: QPProblem) -> QPSolution:
    """Oracle by exhaustive active-set enumeration; small problems only.

    Tries every independent row subset of size <= m, projects kd onto each
    equality set, and keeps the feasible candidate of least objective.  If the
    feasible set is nonempty its projection is attained on some such subset,
    so finding no feasible candidate certifies infeasibility.
    """
    kd = np.asarray(problem.kd, dtype=float)
    m = kd.size
    p = len(problem.rows)
    if m > _BRUTE_MAX_DIM or p > _BRUTE_MAX_ROWS:
        raise ValueError(f"brute-force oracle limited to m <= {_BRUTE_MAX_DIM} and "
                         f"{_BRUTE_MAX_ROWS} rows; got m={m}, rows={p}")
    A, b = problem.stacked()

    best: tuple[float, np.ndarray, tuple[int, ...], np.ndarray] | None = None
    for size in range(0, m + 1):
        for subset in itertools.combinations(range(p), size):
            S = list(subset)
            if S and np.linalg.matrix_rank(A[S], tol=1e-10) < size:
                continue
            u, mu = _solve_eqp(A, b, kd, S)
            if p and float(np.min(A @ u - b)) < -_BRUTE_FEAS_TOL:
                continue
            obj = float((u - kd) @ (u - kd))
            if best is None or obj < best[0] - 1e-15:
                best = (obj, u, subset, mu)
    if best is None:
        return QPSolution(INFEASIBLE, kd.copy(), np.zeros(p), (), 0)
    _, u, subset, mu = best
    duals = np.zeros(p)
    duals[list(subset)] = np.maximum(mu, 0.0)
    slacks = A @ u - b if p else np.zeros(0)
    active = tuple(i for i in subset if duals[i] > 0.0)
    return QPSolution(OPTIMAL, u, duals, active, 0,
                      min_slack=float(np.min(slacks)) if p else float("inf"))
