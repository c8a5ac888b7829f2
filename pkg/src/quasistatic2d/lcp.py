"""Dense linear complementarity problems: Lemke pivoting, certification, oracles.

An LCP(M, q) asks for z >= 0 with w = M z + q >= 0 and z . w = 0.  The solver
here is Lemke's complementary pivoting method with an all-ones covering vector
and a lexicographic ratio test.  Contact problems assembled elsewhere in this
package are structurally degenerate (each contact contributes a duplicated,
negated tangent row), so the anti-cycling rule is not optional.

Ray termination is reported as a first-class status: for the
perfect-velocity-control contact model it is the signature of an infeasible
grasp or jam command rather than a failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np


class LcpStatus(Enum):
    SOLVED = "solved"
    RAY_TERMINATION = "ray_termination"
    PIVOT_LIMIT = "pivot_limit"


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and limits for the pivoting solver.

    ``max_pivots=None`` resolves to ``50 * n`` at solve time.  ``lexicographic``
    selects the anti-cycling ratio test; the plain minimum-ratio test (ties
    broken by row index) is kept as a fallback for experiments.
    """

    eps_feas: float = 1e-9
    eps_comp: float = 1e-9
    eps_lin: float = 1e-9
    eps_pivot: float = 1e-12
    max_pivots: int | None = None
    lexicographic: bool = True

    def __post_init__(self):
        for name in ("eps_feas", "eps_comp", "eps_lin", "eps_pivot"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_pivots is not None and self.max_pivots < 1:
            raise ValueError("max_pivots must be positive")

    def pivot_budget(self, n: int) -> int:
        if self.max_pivots is None:
            return max(50 * n, 1)
        if self.max_pivots < n:
            raise ValueError(f"max_pivots={self.max_pivots} < problem size {n}")
        return self.max_pivots


class LcpProblem:
    """Immutable LCP instance: square matrix M, vector q.

    n = 0 is allowed (empty problem, trivially solved by the empty vector);
    contact assembly produces it for contact-free configurations.
    """

    __slots__ = ("M", "q", "n")

    def __init__(self, M, q):
        M = np.asarray(M, dtype=float)
        q = np.asarray(q, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"M must be square, got shape {M.shape}")
        if M.shape[0] != q.shape[0]:
            raise ValueError(f"dimension mismatch: M is {M.shape}, q has length {q.shape[0]}")
        if M.size and not np.all(np.isfinite(M)):
            raise ValueError("M contains non-finite entries")
        if q.size and not np.all(np.isfinite(q)):
            raise ValueError("q contains non-finite entries")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "n", q.shape[0])

    def __setattr__(self, *args):
        raise AttributeError("LcpProblem is immutable")

    def __repr__(self):
        return f"LcpProblem(n={self.n})"


@dataclass(frozen=True)
class Residuals:
    min_z: float
    min_w: float
    complementarity: float
    linear: float = 0.0


@dataclass(frozen=True)
class LcpSolution:
    z: np.ndarray
    w: np.ndarray
    status: LcpStatus
    pivots: int
    residuals: Residuals


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    residuals: Residuals


@dataclass(frozen=True)
class CopositivityReport:
    passed: bool
    witness: np.ndarray | None
    min_value: float
    trials: int


# -- column bookkeeping for the Lemke tableau --------------------------------
# columns 0..n-1 : w variables, n..2n-1 : z variables, 2n : covering variable,
# 2n+1 : right-hand side.


def _complement(var: int, n: int) -> int:
    return var + n if var < n else var - n


def _lex_smaller(a: np.ndarray, b: np.ndarray) -> bool:
    for x, y in zip(a, b):
        if x < y:
            return True
        if x > y:
            return False
    return False


def _initial_row(T: np.ndarray, n: int) -> int:
    """Row of the most negative q entry, lexicographic tie-break."""
    q = T[:, -1]
    qmin = q.min()
    candidates = np.where(q <= qmin + 1e-15 * (1.0 + abs(qmin)))[0]
    best = candidates[0]
    for i in candidates[1:]:
        if _lex_smaller(T[i, : n], T[best, : n]):
            best = i
    return int(best)


def _ratio_test(T: np.ndarray, col: int, basis: list[int], n: int,
                cfg: SolverConfig) -> int | None:
    """Blocking row for the entering column, or None on a secondary ray."""
    d = T[:, col]
    rows = np.where(d > cfg.eps_pivot)[0]
    if rows.size == 0:
        return None
    ratios = T[rows, -1] / d[rows]
    rmin = ratios.min()
    tol = cfg.eps_pivot * (1.0 + abs(rmin))
    tied = rows[ratios <= rmin + tol]
    if tied.size == 1:
        return int(tied[0])
    # Letting the covering variable leave terminates the run; take it whenever
    # it is a legitimate blocker.
    for i in tied:
        if basis[i] == 2 * n:
            return int(i)
    if not cfg.lexicographic:
        return int(tied[0])
    best = tied[0]
    for i in tied[1:]:
        if _lex_smaller(T[i, : n] / d[i], T[best, : n] / d[best]):
            best = i
    return int(best)


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    piv_row = T[row] / T[row, col]
    T -= np.outer(T[:, col], piv_row)
    T[row] = piv_row
    T[:, col] = 0.0
    T[row, col] = 1.0


def _extract_z(T: np.ndarray, basis: list[int], n: int) -> np.ndarray:
    z = np.zeros(n)
    for i, var in enumerate(basis):
        if n <= var < 2 * n:
            z[var - n] = T[i, -1]
    return z


def _residuals(problem: LcpProblem, z: np.ndarray) -> tuple[np.ndarray, Residuals]:
    w = problem.M @ z + problem.q
    if problem.n == 0:
        return w, Residuals(0.0, 0.0, 0.0)
    return w, Residuals(float(z.min()), float(w.min()), float(z @ w))


def _refine_on_support(problem: LcpProblem, z: np.ndarray,
                       basis: list[int]) -> np.ndarray:
    """Re-solve M[S,S] z_S = -q[S] on the final basis support.

    Pivoting accumulates rounding error across the tableau; the terminal basis
    is exact combinatorial information, so recomputing the basic values from
    the original data tightens the residuals essentially to machine precision.
    """
    n = problem.n
    support = sorted(var - n for var in basis if n <= var < 2 * n)
    if not support:
        return np.zeros(n)
    S = np.array(support)
    try:
        z_s = np.linalg.solve(problem.M[np.ix_(S, S)], -problem.q[S])
    except np.linalg.LinAlgError:
        return z
    refined = np.zeros(n)
    refined[S] = z_s
    return refined


def solve_lemke(problem: LcpProblem, config: SolverConfig | None = None) -> LcpSolution:
    """Solve LCP(M, q) by Lemke's method with an all-ones covering vector.

    Returns status SOLVED with certified residuals, RAY_TERMINATION when the
    run ends on a secondary ray (infeasibility signal for the copositive
    problems this package assembles), or PIVOT_LIMIT if the pivot budget is
    exhausted.
    """
    cfg = config or SolverConfig()
    n = problem.n
    if n == 0:
        return LcpSolution(np.zeros(0), np.zeros(0), LcpStatus.SOLVED, 0,
                           Residuals(0.0, 0.0, 0.0))
    if np.all(problem.q >= 0.0):
        w = problem.q.copy()
        return LcpSolution(np.zeros(n), w, LcpStatus.SOLVED, 0,
                           Residuals(0.0, float(w.min()), 0.0))

    budget = cfg.pivot_budget(n)
    T = np.empty((n, 2 * n + 2))
    T[:, :n] = np.eye(n)
    T[:, n:2 * n] = -problem.M
    T[:, 2 * n] = -1.0
    T[:, -1] = problem.q
    basis = list(range(n))

    row = _initial_row(T, n)
    leaving = basis[row]
    _pivot(T, row, 2 * n)
    basis[row] = 2 * n
    entering = _complement(leaving, n)
    pivots = 1

    while True:
        row = _ratio_test(T, entering, basis, n, cfg)
        if row is None:
            # Secondary ray.  The covering variable can sit at a numerically
            # zero value (q entries at roundoff scale), in which case the
            # extracted point already certifies as a solution; report it as
            # one rather than as infeasibility.
            return _extract_terminal(problem, T, basis, pivots, cfg,
                                     LcpStatus.RAY_TERMINATION)
        leaving = basis[row]
        _pivot(T, row, entering)
        basis[row] = entering
        pivots += 1
        if leaving == 2 * n:
            z = _extract_z(T, basis, n)
            refined = _refine_on_support(problem, z, basis)
            w_r, res_r = _residuals(problem, refined)
            w_t, res_t = _residuals(problem, z)
            bad_r = max(-res_r.min_z, -res_r.min_w, abs(res_r.complementarity))
            bad_t = max(-res_t.min_z, -res_t.min_w, abs(res_t.complementarity))
            if bad_r <= bad_t:
                return LcpSolution(refined, w_r, LcpStatus.SOLVED, pivots, res_r)
            return LcpSolution(z, w_t, LcpStatus.SOLVED, pivots, res_t)
        if pivots >= budget:
            return _extract_terminal(problem, T, basis, pivots, cfg,
                                     LcpStatus.PIVOT_LIMIT)
        entering = _complement(leaving, n)


def _extract_terminal(problem: LcpProblem, T: np.ndarray, basis: list[int],
                      pivots: int, cfg: SolverConfig,
                      fallback: LcpStatus) -> LcpSolution:
    """Exit without the covering variable leaving: solved if z certifies."""
    z = _extract_z(T, basis, problem.n)
    w, res = _residuals(problem, z)
    if (res.min_z >= -cfg.eps_feas and res.min_w >= -cfg.eps_feas
            and abs(res.complementarity) <= cfg.eps_comp):
        return LcpSolution(z, w, LcpStatus.SOLVED, pivots, res)
    return LcpSolution(z, w, fallback, pivots, res)


def verify_solution(problem: LcpProblem, z, config: SolverConfig | None = None) -> ValidityReport:
    """Check z >= -eps, w = Mz + q >= -eps, |z.w| <= eps_comp."""
    cfg = config or SolverConfig()
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != problem.n:
        raise ValueError(f"z has length {z.shape[0]}, expected {problem.n}")
    _, res = _residuals(problem, z)
    valid = (res.min_z >= -cfg.eps_feas
             and res.min_w >= -cfg.eps_feas
             and abs(res.complementarity) <= cfg.eps_comp)
    return ValidityReport(valid, res)


def brute_force_solve(problem: LcpProblem, cap: int = 12,
                      tol: float = 1e-9) -> list[LcpSolution]:
    """Enumerate all 2^n complementary supports; keep nonnegative solutions.

    Independent oracle for small instances: for each support S the basic
    values solve M[S,S] z_S = -q[S] (least squares on singular subsystems,
    kept only when consistent).  An empty list means no complementary basic
    solution exists.
    """
    n = problem.n
    if n > cap:
        raise ValueError(f"problem size {n} exceeds brute-force cap {cap}")
    M, q = problem.M, problem.q
    solutions: list[np.ndarray] = []
    for mask in range(1 << n):
        S = [j for j in range(n) if mask >> j & 1]
        z = np.zeros(n)
        if S:
            idx = np.array(S)
            Mss = M[np.ix_(idx, idx)]
            try:
                z_s = np.linalg.solve(Mss, -q[idx])
            except np.linalg.LinAlgError:
                z_s, *_ = np.linalg.lstsq(Mss, -q[idx], rcond=None)
                if np.max(np.abs(Mss @ z_s + q[idx])) > tol:
                    continue
            z[idx] = z_s
        w = M @ z + q
        if z.min() < -tol or w.min() < -tol:
            continue
        if abs(z @ w) > tol * (1.0 + abs(z @ z)):
            continue
        if any(np.max(np.abs(z - prev)) <= tol * (1.0 + np.max(np.abs(prev)))
               for prev in solutions):
            continue
        solutions.append(z)
    solutions.sort(key=lambda v: tuple(v))
    out = []
    for z in solutions:
        w, res = _residuals(problem, z)
        out.append(LcpSolution(z, w, LcpStatus.SOLVED, 0, res))
    return out


def copositivity_certificate(M, trials: int = 1000, seed: int = 0,
                             tol: float | None = None) -> CopositivityReport:
    """Randomized check of x' M x >= 0 over the nonnegative orthant.

    Samples the unit simplex (plus its vertices) and reports any violating
    witness.  A pass is evidence, not proof; a witness is a proof of
    non-copositivity.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = M.shape[0]
    if tol is None:
        tol = 1e-10 * (1.0 + float(np.max(np.abs(M))) if M.size else 1.0)
    rng = np.random.default_rng(seed)
    min_value = np.inf
    witness = None
    for i in range(n):
        x = np.zeros(n)
        x[i] = 1.0
        v = float(x @ M @ x)
        if v < min_value:
            min_value, witness_cand = v, x
            if v < -tol:
                witness = witness_cand
    if witness is None:
        for _ in range(trials):
            x = rng.exponential(1.0, n)
            x /= x.sum()
            v = float(x @ M @ x)
            if v < min_value:
                min_value = v
                if v < -tol:
                    witness = x
                    break
    return CopositivityReport(witness is None, witness, min_value, trials)


def dump_problem_json(path, problem: LcpProblem, z=None, w=None, extra=None) -> None:
    """Debug dump of (M, q, z, w) for failed verifications."""
    payload = {
        "M": problem.M.tolist(),
        "q": problem.q.tolist(),
        "n": problem.n,
    }
    if z is not None:
        payload["z"] = np.asarray(z, dtype=float).tolist()
    if w is not None:
        payload["w"] = np.asarray(w, dtype=float).tolist()
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def problem_dump_dict(problem: LcpProblem, solution: LcpSolution | None = None,
                      extra: dict | None = None) -> dict:
    """In-memory form of the debug dump, for attaching to exceptions."""
    payload = {"M": problem.M.tolist(), "q": problem.q.tolist(), "n": problem.n}
    if solution is not None:
        payload["z"] = solution.z.tolist()
        payload["w"] = solution.w.tolist()
        payload["status"] = solution.status.value
        payload["pivots"] = solution.pivots
    if extra:
        payload.update(extra)
    return payload
