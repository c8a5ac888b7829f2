"""Instantaneous quasi-static contact model.

Maps a commanded manipulator velocity to object and manipulator motion by
assembling an LCP over the variables z = [lam_n (k); lam_t (2k); sigma (k)]:

    M = [[N_O A N_O' + N_M G N_M',  N_O A T_O' + N_M G T_M',  0 ],
         [T_O A N_O' + T_M G N_M',  T_O A T_O' + T_M G T_M',  E ],
         [mu,                       -E',                      0 ]]
    q = [N_M v*; T_M v*; 0]

where A is the force-motion matrix of the support-surface friction model and
G = c B is the manipulator gain matrix.  The normal rows complement the gap
rates, the tangential rows the (slack-shifted) slide rates, and the last
block the friction-cone margins.  This layout satisfies the quadratic-form
identity  z' M z = F_O' A F_O + F_M' G F_M + sigma' mu lam_n  and
z' q = F_M' v*, which makes M copositive and guarantees solvability whenever
G is positive definite; with G = 0 (perfect velocity control) grasp and jam
commands legitimately have no solution and surface as ray termination.

Forces are stored k-scaled: the LCP variable is the product of the contact
force and the force-motion scalar, which is all that object velocity
recovery needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PivotLimitError, TheoremViolationError
from .geometry import ContactSet, body_twist_transform
from .lcp import (
    LcpProblem,
    LcpSolution,
    LcpStatus,
    SolverConfig,
    problem_dump_dict,
    solve_lemke,
)


# -- limit surface -------------------------------------------------------------

class EllipsoidLimitSurface:
    """Quadratic force-motion model: level sets of F' A_tilde F, A_tilde > 0.

    A_tilde lives over body-axis wrenches; the world force-motion matrix is
    its conjugation by the twist transform.
    """

    __slots__ = ("A_tilde",)

    def __init__(self, A_tilde):
        A = np.asarray(A_tilde, dtype=float)
        if A.shape != (3, 3):
            raise ValueError("A_tilde must be 3x3")
        if np.max(np.abs(A - A.T)) > 1e-9 * (1.0 + np.max(np.abs(A))):
            raise ValueError("A_tilde must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0.0:
            raise ValueError("A_tilde must be positive definite")
        object.__setattr__(self, "A_tilde", 0.5 * (A + A.T))
        self.A_tilde.setflags(write=False)

    def __setattr__(self, *args):
        raise AttributeError("EllipsoidLimitSurface is immutable")

    def __repr__(self):
        return f"EllipsoidLimitSurface({self.A_tilde.tolist()})"


@dataclass(frozen=True)
class GeneralLimitSurface:
    """Non-quadratic strictly convex force-motion model.

    ``value``, ``gradient``, ``hessian`` evaluate the scalar map and its
    derivatives over body-axis wrenches.  Solved by re-linearizing: each pass
    uses the ellipsoid whose quadratic form is half the Hessian at the
    previous pass's wrench, which reproduces the quadratic case exactly.
    """

    value: callable
    gradient: callable
    hessian: callable

    def validate(self, probes=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.3, -0.2, 0.9))):
        if abs(self.value(np.zeros(3))) > 1e-12:
            raise ValueError("limit-surface map must vanish at zero wrench")
        for p in probes:
            H = np.asarray(self.hessian(np.asarray(p, dtype=float)), dtype=float)
            if np.linalg.eigvalsh(0.5 * (H + H.T)).min() <= 0.0:
                raise ValueError(f"limit-surface Hessian not PD at probe {p}")

    def linearized(self, wrench) -> EllipsoidLimitSurface:
        # Half the Hessian, so a quadratic map F'QF linearizes to Q itself.
        H = np.asarray(self.hessian(np.asarray(wrench, dtype=float)), dtype=float)
        return EllipsoidLimitSurface(0.25 * (H + H.T))


LimitSurface = EllipsoidLimitSurface | GeneralLimitSurface


def force_motion_matrix(ls: LimitSurface, theta: float,
                        linearization_wrench=None) -> np.ndarray:
    """World-frame force-motion matrix A(theta), symmetric positive definite."""
    if isinstance(ls, EllipsoidLimitSurface):
        A_tilde = ls.A_tilde
    else:
        if linearization_wrench is None:
            raise ValueError("general limit surface needs a linearization wrench")
        A_tilde = ls.linearized(linearization_wrench).A_tilde
    T = body_twist_transform(theta)
    A = T @ A_tilde @ T.T
    return 0.5 * (A + A.T)


# -- feedback model ------------------------------------------------------------

class FeedbackModel:
    """Finite-feedback manipulator model: v_M = v* + c B F_M.

    B is the relative-gain matrix (symmetric positive semidefinite; existence
    of solutions is guaranteed only when c > 0 and B is definite), c >= 0
    the overall scaling.  c = 0 recovers perfect velocity control.  B = 0 is
    allowed purely so the reduction to the perfect-control time stepper can
    be exercised.
    """

    __slots__ = ("B", "c", "_min_eig")

    def __init__(self, B, c):
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError("B must be square")
        if B.size and np.max(np.abs(B - B.T)) > 1e-9 * (1.0 + np.max(np.abs(B))):
            raise ValueError("B must be symmetric")
        min_eig = float(np.linalg.eigvalsh(B).min()) if B.size else 0.0
        if min_eig < -1e-12 * (1.0 + np.max(np.abs(B), initial=0.0)):
            raise ValueError("B must be positive semidefinite")
        if not (c >= 0.0 and math.isfinite(c)):
            raise ValueError("c must be a nonnegative finite scalar")
        object.__setattr__(self, "B", 0.5 * (B + B.T))
        object.__setattr__(self, "c", float(c))
        object.__setattr__(self, "_min_eig", max(min_eig, 0.0))
        self.B.setflags(write=False)

    def __setattr__(self, *args):
        raise AttributeError("FeedbackModel is immutable")

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def gain(self) -> np.ndarray:
        """The product c B actually entering the LCP."""
        return self.c * self.B

    @property
    def min_eig_B(self) -> float:
        return self._min_eig

    @property
    def guarantees_existence(self) -> bool:
        return self.c > 0.0 and self._min_eig > 0.0

    def with_c(self, c: float) -> "FeedbackModel":
        return FeedbackModel(self.B, c)

    @staticmethod
    def identity(m: int, c: float) -> "FeedbackModel":
        return FeedbackModel(np.eye(m), c)

    def __repr__(self):
        return f"FeedbackModel(m={self.m}, c={self.c})"


# -- LCP assembly --------------------------------------------------------------

@dataclass(frozen=True)
class VelocityLcp:
    """Assembled instantaneous (or one-step impulse) LCP with its context."""

    problem: LcpProblem
    contacts: ContactSet
    A: np.ndarray
    feedback: FeedbackModel
    command: np.ndarray

    @property
    def k(self) -> int:
        return self.contacts.k

    def blocks(self, z: np.ndarray):
        k = self.k
        return z[:k], z[k:3 * k], z[3 * k:]

    def decomposition_gap(self, z) -> float:
        """|z'Mz - (F_O'AF_O + F_M'GF_M + sigma'mu lam_n)|, zero in exact arithmetic."""
        z = np.asarray(z, dtype=float)
        lam_n, lam_t, sigma = self.blocks(z)
        lam = np.concatenate([lam_n, lam_t])
        F_o = self.contacts.object_jacobian().T @ lam
        F_m = self.contacts.manipulator_jacobian().T @ lam
        G = self.feedback.gain
        quad = float(z @ self.problem.M @ z)
        decomposed = float(F_o @ self.A @ F_o) + float(F_m @ G @ F_m) \
            + float(sigma @ self.contacts.mu_diag @ lam_n)
        return abs(quad - decomposed)


def assemble_velocity_lcp(contacts: ContactSet, A, fb: FeedbackModel,
                          v_star) -> VelocityLcp:
    """Assemble the instantaneous LCP; k = 0 yields an empty problem."""
    v_star = np.asarray(v_star, dtype=float).reshape(-1)
    if v_star.shape[0] != contacts.m:
        raise ValueError(f"command has length {v_star.shape[0]}, expected {contacts.m}")
    if fb.m != contacts.m:
        raise ValueError(f"feedback model has dimension {fb.m}, expected {contacts.m}")
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ValueError("force-motion matrix must be 3x3")
    k = contacts.k
    if k == 0:
        problem = LcpProblem(np.zeros((0, 0)), np.zeros(0))
        empty = ContactSet(contacts=[], m=contacts.m,
                           N_obj=np.zeros((0, 3)), N_manip=np.zeros((0, contacts.m)),
                           T_obj=np.zeros((0, 3)), T_manip=np.zeros((0, contacts.m)),
                           E=np.zeros((0, 0)), mu_diag=np.zeros((0, 0)))
        return VelocityLcp(problem, contacts if contacts.N_obj is not None else empty,
                           A, fb, v_star)
    if contacts.N_obj is None:
        raise ValueError("contacts lack Jacobians; call contact_jacobians first")

    No, Nm = contacts.N_obj, contacts.N_manip
    To, Tm = contacts.T_obj, contacts.T_manip
    E, mu = contacts.E, contacts.mu_diag
    G = fb.gain

    n = 4 * k
    M = np.zeros((n, n))
    M[:k, :k] = No @ A @ No.T + Nm @ G @ Nm.T
    M[:k, k:3 * k] = No @ A @ To.T + Nm @ G @ Tm.T
    M[k:3 * k, :k] = To @ A @ No.T + Tm @ G @ Nm.T
    M[k:3 * k, k:3 * k] = To @ A @ To.T + Tm @ G @ Tm.T
    M[k:3 * k, 3 * k:] = E
    M[3 * k:, :k] = mu
    M[3 * k:, k:3 * k] = -E.T

    q = np.concatenate([Nm @ v_star, Tm @ v_star, np.zeros(k)])
    return VelocityLcp(LcpProblem(M, q), contacts, A, fb, v_star)


# -- solving -------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSolution:
    """Recovered velocities and k-scaled forces for one solve.

    ``feasible`` is False only for the perfect-velocity-control model on
    grasp/jam commands (ray termination with a singular gain matrix).
    """

    lcp: LcpSolution | None
    lam_n: np.ndarray
    lam_t: np.ndarray
    sigma: np.ndarray
    F_obj: np.ndarray
    F_manip: np.ndarray
    v_obj: np.ndarray
    v_manip: np.ndarray
    feasible: bool

    @property
    def lam(self) -> np.ndarray:
        return np.concatenate([self.lam_n, self.lam_t])


def solve_instantaneous(vlcp: VelocityLcp,
                        config: SolverConfig | None = None) -> ModelSolution:
    """Solve the assembled LCP and recover motion and forces.

    Ray termination with a definite gain matrix contradicts the existence
    guarantee and is raised as TheoremViolationError with a problem dump.
    """
    fb, contacts, v_star = vlcp.feedback, vlcp.contacts, vlcp.command
    k = vlcp.k
    if k == 0:
        return ModelSolution(None, np.zeros(0), np.zeros(0), np.zeros(0),
                             np.zeros(3), np.zeros(contacts.m), np.zeros(3),
                             v_star.copy(), True)
    sol = solve_lemke(vlcp.problem, config)
    if sol.status is LcpStatus.PIVOT_LIMIT:
        raise PivotLimitError(
            f"pivot limit on assembled contact LCP (n={vlcp.problem.n})",
            dump=problem_dump_dict(vlcp.problem, sol))
    if sol.status is LcpStatus.RAY_TERMINATION:
        if fb.guarantees_existence:
            raise TheoremViolationError(
                "ray termination despite positive-definite gain matrix",
                dump=problem_dump_dict(vlcp.problem, sol, extra={
                    "c": fb.c, "B": fb.B.tolist(), "command": v_star.tolist()}))
        return ModelSolution(sol, np.zeros(k), np.zeros(2 * k), np.zeros(k),
                             np.zeros(3), np.zeros(contacts.m), np.zeros(3),
                             v_star.copy(), False)
    lam_n, lam_t, sigma = vlcp.blocks(sol.z)
    lam = np.concatenate([lam_n, lam_t])
    F_obj = contacts.object_jacobian().T @ lam
    F_manip = contacts.manipulator_jacobian().T @ lam
    v_obj = vlcp.A @ F_obj
    v_manip = v_star + fb.gain @ F_manip
    return ModelSolution(sol, lam_n, lam_t, sigma, F_obj, F_manip, v_obj,
                         v_manip, True)


# -- theorem-flavored numeric checks -------------------------------------------

@dataclass(frozen=True)
class ForceBoundReport:
    holds: bool
    lhs: float
    rhs: float


def check_force_bound(sol: ModelSolution, fb: FeedbackModel, v_star,
                      tol: float = 1e-8) -> ForceBoundReport:
    """Manipulator-force bound: c ||F_M|| <= ||v*|| / lambda_min(B)."""
    v_star = np.asarray(v_star, dtype=float)
    lhs = fb.c * float(np.linalg.norm(sol.F_manip))
    lam_min = fb.min_eig_B
    rhs = math.inf if lam_min <= 0.0 else float(np.linalg.norm(v_star)) / lam_min
    return ForceBoundReport(lhs <= rhs + tol, lhs, rhs)


def internal_force_residual(contacts: ContactSet, lam_scaled) -> float:
    """Distance of a (scaled) contact force from the internal-force set.

    Zero means: nonnegative, zero net object wrench, inside all friction
    cones.  Grasp/jam forces scaled by c approach this set as c shrinks.
    """
    lam = np.asarray(lam_scaled, dtype=float).reshape(-1)
    k = contacts.k
    if lam.shape[0] != 3 * k:
        raise ValueError(f"lam has length {lam.shape[0]}, expected {3 * k}")
    if k == 0:
        return 0.0
    wrench = contacts.object_jacobian().T @ lam
    lam_n, lam_t = lam[:k], lam[k:]
    cone = contacts.mu_diag @ lam_n - contacts.E.T @ lam_t
    return max(float(np.max(np.abs(wrench))),
               max(0.0, -float(cone.min())),
               max(0.0, -float(lam.min())))


@dataclass(frozen=True)
class FixedPointResult:
    solution: ModelSolution
    iterations: int
    converged: bool


def nonellipsoid_fixed_point(contacts: ContactSet, ls: GeneralLimitSurface,
                             fb: FeedbackModel, v_star, theta: float,
                             max_iters: int = 50, tol: float = 1e-10,
                             config: SolverConfig | None = None,
                             initial_wrench=(1.0, 0.0, 0.0),
                             relaxation: float = 0.5) -> FixedPointResult:
    """Relinearize a general limit surface to a fixed point of the wrench.

    Pass j uses the ellipsoid at (a relaxed average of) the wrench solved in
    pass j-1; stops when the solved object wrench settles.  The relaxation
    damps the oscillation the undamped update exhibits when its slope at the
    fixed point falls below -1 (already the case for a quartic map under a
    head-on push); fixed points themselves are unaffected.  max_iters = 0
    returns the initial linearization's solution flagged unconverged.
    """
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    T = body_twist_transform(theta)
    wrench = T.T @ np.asarray(initial_wrench, dtype=float)
    A = force_motion_matrix(ls, theta, linearization_wrench=wrench)
    sol = solve_instantaneous(assemble_velocity_lcp(contacts, A, fb, v_star), config)
    prev_F = sol.F_obj
    for it in range(1, max_iters + 1):
        wrench = (1.0 - relaxation) * wrench + relaxation * (T.T @ prev_F)
        A = force_motion_matrix(ls, theta, linearization_wrench=wrench)
        sol = solve_instantaneous(assemble_velocity_lcp(contacts, A, fb, v_star), config)
        if float(np.linalg.norm(sol.F_obj - prev_F)) <= tol:
            return FixedPointResult(sol, it, True)
        prev_F = sol.F_obj
    return FixedPointResult(sol, max_iters, False)
