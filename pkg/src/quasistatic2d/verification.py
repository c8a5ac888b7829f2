"""Randomized property suites: solver oracle equivalence and the model's
existence, boundedness, internal-force, and convergence guarantees.

Every suite is a pure function of (trials, seed) so reports are reproducible
byte-for-byte; wall-clock timing is deliberately left out of the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ConvexPolygon,
    Disk,
    Finger,
    Manipulator,
    Point,
    Pose2,
    contact_candidates,
    contact_jacobians,
)
from .lcp import (
    LcpProblem,
    LcpStatus,
    SolverConfig,
    brute_force_solve,
    solve_lemke,
    verify_solution,
)
from .model import (
    FeedbackModel,
    assemble_velocity_lcp,
    check_force_bound,
    internal_force_residual,
    solve_instantaneous,
)
from .scenes import builtin_scene
from .stepping import TimeStepConfig, simulate


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    counterexample: dict | None = None


@dataclass
class SuiteReport:
    suite: str
    seed: int
    trials: int
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "trials": self.trials,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "details": c.details,
                 "counterexample": c.counterexample}
                for c in self.checks
            ],
        }


# -- random problem generators --------------------------------------------------

def random_lemke_processable(rng, n=None) -> LcpProblem:
    """Random LCP whose matrix class guarantees Lemke terminates correctly.

    Mixes symmetric PSD (copositive-plus), strictly positive (strictly
    copositive), and diagonally dominant (P-matrix) instances; for all three,
    Lemke cannot ray-terminate on a solvable problem.
    """
    if n is None:
        n = int(rng.integers(1, 9))
    kind = rng.choice(["psd", "positive", "diag_dominant"])
    if kind == "psd":
        R = rng.normal(size=(n, n))
        M = R @ R.T
    elif kind == "positive":
        M = np.abs(rng.normal(size=(n, n))) + 0.1
    else:
        M = rng.normal(size=(n, n))
        M += np.diag(np.sum(np.abs(M), axis=1) + 0.5)
    return LcpProblem(M, rng.normal(size=n))


def random_spd(rng, n: int, floor: float = 0.2) -> np.ndarray:
    R = rng.normal(size=(n, n))
    return R @ R.T / n + floor * np.eye(n)


def _boundary_point(rng, shape, pose: Pose2):
    """Random boundary point and outward unit normal, away from vertices."""
    if isinstance(shape, Disk):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        normal = np.array([math.cos(ang), math.sin(ang)])
        return pose.xy + shape.radius * normal, normal
    verts = shape.world_vertices(pose)
    i = int(rng.integers(0, verts.shape[0]))
    a, b = verts[i], verts[(i + 1) % verts.shape[0]]
    t = rng.uniform(0.15, 0.85)
    point = a + t * (b - a)
    edge = b - a
    normal = np.array([edge[1], -edge[0]])
    return point, normal / np.linalg.norm(normal)


@dataclass
class RandomScenePieces:
    shape: object
    pose: Pose2
    manipulator: Manipulator
    mu: list
    contacts: object
    A: np.ndarray


def random_contact_scene(rng) -> RandomScenePieces:
    """Random object with 1-3 touching point fingers, Jacobians built."""
    if rng.random() < 0.5:
        shape = Disk(rng.uniform(0.3, 2.0))
    else:
        k = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, k))
        while np.min(np.diff(angles, append=angles[0] + 2 * math.pi)) < 0.3:
            angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, k))
        radius = rng.uniform(0.4, 1.5)
        shape = ConvexPolygon(np.column_stack([np.cos(angles), np.sin(angles)]) * radius)
    pose = Pose2(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-math.pi, math.pi))

    n_fingers = int(rng.integers(1, 4))
    fingers = []
    for _ in range(n_fingers):
        point, outward = _boundary_point(rng, shape, pose)
        gap = 0.0 if rng.random() < 0.7 else rng.uniform(0.0, 1e-3)
        p = point + gap * outward
        fingers.append(Finger(Point(), Pose2(float(p[0]), float(p[1]))))
    manipulator = Manipulator(fingers)
    mu = list(rng.uniform(0.05, 2.0, n_fingers))
    contacts = contact_candidates(shape, pose, manipulator,
                                  manipulator.initial_config(), [], mu, [],
                                  2e-3)
    contacts = contact_jacobians(contacts, pose, manipulator,
                                 manipulator.initial_config())
    return RandomScenePieces(shape, pose, manipulator, mu, contacts,
                             random_spd(rng, 3))


# -- lcp suite -------------------------------------------------------------------

def run_lcp_suite(trials: int = 500, seed: int = 0,
                  config: SolverConfig | None = None) -> SuiteReport:
    rng = np.random.default_rng(seed)
    cfg = config or SolverConfig()
    checks = []

    solvable = 0
    failures = 0
    counterexample = None
    attempts = 0
    while solvable < trials and attempts < 20 * trials:
        attempts += 1
        problem = random_lemke_processable(rng)
        if not brute_force_solve(problem):
            continue
        solvable += 1
        sol = solve_lemke(problem, cfg)
        ok = (sol.status is LcpStatus.SOLVED
              and verify_solution(problem, sol.z, cfg).valid)
        if not ok and counterexample is None:
            failures += 1
            counterexample = {"M": problem.M.tolist(), "q": problem.q.tolist(),
                              "status": sol.status.value}
    checks.append(CheckResult(
        "oracle_equivalence", failures == 0,
        {"solvable_instances": solvable, "failures": failures},
        counterexample))

    problem = random_lemke_processable(rng, n=7)
    a, b = solve_lemke(problem, cfg), solve_lemke(problem, cfg)
    checks.append(CheckResult(
        "determinism",
        a.z.tobytes() == b.z.tobytes() and a.pivots == b.pivots,
        {"pivots": a.pivots}))

    ray = solve_lemke(LcpProblem([[0.0]], [-1.0]), cfg)
    checks.append(CheckResult(
        "infeasible_ray_detected", ray.status is LcpStatus.RAY_TERMINATION, {}))

    return SuiteReport("lcp", seed, trials, checks)


# -- model suite -----------------------------------------------------------------

def run_model_suite(trials: int = 1000, seed: int = 0,
                    config: SolverConfig | None = None) -> SuiteReport:
    rng = np.random.default_rng(seed)
    cfg = config or SolverConfig()
    checks = []

    existence_failures = 0
    bound_failures = 0
    decomposition_failures = 0
    alignment_failures = 0
    sliding_failures = 0
    worst_decomposition = 0.0
    counterexamples = {}
    for _ in range(trials):
        pieces = random_contact_scene(rng)
        contacts, A = pieces.contacts, pieces.A
        m = pieces.manipulator.m
        fb = FeedbackModel(random_spd(rng, m),
                           10.0 ** rng.uniform(-3, 0))
        v_star = rng.uniform(-1.0, 1.0, m)
        vlcp = assemble_velocity_lcp(contacts, A, fb, v_star)

        z_probe = np.abs(rng.normal(size=vlcp.problem.n))
        gap = vlcp.decomposition_gap(z_probe)
        scale = 1e-10 * (1.0 + float(z_probe @ z_probe)) * (1.0 + float(np.abs(vlcp.problem.M).max()))
        worst_decomposition = max(worst_decomposition, gap / scale if scale else 0.0)
        if gap > scale:
            decomposition_failures += 1
            counterexamples.setdefault("decomposition", {"gap": gap})

        try:
            sol = solve_instantaneous(vlcp, cfg)
        except Exception as exc:  # ray termination or pivot limit
            existence_failures += 1
            counterexamples.setdefault("existence", {
                "error": str(exc), "k": contacts.k, "c": fb.c})
            continue
        if not sol.feasible:
            existence_failures += 1
            continue
        report = check_force_bound(sol, fb, v_star)
        if not report.holds:
            bound_failures += 1
            counterexamples.setdefault("force_bound", {
                "lhs": report.lhs, "rhs": report.rhs})
        if np.linalg.norm(sol.F_obj) > 1e-9:
            v_pred = A @ sol.F_obj
            cos = float(sol.v_obj @ v_pred) / (
                np.linalg.norm(sol.v_obj) * np.linalg.norm(v_pred) + 1e-300)
            if cos < 1.0 - 1e-9:
                alignment_failures += 1
        if contacts.k and sol.sigma.max(initial=0.0) > 1e-9:
            cone = contacts.mu_diag @ sol.lam_n - contacts.E.T @ sol.lam_t
            slid = sol.sigma > 1e-9
            if np.any(cone[slid] > 1e-7 * (1.0 + np.abs(sol.lam_n).max())):
                sliding_failures += 1

    checks.append(CheckResult("existence_theorem", existence_failures == 0,
                              {"failures": existence_failures},
                              counterexamples.get("existence")))
    checks.append(CheckResult("force_bound_theorem", bound_failures == 0,
                              {"failures": bound_failures},
                              counterexamples.get("force_bound")))
    checks.append(CheckResult("copositivity_decomposition",
                              decomposition_failures == 0,
                              {"worst_normalized_gap": worst_decomposition},
                              counterexamples.get("decomposition")))
    checks.append(CheckResult("dissipation_alignment", alignment_failures == 0,
                              {"failures": alignment_failures}))
    checks.append(CheckResult("sliding_cone_tightness", sliding_failures == 0,
                              {"failures": sliding_failures}))

    # internal-force limit on the pinch scene
    scene = builtin_scene("four_finger_pinch")
    contacts = contact_candidates(scene.object_shape, scene.object_pose,
                                  scene.manipulator,
                                  scene.manipulator.initial_config(), [],
                                  scene.mu_fingers, [], 1e-9)
    contacts = contact_jacobians(contacts, scene.object_pose, scene.manipulator,
                                 scene.manipulator.initial_config())
    v = scene.commands.value_at(0.0)
    residuals = []
    for c in (1.0, 0.1, 0.01, 0.001):
        fb = scene.feedback.with_c(c)
        sol = solve_instantaneous(assemble_velocity_lcp(
            contacts, np.eye(3), fb, v), cfg)
        residuals.append(internal_force_residual(contacts, c * sol.lam))
    monotone = all(b <= a + 1e-9 for a, b in zip(residuals, residuals[1:]))
    checks.append(CheckResult("internal_force_limit",
                              monotone and residuals[-1] <= 1e-6,
                              {"residuals": residuals}))

    # convergence to perfect control on the head-on push
    manip = Manipulator([Finger(Point(), Pose2(-1.0, 0.0))])
    cs = contact_candidates(Disk(1.0), Pose2(), manip, manip.initial_config(),
                            [], [1.0], [], 1e-9)
    cs = contact_jacobians(cs, Pose2(), manip, manip.initial_config())
    v0 = solve_instantaneous(assemble_velocity_lcp(
        cs, np.eye(3), FeedbackModel.identity(2, 0.0), [1.0, 0.0]), cfg).v_obj
    vc = solve_instantaneous(assemble_velocity_lcp(
        cs, np.eye(3), FeedbackModel.identity(2, 0.001), [1.0, 0.0]), cfg).v_obj
    rel = float(np.linalg.norm(vc - v0) / np.linalg.norm(v0))
    checks.append(CheckResult("perfect_control_convergence", rel <= 0.01,
                              {"relative_error": rel}))

    return SuiteReport("model", seed, trials, checks)


# -- timestep suite ----------------------------------------------------------------

def run_timestep_suite(trials: int = 50, seed: int = 0) -> SuiteReport:
    rng = np.random.default_rng(seed)
    checks = []

    # sub-step impact derived values
    manip = Manipulator([Finger(Point(), Pose2(-1.01, 0.0))])
    from .scenes import PiecewiseProfile, Scene, Segment, SimDefaults
    from .model import EllipsoidLimitSurface
    from .stepping import step
    scene = Scene("impact", Disk(1.0), Pose2(), EllipsoidLimitSurface(np.eye(3)),
                  manip, FeedbackModel.identity(2, 0.0), [], [1.0], [],
                  PiecewiseProfile([Segment(0.0, 1.0, (1.0, 0.0))]),
                  SimDefaults(0.05, 1.0))
    result = step(scene, scene.object_pose, manip.initial_config(),
                  [1.0, 0.0], TimeStepConfig(h=0.05, activation_distance=0.2))
    impact_ok = (abs(result.p_n[0] - 0.04) <= 1e-9
                 and np.max(np.abs(result.dq_obj - [0.04, 0.0, 0.0])) <= 1e-9
                 and abs(result.gaps_after[0]) <= 1e-9)
    checks.append(CheckResult("substep_impact", bool(impact_ok),
                              {"p_n": result.p_n.tolist(),
                               "gap_after": result.gaps_after.tolist()}))

    # quiescence
    quiet = Scene("quiet", Disk(1.0), Pose2(), EllipsoidLimitSurface(np.eye(3)),
                  Manipulator([Finger(Point(), Pose2(-1.0, 0.0))]),
                  FeedbackModel.identity(2, 0.0), [], [1.0], [],
                  PiecewiseProfile([Segment(0.0, 1.0, (0.0, 0.0))]),
                  SimDefaults(0.05, 1.0))
    traj = simulate(quiet, quiet.commands, 1.0,
                    TimeStepConfig(h=0.05, activation_distance=0.05))
    quiescent = traj.completed and all(
        traj.poses_obj[i].tobytes() == traj.poses_obj[0].tobytes()
        for i in range(traj.poses_obj.shape[0]))
    checks.append(CheckResult("quiescence", bool(quiescent), {}))

    # B = 0 reduces to the perfect-control formulation
    base = builtin_scene("two_finger_disk_symmetric")
    scene_c0 = base.with_c(0.0)
    scene_b0 = Scene(**{**base.__dict__,
                        "feedback": FeedbackModel(np.zeros((4, 4)), 1.0)})
    cfg = TimeStepConfig(h=0.025)
    t1 = simulate(scene_c0, scene_c0.commands, 2.0, cfg)
    t2 = simulate(scene_b0, scene_b0.commands, 2.0, cfg)
    reduction = (t1.completed and t2.completed
                 and float(np.max(np.abs(t1.poses_obj - t2.poses_obj))) <= 1e-12
                 and float(np.max(np.abs(t1.configs_manip - t2.configs_manip))) <= 1e-12)
    checks.append(CheckResult("b_zero_reduction", bool(reduction), {}))

    # non-penetration over randomized short pushes
    from .stepping import check_penetration
    worst = 0.0
    pen_failures = 0
    for _ in range(trials):
        pieces = random_contact_scene(rng)
        m = pieces.manipulator.m
        scene_r = Scene("rand", pieces.shape, pieces.pose,
                        EllipsoidLimitSurface(pieces.A), pieces.manipulator,
                        FeedbackModel(random_spd(rng, m), 0.05),
                        [], pieces.mu, [],
                        PiecewiseProfile([Segment(0.0, 1.0, tuple(rng.uniform(-0.2, 0.2, m)))]),
                        SimDefaults(0.05, 1.0))
        # 25 solves: a few random multi-finger pinches contract slowly
        traj = simulate(scene_r, scene_r.commands, 1.0,
                        TimeStepConfig(h=0.05, activation_distance=0.05,
                                       max_relin_iters=25))
        if not traj.completed:
            pen_failures += 1
            continue
        report = check_penetration(traj, scene_r)
        worst = max(worst, report.max_penetration)
        if report.max_penetration > 1e-4:
            pen_failures += 1
    checks.append(CheckResult("non_penetration", pen_failures == 0,
                              {"worst_penetration_m": worst,
                               "failures": pen_failures}))

    return SuiteReport("timestep", seed, trials, checks)


def run_suites(which: str = "all", trials: int | None = None,
               seed: int = 0) -> list[SuiteReport]:
    reports = []
    if which in ("lcp", "all"):
        reports.append(run_lcp_suite(trials or 500, seed))
    if which in ("model", "all"):
        reports.append(run_model_suite(trials or 1000, seed))
    if which in ("timestep", "all"):
        reports.append(run_timestep_suite(trials or 50, seed))
    if not reports:
        raise ValueError(f"unknown suite {which!r}")
    return reports
