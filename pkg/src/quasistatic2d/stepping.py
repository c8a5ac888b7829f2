"""Impulse-based time stepping for the quasi-static contact model.

Each step solves one LCP over net contact impulses whose matrix is the
instantaneous model's matrix at the step's linearization point and whose
constant vector is the instantaneous one for the displacement command h v*,
shifted by the start-of-step gaps on the normal rows.  The normal
complementarity then enforces nonnegative *end-of-step* gaps, which resolves
sub-step impacts inside a single solve instead of root-finding impact times.

Gap functions are generally nonlinear in the configuration, so a step
optionally iterates: solve, move the linearization point to the candidate
end-of-step configuration, re-solve, until successive candidates agree.  The
candidate contact pair set is frozen during that iteration (pairs are
re-detected between steps); only witness points, normals, Jacobians, and gap
offsets are refreshed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    InfeasibleStartError,
    JamTerminationError,
    PivotLimitError,
    TheoremViolationError,
)
from .geometry import (
    ContactSet,
    Pose2,
    body_twist_transform,
    contact_candidates,
    contact_jacobians,
    refresh_contacts,
    signed_distance_pair,
)
from .lcp import LcpProblem, LcpStatus, SolverConfig, problem_dump_dict, solve_lemke
from .model import (
    GeneralLimitSurface,
    VelocityLcp,
    assemble_velocity_lcp,
    force_motion_matrix,
)

if TYPE_CHECKING:  # pragma: no cover
    from .scenes import Scene


@dataclass(frozen=True)
class TimeStepConfig:
    """Step size, relinearization policy, and tolerances.

    ``max_relin_iters`` counts LCP solves per step: 1 means a single explicit
    linearization with no correction pass (convergence then cannot be
    confirmed and the step is flagged unconverged).
    """

    h: float = 0.025
    max_relin_iters: int = 10
    relin_tol: float = 1e-8
    penetration_tol: float = 1e-4
    activation_distance: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    continue_on_unconverged: bool = False
    ls_relaxation: float = 0.5

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.max_relin_iters < 1:
            raise ValueError("max_relin_iters must be >= 1")
        for name in ("relin_tol", "penetration_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def activation(self, v_star) -> float:
        if self.activation_distance is not None:
            return self.activation_distance
        vmax = float(np.max(np.abs(v_star))) if np.size(v_star) else 0.0
        return 4.0 * self.h * max(vmax, 0.025)


@dataclass
class StepResult:
    """One executed step: pose increments, impulses, recomputed gaps."""

    dq_obj: np.ndarray
    dq_manip: np.ndarray
    p_n: np.ndarray
    p_t: np.ndarray
    gaps_after: np.ndarray
    relin_iters: int
    converged: bool
    contacts: ContactSet
    solve_time: float = 0.0

    @property
    def k(self) -> int:
        return self.p_n.shape[0]


def assemble_timestep_lcp(contacts: ContactSet, A, fb, v_star, h: float,
                          gap_offsets=None) -> VelocityLcp:
    """Impulse LCP: velocity-LCP matrix, q shifted by the start gaps.

    ``gap_offsets`` defaults to the contacts' current gaps; relinearization
    passes supply offsets corrected to the start-of-step configuration.
    """
    v_star = np.asarray(v_star, dtype=float)
    vlcp = assemble_velocity_lcp(contacts, A, fb, h * v_star)
    k = contacts.k
    if k == 0:
        return vlcp
    offsets = contacts.gaps if gap_offsets is None else np.asarray(gap_offsets, dtype=float)
    q = vlcp.problem.q.copy()
    q[:k] += offsets
    return VelocityLcp(LcpProblem(vlcp.problem.M, q), contacts, vlcp.A, fb,
                       vlcp.command)


def _linearized_gap_offsets(contacts: ContactSet, lin_obj: np.ndarray,
                            lin_manip: np.ndarray, start_obj: np.ndarray,
                            start_manip: np.ndarray) -> np.ndarray:
    """Gap constants for a linearization taken away from the step start.

    First-order model about the linearization point q_hat:
    gap(q_start + dq) ~ gap(q_hat) + N (q_start + dq - q_hat), so the
    constant entering the LCP is gap(q_hat) - N (q_hat - q_start).
    """
    d_obj = lin_obj - start_obj
    d_manip = lin_manip - start_manip
    return contacts.gaps - contacts.N_obj @ d_obj - contacts.N_manip @ d_manip


def step(scene: "Scene", q_obj: Pose2, q_manip: np.ndarray, v_star,
         config: TimeStepConfig) -> StepResult:
    """Advance one step from (q_obj, q_manip) under command v_star.

    Raises JamTerminationError when the gain matrix is singular and the
    command has no feasible motion (expected for grasp/jam commands under
    perfect velocity control), InfeasibleStartError on initial penetration
    beyond tolerance, and TheoremViolationError if the LCP fails despite a
    definite gain matrix.
    """
    v_star = np.asarray(v_star, dtype=float)
    h = config.h
    fb = scene.feedback
    ls = scene.limit_surface
    manip = scene.manipulator

    candidates = contact_candidates(scene.object_shape, q_obj, manip, q_manip,
                                    scene.statics, scene.mu_fingers,
                                    scene.mu_statics, config.activation(v_star))
    if candidates.k and float(candidates.gaps.min()) < -config.penetration_tol:
        raise InfeasibleStartError(
            f"starting penetration {-float(candidates.gaps.min()):.3e} m exceeds "
            f"tolerance {config.penetration_tol:.1e} m")

    start_obj = q_obj.as_array()
    start_manip = np.asarray(q_manip, dtype=float)

    if candidates.k == 0:
        return StepResult(np.zeros(3), h * v_star, np.zeros(0), np.zeros(0),
                          np.zeros(0), 0, True, candidates)

    general_ls = isinstance(ls, GeneralLimitSurface)
    ls_wrench = np.array([1.0, 0.0, 0.0])

    lin_obj, lin_manip = start_obj.copy(), start_manip.copy()
    frozen = candidates
    prev_candidate = None
    candidate = None
    contacts = None
    p_n = p_t = None
    metric_ok = False
    solves = 0
    solve_time = 0.0

    while True:
        lin_pose = Pose2.from_array(lin_obj)
        refreshed = refresh_contacts(frozen, scene.object_shape, lin_pose,
                                     manip, lin_manip, scene.statics)
        contacts = contact_jacobians(refreshed, lin_pose, manip, lin_manip)
        offsets = _linearized_gap_offsets(contacts, lin_obj, lin_manip,
                                          start_obj, start_manip)
        if general_ls:
            A = force_motion_matrix(ls, lin_pose.theta, linearization_wrench=ls_wrench)
        else:
            A = force_motion_matrix(ls, lin_pose.theta)
        vlcp = assemble_timestep_lcp(contacts, A, fb, v_star, h, offsets)

        t0 = time.perf_counter()
        sol = solve_lemke(vlcp.problem, config.solver)
        solve_time += time.perf_counter() - t0
        solves += 1

        if sol.status is LcpStatus.PIVOT_LIMIT:
            raise PivotLimitError("pivot limit during time step",
                                  dump=problem_dump_dict(vlcp.problem, sol))
        if sol.status is LcpStatus.RAY_TERMINATION:
            if not fb.guarantees_existence:
                raise JamTerminationError(
                    "no feasible motion under perfect velocity control "
                    "(grasp/jam command)")
            if float(offsets.min()) >= 0.0:
                raise TheoremViolationError(
                    "time-step LCP infeasible despite definite gain matrix",
                    dump=problem_dump_dict(vlcp.problem, sol, extra={
                        "c": fb.c, "command": v_star.tolist(),
                        "gaps": contacts.gaps.tolist()}))
            # Relinearized offsets went negative: outside the existence
            # guarantee. Flag the step instead of looping.
            metric_ok = False
            break

        k = contacts.k
        p_n, p_t = sol.z[:k], sol.z[k:3 * k]
        lam = np.concatenate([p_n, p_t])
        dq_obj = A @ (contacts.object_jacobian().T @ lam)
        dq_manip = fb.gain @ (contacts.manipulator_jacobian().T @ lam) + h * v_star
        candidate = (start_obj + dq_obj, start_manip + dq_manip)

        if general_ls and h > 0:
            T = body_twist_transform(lin_pose.theta)
            solved_wrench = T.T @ (contacts.object_jacobian().T @ lam) / h
            ls_wrench = ((1.0 - config.ls_relaxation) * ls_wrench
                         + config.ls_relaxation * solved_wrench)

        if prev_candidate is not None:
            delta = max(float(np.max(np.abs(candidate[0] - prev_candidate[0]))),
                        float(np.max(np.abs(candidate[1] - prev_candidate[1]))))
            if delta <= config.relin_tol:
                metric_ok = True
                break
        if solves >= config.max_relin_iters:
            break
        prev_candidate = candidate
        lin_obj, lin_manip = candidate[0].copy(), candidate[1].copy()

    if candidate is None:
        # Ray termination on the very first solve with a definite gain matrix:
        # only reachable when tolerated initial penetration (negative gaps)
        # voids the existence guarantee's hypothesis.
        raise InfeasibleStartError(
            "impulse LCP infeasible at the start of the step "
            f"(min gap {float(frozen.gaps.min()):.3e} m)")

    end_pose = Pose2.from_array(candidate[0])
    final = refresh_contacts(frozen, scene.object_shape, end_pose, manip,
                             candidate[1], scene.statics)
    gaps_after = final.gaps
    gaps_ok = bool(gaps_after.min() >= -config.penetration_tol) if final.k else True
    return StepResult(candidate[0] - start_obj, candidate[1] - start_manip,
                      p_n, p_t, gaps_after, solves, metric_ok and gaps_ok,
                      contacts, solve_time)


@dataclass
class Trajectory:
    """Rollout record: uniformly spaced states plus per-step results.

    ``poses_obj[i]`` is the state at ``times[i]``; ``steps[i]`` carries the
    impulses applied between ``times[i]`` and ``times[i+1]``.  ``error`` is
    None for a clean run, otherwise a dict with "kind", "step_index", and
    "message" describing why the rollout stopped early.
    """

    h: float
    times: np.ndarray
    poses_obj: np.ndarray
    configs_manip: np.ndarray
    commands: np.ndarray
    steps: list[StepResult]
    error: dict | None
    completed: bool

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def final_pose(self) -> np.ndarray:
        return self.poses_obj[-1]

    def solve_time_stats(self) -> dict:
        times = [s.solve_time for s in self.steps]
        if not times:
            return {"mean_s": 0.0, "max_s": 0.0, "steps": 0}
        return {"mean_s": float(np.mean(times)), "max_s": float(np.max(times)),
                "steps": len(times)}


def simulate(scene: "Scene", profile, duration: float,
             config: TimeStepConfig) -> Trajectory:
    """Fixed-step rollout with per-step contact re-detection.

    Step errors abort the rollout and are recorded on the returned
    trajectory; unconverged steps abort as well unless the config says to
    continue (silent penetration is worse than early termination).
    """
    h = config.h
    n_steps = round(duration / h)
    if abs(n_steps * h - duration) > 1e-9 * max(1.0, duration):
        raise ValueError(f"duration {duration} is not an integer multiple of h={h}")

    q_obj = scene.object_pose
    q_manip = scene.manipulator.initial_config().copy()
    times = [0.0]
    poses = [q_obj.as_array()]
    configs = [q_manip.copy()]
    commands = []
    steps: list[StepResult] = []
    error = None

    for i in range(n_steps):
        t = i * h
        v_star = np.asarray(profile.value_at(t), dtype=float)
        try:
            result = step(scene, q_obj, q_manip, v_star, config)
        except JamTerminationError as exc:
            error = {"kind": "jam", "step_index": i, "message": str(exc)}
            break
        except InfeasibleStartError as exc:
            error = {"kind": "infeasible_start", "step_index": i, "message": str(exc)}
            break
        except (TheoremViolationError, PivotLimitError) as exc:
            error = {"kind": "theorem_violation", "step_index": i,
                     "message": str(exc), "dump": getattr(exc, "dump", None)}
            break
        if not result.converged and not config.continue_on_unconverged:
            error = {"kind": "unconverged", "step_index": i,
                     "message": f"step {i} did not converge within "
                                f"{config.max_relin_iters} solves"}
            break
        q_obj = Pose2.from_array(q_obj.as_array() + result.dq_obj)
        q_manip = q_manip + result.dq_manip
        times.append((i + 1) * h)
        poses.append(q_obj.as_array())
        configs.append(q_manip.copy())
        commands.append(v_star)
        steps.append(result)

    m = scene.manipulator.m
    return Trajectory(
        h=h,
        times=np.array(times),
        poses_obj=np.array(poses),
        configs_manip=np.array(configs),
        commands=np.array(commands) if commands else np.zeros((0, m)),
        steps=steps,
        error=error,
        completed=error is None,
    )


@dataclass(frozen=True)
class PenetrationReport:
    max_penetration: float
    step_index: int
    min_gap: float


def check_penetration(trajectory: Trajectory, scene: "Scene") -> PenetrationReport:
    """Recompute all pair gaps along the trajectory; report the worst state."""
    if trajectory.poses_obj.shape[0] == 0:
        raise ValueError("empty trajectory")
    worst_gap = np.inf
    worst_idx = 0
    for i in range(trajectory.poses_obj.shape[0]):
        pose = Pose2.from_array(trajectory.poses_obj[i])
        q_manip = trajectory.configs_manip[i]
        poses = scene.manipulator.poses_at(q_manip)
        for finger, fpose in zip(scene.manipulator.fingers, poses):
            gap = signed_distance_pair(scene.object_shape, pose, finger.shape,
                                       fpose).gap
            if gap < worst_gap:
                worst_gap, worst_idx = gap, i
        for shape, spose in scene.statics:
            gap = signed_distance_pair(scene.object_shape, pose, shape, spose).gap
            if gap < worst_gap:
                worst_gap, worst_idx = gap, i
    return PenetrationReport(max(0.0, -float(worst_gap)), worst_idx, float(worst_gap))


# -- serialization -------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_to_csv(trajectory: Trajectory, path) -> None:
    """CSV with one row per state; impulse columns padded when k varies."""
    m = trajectory.configs_manip.shape[1]
    kmax = max((s.k for s in trajectory.steps), default=0)
    header = (["t", "qO_x", "qO_y", "qO_th"]
              + [f"qM_{j + 1}" for j in range(m)]
              + ["k"]
              + [f"pn_{j + 1}" for j in range(kmax)]
              + [f"pt_{j + 1}" for j in range(2 * kmax)])
    lines = [",".join(header)]
    for i in range(trajectory.poses_obj.shape[0]):
        row = [_fmt(trajectory.times[i])]
        row += [_fmt(v) for v in trajectory.poses_obj[i]]
        row += [_fmt(v) for v in trajectory.configs_manip[i]]
        if i == 0:
            row += [""] * (1 + 3 * kmax)
        else:
            s = trajectory.steps[i - 1]
            row.append(str(s.k))
            row += [_fmt(v) for v in s.p_n] + [""] * (kmax - s.k)
            row += [_fmt(v) for v in s.p_t] + [""] * (2 * kmax - 2 * s.k)
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def trajectory_to_json(trajectory: Trajectory, path) -> None:
    """JSON alternative carrying the full step records."""
    payload = {
        "h": trajectory.h,
        "completed": trajectory.completed,
        "error": trajectory.error,
        "times": trajectory.times.tolist(),
        "poses_obj": trajectory.poses_obj.tolist(),
        "configs_manip": trajectory.configs_manip.tolist(),
        "commands": trajectory.commands.tolist(),
        "steps": [
            {
                "k": s.k,
                "dq_obj": s.dq_obj.tolist(),
                "dq_manip": s.dq_manip.tolist(),
                "p_n": s.p_n.tolist(),
                "p_t": s.p_t.tolist(),
                "gaps_after": s.gaps_after.tolist(),
                "relin_iters": s.relin_iters,
                "converged": s.converged,
            }
            for s in trajectory.steps
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
