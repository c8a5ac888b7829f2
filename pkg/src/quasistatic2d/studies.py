"""Gain-sweep experiments: convergence to perfect velocity control, jamming.

A convergence study rolls the same command out at several feedback scalings
plus the c = 0 reference and fits log(final-pose error) against log(c); a
jamming study runs commands for which the c = 0 rollout is expected to die at
the jam step while every finite-gain rollout completes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import QuasistaticError, TheoremViolationError
from .scenes import Scene
from .stepping import TimeStepConfig, Trajectory, simulate


class ReferenceInfeasibleError(QuasistaticError):
    """The c = 0 reference rollout jammed; use a jamming study instead."""


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass
class ConvergenceEntry:
    c: float
    final_pose: np.ndarray
    error: float


@dataclass
class ConvergenceReport:
    scene_name: str
    reference_id: str
    entries: list[ConvergenceEntry]
    fit: LogLogFit | None
    trajectories: dict = field(default_factory=dict, repr=False)

    @property
    def errors(self) -> np.ndarray:
        return np.array([e.error for e in self.entries])

    def to_dict(self) -> dict:
        return {
            "scene": self.scene_name,
            "reference_id": self.reference_id,
            "entries": [{"c": e.c, "final_pose": e.final_pose.tolist(),
                         "error": e.error} for e in self.entries],
            "fit": None if self.fit is None else {
                "slope": self.fit.slope, "intercept": self.fit.intercept,
                "r_squared": self.fit.r_squared, "n_points": self.fit.n_points},
        }


@dataclass
class JamEntry:
    c: float
    final_pose: np.ndarray
    steps: int


@dataclass
class JammingReport:
    scene_name: str
    jam_step: int | None          # None: the reference completed (no jam observed)
    reference_steps: int
    entries: list[JamEntry]
    successive_final_pose_gaps: list[float]
    trajectories: dict = field(default_factory=dict, repr=False)

    @property
    def jam_observed(self) -> bool:
        return self.jam_step is not None

    def to_dict(self) -> dict:
        return {
            "scene": self.scene_name,
            "jam_step": self.jam_step,
            "jam_observed": self.jam_observed,
            "reference_steps": self.reference_steps,
            "entries": [{"c": e.c, "final_pose": e.final_pose.tolist(),
                         "steps": e.steps} for e in self.entries],
            "successive_final_pose_gaps": list(self.successive_final_pose_gaps),
        }


def _validate_c_list(c_list) -> list[float]:
    cs = [float(c) for c in c_list]
    if not cs:
        raise ValueError("empty c list")
    if any(c <= 0 for c in cs):
        raise ValueError("feedback scalings must be positive")
    if any(b >= a for a, b in zip(cs, cs[1:])):
        raise ValueError("c list must be strictly decreasing")
    return cs


def _sweep_config(scene: Scene, rate_hz: float, config: TimeStepConfig | None):
    if config is not None:
        return config
    return TimeStepConfig(h=1.0 / rate_hz,
                          activation_distance=scene.sim.activation)


def _run_gain(scene: Scene, c: float, profile, duration, config) -> Trajectory:
    traj = simulate(scene.with_c(c), profile, duration, config)
    if not traj.completed:
        raise TheoremViolationError(
            f"rollout with c={c} > 0 failed at step "
            f"{traj.error['step_index']}: {traj.error['message']}",
            dump=traj.error.get("dump"))
    return traj


def run_convergence_study(scene: Scene, profile, c_list, duration: float,
                          rate_hz: float, config: TimeStepConfig | None = None,
                          eps_floor: float = 1e-8, jobs: int = 1) -> ConvergenceReport:
    """Final-pose error of each finite gain against the c = 0 reference.

    The log-log fit covers the entries with error above 10 * eps_floor.
    """
    cs = _validate_c_list(c_list)
    cfg = _sweep_config(scene, rate_hz, config)
    reference = simulate(scene.with_c(0.0), profile, duration, cfg)
    if not reference.completed:
        raise ReferenceInfeasibleError(
            f"c=0 reference failed at step {reference.error['step_index']} "
            f"({reference.error['kind']}); this scene jams - run a jamming "
            f"study instead")
    ref_pose = reference.final_pose

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(
                lambda c: _run_gain(scene, c, profile, duration, cfg), cs))
    else:
        trajectories = [_run_gain(scene, c, profile, duration, cfg) for c in cs]

    entries = [ConvergenceEntry(c, t.final_pose.copy(),
                                float(np.linalg.norm(t.final_pose - ref_pose)))
               for c, t in zip(cs, trajectories)]

    fit = None
    fit_entries = [e for e in entries if e.error > 10.0 * eps_floor]
    if len(fit_entries) >= 2:
        lc = np.log10([e.c for e in fit_entries])
        le = np.log10([e.error for e in fit_entries])
        A = np.vstack([lc, np.ones_like(lc)]).T
        coef, residual, *_ = np.linalg.lstsq(A, le, rcond=None)
        ss_tot = float(np.sum((le - le.mean()) ** 2))
        if ss_tot > 0 and residual.size:
            r2 = 1.0 - float(residual[0]) / ss_tot
        else:
            r2 = 1.0
        fit = LogLogFit(float(coef[0]), float(coef[1]), r2, len(fit_entries))

    trajs = {"reference": reference}
    trajs.update({e.c: t for e, t in zip(entries, trajectories)})
    return ConvergenceReport(scene.name, f"{scene.name}:c=0", entries, fit,
                             trajectories=trajs)


def run_jamming_study(scene: Scene, profile, c_list, duration: float,
                      rate_hz: float, config: TimeStepConfig | None = None,
                      jobs: int = 1) -> JammingReport:
    """Record where the c = 0 rollout jams; finite gains must complete."""
    cs = _validate_c_list(c_list)
    cfg = _sweep_config(scene, rate_hz, config)
    reference = simulate(scene.with_c(0.0), profile, duration, cfg)
    if reference.completed:
        jam_step = None
    elif reference.error["kind"] in ("jam", "infeasible_start"):
        jam_step = int(reference.error["step_index"])
    else:
        raise TheoremViolationError(
            f"c=0 reference failed for an unexpected reason: {reference.error}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(
                lambda c: _run_gain(scene, c, profile, duration, cfg), cs))
    else:
        trajectories = [_run_gain(scene, c, profile, duration, cfg) for c in cs]

    entries = [JamEntry(c, t.final_pose.copy(), t.n_steps)
               for c, t in zip(cs, trajectories)]
    gaps = [float(np.linalg.norm(a.final_pose - b.final_pose))
            for a, b in zip(entries, entries[1:])]
    trajs = {"reference": reference}
    trajs.update({e.c: t for e, t in zip(entries, trajectories)})
    return JammingReport(scene.name, jam_step, reference.n_steps, entries,
                         gaps, trajectories=trajs)
