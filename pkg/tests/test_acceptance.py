"""Acceptance suite: every shipped guarantee, one test per criterion.

Run with `pytest tests/test_acceptance.py -s` to see one PASS/FAIL line per
criterion.  Tolerances are pinned here and nowhere else.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from quasistatic2d.cli import main
from quasistatic2d.geometry import contact_candidates, contact_jacobians
from quasistatic2d.lcp import (
    LcpStatus,
    SolverConfig,
    brute_force_solve,
    solve_lemke,
    verify_solution,
)
from quasistatic2d.model import (
    FeedbackModel,
    assemble_velocity_lcp,
    check_force_bound,
    internal_force_residual,
    solve_instantaneous,
)
from quasistatic2d.scenes import Scene, builtin_scene
from quasistatic2d.stepping import TimeStepConfig, check_penetration, simulate, step
from quasistatic2d.studies import run_convergence_study
from quasistatic2d.verification import (
    random_contact_scene,
    random_lemke_processable,
    random_spd,
)


@contextmanager
def criterion(number: int, label: str):
    try:
        yield
    except BaseException:
        print(f"FAIL criterion {number}: {label}")
        raise
    print(f"PASS criterion {number}: {label}")


def pinch_assembly(c: float):
    scene = builtin_scene("four_finger_pinch")
    contacts = contact_candidates(scene.object_shape, scene.object_pose,
                                  scene.manipulator,
                                  scene.manipulator.initial_config(), [],
                                  scene.mu_fingers, [], 1e-9)
    contacts = contact_jacobians(contacts, scene.object_pose, scene.manipulator,
                                 scene.manipulator.initial_config())
    v = scene.commands.value_at(0.0)
    fb = scene.feedback.with_c(c)
    return contacts, fb, v


@pytest.fixture(scope="module")
def randomized_model_solutions():
    """1000 randomized feasible scenes with c > 0, B > 0, solved once."""
    rng = np.random.default_rng(2024)
    cfg = SolverConfig()
    t0 = time.perf_counter()
    results = []
    for _ in range(1000):
        pieces = random_contact_scene(rng)
        m = pieces.manipulator.m
        fb = FeedbackModel(random_spd(rng, m), 10.0 ** rng.uniform(-3, 0))
        v_star = rng.uniform(-1.0, 1.0, m)
        vlcp = assemble_velocity_lcp(pieces.contacts, pieces.A, fb, v_star)
        sol = solve_instantaneous(vlcp, cfg)  # raises on ray termination
        results.append((vlcp, fb, v_star, sol))
    elapsed = time.perf_counter() - t0
    return results, elapsed


def test_criterion_1_lcp_oracle_equivalence():
    with criterion(1, "LCP oracle equivalence (>= 500 instances, < 10 s)"):
        rng = np.random.default_rng(7)
        cfg = SolverConfig(eps_feas=1e-9, eps_comp=1e-9, eps_lin=1e-9)
        t0 = time.perf_counter()
        solvable = 0
        while solvable < 500:
            problem = random_lemke_processable(rng)
            if not brute_force_solve(problem):
                continue
            solvable += 1
            sol = solve_lemke(problem, cfg)
            assert sol.status is LcpStatus.SOLVED, \
                f"Lemke failed on brute-force-solvable instance:\n{problem.M}\n{problem.q}"
            assert verify_solution(problem, sol.z, cfg).valid
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"oracle sweep took {elapsed:.1f} s"


def test_criterion_2_existence(randomized_model_solutions):
    with criterion(2, "existence for c > 0, B > 0 (1000 scenes, < 60 s)"):
        results, elapsed = randomized_model_solutions
        assert len(results) == 1000
        assert all(sol.feasible for *_, sol in results)
        assert elapsed < 60.0, f"randomized solve pass took {elapsed:.1f} s"


def test_criterion_3_force_bound(randomized_model_solutions):
    with criterion(3, "manipulator-force bound, equality on the pinch"):
        results, _ = randomized_model_solutions
        for vlcp, fb, v_star, sol in results:
            report = check_force_bound(sol, fb, v_star, tol=1e-8)
            assert report.holds, f"bound violated: {report.lhs} > {report.rhs}"
        contacts, fb, v = pinch_assembly(0.01)
        sol = solve_instantaneous(assemble_velocity_lcp(contacts, np.eye(3), fb, v))
        report = check_force_bound(sol, fb, v)
        assert report.lhs == pytest.approx(2.0, abs=1e-6)
        assert report.rhs == pytest.approx(2.0, abs=1e-6)
        assert abs(report.lhs - report.rhs) <= 1e-6


def test_criterion_4_internal_force_limit():
    with criterion(4, "scaled pinch forces approach the internal-force set"):
        residuals = []
        for c in (1.0, 0.1, 0.01, 0.001):
            contacts, fb, v = pinch_assembly(c)
            sol = solve_instantaneous(assemble_velocity_lcp(contacts, np.eye(3), fb, v))
            residuals.append(internal_force_residual(contacts, c * sol.lam))
        for a, b in zip(residuals, residuals[1:]):
            assert b <= a + 1e-9, f"residuals not monotone: {residuals}"
        assert residuals[-1] <= 1e-6


def test_criterion_5_convergence_sweep():
    with criterion(5, "log-log gain convergence on the two-finger push"):
        scene = builtin_scene("two_finger_disk_symmetric")
        per_command = []
        t0 = time.perf_counter()
        report = run_convergence_study(scene, scene.commands,
                                       [1.0, 0.1, 0.01, 0.001], 10.0, 40.0)
        per_command.append(time.perf_counter() - t0)
        errs = report.errors
        # strictly decreasing over c <= 0.1
        tail = errs[1:]
        assert np.all(np.diff(tail) < 0), f"errors not decreasing: {errs}"
        lc = np.log10([0.1, 0.01, 0.001])
        le = np.log10(tail)
        A = np.vstack([lc, np.ones_like(lc)]).T
        coef, residual, *_ = np.linalg.lstsq(A, le, rcond=None)
        ss_tot = float(np.sum((le - le.mean()) ** 2))
        r2 = 1.0 - float(residual[0]) / ss_tot if residual.size else 1.0
        assert r2 >= 0.9, f"log-log fit R^2 = {r2}"
        # five rollouts inside one study; bound the whole study per command
        assert max(per_command) < 60.0


def test_criterion_6_jamming_behavior(tmp_path):
    with criterion(6, "pinch and wall-roll jam at c = 0, complete at c = 0.01"):
        for name in ("four_finger_pinch", "disk_wall_roll"):
            scene = builtin_scene(name)
            out = tmp_path / f"{name}.csv"
            code = main(["simulate", name, "--c-override", "0",
                         "--duration", "10", "--out", str(out)])
            assert code == 2, f"{name} at c=0 exited {code}, expected 2"

            cfg = TimeStepConfig(h=scene.sim.h,
                                 activation_distance=scene.sim.activation)
            traj = simulate(scene.with_c(0.01), scene.commands, 10.0, cfg)
            assert traj.completed, f"{name} at c=0.01 failed: {traj.error}"
            pen = check_penetration(traj, scene)
            assert pen.max_penetration <= 1e-4, \
                f"{name} penetrated {pen.max_penetration:.2e} m"


def test_criterion_7_substep_impact():
    with criterion(7, "sub-step impact resolved in one LCP"):
        scene = builtin_scene("two_finger_disk_symmetric")
        from quasistatic2d.geometry import Disk, Finger, Manipulator, Point, Pose2
        from quasistatic2d.model import EllipsoidLimitSurface
        from quasistatic2d.scenes import PiecewiseProfile, Segment, SimDefaults
        manip = Manipulator([Finger(Point(), Pose2(-1.01, 0.0))])
        impact = Scene("impact", Disk(1.0), Pose2(),
                       EllipsoidLimitSurface(np.eye(3)), manip,
                       FeedbackModel.identity(2, 0.0), [], [1.0], [],
                       PiecewiseProfile([Segment(0.0, 1.0, (1.0, 0.0))]),
                       SimDefaults(0.05, 1.0))
        cfg = TimeStepConfig(h=0.05, activation_distance=0.2)
        result = step(impact, impact.object_pose, manip.initial_config(),
                      [1.0, 0.0], cfg)
        # independent check through the brute-force oracle
        from quasistatic2d.stepping import assemble_timestep_lcp
        cs = contact_candidates(impact.object_shape, impact.object_pose,
                                manip, manip.initial_config(), [], [1.0], [], 0.2)
        cs = contact_jacobians(cs, impact.object_pose, manip,
                               manip.initial_config())
        vlcp = assemble_timestep_lcp(cs, np.eye(3), impact.feedback,
                                     np.array([1.0, 0.0]), 0.05)
        oracle = brute_force_solve(vlcp.problem)
        assert any(abs(s.z[0] - 0.04) <= 1e-12 for s in oracle)
        assert abs(result.p_n[0] - 0.04) <= 1e-9
        assert np.max(np.abs(result.dq_obj - [0.04, 0.0, 0.0])) <= 1e-9
        assert np.max(np.abs(result.gaps_after)) <= 1e-9


def test_criterion_8_peg_in_hole():
    with criterion(8, "peg-in-hole inserts without penetration, fast solves"):
        scene = builtin_scene("peg_in_hole")
        assert scene.sim.h == 0.05
        cfg = TimeStepConfig(h=scene.sim.h,
                             activation_distance=scene.sim.activation)
        traj = simulate(scene, scene.commands, scene.sim.duration, cfg)
        assert traj.completed, f"peg rollout failed: {traj.error}"
        pen = check_penetration(traj, scene)
        assert pen.max_penetration <= 1e-4
        final = traj.final_pose
        slot_half_width = scene.reconstructed["slot_width_m"] / 2.0
        assert abs(final[0]) < slot_half_width, "peg centroid off the slot axis"
        assert final[1] < 0.05, "peg not lowered into the slot"
        assert abs(final[2]) < 0.05, "peg not upright"
        worst_solve = max(s.solve_time for s in traj.steps)
        assert worst_solve <= 0.05, f"LCP solve took {worst_solve * 1e3:.1f} ms"


def test_criterion_9_b_zero_reduction():
    with criterion(9, "B = 0 time stepping equals the c = 0 formulation"):
        base = builtin_scene("two_finger_disk_symmetric")
        scene_c0 = base.with_c(0.0)
        scene_b0 = Scene(**{**base.__dict__,
                            "feedback": FeedbackModel(np.zeros((4, 4)), 1.0)})
        cfg = TimeStepConfig(h=0.025)
        t1 = simulate(scene_c0, scene_c0.commands, 10.0, cfg)
        t2 = simulate(scene_b0, scene_b0.commands, 10.0, cfg)
        assert t1.completed and t2.completed
        assert t1.n_steps == t2.n_steps == 400
        assert float(np.max(np.abs(t1.poses_obj - t2.poses_obj))) <= 1e-12
        assert float(np.max(np.abs(t1.configs_manip - t2.configs_manip))) <= 1e-12
        for s1, s2 in zip(t1.steps, t2.steps):
            assert float(np.max(np.abs(s1.p_n - s2.p_n), initial=0.0)) <= 1e-12


def test_criterion_10_copositivity_identity():
    with criterion(10, "quadratic-form decomposition identity"):
        rng = np.random.default_rng(99)
        for _ in range(100):
            pieces = random_contact_scene(rng)
            m = pieces.manipulator.m
            fb = FeedbackModel(random_spd(rng, m), 10.0 ** rng.uniform(-3, 0))
            vlcp = assemble_velocity_lcp(pieces.contacts, pieces.A, fb,
                                         rng.uniform(-1, 1, m))
            for _ in range(100):
                z = np.abs(rng.normal(size=vlcp.problem.n))
                gap = vlcp.decomposition_gap(z)
                assert gap <= 1e-10 * (1.0 + float(z @ z)), \
                    f"identity violated: gap={gap:.3e}"
