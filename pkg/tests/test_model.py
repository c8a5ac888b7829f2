import math

import numpy as np
import pytest

from quasistatic2d.geometry import (
    Disk,
    Finger,
    Manipulator,
    Point,
    Pose2,
    body_twist_transform,
    contact_candidates,
    contact_jacobians,
    rectangle,
)
from quasistatic2d.lcp import LcpStatus, brute_force_solve
from quasistatic2d.model import (
    EllipsoidLimitSurface,
    FeedbackModel,
    GeneralLimitSurface,
    ModelSolution,
    assemble_velocity_lcp,
    check_force_bound,
    force_motion_matrix,
    internal_force_residual,
    nonellipsoid_fixed_point,
    solve_instantaneous,
)


def headon_contacts():
    """Disk r=1 at the origin, one point finger touching at (-1, 0)."""
    manip = Manipulator([Finger(Point(), Pose2(-1.0, 0.0))])
    q0 = manip.initial_config()
    cs = contact_candidates(Disk(1.0), Pose2(), manip, q0, [], [1.0], [], 1e-9)
    return contact_jacobians(cs, Pose2(), manip, q0), manip


def pinch_contacts():
    """Square side 0.4 pinched by four disk fingers at the face midpoints."""
    fingers = [Finger(Disk(0.05), Pose2(0.25, 0.0)),
               Finger(Disk(0.05), Pose2(0.0, 0.25)),
               Finger(Disk(0.05), Pose2(-0.25, 0.0)),
               Finger(Disk(0.05), Pose2(0.0, -0.25))]
    manip = Manipulator(fingers)
    q0 = manip.initial_config()
    cs = contact_candidates(rectangle(0.4, 0.4), Pose2(), manip, q0, [],
                            [1.0] * 4, [], 1e-9)
    assert cs.k == 4
    return contact_jacobians(cs, Pose2(), manip, q0), manip


def inward_unit_commands(contacts, manip):
    v = np.zeros(manip.m)
    for c in contacts.contacts:
        sl = manip.slices[c.other_index]
        v[sl.start:sl.start + 2] = c.normal_into_obj
    return v


class TestForceMotionMatrix:
    def test_identity_invariant(self):
        ls = EllipsoidLimitSurface(np.eye(3))
        for theta in (0.0, 0.7, -2.3):
            np.testing.assert_allclose(force_motion_matrix(ls, theta), np.eye(3),
                                       atol=1e-15)

    def test_diagonal_quarter_turn(self):
        ls = EllipsoidLimitSurface(np.diag([1.0, 2.0, 3.0]))
        A = force_motion_matrix(ls, math.pi / 2)
        # independent recomputation of the conjugation
        T = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(A, T @ np.diag([1.0, 2.0, 3.0]) @ T.T, atol=1e-12)
        np.testing.assert_allclose(A, np.diag([2.0, 1.0, 3.0]), atol=1e-12)

    def test_eigenvalues_preserved(self):
        rng = np.random.default_rng(0)
        Q = rng.normal(size=(3, 3))
        ls = EllipsoidLimitSurface(Q @ Q.T + 0.5 * np.eye(3))
        for theta in rng.uniform(-3, 3, 5):
            np.testing.assert_allclose(
                np.linalg.eigvalsh(force_motion_matrix(ls, theta)),
                np.linalg.eigvalsh(ls.A_tilde), rtol=1e-10)

    def test_rejects_non_pd(self):
        with pytest.raises(ValueError):
            EllipsoidLimitSurface(np.diag([1.0, -1.0, 1.0]))


class TestAssembly:
    def test_headon_perfect_control(self):
        cs, manip = headon_contacts()
        fb = FeedbackModel.identity(2, 0.0)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), fb, [1.0, 0.0])
        assert vlcp.problem.n == 4
        assert vlcp.problem.M[0, 0] == pytest.approx(1.0)
        assert vlcp.problem.q[0] == pytest.approx(-1.0)

    def test_headon_finite_feedback(self):
        cs, manip = headon_contacts()
        fb = FeedbackModel.identity(2, 1.0)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), fb, [1.0, 0.0])
        assert vlcp.problem.M[0, 0] == pytest.approx(2.0)

    def test_empty_contacts(self):
        manip = Manipulator([Finger(Point(), Pose2(10.0, 0.0))])
        cs = contact_candidates(Disk(1.0), Pose2(), manip,
                                manip.initial_config(), [], [1.0], [], 0.1)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(2, 0.1),
                                     [1.0, 0.0])
        assert vlcp.problem.n == 0
        sol = solve_instantaneous(vlcp)
        assert sol.feasible
        np.testing.assert_array_equal(sol.v_obj, np.zeros(3))
        np.testing.assert_array_equal(sol.v_manip, [1.0, 0.0])

    def test_dimension_mismatch(self):
        cs, _ = headon_contacts()
        with pytest.raises(ValueError):
            assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(2, 0.0),
                                  [1.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(3, 0.0),
                                  [1.0, 0.0])


class TestInstantaneousSolve:
    def test_headon_perfect_control_matches_oracle(self):
        cs, _ = headon_contacts()
        vlcp = assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(2, 0.0),
                                     [1.0, 0.0])
        oracle = brute_force_solve(vlcp.problem)
        assert len(oracle) >= 1
        sol = solve_instantaneous(vlcp)
        assert sol.feasible
        assert sol.lam_n[0] == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(sol.v_obj, [1.0, 0.0, 0.0], atol=1e-10)
        assert any(np.allclose(s.z[0], 1.0, atol=1e-10) for s in oracle)

    def test_headon_finite_feedback_halves_velocity(self):
        cs, _ = headon_contacts()
        vlcp = assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(2, 1.0),
                                     [1.0, 0.0])
        oracle = brute_force_solve(vlcp.problem)
        assert any(np.allclose(s.z[0], 0.5, atol=1e-10) for s in oracle)
        sol = solve_instantaneous(vlcp)
        assert sol.lam_n[0] == pytest.approx(0.5, abs=1e-10)
        np.testing.assert_allclose(sol.v_obj, [0.5, 0.0, 0.0], atol=1e-10)
        np.testing.assert_allclose(sol.v_manip, [0.5, 0.0], atol=1e-10)

    def test_pinch_perfect_control_infeasible(self):
        cs, manip = pinch_contacts()
        v = inward_unit_commands(cs, manip)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(8, 0.0), v)
        sol = solve_instantaneous(vlcp)
        assert not sol.feasible

    def test_pinch_finite_feedback(self):
        cs, manip = pinch_contacts()
        v = inward_unit_commands(cs, manip)
        fb = FeedbackModel.identity(8, 0.01)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), fb, v)
        sol = solve_instantaneous(vlcp)
        assert sol.feasible
        np.testing.assert_allclose(sol.v_obj, np.zeros(3), atol=1e-8)
        np.testing.assert_allclose(sol.lam_n, np.full(4, 100.0), atol=1e-6)

    def test_pinch_matches_brute_force_16(self):
        cs, manip = pinch_contacts()
        v = inward_unit_commands(cs, manip)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), FeedbackModel.identity(8, 0.01), v)
        oracle = brute_force_solve(vlcp.problem, cap=16, tol=1e-7)
        assert oracle, "oracle found no solution for the pinch LCP"
        assert any(np.allclose(s.z[:4], 100.0, atol=1e-5) for s in oracle)

    def test_velocity_recovery_invariants(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 0.37)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), fb, [0.9, -0.2])
        sol = solve_instantaneous(vlcp)
        np.testing.assert_allclose(sol.v_obj, vlcp.A @ sol.F_obj, atol=1e-14)
        np.testing.assert_allclose(sol.v_manip - vlcp.command,
                                   fb.gain @ sol.F_manip, atol=1e-14)
        assert sol.lam_n.min() >= -1e-12
        cone = cs.mu_diag @ sol.lam_n - cs.E.T @ sol.lam_t
        assert cone.min() >= -1e-9


class TestForceBound:
    def test_headon(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 1.0)
        sol = solve_instantaneous(assemble_velocity_lcp(cs, np.eye(3), fb, [1.0, 0.0]))
        report = check_force_bound(sol, fb, [1.0, 0.0])
        assert report.holds
        assert report.lhs == pytest.approx(0.5, abs=1e-10)
        assert report.rhs == pytest.approx(1.0)

    def test_pinch_equality(self):
        cs, manip = pinch_contacts()
        v = inward_unit_commands(cs, manip)
        fb = FeedbackModel.identity(8, 0.01)
        sol = solve_instantaneous(assemble_velocity_lcp(cs, np.eye(3), fb, v))
        report = check_force_bound(sol, fb, v)
        assert report.holds
        assert report.lhs == pytest.approx(2.0, abs=1e-6)
        assert report.rhs == pytest.approx(2.0, abs=1e-12)

    def test_zero_command(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 0.5)
        sol = solve_instantaneous(assemble_velocity_lcp(cs, np.eye(3), fb, [0.0, 0.0]))
        report = check_force_bound(sol, fb, [0.0, 0.0])
        assert report.lhs == pytest.approx(0.0)
        assert report.rhs == pytest.approx(0.0)
        assert report.holds


class TestInternalForce:
    def test_zero_force(self):
        cs, _ = pinch_contacts()
        assert internal_force_residual(cs, np.zeros(12)) == 0.0

    def test_pinch_scaled_solution_is_internal(self):
        cs, manip = pinch_contacts()
        v = inward_unit_commands(cs, manip)
        fb = FeedbackModel.identity(8, 0.01)
        sol = solve_instantaneous(assemble_velocity_lcp(cs, np.eye(3), fb, v))
        assert internal_force_residual(cs, fb.c * sol.lam) <= 1e-6

    def test_single_contact_cannot_be_internal(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 1.0)
        sol = solve_instantaneous(assemble_velocity_lcp(cs, np.eye(3), fb, [1.0, 0.0]))
        residual = internal_force_residual(cs, fb.c * sol.lam)
        assert residual == pytest.approx(fb.c * sol.lam_n[0])
        assert residual > 0.1


class TestTheoremProperties:
    def test_copositivity_decomposition_identity(self):
        rng = np.random.default_rng(9)
        cs, manip = pinch_contacts()
        fb = FeedbackModel.identity(8, 0.3)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), fb, rng.normal(size=8))
        for _ in range(50):
            z = np.abs(rng.normal(size=vlcp.problem.n))
            assert vlcp.decomposition_gap(z) <= 1e-10 * (1.0 + float(z @ z))

    def test_internal_force_limit_monotone(self):
        cs, manip = pinch_contacts()
        v = inward_unit_commands(cs, manip)
        residuals = []
        for c in (1.0, 0.1, 0.01, 0.001):
            fb = FeedbackModel.identity(8, c)
            sol = solve_instantaneous(assemble_velocity_lcp(cs, np.eye(3), fb, v))
            residuals.append(internal_force_residual(cs, c * sol.lam))
        for a, b in zip(residuals, residuals[1:]):
            assert b <= a + 1e-9
        assert residuals[-1] <= 1e-6

    def test_convergence_to_perfect_control(self):
        cs, _ = headon_contacts()
        v0 = solve_instantaneous(assemble_velocity_lcp(
            cs, np.eye(3), FeedbackModel.identity(2, 0.0), [1.0, 0.0])).v_obj
        vc = solve_instantaneous(assemble_velocity_lcp(
            cs, np.eye(3), FeedbackModel.identity(2, 0.001), [1.0, 0.0])).v_obj
        assert np.linalg.norm(vc - v0) <= 0.01 * np.linalg.norm(v0)

    def test_dissipation_alignment(self):
        cs, _ = headon_contacts()
        sol = solve_instantaneous(assemble_velocity_lcp(
            cs, np.eye(3), FeedbackModel.identity(2, 0.2), [0.8, 0.3]))
        if np.linalg.norm(sol.F_obj) > 1e-12:
            cosang = float(sol.v_obj @ (np.eye(3) @ sol.F_obj)) / (
                np.linalg.norm(sol.v_obj) * np.linalg.norm(sol.F_obj))
            assert cosang == pytest.approx(1.0, abs=1e-12)

    def test_sliding_consistency(self):
        # low friction, oblique command: the contact must slide with a tight cone
        manip = Manipulator([Finger(Point(), Pose2(-1.0, 0.0))])
        q0 = manip.initial_config()
        cs = contact_candidates(Disk(1.0), Pose2(), manip, q0, [], [0.1], [], 1e-9)
        cs = contact_jacobians(cs, Pose2(), manip, q0)
        sol = solve_instantaneous(assemble_velocity_lcp(
            cs, np.eye(3), FeedbackModel.identity(2, 0.0), [1.0, 0.9]))
        assert sol.feasible
        slid = sol.sigma > 1e-9
        assert slid.any()
        cone = cs.mu_diag @ sol.lam_n - cs.E.T @ sol.lam_t
        assert np.all(cone[slid] <= 1e-9)


class TestNonEllipsoid:
    @staticmethod
    def quadratic_surface():
        return GeneralLimitSurface(
            value=lambda F: float(F @ F),
            gradient=lambda F: 2.0 * F,
            hessian=lambda F: 2.0 * np.eye(3))

    @staticmethod
    def quartic_surface():
        return GeneralLimitSurface(
            value=lambda F: float(F @ F) ** 2,
            gradient=lambda F: 4.0 * float(F @ F) * F,
            hessian=lambda F: 4.0 * float(F @ F) * np.eye(3) + 8.0 * np.outer(F, F))

    def test_quadratic_converges_in_one_iteration(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 0.5)
        result = nonellipsoid_fixed_point(cs, self.quadratic_surface(), fb,
                                          [1.0, 0.0], theta=0.0)
        assert result.converged
        assert result.iterations == 1
        reference = solve_instantaneous(assemble_velocity_lcp(
            cs, force_motion_matrix(EllipsoidLimitSurface(np.eye(3)), 0.0),
            fb, [1.0, 0.0]))
        np.testing.assert_allclose(result.solution.v_obj, reference.v_obj, atol=1e-12)

    def test_quartic_alignment_at_fixed_point(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 0.5)
        ls = self.quartic_surface()
        result = nonellipsoid_fixed_point(cs, ls, fb, [1.0, 0.0], theta=0.0,
                                          max_iters=100, tol=1e-12)
        assert result.converged
        sol = result.solution
        T = body_twist_transform(0.0)
        grad = T @ np.asarray(ls.gradient(T.T @ sol.F_obj))
        cosang = float(sol.v_obj @ grad) / (
            np.linalg.norm(sol.v_obj) * np.linalg.norm(grad))
        assert cosang == pytest.approx(1.0, abs=1e-9)

    def test_zero_iterations_flagged(self):
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 0.5)
        result = nonellipsoid_fixed_point(cs, self.quartic_surface(), fb,
                                          [1.0, 0.0], theta=0.0, max_iters=0)
        assert not result.converged
        assert result.iterations == 0
        assert isinstance(result.solution, ModelSolution)

    def test_general_surface_validation(self):
        bad = GeneralLimitSurface(value=lambda F: float(F @ F) + 1.0,
                                  gradient=lambda F: 2.0 * F,
                                  hessian=lambda F: 2.0 * np.eye(3))
        with pytest.raises(ValueError):
            bad.validate()


class TestFeedbackModel:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            FeedbackModel([[1.0, 0.5], [0.0, 1.0]], 0.1)

    def test_rejects_negative_definite(self):
        with pytest.raises(ValueError):
            FeedbackModel(-np.eye(2), 0.1)

    def test_rejects_negative_c(self):
        with pytest.raises(ValueError):
            FeedbackModel(np.eye(2), -0.1)

    def test_zero_b_allowed_without_guarantee(self):
        fb = FeedbackModel(np.zeros((2, 2)), 1.0)
        assert not fb.guarantees_existence
        assert FeedbackModel.identity(2, 0.5).guarantees_existence


class TestCopositivityOfAssembledMatrices:
    def test_two_finger_disk_matrix_certificate(self):
        from quasistatic2d.lcp import copositivity_certificate
        from quasistatic2d.scenes import builtin_scene

        scene = builtin_scene("two_finger_disk_symmetric")
        q0 = scene.manipulator.initial_config()
        cs = contact_candidates(scene.object_shape, scene.object_pose,
                                scene.manipulator, q0, [], scene.mu_fingers,
                                [], 1e-9)
        cs = contact_jacobians(cs, scene.object_pose, scene.manipulator, q0)
        fb = FeedbackModel.identity(4, 0.01)
        vlcp = assemble_velocity_lcp(cs, np.eye(3), fb,
                                     scene.commands.value_at(0.0))
        report = copositivity_certificate(vlcp.problem.M, trials=1000, seed=0)
        assert report.passed

        # independent oracle: the quadratic form decomposes into three
        # individually nonnegative terms for every z >= 0
        rng = np.random.default_rng(1)
        k = cs.k
        for _ in range(200):
            z = np.abs(rng.normal(size=vlcp.problem.n))
            lam = z[:3 * k]
            F_o = cs.object_jacobian().T @ lam
            F_m = cs.manipulator_jacobian().T @ lam
            sigma = z[3 * k:]
            terms = (float(F_o @ vlcp.A @ F_o),
                     float(F_m @ fb.gain @ F_m),
                     float(sigma @ cs.mu_diag @ z[:k]))
            assert all(t >= -1e-12 for t in terms)
            assert float(z @ vlcp.problem.M @ z) >= -1e-12


class TestSolveErrorPaths:
    def test_ray_with_definite_gain_raises_with_dump(self):
        from quasistatic2d.errors import TheoremViolationError
        from quasistatic2d.lcp import LcpProblem
        from quasistatic2d.model import VelocityLcp

        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 1.0)
        # hand-built inconsistent instance: infeasible problem paired with a
        # feedback model that promises existence
        lying = VelocityLcp(LcpProblem(np.zeros((4, 4)), [-1.0, 0, 0, 0]),
                            cs, np.eye(3), fb, np.array([1.0, 0.0]))
        with pytest.raises(TheoremViolationError) as excinfo:
            solve_instantaneous(lying)
        assert excinfo.value.dump is not None
        assert excinfo.value.dump["q"][0] == -1.0

    def test_pivot_limit_raises(self):
        from quasistatic2d.errors import PivotLimitError
        from quasistatic2d.lcp import LcpProblem, SolverConfig as SC, solve_lemke
        from quasistatic2d.model import VelocityLcp

        # find a 4-variable instance needing more than 4 pivots, then wrap it
        rng = np.random.default_rng(12)
        hard = None
        for _ in range(200):
            R = rng.normal(size=(4, 4))
            problem = LcpProblem(R @ R.T, rng.normal(size=4))
            sol = solve_lemke(problem)
            if sol.status is LcpStatus.SOLVED and sol.pivots > 4:
                hard = problem
                break
        assert hard is not None
        cs, _ = headon_contacts()
        fb = FeedbackModel.identity(2, 1.0)
        vlcp = VelocityLcp(hard, cs, np.eye(3), fb, np.array([1.0, 0.0]))
        with pytest.raises(PivotLimitError):
            solve_instantaneous(vlcp, SC(max_pivots=4, eps_feas=0.0,
                                         eps_comp=0.0))
