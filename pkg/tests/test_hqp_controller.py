import numpy as np
import pytest

from balance_assist.hqp_controller import HqpConfig, HqpController
from balance_assist.robot_model import JointState, Pose6, RobotModel

Q_PREF = np.array([0.0, -1.2, 1.6, -1.97, -1.571, 0.0])


def stacked_oracle(J, xdot, target):
    """Minimum-norm primary solution, then closest point to ``target`` on it."""
    q1 = np.linalg.pinv(J) @ xdot
    kkt = np.block([[np.eye(9), J.T], [J, np.zeros((6, 6))]])
    rhs = np.concatenate([target, J @ q1])
    return np.linalg.solve(kkt, rhs)[:9]


class TestSolveHqp:
    def setup_method(self):
        self.config = HqpConfig(velocity_limits=np.full(9, 1e6))
        self.controller = HqpController(self.config)
        self.rng = np.random.default_rng(3)

    def test_matches_two_stage_oracle(self):
        for _ in range(1000):
            J = self.rng.standard_normal((6, 9))
            xdot = self.rng.standard_normal(6)
            q = JointState(np.zeros(3), self.rng.uniform(-np.pi, np.pi, 6))
            target = np.zeros(9)
            target[3:] = self.config.secondary_gain * (Q_PREF - q.arm_q)
            solution = self.controller.solve_hqp(J, xdot, q)
            np.testing.assert_allclose(
                solution.qdot, stacked_oracle(J, xdot, target), atol=1e-6
            )

    def test_secondary_never_degrades_primary(self):
        for _ in range(200):
            J = self.rng.standard_normal((6, 9))
            xdot = self.rng.standard_normal(6)
            q = JointState(np.zeros(3), self.rng.uniform(-np.pi, np.pi, 6))
            at_pref = JointState(np.zeros(3), Q_PREF.copy())
            with_posture = self.controller.solve_hqp(J, xdot, q)
            without = self.controller.solve_hqp(J, xdot, at_pref)
            assert with_posture.primary_residual <= without.primary_residual + 1e-8

    def test_at_preferred_posture_gives_pseudoinverse(self):
        J = self.rng.standard_normal((6, 9))
        xdot = self.rng.standard_normal(6)
        q = JointState(np.zeros(3), Q_PREF.copy())
        solution = self.controller.solve_hqp(J, xdot, q)
        np.testing.assert_allclose(
            solution.qdot, np.linalg.pinv(J) @ xdot, atol=1e-8
        )

    def test_zero_task_moves_in_null_space(self):
        J = self.rng.standard_normal((6, 9))
        q = JointState(np.zeros(3), Q_PREF + 0.2)
        solution = self.controller.solve_hqp(J, np.zeros(6), q)
        assert np.linalg.norm(solution.qdot) > 1e-3
        np.testing.assert_allclose(J @ solution.qdot, np.zeros(6), atol=1e-10)

    def test_rank_deficient_uses_fallback_damping(self):
        J = np.zeros((6, 9))
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        solution = self.controller.solve_hqp(
            J, np.ones(6), JointState(np.zeros(3), Q_PREF.copy())
        )
        assert solution.rank_deficient
        assert solution.damping == pytest.approx(1e-3)
        assert np.all(np.isfinite(solution.qdot))

    def test_velocity_limits_scale_uniformly(self):
        controller = HqpController()
        J = self.rng.standard_normal((6, 9))
        xdot = 100.0 * self.rng.standard_normal(6)
        solution = controller.solve_hqp(J, xdot, JointState(np.zeros(3), Q_PREF))
        limits = controller.config.velocity_limits
        assert solution.scale < 1.0
        assert np.all(np.abs(solution.qdot) <= limits + 1e-12)

    def test_rejects_bad_inputs(self):
        q = JointState(np.zeros(3), Q_PREF)
        with pytest.raises(ValueError, match="6x9"):
            self.controller.solve_hqp(np.zeros((6, 6)), np.zeros(6), q)
        with pytest.raises(ValueError, match="finite"):
            self.controller.solve_hqp(
                np.zeros((6, 9)), np.array([np.nan, 0, 0, 0, 0, 0]), q
            )


class TestClik:
    def setup_method(self):
        self.robot = RobotModel()
        self.controller = HqpController(robot=self.robot)

    def test_clik_velocity(self):
        x_d = Pose6(np.array([1.0, 0.0, 0.0]))
        x = Pose6(np.zeros(3))
        xdot_d = np.array([0.1, 0, 0, 0, 0, 0])
        twist = self.controller.clik_velocity(x_d, xdot_d, x, gain=2.0)
        np.testing.assert_allclose(twist, [2.1, 0, 0, 0, 0, 0])

    def test_closed_loop_converges(self):
        q = JointState(np.zeros(3), Q_PREF.copy())
        start = self.robot.forward_kinematics(q)
        target = Pose6(start.position + np.array([0.05, 0.0, 0.03]), start.rotation)
        dt = 0.002
        for _ in range(500):
            solution = self.controller.step(q, target, np.zeros(6))
            q = self.robot.integrate_joints(q, solution.qdot, dt)
        reached = self.robot.forward_kinematics(q)
        assert np.linalg.norm(reached.position - target.position) < 1e-4

    def test_clik_decays_within_five_time_constants(self):
        q = JointState(np.zeros(3), Q_PREF.copy())
        start = self.robot.forward_kinematics(q)
        target = Pose6(start.position + np.array([0.01, 0.0, 0.005]), start.rotation)
        gain = self.controller.config.clik_gain[0]
        dt = 0.001
        errors = []
        for _ in range(int(round(5.0 / gain / dt))):
            solution = self.controller.step(q, target, np.zeros(6))
            q = self.robot.integrate_joints(q, solution.qdot, dt)
            reached = self.robot.forward_kinematics(q)
            errors.append(np.linalg.norm(reached.position - target.position))
        assert np.all(np.diff(errors) < 0.0)
        assert errors[-1] < 1e-4

    def test_track_matches_step(self):
        q = JointState(np.array([0.1, -0.2, 0.3]), Q_PREF + 0.1)
        target = Pose6(np.array([0.3, -0.4, 1.0]))
        twist = np.array([0.05, 0.0, -0.02, 0.0, 0.1, 0.0])
        x_meas, J = self.robot.kinematics(q)
        a = self.controller.step(q, target, twist)
        b = self.controller.track(q, x_meas, J, target, twist)
        np.testing.assert_array_equal(a.qdot, b.qdot)

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="Gains"):
            HqpConfig(secondary_gain=0.0)
        with pytest.raises(ValueError, match="tolerance"):
            HqpConfig(tolerance=0.1)
