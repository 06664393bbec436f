import numpy as np
import pytest

from balance_assist.human_model import SupportRegion
from balance_assist.robot_model import Pose6
from balance_assist.strategies import (
    BalanceState,
    BalanceStateMachine,
    MirrorLine,
    ReferenceCommand,
    ReferenceGenerator,
    Strategy,
    StrategyParams,
    reflect,
)

REGION = SupportRegion(
    sp_lo=np.array([-0.10, -0.20]),
    sp_hi=np.array([0.30, 0.20]),
    dz_lo=np.array([-0.05, -0.10]),
    dz_hi=np.array([0.12, 0.10]),
)


def spring_force(command, position):
    """Steady-state spring force the command renders at ``position``."""
    K = np.zeros((6, 6))
    K[:3, :3] = command.R_WP @ np.diag(command.k_p[:3]) @ command.R_WP.T
    e = np.zeros(6)
    e[:3] = position - command.x_ref.position
    return -(K @ e)[:3]


class TestStateMachine:
    def setup_method(self):
        self.gen = ReferenceGenerator(Strategy.MBA, seed=1)
        self.sm = self.gen.initial_machine()
        self.ee = Pose6(np.array([0.6, 0.0, 1.0]))

    def test_stays_stable_inside(self):
        sm = self.gen.update_state(np.array([0.0, 0.0]), REGION, self.sm, self.ee)
        sm = self.gen.update_state(np.array([0.1, 0.05]), REGION, sm, self.ee)
        assert sm.state == BalanceState.STABLE
        assert sm.x_star is None and sm.mirror is None

    def test_front_crossing_latches(self):
        sm = self.gen.update_state(np.array([0.125, 0.0]), REGION, self.sm, self.ee)
        assert sm.state == BalanceState.UNSTABLE
        assert sm.mirror.face == "front"
        np.testing.assert_array_equal(sm.mirror.normal, [1.0, 0.0])
        np.testing.assert_array_equal(sm.x_star.position, self.ee.position)

    def test_latch_holds_while_outside(self):
        sm = self.gen.update_state(np.array([0.125, 0.0]), REGION, self.sm, self.ee)
        moved = Pose6(np.array([0.7, 0.0, 1.0]))
        again = self.gen.update_state(np.array([0.15, 0.0]), REGION, sm, moved)
        assert again is sm

    def test_reentry_then_back_exit(self):
        sm = self.gen.update_state(np.array([0.125, 0.0]), REGION, self.sm, self.ee)
        sm = self.gen.update_state(np.array([0.0, 0.0]), REGION, sm, self.ee)
        assert sm.state == BalanceState.STABLE
        assert sm.x_star is None
        other = Pose6(np.array([0.5, 0.0, 1.0]))
        sm = self.gen.update_state(np.array([-0.06, 0.0]), REGION, sm, other)
        assert sm.mirror.face == "back"
        np.testing.assert_array_equal(sm.x_star.position, other.position)

    def test_corner_exit_follows_cop_velocity(self):
        corner = np.array([0.13, 0.11])
        sideways = self.gen.update_state(
            corner, REGION, self.sm, self.ee, cop_velocity=np.array([0.01, 0.5])
        )
        assert sideways.mirror.face == "left"
        tie = self.gen.update_state(
            corner, REGION, self.sm, self.ee, cop_velocity=np.array([0.3, 0.3])
        )
        assert tie.mirror.face == "front"
        unknown = self.gen.update_state(corner, REGION, self.sm, self.ee)
        assert unknown.mirror.face == "front"

    def test_invalid_latches(self):
        with pytest.raises(ValueError, match="Unstable"):
            BalanceStateMachine(state=BalanceState.UNSTABLE)


class TestMirror:
    def setup_method(self):
        self.line = MirrorLine(np.array([0.12, 0.0]), np.array([1.0, 0.0]), "front")

    def test_reflection(self):
        np.testing.assert_allclose(
            reflect(np.array([0.17, 0.0]), self.line), [0.07, 0.0], atol=1e-15
        )

    def test_involution(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            normal = rng.normal(size=2)
            line = MirrorLine(rng.normal(size=2), normal / np.linalg.norm(normal), "x")
            point = rng.normal(size=2)
            np.testing.assert_allclose(
                reflect(reflect(point, line), line), point, atol=1e-12
            )


class TestFsa:
    def setup_method(self):
        self.gen = ReferenceGenerator(Strategy.FSA, seed=2)
        self.x_star = Pose6(np.array([0.6, 0.0, 1.0]))
        self.sm = self.gen.update_state(
            np.array([0.13, 0.0]), REGION, self.gen.initial_machine(), self.x_star
        )

    def test_first_direction(self):
        r = self.x_star.position + np.array([0.08, 0.0, 0.02])
        command = self.gen.fsa_reference(self.sm, r)
        np.testing.assert_allclose(command.p1, [0.970, 0.0, 0.243], atol=1e-3)
        assert command.mode == "coupled"
        assert command.x_ref is self.sm.x_star

    def test_spring_pulls_back_to_latch(self):
        offset = np.array([0.08, 0.0, 0.02])
        r = self.x_star.position + offset
        command = self.gen.fsa_reference(self.sm, r)
        expected = -400.0 * np.linalg.norm(offset) * command.p1
        np.testing.assert_allclose(spring_force(command, r), expected, atol=1e-9)

    def test_stiffness_and_damping(self):
        command = self.gen.fsa_reference(
            self.sm, self.x_star.position + np.array([0.05, 0, 0])
        )
        np.testing.assert_array_equal(command.k_p, [400.0, 0, 0, 0, 0, 0])
        assert command.d_p[0] == pytest.approx(2 * np.sqrt(400.0 * 6.0))
        np.testing.assert_array_equal(command.d_p[1:], [35.0, 35.0, 2.0, 2.0, 2.0])

    def test_degenerate_lever_uses_border_normal(self):
        command = self.gen.fsa_reference(self.sm, self.x_star.position)
        np.testing.assert_array_equal(command.p1, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(
            spring_force(command, self.x_star.position), np.zeros(3), atol=1e-15
        )

    def test_principal_frame_orthonormal_for_many_seeds(self):
        r = self.x_star.position + np.array([0.03, 0.01, -0.02])
        for seed in range(1000):
            gen = ReferenceGenerator(Strategy.FSA, seed=seed)
            sm = gen.update_state(
                np.array([0.13, 0.0]), REGION, gen.initial_machine(), self.x_star
            )
            R = gen.fsa_reference(sm, r).R_WP
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    def test_p2_choice_does_not_change_force(self):
        r = self.x_star.position + np.array([0.03, 0.01, -0.02])
        forces = []
        for seed in range(5):
            gen = ReferenceGenerator(Strategy.FSA, seed=seed)
            sm = gen.update_state(
                np.array([0.13, 0.0]), REGION, gen.initial_machine(), self.x_star
            )
            forces.append(spring_force(gen.fsa_reference(sm, r), r))
        for force in forces[1:]:
            np.testing.assert_allclose(force, forces[0], atol=1e-12)

    def test_requires_unstable(self):
        with pytest.raises(ValueError, match="Unstable"):
            self.gen.fsa_reference(self.gen.initial_machine(), np.zeros(3))

    def test_stiffness_ramp(self):
        gen = ReferenceGenerator(
            Strategy.FSA, params=StrategyParams(stiffness_ramp=0.2), seed=0
        )
        sm = gen.update_state(
            np.array([0.13, 0.0]), REGION, gen.initial_machine(), self.x_star, t=1.0
        )
        r = self.x_star.position + np.array([0.05, 0, 0])
        assert gen.fsa_reference(sm, r, t=1.1).k_p[0] == pytest.approx(200.0)
        assert gen.fsa_reference(sm, r, t=2.0).k_p[0] == pytest.approx(400.0)


class TestMba:
    def setup_method(self):
        self.gen = ReferenceGenerator(Strategy.MBA, seed=3)
        self.ee = Pose6(np.array([0.6, 0.0, 1.0]))
        self.sm = self.gen.update_state(
            np.array([0.13, 0.0]), REGION, self.gen.initial_machine(), self.ee
        )

    def test_reference_geometry(self):
        r = np.array([0.6, 0.0, 1.0])
        command = self.gen.mba_reference(self.sm, np.array([0.17, 0.0]), r, np.eye(3))
        np.testing.assert_allclose(command.x_ref.position, [0.5, 0.0, 1.0], atol=1e-12)
        np.testing.assert_array_equal(command.p1, [-1.0, 0.0, 0.0])
        assert np.linalg.norm(command.x_ref.position - r) == pytest.approx(
            0.1, abs=1e-12
        )

    def test_offset_is_twice_overshoot(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            cop = np.array([0.12 + rng.uniform(0.001, 0.1), rng.uniform(-0.1, 0.1)])
            r = rng.normal(size=3)
            command = self.gen.mba_reference(self.sm, cop, r, np.eye(3))
            delta = cop[0] - 0.12
            offset = command.x_ref.position - r
            assert np.linalg.norm(offset) == pytest.approx(2 * delta, abs=1e-12)
            assert offset[2] == 0.0
            assert command.p1[2] == 0.0

    def test_force_vanishes_at_border(self):
        r = np.array([0.6, 0.0, 1.0])
        for delta in (1e-2, 1e-3, 1e-4):
            cop = np.array([0.12 + delta, 0.0])
            command = self.gen.mba_reference(self.sm, cop, r, np.eye(3))
            force = spring_force(command, r)
            assert np.linalg.norm(force) == pytest.approx(400.0 * 2 * delta, rel=1e-6)
        on_line = self.gen.mba_reference(self.sm, np.array([0.12, 0.0]), r, np.eye(3))
        np.testing.assert_array_equal(on_line.x_ref.position, r)

    def test_keeps_orientation(self):
        theta = Pose6.from_rotvec(np.zeros(3), [0.0, 0.2, 0.0]).rotation
        command = self.gen.mba_reference(
            self.sm, np.array([0.15, 0.0]), self.ee.position, theta
        )
        np.testing.assert_array_equal(command.x_ref.rotation, theta)
        np.testing.assert_array_equal(command.k_p[3:], np.zeros(3))


class TestHwa:
    def setup_method(self):
        self.gen = ReferenceGenerator(Strategy.HWA, seed=0)

    def test_free_above_wall(self):
        command = self.gen.hwa_reference(Pose6(np.array([0.5, 0.0, 1.05])), 1.0)
        assert command.mode == "free"
        np.testing.assert_array_equal(command.k_p, np.zeros(6))

    def test_wall_pushes_up(self):
        position = np.array([0.5, 0.0, 0.95])
        command = self.gen.hwa_reference(Pose6(position), 1.0)
        assert command.mode == "coupled"
        np.testing.assert_array_equal(command.p1, [0.0, 0.0, 1.0])
        assert command.x_ref.position[2] == 1.0
        np.testing.assert_allclose(
            spring_force(command, position), [0.0, 0.0, 400.0 * 0.05], atol=1e-9
        )

    def test_no_horizontal_stiffness(self):
        command = self.gen.hwa_reference(Pose6(np.array([0.5, 0.0, 0.95])), 1.0)
        moved = np.array([0.6, 0.1, 0.95])
        force = spring_force(command, moved)
        np.testing.assert_allclose(force[:2], [0.0, 0.0], atol=1e-12)

    def test_command_uses_latched_wall(self):
        start = Pose6(np.array([0.5, 0.0, 1.0]))
        self.gen.latch_wall(start)
        sm = self.gen.update_state(
            np.array([0.13, 0.0]), REGION, self.gen.initial_machine(), start
        )
        low = Pose6(np.array([0.55, 0.0, 0.97]))
        command = self.gen.command(sm, np.array([0.13, 0.0]), low)
        assert command.x_ref.position[2] == 1.0


class TestCommand:
    def test_stable_commands_are_identical(self):
        ee = Pose6(np.array([0.6, 0.0, 1.0]))
        commands = []
        for strategy in Strategy:
            gen = ReferenceGenerator(strategy, seed=0)
            gen.latch_wall(ee)
            commands.append(gen.command(gen.initial_machine(), np.zeros(2), ee))
        for command in commands:
            assert command.mode == "free"
            np.testing.assert_array_equal(command.k_p, np.zeros(6))
            np.testing.assert_array_equal(command.d_p, commands[0].d_p)
            np.testing.assert_array_equal(command.R_WP, np.eye(3))

    def test_rank_one_stiffness(self):
        ee = Pose6(np.array([0.6, 0.0, 1.0]))
        for strategy in Strategy:
            gen = ReferenceGenerator(strategy, seed=0)
            gen.latch_wall(Pose6(np.array([0.6, 0.0, 1.1])))
            sm = gen.update_state(
                np.array([0.15, 0.0]), REGION, gen.initial_machine(), ee
            )
            moved = Pose6(np.array([0.62, 0.0, 0.99]))
            command = gen.command(sm, np.array([0.15, 0.0]), moved)
            np.testing.assert_array_equal(command.k_p[1:], np.zeros(5))

    def test_free_command_rejects_stiffness(self):
        with pytest.raises(ValueError, match="zero stiffness"):
            ReferenceCommand(
                Pose6(np.zeros(3)), np.eye(3), np.ones(6), np.ones(6), "free"
            )

    def test_measurement_noise(self):
        wrench = np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
        clean = ReferenceGenerator(params=StrategyParams(force_noise_std=0.0), seed=0)
        np.testing.assert_array_equal(clean.measure(wrench), wrench)
        noisy_a = ReferenceGenerator(params=StrategyParams(force_noise_std=0.5), seed=9)
        noisy_b = ReferenceGenerator(params=StrategyParams(force_noise_std=0.5), seed=9)
        a, b = noisy_a.measure(wrench), noisy_b.measure(wrench)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a[:3], wrench[:3])
        np.testing.assert_array_equal(a[3:], wrench[3:])

    def test_default_sensor_is_noisy(self):
        wrench = np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
        measured = ReferenceGenerator(seed=0).measure(wrench)
        assert not np.array_equal(measured[:3], wrench[:3])


class TestSpringForce:
    def test_free_mode_renders_nothing(self):
        gen = ReferenceGenerator(Strategy.HWA, seed=0)
        command = gen.hwa_reference(Pose6(np.array([0.5, 0.0, 1.05])), 1.0)
        force = command.spring_force(np.array([0.7, 0.1, 1.2]))
        np.testing.assert_array_equal(force, np.zeros(3))

    def test_wall_force_is_vertical(self):
        gen = ReferenceGenerator(Strategy.HWA, seed=0)
        position = np.array([0.5, 0.0, 0.95])
        command = gen.hwa_reference(Pose6(position), 1.0)
        np.testing.assert_allclose(
            command.spring_force(position), [0.0, 0.0, 20.0], atol=1e-9
        )

    def test_matches_stiffness_matrix(self):
        gen = ReferenceGenerator(Strategy.FSA, seed=2)
        x_star = Pose6(np.array([0.6, 0.0, 1.0]))
        sm = gen.update_state(
            np.array([0.13, 0.0]), REGION, gen.initial_machine(), x_star
        )
        r = x_star.position + np.array([0.08, 0.0, 0.02])
        command = gen.fsa_reference(sm, r)
        np.testing.assert_allclose(
            command.spring_force(r), spring_force(command, r), atol=1e-9
        )
        assert command.spring_force(r)[0] < 0.0
