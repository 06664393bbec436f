"""Two-level hierarchical whole-body velocity controller."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .robot_model import (
    JointState,
    Pose6,
    RobotModel,
    Twist6,
    pose_error,
    scale_to_limits,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HqpConfig:
    """
    Gains and numerical settings of the whole-body controller.

    Attributes:
        clik_gain: Pose-error feedback gain per task axis (1/s).
        preferred_arm_config: Arm posture pulled for at the lower level (rad).
        secondary_gain: Gain of the preferred-posture task (1/s).
        velocity_limits: Whole-body rate limits ``(vx, vy, yaw, q1..q6)``.
        tolerance: Relative singular-value threshold of the null-space basis.
        damping: Damping factor of the primary least-squares solve.
        fallback_damping: Damping used when the smallest singular value drops
            below ``singular_threshold``.
        singular_threshold: Smallest singular value that still counts as
            well-conditioned.
    """

    clik_gain: np.ndarray = field(default_factory=lambda: np.full(6, 20.0))
    preferred_arm_config: np.ndarray = field(
        default_factory=lambda: np.array([0.0, -1.2, 1.6, -1.97, -1.571, 0.0])
    )
    secondary_gain: float = 1.0
    velocity_limits: np.ndarray = field(
        default_factory=lambda: np.array(
            [1.0, 1.0, 1.5, 2.09, 2.09, 3.14, 3.14, 3.14, 3.14]
        )
    )
    tolerance: float = 1e-9
    damping: float = 1e-6
    fallback_damping: float = 1e-3
    singular_threshold: float = 1e-4

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.clik_gain) <= 0) or self.secondary_gain <= 0:
            raise ValueError("Gains must be positive")
        if not 0 < self.tolerance <= 1e-3:
            raise ValueError("Solver tolerance must lie in (0, 1e-3]")
        if np.asarray(self.preferred_arm_config).shape != (6,):
            raise ValueError("Preferred arm configuration must have six angles")
        if np.any(np.asarray(self.velocity_limits) <= 0):
            raise ValueError("Velocity limits must be positive")


@dataclass(frozen=True)
class HqpSolution:
    """Whole-body rates plus diagnostics of one solve."""

    qdot: np.ndarray
    primary_residual: float
    rank_deficient: bool
    damping: float
    scale: float


class HqpController:
    """
    Closed-loop inverse kinematics at top priority, preferred arm posture below.

    The primary task is solved by damped least squares; the posture task is
    projected into the exact null space of the task Jacobian, so it never
    changes the primary residual.
    """

    def __init__(
        self, config: HqpConfig | None = None, robot: RobotModel | None = None
    ) -> None:
        self.config = config if config is not None else HqpConfig()
        self.robot = robot if robot is not None else RobotModel()

    def clik_velocity(
        self, x_d: Pose6, xdot_d: Twist6, x_meas: Pose6, gain: np.ndarray | None = None
    ) -> Twist6:
        """Feed-forward twist plus proportional pose-error feedback."""
        gain = self.config.clik_gain if gain is None else np.broadcast_to(gain, (6,))
        return np.asarray(xdot_d, dtype=float) + gain * pose_error(x_d, x_meas)

    def solve_hqp(self, J: np.ndarray, xdot_star: Twist6, q: JointState) -> HqpSolution:
        """
        Solve the two-level hierarchy for whole-body joint rates.

        Args:
            J: 6x9 task Jacobian.
            xdot_star: Desired handle twist from CLIK.
            q: Current configuration (arm angles feed the posture task).

        Returns:
            Rates scaled into the velocity limits, with solve diagnostics.

        Raises:
            ValueError: For non-finite inputs or a wrongly shaped Jacobian.
        """
        J = np.asarray(J, dtype=float)
        xdot_star = np.asarray(xdot_star, dtype=float)
        if J.shape != (6, 9):
            raise ValueError("Jacobian must be 6x9")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(xdot_star))):
            raise ValueError("Jacobian and task twist must be finite")
        cfg = self.config

        U, s, Vt = np.linalg.svd(J)
        rank_deficient = bool(s[-1] < cfg.singular_threshold)
        lam = cfg.fallback_damping if rank_deficient else cfg.damping
        if rank_deficient:
            logger.debug("HQP damping raised to %g (sigma_min=%.3e)", lam, s[-1])

        # Level 1: damped least squares, minimum norm.
        qdot = Vt[:6].T @ ((s / (s**2 + lam**2)) * (U.T @ xdot_star))

        # Level 2: pull towards the posture rate inside null(J).
        rank = int(np.sum(s > cfg.tolerance * max(s[0], 1.0)))
        Z = Vt[rank:].T
        target = np.zeros(9)
        target[3:] = cfg.secondary_gain * (cfg.preferred_arm_config - q.arm_q)
        qdot = qdot + Z @ (Z.T @ target)

        qdot, scale = scale_to_limits(qdot, np.asarray(cfg.velocity_limits))
        residual = float(np.linalg.norm(J @ qdot - xdot_star))
        return HqpSolution(qdot, residual, rank_deficient, lam, scale)

    def step(self, q: JointState, x_d: Pose6, xdot_d: Twist6) -> HqpSolution:
        """Track a desired handle pose/twist from configuration ``q``."""
        x_meas, J = self.robot.kinematics(q)
        return self.track(q, x_meas, J, x_d, xdot_d)

    def track(
        self,
        q: JointState,
        x_meas: Pose6,
        J: np.ndarray,
        x_d: Pose6,
        xdot_d: Twist6,
    ) -> HqpSolution:
        """As :meth:`step`, with the handle pose and Jacobian at ``q`` given."""
        xdot_star = self.clik_velocity(x_d, xdot_d, x_meas)
        return self.solve_hqp(J, xdot_star, q)
