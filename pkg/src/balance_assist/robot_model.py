"""Kinematics of the omni-directional base carrying a 6-DoF arm."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

# Twist and wrench are plain 6-vectors: linear part first, angular part second.
Twist6 = np.ndarray
Wrench6 = np.ndarray


def _ur16e_dh() -> np.ndarray:
    # Standard DH rows (a, alpha, d, theta_offset), metres and radians.
    return np.array(
        [
            [0.0, np.pi / 2, 0.1807, 0.0],
            [-0.4784, 0.0, 0.0, 0.0],
            [-0.36, 0.0, 0.0, 0.0],
            [0.0, np.pi / 2, 0.17415, 0.0],
            [0.0, -np.pi / 2, 0.11985, 0.0],
            [0.0, 0.0, 0.11655, 0.0],
        ]
    )


@dataclass(frozen=True)
class KinematicParams:
    """Geometry and limits of the mobile manipulator.

    Attributes:
        dh: Six standard-DH rows ``(a, alpha, d, theta_offset)`` of the arm.
        mount_xyz: Arm base position on the mobile base (m).
        mount_yaw: Arm base yaw on the mobile base (rad).
        handle_offset: Handle origin along the flange Z axis (m).
        arm_lower: Lower arm joint limits (rad).
        arm_upper: Upper arm joint limits (rad).
        velocity_limits: Base ``(vx, vy, yaw rate)`` plus six arm joint rate
            limits.
    """

    dh: np.ndarray = field(default_factory=_ur16e_dh)
    mount_xyz: np.ndarray = field(
        default_factory=lambda: np.array([0.20, 0.0, 0.60])
    )
    mount_yaw: float = 0.0
    handle_offset: float = 0.10
    arm_lower: np.ndarray = field(default_factory=lambda: np.full(6, -2 * np.pi))
    arm_upper: np.ndarray = field(default_factory=lambda: np.full(6, 2 * np.pi))
    velocity_limits: np.ndarray = field(
        default_factory=lambda: np.array(
            [1.0, 1.0, 1.5, 2.09, 2.09, 3.14, 3.14, 3.14, 3.14]
        )
    )

    def __post_init__(self) -> None:
        dh = np.asarray(self.dh, dtype=float)
        if dh.shape != (6, 4):
            raise ValueError("DH table must have six rows of (a, alpha, d, offset)")
        if np.any(np.hypot(dh[:, 0], dh[:, 2]) <= 0):
            raise ValueError("Link lengths must be positive")
        if self.handle_offset < 0:
            raise ValueError("Handle offset must be non-negative")
        if np.any(np.asarray(self.arm_lower) >= np.asarray(self.arm_upper)):
            raise ValueError("Joint lower limits must be below upper limits")
        if np.any(np.asarray(self.velocity_limits) <= 0):
            raise ValueError("Velocity limits must be positive")


@dataclass(frozen=True)
class JointState:
    """Whole-body configuration: planar base pose, arm angles, last rates."""

    base_pose: np.ndarray
    arm_q: np.ndarray
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(9))
    t: float = 0.0

    def as_vector(self) -> np.ndarray:
        """Stack ``(x, y, yaw, q1..q6)`` into a 9-vector."""
        return np.concatenate([self.base_pose, self.arm_q])

    @classmethod
    def from_vector(
        cls, q: np.ndarray, qdot: np.ndarray | None = None, t: float = 0.0
    ) -> "JointState":
        q = np.asarray(q, dtype=float)
        return cls(
            base_pose=q[:3].copy(),
            arm_q=q[3:].copy(),
            qdot=np.zeros(9) if qdot is None else np.asarray(qdot, dtype=float),
            t=t,
        )


@dataclass(frozen=True)
class Pose6:
    """World-frame pose: position and rotation matrix."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    @classmethod
    def from_rotvec(cls, position: np.ndarray, rotvec: np.ndarray) -> "Pose6":
        return cls(
            np.asarray(position, dtype=float),
            Rotation.from_rotvec(rotvec).as_matrix(),
        )

    def rotvec(self) -> np.ndarray:
        return Rotation.from_matrix(self.rotation).as_rotvec()

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(
            np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol
        )


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return float(np.pi - np.mod(np.pi - angle, 2 * np.pi))


def pose_error(x_d: Pose6, x: Pose6) -> np.ndarray:
    """Position difference and axis-angle of ``R_d R^T``, both in world frame."""
    rot_err = Rotation.from_matrix(x_d.rotation @ x.rotation.T).as_rotvec()
    return np.concatenate([x_d.position - x.position, rot_err])


def scale_to_limits(qdot: np.ndarray, limits: np.ndarray) -> tuple[np.ndarray, float]:
    """Scale a rate vector uniformly so no component exceeds its limit."""
    ratios = np.abs(qdot) / limits
    worst = float(np.max(ratios)) if ratios.size else 0.0
    if worst <= 1.0:
        return qdot, 1.0
    scale = 1.0 / worst
    scaled = qdot * scale
    # Rounding can leave the saturated component a hair above its limit.
    return np.clip(scaled, -limits, limits), scale


def _dh_transform(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _planar_transform(x: float, y: float, z: float, yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    T = np.eye(4)
    T[:2, :2] = [[c, -s], [s, c]]
    T[:3, 3] = [x, y, z]
    return T


class RobotModel:
    """
    Forward kinematics, whole-body Jacobian and joint integration.

    The base is an ideal holonomic velocity source; its rates are expressed in
    the world frame as ``(vx, vy, yaw rate)``.
    """

    def __init__(self, params: KinematicParams | None = None) -> None:
        self.params = params if params is not None else KinematicParams()
        self._mount = _planar_transform(*self.params.mount_xyz, self.params.mount_yaw)
        self._handle = np.eye(4)
        self._handle[2, 3] = self.params.handle_offset

    def _frames(self, q: JointState) -> list[np.ndarray]:
        """World transforms of the arm base, each DH frame and the handle."""
        x, y, yaw = q.base_pose
        T = _planar_transform(x, y, 0.0, yaw) @ self._mount
        frames = [T]
        for row, angle in zip(self.params.dh, q.arm_q):
            a, alpha, d, offset = row
            T = T @ _dh_transform(a, alpha, d, angle + offset)
            frames.append(T)
        frames.append(T @ self._handle)
        return frames

    def forward_kinematics(self, q: JointState) -> Pose6:
        """
        Pose of the handle frame in the world.

        Args:
            q: Whole-body configuration.

        Returns:
            Handle pose (position in m, rotation matrix).
        """
        T = self._frames(q)[-1]
        return Pose6(T[:3, 3].copy(), T[:3, :3].copy())

    def jacobian(self, q: JointState) -> np.ndarray:
        """
        Geometric 6x9 Jacobian mapping whole-body rates to the handle twist.

        Columns follow ``(vx, vy, yaw rate, q1..q6)``; rows are the linear
        then angular world-frame velocity of the handle origin.
        """
        return self._jacobian(q, self._frames(q))

    def kinematics(self, q: JointState) -> tuple[Pose6, np.ndarray]:
        """Handle pose and Jacobian from a single pass over the chain."""
        frames = self._frames(q)
        T = frames[-1]
        pose = Pose6(T[:3, 3].copy(), T[:3, :3].copy())
        return pose, self._jacobian(q, frames)

    @staticmethod
    def _jacobian(q: JointState, frames: list[np.ndarray]) -> np.ndarray:
        p_ee = frames[-1][:3, 3]
        J = np.zeros((6, 9))
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        ez = np.array([0.0, 0.0, 1.0])
        base_origin = np.array([q.base_pose[0], q.base_pose[1], 0.0])
        J[:3, 2] = np.cross(ez, p_ee - base_origin)
        J[3:, 2] = ez
        # Joint i turns about the z axis of the frame preceding it.
        for i in range(6):
            z = frames[i][:3, 2]
            o = frames[i][:3, 3]
            J[:3, 3 + i] = np.cross(z, p_ee - o)
            J[3:, 3 + i] = z
        return J

    def ee_twist(self, q: JointState, qdot: np.ndarray) -> Twist6:
        """Handle twist produced by the whole-body rates ``qdot``."""
        return self.jacobian(q) @ np.asarray(qdot, dtype=float)

    def integrate_joints(
        self, q: JointState, qdot: np.ndarray, dt: float
    ) -> JointState:
        """
        Explicit Euler update of the whole-body configuration.

        Rates above the velocity limits are scaled down uniformly, the base yaw
        is wrapped into (-pi, pi] and arm angles are held inside their limits.

        Raises:
            ValueError: If ``dt`` is not positive.
        """
        if dt <= 0:
            raise ValueError("Time step must be positive")
        qdot, _ = scale_to_limits(
            np.asarray(qdot, dtype=float), self.params.velocity_limits
        )
        base = q.base_pose + qdot[:3] * dt
        base[2] = wrap_angle(base[2])
        arm = np.clip(
            q.arm_q + qdot[3:] * dt, self.params.arm_lower, self.params.arm_upper
        )
        return JointState(base, arm, qdot.copy(), q.t + dt)
