"""Task-space admittance rendered with principal-axis parameters."""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import block_diag
from scipy.spatial.transform import Rotation

from .robot_model import Pose6, Twist6, Wrench6, pose_error

if TYPE_CHECKING:
    from .strategies import ReferenceCommand

MAX_DT = 0.005


@dataclass(frozen=True)
class AdmittanceParams:
    """
    Stable-state admittance parameters, equal along every direction.

    Attributes:
        mass: Translational virtual mass (kg).
        inertia: Rotational virtual inertia (kg*m^2).
        damping: Translational damping (N*s/m).
        rotational_damping: Rotational damping (N*m*s).
    """

    mass: float = 6.0
    inertia: float = 0.3
    damping: float = 35.0
    rotational_damping: float = 2.0

    def __post_init__(self) -> None:
        if self.mass <= 0 or self.inertia <= 0:
            raise ValueError("Virtual mass and inertia must be positive")
        if self.damping <= 0 or self.rotational_damping <= 0:
            raise ValueError("Damping must be positive")

    def mass_vector(self) -> np.ndarray:
        return np.array([self.mass] * 3 + [self.inertia] * 3)

    def damping_vector(self) -> np.ndarray:
        return np.array([self.damping] * 3 + [self.rotational_damping] * 3)


@dataclass(frozen=True)
class PrincipalAdmittance:
    """Diagonal mass, damping and stiffness in the principal frame ``R_WP``."""

    m_p: np.ndarray
    d_p: np.ndarray
    k_p: np.ndarray = field(default_factory=lambda: np.zeros(6))
    R_WP: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.m_p) <= 0):
            raise ValueError("Principal masses must be positive")
        if np.any(np.asarray(self.d_p) <= 0):
            raise ValueError("Principal damping must be positive")
        if np.any(np.asarray(self.k_p) < 0):
            raise ValueError("Principal stiffness must be non-negative")
        R = np.asarray(self.R_WP)
        if not (
            np.allclose(R.T @ R, np.eye(3), atol=1e-9)
            and abs(np.linalg.det(R) - 1.0) < 1e-9
        ):
            raise ValueError("R_WP must be a rotation matrix")


@dataclass(frozen=True)
class AdmittanceState:
    """Desired handle pose and twist produced by the admittance."""

    pose: Pose6
    twist: Twist6 = field(default_factory=lambda: np.zeros(6))


class AdmittanceController:
    """
    Virtual mass-spring-damper driven by the measured human wrench.

    The linear dynamics ``M a + D v + K (x - x_ref) = wrench`` are advanced with
    the implicit trapezoidal rule; the pose then moves with the step-average
    twist.
    """

    def __init__(self, params: AdmittanceParams | None = None) -> None:
        self.params = params if params is not None else AdmittanceParams()

    def rotate_to_world(self, diag6: np.ndarray, R_WP: np.ndarray) -> np.ndarray:
        """Congruence ``H diag(diag6) H^T`` with ``H = diag(R_WP, R_WP)``."""
        H = block_diag(R_WP, R_WP)
        return H @ np.diag(np.asarray(diag6, dtype=float)) @ H.T

    def critical_damping(self, k: float, m: float) -> float:
        """
        Damping giving a critically damped axis, ``2 sqrt(k m)``.

        Raises:
            ValueError: If ``k`` is negative or ``m`` is not positive.
        """
        if k < 0:
            raise ValueError("Stiffness must be non-negative")
        if m <= 0:
            raise ValueError("Mass must be positive")
        return float(2.0 * np.sqrt(k * m))

    def stable_principal(self) -> PrincipalAdmittance:
        """Free-following parameters used while the CoP is inside the DZ."""
        return PrincipalAdmittance(
            self.params.mass_vector(), self.params.damping_vector()
        )

    def step_coupled(
        self,
        state: AdmittanceState,
        wrench: Wrench6,
        x_ref: Pose6,
        adm: PrincipalAdmittance,
        dt: float,
    ) -> AdmittanceState:
        """
        Advance the full law with stiffness about ``x_ref``.

        Raises:
            ValueError: If ``dt`` is outside (0, 5 ms].
        """
        M = self.rotate_to_world(adm.m_p, adm.R_WP)
        D = self.rotate_to_world(adm.d_p, adm.R_WP)
        K = self.rotate_to_world(adm.k_p, adm.R_WP)
        return self._advance(state, wrench, x_ref, M, D, K, dt)

    def step_free(
        self,
        state: AdmittanceState,
        wrench: Wrench6,
        adm: PrincipalAdmittance,
        dt: float,
    ) -> AdmittanceState:
        """Advance ``M a + D v = wrench`` (stiffness ignored)."""
        M = self.rotate_to_world(adm.m_p, adm.R_WP)
        D = self.rotate_to_world(adm.d_p, adm.R_WP)
        K = self.rotate_to_world(np.zeros(6), adm.R_WP)
        return self._advance(state, wrench, state.pose, M, D, K, dt)

    def step(
        self,
        state: AdmittanceState,
        wrench: Wrench6,
        command: "ReferenceCommand",
        dt: float,
    ) -> AdmittanceState:
        """Advance according to a reference-generator command."""
        adm = PrincipalAdmittance(
            self.params.mass_vector(), command.d_p, command.k_p, command.R_WP
        )
        if command.mode == "free":
            return self.step_free(state, wrench, adm, dt)
        return self.step_coupled(state, wrench, command.x_ref, adm, dt)

    def virtual_energy(
        self, state: AdmittanceState, x_ref: Pose6, adm: PrincipalAdmittance
    ) -> float:
        """Kinetic plus spring energy stored in the virtual system."""
        M = self.rotate_to_world(adm.m_p, adm.R_WP)
        K = self.rotate_to_world(adm.k_p, adm.R_WP)
        e = pose_error(state.pose, x_ref)
        v = state.twist
        return float(0.5 * v @ M @ v + 0.5 * e @ K @ e)

    def _advance(
        self,
        state: AdmittanceState,
        wrench: Wrench6,
        x_ref: Pose6,
        M: np.ndarray,
        D: np.ndarray,
        K: np.ndarray,
        dt: float,
    ) -> AdmittanceState:
        if not 0 < dt <= MAX_DT:
            raise ValueError("Time step must lie in (0, 5 ms]")
        v0 = state.twist
        e0 = pose_error(state.pose, x_ref)
        lhs = M / dt + D / 2 + K * (dt / 4)
        rhs = (
            np.asarray(wrench, dtype=float)
            - K @ e0
            + (M / dt - D / 2 - K * (dt / 4)) @ v0
        )
        v1 = np.linalg.solve(lhs, rhs)
        v_mid = 0.5 * (v0 + v1)
        position = state.pose.position + v_mid[:3] * dt
        turn = Rotation.from_rotvec(v_mid[3:] * dt).as_matrix()
        rotation = turn @ state.pose.rotation
        return AdmittanceState(Pose6(position, rotation), v1)
