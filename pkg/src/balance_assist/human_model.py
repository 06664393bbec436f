"""Simulated human: sagittal inverted pendulum holding the robot handle."""

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .robot_model import Pose6, Twist6, Wrench6

logger = logging.getLogger(__name__)

GRAVITY = 9.81


class Phase(str, Enum):
    """Scripted behaviour of a subject during one voluntary fall."""

    LEAN = "lean"
    HOLD = "hold"
    RECOVER = "recover"
    STEPPED = "stepped"
    RECOVERED = "recovered"


@dataclass(frozen=True)
class HumanParams:
    """
    Anthropometrics and grasp properties of one subject.

    Attributes:
        mass: Body mass (kg).
        height: Body height (m).
        com_ratio: CoM height as a fraction of body height.
        ankle: Ankle joint position in the world (m).
        upper_arm: Shoulder-to-elbow length (m).
        forearm: Elbow-to-grip length (m).
        shoulder_ratio: Shoulder height as a fraction of body height.
        hand_reach: Horizontal shoulder-to-handle distance at upright stance (m).
        arm_pitch_ratio: Fraction of the body lean the held arm follows about
            the shoulder; 1 locks the arm to the trunk.
        grip_stiffness: Hand-handle coupling stiffness (N/m).
        grip_damping: Hand-handle coupling damping (N*s/m).
        voluntary_force_ratio: Voluntary push limit as a fraction of weight.
        foot_length: Heel-to-toe length (m).
        foot_width: Foot width (m).
        stance_width: Distance between the feet centre lines (m).
        heel_ratio: Fraction of the foot behind the ankle.
        dz_lateral_ratio: Lateral DZ half-width over lateral SP half-width.
    """

    mass: float = 65.5
    height: float = 1.707
    com_ratio: float = 0.55
    ankle: np.ndarray = field(default_factory=lambda: np.zeros(3))
    upper_arm: float = 0.318
    forearm: float = 0.341
    shoulder_ratio: float = 0.818
    hand_reach: float = 0.35
    arm_pitch_ratio: float = 0.4
    grip_stiffness: float = 2000.0
    grip_damping: float = 50.0
    voluntary_force_ratio: float = 0.08
    foot_length: float = 0.259
    foot_width: float = 0.094
    stance_width: float = 0.20
    heel_ratio: float = 0.25
    dz_lateral_ratio: float = 0.68

    def __post_init__(self) -> None:
        if self.mass <= 0 or self.height <= 0:
            raise ValueError("Mass and height must be positive")
        if not 0 < self.com_ratio < 1:
            raise ValueError("CoM ratio must lie in (0, 1)")
        if self.upper_arm <= 0 or self.forearm <= 0:
            raise ValueError("Arm segment lengths must be positive")
        if self.grip_stiffness <= 0 or self.grip_damping < 0:
            raise ValueError("Grip stiffness must be positive")
        if not 0 <= self.arm_pitch_ratio <= 1:
            raise ValueError("Arm pitch ratio must lie in [0, 1]")

    @classmethod
    def from_anthropometrics(
        cls, mass: float, height: float, **overrides: float
    ) -> "HumanParams":
        """Scale segment lengths from body height."""
        values = {
            "upper_arm": 0.186 * height,
            "forearm": 0.200 * height,
            "foot_length": 0.152 * height,
            "foot_width": 0.055 * height,
        }
        values.update(overrides)
        return cls(mass=mass, height=height, **values)

    @property
    def com_length(self) -> float:
        return self.com_ratio * self.height

    @property
    def shoulder_length(self) -> float:
        return self.shoulder_ratio * self.height

    @property
    def weight(self) -> float:
        """Body weight w_h (N)."""
        return self.mass * GRAVITY

    @property
    def inertia(self) -> float:
        """Pendulum inertia about the ankle (kg*m^2)."""
        return self.mass * self.com_length**2


@dataclass(frozen=True)
class BehaviorConfig:
    """
    Scripted fall and recovery behaviour.

    Attributes:
        direction: +1 for forward falls, -1 for backward falls.
        lean_onset: Time the subject starts bending the ankles (s).
        lean_rate: Rate of the voluntary lean target (rad/s).
        lean_depth: CoP distance past the DZ at which the subject lets go (m).
        lean_timeout: Longest lean before letting go once outside the DZ (s).
        ankle_stiffness_ratio: Quiet-stance ankle stiffness over m*g*L.
        ankle_damping_ratio: Damping ratio of the quiet-stance regulator.
        hold_stiffness_ratio: Relaxed ankle stiffness over m*g*L while held.
        hold_damping_ratio: Relaxed ankle damping ratio while held.
        t_wait: Delay before pushing on the handle when still outside (s).
        voluntary_ramp: Rise time of the voluntary push (s).
        d_step: CoP distance from the DZ that forces a step when unassisted,
            and from the SP that forces one in any case (m).
        f_assist_min: Smallest restoring spring force felt as assistance (N).
        push_pitch: Tilt of the voluntary push below the horizontal for
            forward falls, above it for backward falls (rad).
    """

    direction: int = 1
    lean_onset: float = 1.0
    lean_rate: float = 0.04
    lean_depth: float = 0.03
    lean_timeout: float = 4.0
    ankle_stiffness_ratio: float = 2.0
    ankle_damping_ratio: float = 1.0
    hold_stiffness_ratio: float = 0.3
    hold_damping_ratio: float = 0.1
    t_wait: float = 1.5
    voluntary_ramp: float = 0.5
    d_step: float = 0.10
    f_assist_min: float = 5.0
    push_pitch: float = 0.2

    def __post_init__(self) -> None:
        if self.direction not in (1, -1):
            raise ValueError("Direction must be +1 (forward) or -1 (backward)")
        if self.lean_rate <= 0 or self.lean_depth < 0:
            raise ValueError("Lean rate must be positive")
        if self.ankle_stiffness_ratio <= 1:
            raise ValueError("Quiet-stance ankle stiffness must exceed m*g*L")
        if self.t_wait < 0 or self.voluntary_ramp <= 0:
            raise ValueError("Timing constants must be positive")
        if self.d_step <= 0 or self.f_assist_min < 0:
            raise ValueError("Step threshold must be positive")
        if not 0 <= self.push_pitch < np.pi / 2:
            raise ValueError("Push pitch must lie in [0, pi/2)")


@dataclass(frozen=True)
class SupportRegion:
    """Axis-aligned support polygon (SP) and deadband zone (DZ) on the ground."""

    sp_lo: np.ndarray
    sp_hi: np.ndarray
    dz_lo: np.ndarray
    dz_hi: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.dz_lo >= self.dz_hi) or np.any(self.sp_lo >= self.sp_hi):
            raise ValueError("Region bounds must be ordered low < high")
        if np.any(self.dz_lo < self.sp_lo) or np.any(self.dz_hi > self.sp_hi):
            raise ValueError("DZ must lie inside the support polygon")

    def to_dict(self) -> dict[str, list[float]]:
        return {k: [float(v) for v in getattr(self, k)] for k in _REGION_KEYS}

    @classmethod
    def from_dict(cls, data: dict[str, list[float]]) -> "SupportRegion":
        return cls(**{k: np.asarray(data[k], dtype=float) for k in _REGION_KEYS})


_REGION_KEYS = ("sp_lo", "sp_hi", "dz_lo", "dz_hi")


@dataclass(frozen=True)
class HumanState:
    """Pendulum state plus the derived balance quantities."""

    phi: float
    phi_dot: float
    com: np.ndarray
    cop: np.ndarray
    elbow: float = 0.0
    phase: Phase = Phase.LEAN
    phase_start: float = 0.0


@dataclass(frozen=True)
class BehaviorCommand:
    """Output of the behaviour policy for one step."""

    tau_ankle: float
    voluntary: np.ndarray
    phase: Phase
    phase_start: float


def elbow_angle(
    shoulder: np.ndarray, hand: np.ndarray, l_u: float, l_f: float
) -> float:
    """
    Elbow angle from the shoulder-hand distance (law of cosines).

    Returns 0 for a fully extended arm and -pi for a fully flexed one.
    Distances outside the reachable annulus are clamped with a warning.
    """
    d = float(np.linalg.norm(np.asarray(hand) - np.asarray(shoulder)))
    d_min, d_max = abs(l_u - l_f), l_u + l_f
    if d < d_min or d > d_max:
        warnings.warn(
            f"Shoulder-hand distance {d:.3f} m outside [{d_min:.3f}, {d_max:.3f}]",
            stacklevel=2,
        )
        d = min(max(d, d_min), d_max)
    cos_inner = (l_u**2 + l_f**2 - d**2) / (2 * l_u * l_f)
    inner = np.arccos(np.clip(cos_inner, -1.0, 1.0))
    return float(-(np.pi - inner))


class HumanModel:
    """
    Single rigid inverted pendulum about the ankles, moving in the sagittal
    X-Z plane, coupled to the robot handle through a spring-damper grasp.

    Positive lean ``phi`` tilts the body forward (+X). The hand anchor is the
    point the arm would hold in its nominal posture: it rides on the shoulder
    and the arm pitches by ``arm_pitch_ratio * phi`` about it.
    """

    def __init__(
        self,
        params: HumanParams | None = None,
        behavior: BehaviorConfig | None = None,
    ) -> None:
        self.params = params if params is not None else HumanParams()
        self.behavior = behavior if behavior is not None else BehaviorConfig()
        p = self.params
        self.anchor_offset = np.array(
            [p.hand_reach, 0.0, -0.5 * p.upper_arm]
        )

    # -- geometry ---------------------------------------------------------

    def com_position(self, phi: float) -> np.ndarray:
        """CoM of the straight body leaning by ``phi`` about the ankle."""
        L = self.params.com_length
        return self.params.ankle + L * np.array([np.sin(phi), 0.0, np.cos(phi)])

    def cop_estimate(self, c_m: np.ndarray) -> np.ndarray:
        """Quasi-static CoP: ground projection of the CoM."""
        return np.array([c_m[0], c_m[1]], dtype=float)

    def dz_distance(self, c_p: np.ndarray, region: SupportRegion) -> float:
        """Euclidean distance from ``c_p`` to the DZ rectangle (0 inside)."""
        return _box_distance(c_p, region.dz_lo, region.dz_hi)

    def sp_distance(self, c_p: np.ndarray, region: SupportRegion) -> float:
        """Euclidean distance from ``c_p`` to the support polygon (0 inside)."""
        return _box_distance(c_p, region.sp_lo, region.sp_hi)

    def shoulder_position(self, phi: float) -> np.ndarray:
        S = self.params.shoulder_length
        return self.params.ankle + S * np.array([np.sin(phi), 0.0, np.cos(phi)])

    def _arm(self, phi: float) -> np.ndarray:
        a = self.params.arm_pitch_ratio * phi
        c, s = np.cos(a), np.sin(a)
        x, y, z = self.anchor_offset
        return np.array([c * x + s * z, y, c * z - s * x])

    def hand_anchor(self, phi: float) -> np.ndarray:
        return self.shoulder_position(phi) + self._arm(phi)

    def hand_anchor_velocity(self, phi: float, phi_dot: float) -> np.ndarray:
        S = self.params.shoulder_length
        arm = self._arm(phi)
        return phi_dot * (
            S * np.array([np.cos(phi), 0.0, -np.sin(phi)])
            + self.params.arm_pitch_ratio * np.array([arm[2], 0.0, -arm[0]])
        )

    def place_at_handle(self, ee_position: np.ndarray) -> "HumanModel":
        """
        Stand the subject so the upright hand anchor sits on the handle.

        Returns:
            A new model whose ankle is ``hand_reach`` behind the handle.
        """
        ee_position = np.asarray(ee_position, dtype=float)
        ankle = np.array(
            [ee_position[0] - self.params.hand_reach, ee_position[1], 0.0]
        )
        placed = HumanModel(replace(self.params, ankle=ankle), self.behavior)
        placed.anchor_offset = ee_position - placed.shoulder_position(0.0)
        return placed

    def calibrate_dz(
        self, max_safe_lean_fwd: float, max_safe_lean_bwd: float
    ) -> SupportRegion:
        """
        Build the SP and DZ from the widest safe leans of the subject.

        Args:
            max_safe_lean_fwd: Largest forward lean held without help (rad).
            max_safe_lean_bwd: Largest backward lean held without help (rad).

        Raises:
            ValueError: If the DZ is shallower than 1 cm or leaves the SP.
        """
        if max_safe_lean_fwd < 0 or max_safe_lean_bwd < 0:
            raise ValueError("Lean limits must be non-negative")
        p = self.params
        ax, ay = p.ankle[0], p.ankle[1]
        front = self.com_position(max_safe_lean_fwd)[0]
        back = self.com_position(-max_safe_lean_bwd)[0]
        if front - back < 0.01:
            raise ValueError("Calibrated DZ depth must be at least 1 cm")
        half_y = 0.5 * (p.stance_width + p.foot_width)
        sp_lo = np.array([ax - p.heel_ratio * p.foot_length, ay - half_y])
        sp_hi = np.array([ax + (1 - p.heel_ratio) * p.foot_length, ay + half_y])
        dz_half_y = p.dz_lateral_ratio * half_y
        dz_lo = np.array([back, ay - dz_half_y])
        dz_hi = np.array([front, ay + dz_half_y])
        if np.any(dz_lo <= sp_lo) or np.any(dz_hi >= sp_hi):
            raise ValueError("Calibrated DZ must lie strictly inside the SP")
        return SupportRegion(sp_lo, sp_hi, dz_lo, dz_hi)

    # -- state --------------------------------------------------------------

    def initial_state(self, hand: np.ndarray | None = None) -> HumanState:
        com = self.com_position(0.0)
        hand = self.hand_anchor(0.0) if hand is None else hand
        elbow = elbow_angle(
            self.shoulder_position(0.0),
            hand,
            self.params.upper_arm,
            self.params.forearm,
        )
        return HumanState(0.0, 0.0, com, self.cop_estimate(com), elbow)

    def update_elbow(self, state: HumanState, hand: np.ndarray) -> HumanState:
        elbow = elbow_angle(
            self.shoulder_position(state.phi),
            hand,
            self.params.upper_arm,
            self.params.forearm,
        )
        return replace(state, elbow=elbow)

    # -- dynamics -----------------------------------------------------------

    def hand_torque(self, force_on_human: np.ndarray, hand_point: np.ndarray) -> float:
        """Moment about the ankle (Y axis) of a force applied at the hand."""
        r = np.asarray(hand_point) - self.params.ankle
        return float(r[2] * force_on_human[0] - r[0] * force_on_human[2])

    def pendulum_step(
        self,
        state: HumanState,
        tau_ankle: float,
        hand_wrench_on_human: Wrench6,
        hand_point: np.ndarray,
        dt: float,
    ) -> HumanState:
        """
        Semi-implicit Euler step of ``I phi'' = m g L sin(phi) + tau + tau_hand``.

        Raises:
            ValueError: If ``dt`` is not positive.
        """
        if dt <= 0:
            raise ValueError("Time step must be positive")
        p = self.params
        tau_hand = self.hand_torque(hand_wrench_on_human[:3], hand_point)
        gravity = p.weight * p.com_length * np.sin(state.phi)
        phi_ddot = (gravity + tau_ankle + tau_hand) / p.inertia
        phi_dot = state.phi_dot + phi_ddot * dt
        phi = state.phi + phi_dot * dt
        com = self.com_position(phi)
        return replace(
            state, phi=phi, phi_dot=phi_dot, com=com, cop=self.cop_estimate(com)
        )

    def mechanical_energy(self, state: HumanState) -> float:
        """Kinetic plus gravitational energy of the pendulum (J)."""
        p = self.params
        kinetic = 0.5 * p.inertia * state.phi_dot**2
        return float(kinetic + p.weight * p.com_length * np.cos(state.phi))

    def grasp_energy(self, state: HumanState, ee_position: np.ndarray) -> float:
        """Energy stored in the grip spring for a handle at ``ee_position`` (J)."""
        stretch = self.hand_anchor(state.phi) - np.asarray(ee_position, dtype=float)
        return float(0.5 * self.params.grip_stiffness * stretch @ stretch)

    def grasp_wrench(
        self,
        state: HumanState,
        ee: Pose6,
        ee_vel: Twist6,
        voluntary: np.ndarray | None = None,
    ) -> Wrench6:
        """
        Wrench the hand applies on the handle, as measured by the F/T sensor.

        The grasp pivots freely, so torques are zero. The force on the human is
        the exact opposite.
        """
        anchor = self.hand_anchor(state.phi)
        anchor_vel = self.hand_anchor_velocity(state.phi, state.phi_dot)
        force = self.params.grip_stiffness * (
            anchor - ee.position
        ) + self.params.grip_damping * (anchor_vel - np.asarray(ee_vel)[:3])
        if voluntary is not None:
            force = force + voluntary
        return np.concatenate([force, np.zeros(3)])

    def assist_force(self, spring_force: np.ndarray) -> float:
        """
        Assistance the subject feels from the robot's virtual spring (N).

        Only the horizontal component pointing against the fall direction
        counts; damping and vertical support are not felt as help.
        """
        return max(0.0, -self.behavior.direction * float(spring_force[0]))

    def _border_lean(self, region: SupportRegion) -> float:
        p = self.params
        if self.behavior.direction > 0:
            border = region.dz_hi[0]
        else:
            border = region.dz_lo[0]
        ratio = (border - p.ankle[0]) / p.com_length
        return float(np.arcsin(np.clip(ratio, -1.0, 1.0)))

    def _regulator(self, state: HumanState, target: float) -> float:
        p, b = self.params, self.behavior
        mgl = p.weight * p.com_length
        k = b.ankle_stiffness_ratio * mgl
        d = 2 * b.ankle_damping_ratio * np.sqrt((k - mgl) * p.inertia)
        return float(-k * (state.phi - target) - d * state.phi_dot)

    def _relaxed(self, state: HumanState, region: SupportRegion) -> float:
        p, b = self.params, self.behavior
        mgl = p.weight * p.com_length
        phi_b = self._border_lean(region)
        k = b.hold_stiffness_ratio * mgl
        d = 2 * b.hold_damping_ratio * np.sqrt(mgl * p.inertia)
        return float(
            -mgl * np.sin(phi_b) - k * (state.phi - phi_b) - d * state.phi_dot
        )

    def _push(self, t: float, start: float) -> np.ndarray:
        b = self.behavior
        level = min(1.0, (t - start) / b.voluntary_ramp)
        magnitude = level * self.params.voluntary_force_ratio * self.params.weight
        # Elbow extension for forward falls, flexion for backward ones.
        return b.direction * magnitude * np.array(
            [np.cos(b.push_pitch), 0.0, -np.sin(b.push_pitch)]
        )

    def behavior_policy(
        self,
        state: HumanState,
        t: float,
        assist_force: float,
        region: SupportRegion,
    ) -> BehaviorCommand:
        """
        Ankle torque, voluntary hand force and phase for the current step.

        Lean: the subject tracks a ramped lean target with a stiff ankle until
        the CoP is ``lean_depth`` past the DZ. Hold: the ankle relaxes around
        the DZ border posture ("let the robot help you"). Recover: after
        ``t_wait`` outside while the robot still pulls back, the subject pushes
        on the handle. Stepped: far outside with no assistance, or far outside
        the SP whatever the assistance, the subject steps.

        Args:
            state: Current subject state.
            t: Current time (s).
            assist_force: Restoring spring force felt at the hand, see
                :meth:`assist_force` (N).
            region: Calibrated SP and DZ.
        """
        b = self.behavior
        d = self.dz_distance(state.cop, region)
        outside = d > 0.0
        phase, start = state.phase, state.phase_start
        no_push = np.zeros(3)

        if phase == Phase.STEPPED:
            return BehaviorCommand(0.0, no_push, phase, start)

        active = phase in (Phase.LEAN, Phase.HOLD, Phase.RECOVER)
        unassisted = d > b.d_step and assist_force < b.f_assist_min
        off_support = self.sp_distance(state.cop, region) > b.d_step
        if active and (unassisted or off_support):
            logger.debug("Subject steps at t=%.3f s (d=%.3f m)", t, d)
            return BehaviorCommand(0.0, no_push, Phase.STEPPED, t)

        if phase == Phase.LEAN and t >= b.lean_onset:
            leaned_out = d >= b.lean_depth
            timed_out = outside and t - b.lean_onset >= b.lean_timeout
            if leaned_out or timed_out:
                phase, start = Phase.HOLD, t
        elif phase in (Phase.HOLD, Phase.RECOVER) and not outside:
            phase, start = Phase.RECOVERED, t
        elif phase == Phase.HOLD and t - start >= b.t_wait and assist_force > 0.0:
            phase, start = Phase.RECOVER, t

        if phase == Phase.LEAN:
            target = 0.0
            if t >= b.lean_onset:
                target = b.direction * b.lean_rate * (t - b.lean_onset)
            tau = self._regulator(state, target)
            return BehaviorCommand(tau, no_push, phase, start)
        if phase == Phase.RECOVERED:
            return BehaviorCommand(self._regulator(state, 0.0), no_push, phase, start)

        voluntary = self._push(t, start) if phase == Phase.RECOVER else no_push
        return BehaviorCommand(self._relaxed(state, region), voluntary, phase, start)


def _box_distance(c_p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    c_p = np.asarray(c_p, dtype=float)
    gap = np.maximum(np.maximum(lo - c_p, 0.0), c_p - hi)
    return float(np.hypot(gap[0], gap[1]))
