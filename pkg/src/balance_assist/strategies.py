"""Balance state machine and the assistance strategies built on it."""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .admittance import AdmittanceController
from .human_model import SupportRegion
from .robot_model import Pose6, Wrench6

logger = logging.getLogger(__name__)

_EZ = np.array([0.0, 0.0, 1.0])
_DEGENERATE_LEVER = 1e-4
_ON_LINE = 1e-6


class Strategy(str, Enum):
    """Assistance strategy used while the CoP is outside the DZ."""

    FSA = "fsa"
    MBA = "mba"
    HWA = "hwa"


class BalanceState(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class MirrorLine:
    """A DZ border: a point on it, its outward unit normal and the face name."""

    point: np.ndarray
    normal: np.ndarray
    face: str

    def signed_distance(self, c_p: np.ndarray) -> float:
        return float((np.asarray(c_p, dtype=float) - self.point) @ self.normal)


def reflect(point: np.ndarray, line: MirrorLine) -> np.ndarray:
    """Mirror a ground point across ``line``."""
    point = np.asarray(point, dtype=float)
    return point - 2.0 * line.signed_distance(point) * line.normal


def border_faces(region: SupportRegion) -> list[MirrorLine]:
    """The four DZ faces in priority order: front, back, left, right."""
    lo, hi = region.dz_lo, region.dz_hi
    return [
        MirrorLine(np.array([hi[0], 0.0]), np.array([1.0, 0.0]), "front"),
        MirrorLine(np.array([lo[0], 0.0]), np.array([-1.0, 0.0]), "back"),
        MirrorLine(np.array([0.0, hi[1]]), np.array([0.0, 1.0]), "left"),
        MirrorLine(np.array([0.0, lo[1]]), np.array([0.0, -1.0]), "right"),
    ]


@dataclass(frozen=True)
class StrategyParams:
    """
    Strategy settings shared by FSA, MBA and HWA.

    Attributes:
        k_p1: Stiffness along the first principal direction (N/m).
        stiffness_ramp: Rise time of ``k_p1`` after leaving the DZ, 0 for a
            step (s).
        force_noise_std: White noise added to each measured force axis (N).
    """

    k_p1: float = 400.0
    stiffness_ramp: float = 0.0
    force_noise_std: float = 1.2

    def __post_init__(self) -> None:
        if self.k_p1 < 0:
            raise ValueError("Stiffness must be non-negative")
        if self.stiffness_ramp < 0:
            raise ValueError("Stiffness ramp must be non-negative")
        if self.force_noise_std < 0:
            raise ValueError("Force noise must be non-negative")


@dataclass(frozen=True)
class BalanceStateMachine:
    """
    Stable/Unstable switch driven by the CoP position relative to the DZ.

    ``x_star``, ``mirror`` and ``p2_seed`` are latched when the CoP leaves the
    DZ and cleared when it comes back.
    """

    strategy: Strategy = Strategy.MBA
    state: BalanceState = BalanceState.STABLE
    x_star: Pose6 | None = None
    mirror: MirrorLine | None = None
    p2_seed: np.ndarray | None = None
    entered_at: float | None = None

    def __post_init__(self) -> None:
        latched = self.x_star is not None and self.mirror is not None
        cleared = self.x_star is None and self.mirror is None
        if self.state == BalanceState.UNSTABLE and not latched:
            raise ValueError("Unstable state needs a latched pose and mirror line")
        if self.state == BalanceState.STABLE and not cleared:
            raise ValueError("Stable state cannot hold latches")


@dataclass(frozen=True)
class ReferenceCommand:
    """Reference pose and principal-axis admittance handed to the admittance."""

    x_ref: Pose6
    R_WP: np.ndarray
    k_p: np.ndarray
    d_p: np.ndarray
    mode: str = "free"

    def __post_init__(self) -> None:
        if self.mode not in ("free", "coupled"):
            raise ValueError("Mode must be 'free' or 'coupled'")
        if self.mode == "free" and np.any(np.asarray(self.k_p) != 0):
            raise ValueError("Free mode requires zero stiffness")

    @property
    def p1(self) -> np.ndarray:
        return self.R_WP[:, 0]

    def spring_force(self, position: np.ndarray) -> np.ndarray:
        """
        Force of the virtual spring on a handle at ``position`` (N).

        Only the ``p1`` stiffness is rendered, so the force lies along ``p1``
        and vanishes in free mode.
        """
        stretch = self.x_ref.position - np.asarray(position, dtype=float)
        return self.k_p[0] * (self.p1 @ stretch) * self.p1


@dataclass
class ReferenceGenerator:
    """
    Produces the admittance reference for the selected strategy.

    Inside the DZ every strategy lets the robot follow the human freely.
    Outside, FSA anchors the handle where it was when the CoP left the DZ, MBA
    pulls it towards the CoP mirrored across the crossed border, and HWA holds
    a horizontal wall at the starting handle height.
    """

    strategy: Strategy = Strategy.MBA
    admittance: AdmittanceController = field(default_factory=AdmittanceController)
    params: StrategyParams = field(default_factory=StrategyParams)
    seed: int | None = None
    wall_height: float | None = None

    def __post_init__(self) -> None:
        self.strategy = Strategy(self.strategy)
        self.rng = np.random.default_rng(self.seed)

    def initial_machine(self) -> BalanceStateMachine:
        return BalanceStateMachine(strategy=self.strategy)

    def latch_wall(self, ee: Pose6) -> None:
        """Fix the HWA wall at the current handle height."""
        self.wall_height = float(ee.position[2])

    def measure(self, wrench: Wrench6) -> Wrench6:
        """Force-sensor reading of ``wrench`` with optional white noise."""
        wrench = np.asarray(wrench, dtype=float)
        if self.params.force_noise_std == 0:
            return wrench
        noise = np.zeros(6)
        noise[:3] = self.rng.normal(0.0, self.params.force_noise_std, 3)
        return wrench + noise

    def update_state(
        self,
        c_p: np.ndarray,
        region: SupportRegion,
        sm: BalanceStateMachine,
        ee: Pose6,
        cop_velocity: np.ndarray | None = None,
        t: float | None = None,
    ) -> BalanceStateMachine:
        """
        Advance the balance state machine with the current CoP.

        On leaving the DZ the current handle pose and the crossed border are
        latched; on re-entry the latches are cleared.
        """
        c_p = np.asarray(c_p, dtype=float)
        crossed = [f for f in border_faces(region) if f.signed_distance(c_p) > 0]
        if sm.state == BalanceState.STABLE and crossed:
            mirror = self._pick_face(crossed, cop_velocity)
            logger.debug("CoP left the DZ through the %s border", mirror.face)
            return replace(
                sm,
                state=BalanceState.UNSTABLE,
                x_star=Pose6(ee.position.copy(), ee.rotation.copy()),
                mirror=mirror,
                p2_seed=self.rng.standard_normal(3),
                entered_at=t,
            )
        if sm.state == BalanceState.UNSTABLE and not crossed:
            logger.debug("CoP re-entered the DZ")
            return BalanceStateMachine(strategy=sm.strategy)
        return sm

    @staticmethod
    def _pick_face(
        crossed: list[MirrorLine], cop_velocity: np.ndarray | None
    ) -> MirrorLine:
        if len(crossed) == 1 or cop_velocity is None:
            return crossed[0]
        v = np.asarray(cop_velocity, dtype=float)[:2]
        scores = [float(f.normal @ v) for f in crossed]
        # argmax keeps the first of equal scores, so front/back win ties.
        return crossed[int(np.argmax(scores))]

    def free_command(self, ee: Pose6) -> ReferenceCommand:
        """Stable-state command: no stiffness, stable damping everywhere."""
        stable = self.admittance.stable_principal()
        return ReferenceCommand(ee, np.eye(3), np.zeros(6), stable.d_p, "free")

    def _stiffness(self, sm: BalanceStateMachine, t: float | None) -> float:
        k = self.params.k_p1
        ramp = self.params.stiffness_ramp
        if ramp > 0 and t is not None and sm.entered_at is not None:
            k *= min(1.0, max(0.0, (t - sm.entered_at) / ramp))
        return k

    def _coupled(
        self, x_ref: Pose6, p1: np.ndarray, p2_hint: np.ndarray, k: float
    ) -> ReferenceCommand:
        p2 = p2_hint - (p2_hint @ p1) * p1
        if np.linalg.norm(p2) < 1e-9:
            # Hint parallel to p1: any axis not along p1 will do.
            axis = np.eye(3)[int(np.argmin(np.abs(p1)))]
            p2 = axis - (axis @ p1) * p1
        p2 = p2 / np.linalg.norm(p2)
        R_WP = np.column_stack([p1, p2, np.cross(p1, p2)])
        stable = self.admittance.stable_principal()
        k_p = np.zeros(6)
        k_p[0] = k
        d_p = stable.d_p.copy()
        if k > 0:
            d_p[0] = self.admittance.critical_damping(k, stable.m_p[0])
        return ReferenceCommand(x_ref, R_WP, k_p, d_p, "coupled")

    def fsa_reference(
        self, sm: BalanceStateMachine, r: np.ndarray, t: float | None = None
    ) -> ReferenceCommand:
        """
        Fixed support: a spring towards the handle pose latched at DZ exit.

        ``p1`` points from the latched position to the handle; when the two
        coincide it falls back to the outward normal of the crossed border.

        Raises:
            ValueError: If the state machine is not Unstable.
        """
        if sm.state != BalanceState.UNSTABLE:
            raise ValueError("FSA reference requires the Unstable state")
        lever = np.asarray(r, dtype=float) - sm.x_star.position
        norm = float(np.linalg.norm(lever))
        if norm < _DEGENERATE_LEVER:
            p1 = np.append(sm.mirror.normal, 0.0)
        else:
            p1 = lever / norm
        return self._coupled(sm.x_star, p1, sm.p2_seed, self._stiffness(sm, t))

    def mba_reference(
        self,
        sm: BalanceStateMachine,
        c_p: np.ndarray,
        r: np.ndarray,
        theta: np.ndarray,
        t: float | None = None,
    ) -> ReferenceCommand:
        """
        Mirror-based assistance.

        The CoP is reflected across the latched border; the handle reference is
        shifted by twice the CoP overshoot along the direction from the CoP to
        its mirror image, horizontally.

        Args:
            sm: Unstable state machine.
            c_p: Current CoP (m).
            r: Current handle position (m).
            theta: Current handle orientation, kept as reference orientation.
            t: Current time, used by the optional stiffness ramp.

        Raises:
            ValueError: If the state machine is not Unstable.
        """
        if sm.state != BalanceState.UNSTABLE:
            raise ValueError("MBA reference requires the Unstable state")
        line = sm.mirror
        delta = max(line.signed_distance(c_p), 0.0)
        if delta < _ON_LINE:
            delta = 0.0
        p1 = np.append(-line.normal, 0.0)
        r = np.asarray(r, dtype=float)
        x_ref = Pose6(r + 2.0 * delta * p1, np.asarray(theta, dtype=float))
        return self._coupled(x_ref, p1, sm.p2_seed, self._stiffness(sm, t))

    def hwa_reference(self, ee: Pose6, z_threshold: float) -> ReferenceCommand:
        """Horizontal wall: resist only downward motion below ``z_threshold``."""
        if ee.position[2] >= z_threshold:
            return self.free_command(ee)
        x_ref = Pose6(
            np.array([ee.position[0], ee.position[1], z_threshold]), ee.rotation
        )
        return self._coupled(x_ref, _EZ, np.array([1.0, 0.0, 0.0]), self.params.k_p1)

    def command(
        self,
        sm: BalanceStateMachine,
        c_p: np.ndarray,
        ee: Pose6,
        t: float | None = None,
    ) -> ReferenceCommand:
        """Reference for the current balance state and strategy."""
        if sm.state == BalanceState.STABLE:
            return self.free_command(ee)
        if self.strategy == Strategy.FSA:
            return self.fsa_reference(sm, ee.position, t)
        if self.strategy == Strategy.MBA:
            return self.mba_reference(sm, c_p, ee.position, ee.rotation, t)
        z = self.wall_height
        if z is None:
            z = float(sm.x_star.position[2])
        return self.hwa_reference(ee, z)
