"""Closed-loop trials, performance indexes and the population campaign."""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations, count
from pathlib import Path
from typing import TypedDict

import numpy as np
import pandas as pd
from scipy.stats import binomtest, truncnorm

from .admittance import MAX_DT, AdmittanceController, AdmittanceParams, AdmittanceState
from .hqp_controller import HqpConfig, HqpController
from .human_model import (
    GRAVITY,
    BehaviorConfig,
    HumanModel,
    HumanParams,
    Phase,
    SupportRegion,
)
from .robot_model import JointState, KinematicParams, RobotModel
from .strategies import ReferenceGenerator, Strategy, StrategyParams

logger = logging.getLogger(__name__)

LOG_COLUMNS = [
    "t",
    "cop_x",
    "dz_lo",
    "dz_hi",
    "f_x",
    "f_y",
    "f_z",
    "ee_x",
    "ee_z",
    "ref_x",
    "ref_z",
    "elbow",
    "phase",
]
FLOAT_FORMAT = "%.6g"
METRICS = ("time_outside", "max_distance", "f_max_x", "f_max_z")


class SimulationError(RuntimeError):
    """The closed loop produced a non-finite state."""

    def __init__(self, step: int, t: float, what: str) -> None:
        super().__init__(f"Non-finite {what} at step {step} (t={t:.4f} s)")
        self.step = step
        self.t = t


class Direction(str, Enum):
    FWD = "fwd"
    BWD = "bwd"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.FWD else -1


def _sig6(value: float) -> float:
    # Log values are stored at CSV precision so persisted logs replay exactly.
    return float(FLOAT_FORMAT % value)


@dataclass(frozen=True)
class TrialConfig:
    """
    One voluntary fall of one subject with one strategy.

    Attributes:
        strategy: Assistance strategy.
        direction: Fall direction.
        human: Subject anthropometrics.
        behavior: Scripted behaviour; its direction is overridden by
            ``direction``.
        seed: Seed of the trial's random streams.
        dt: Control and simulation step (s).
        duration: Trial length (s).
        log_period: Log sample period (s), a multiple of ``dt``.
        max_safe_lean_fwd: Calibration lean used for the front DZ border (rad).
        max_safe_lean_bwd: Calibration lean used for the back DZ border (rad).
    """

    strategy: Strategy = Strategy.MBA
    direction: Direction = Direction.FWD
    human: HumanParams = field(default_factory=HumanParams)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    seed: int = 0
    dt: float = 0.002
    duration: float = 10.0
    log_period: float = 0.01
    max_safe_lean_fwd: float = 0.12
    max_safe_lean_bwd: float = 0.06

    def __post_init__(self) -> None:
        if not 0 < self.dt <= MAX_DT:
            raise ValueError("Time step must lie in (0, 5 ms]")
        if self.duration <= 0:
            raise ValueError("Duration must be positive")
        if self.log_period < self.dt:
            raise ValueError("Log period must be at least one time step")
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "direction", Direction(self.direction))

    def directed_behavior(self) -> BehaviorConfig:
        return replace(self.behavior, direction=self.direction.sign)


@dataclass
class TrialLog:
    """Uniformly sampled trial signals, one row per sample."""

    frame: pd.DataFrame

    def __post_init__(self) -> None:
        missing = set(LOG_COLUMNS) - set(self.frame.columns)
        if missing:
            raise ValueError(f"Log is missing columns: {sorted(missing)}")
        t = self.frame["t"].to_numpy()
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("Log timestamps must be strictly increasing")
        if t.size > 2:
            period = np.diff(t)
            if not np.allclose(period, period[0], rtol=0.01, atol=0.0):
                raise ValueError("Log sample period must be constant")

    def __len__(self) -> int:
        return len(self.frame)

    def to_csv(self, path: str | Path) -> None:
        self.frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrialLog":
        frame = pd.read_csv(path)
        if frame.empty:
            raise ValueError(f"Log {path} has no samples")
        return cls(frame)

    def dz_distance(self) -> np.ndarray:
        """Sagittal CoP distance from the DZ per sample (0 inside)."""
        x = self.frame["cop_x"].to_numpy()
        lo = self.frame["dz_lo"].to_numpy()
        hi = self.frame["dz_hi"].to_numpy()
        return np.maximum(np.maximum(lo - x, 0.0), x - hi)


class ExitEpisode(TypedDict):
    """Timing of the first DZ exit of a trial (None when it did not happen)."""

    t_out: float | None
    t_in: float | None
    t_fail: float | None
    failed: bool
    re_exit: bool


@dataclass(frozen=True)
class TrialResult:
    """
    Performance indexes of one trial.

    ``time_outside`` and ``max_distance`` are None for failed trials and for
    trials without a completed exit episode. Forces are percent of weight.
    """

    time_outside: float | None
    max_distance: float | None
    f_max_x: float
    f_max_z: float
    failed: bool
    t_out: float | None
    t_in: float | None
    t_fail: float | None


@dataclass(frozen=True)
class CampaignConfig:
    """
    Population protocol: subjects x strategies x alternating fall directions.

    Attributes:
        n_subjects: Number of simulated subjects.
        trials_per_direction: Trials per direction and strategy per subject.
        strategies: Strategies compared.
        master_seed: Seed of the whole campaign.
        mass_mean, mass_std: Population body mass (kg).
        height_mean, height_std: Population body height (m).
        lean_jitter: Relative spread of the per-trial lean rate.
        workers: Worker processes; 1 runs in-process.
        human: Constant overrides applied to every subject, keyed like
            :class:`HumanParams` fields.
        trial: Template for every trial (strategy, direction, subject and seed
            are filled in per trial).
    """

    n_subjects: int = 12
    trials_per_direction: int = 3
    strategies: tuple[Strategy, ...] = (Strategy.FSA, Strategy.MBA, Strategy.HWA)
    master_seed: int = 2024
    mass_mean: float = 65.5
    mass_std: float = 13.2
    height_mean: float = 1.707
    height_std: float = 0.094
    lean_jitter: float = 0.1
    workers: int | None = None
    human: dict[str, float] = field(default_factory=dict)
    trial: TrialConfig = field(default_factory=TrialConfig)

    def __post_init__(self) -> None:
        if self.n_subjects < 1 or self.trials_per_direction < 1:
            raise ValueError("Subject and trial counts must be positive")
        if not 0 <= self.lean_jitter < 1:
            raise ValueError("Lean jitter must lie in [0, 1)")
        if self.mass_std < 0 or self.height_std < 0:
            raise ValueError("Population spreads must be non-negative")
        object.__setattr__(
            self, "strategies", tuple(Strategy(s) for s in self.strategies)
        )


def sample_population(
    n: int,
    seed: int,
    mass: tuple[float, float] = (65.5, 13.2),
    height: tuple[float, float] = (1.707, 0.094),
) -> list[tuple[float, float]]:
    """
    Draw ``n`` subjects as ``(mass, height)`` from Gaussians cut at +-2 sigma.

    Args:
        n: Number of subjects.
        seed: Random seed.
        mass: Mean and standard deviation of body mass (kg).
        height: Mean and standard deviation of body height (m).

    Returns:
        Subject list in draw order.
    """
    rng = np.random.default_rng(seed)
    values = []
    for mean, std in (mass, height):
        if std == 0:
            values.append(np.full(n, mean))
        else:
            draw = truncnorm.rvs(-2, 2, loc=mean, scale=std, size=n, random_state=rng)
            values.append(draw)
    return [(float(m), float(h)) for m, h in zip(*values)]


def sign_test(paired_diffs: list[float]) -> float:
    """
    Two-sided exact sign test of paired differences; zero differences drop out.

    Returns:
        The p-value, 1.0 when no non-zero differences remain.
    """
    diffs = np.asarray(paired_diffs, dtype=float)
    diffs = diffs[diffs != 0]
    if diffs.size == 0:
        return 1.0
    positive = int(np.sum(diffs > 0))
    return float(binomtest(positive, diffs.size, 0.5).pvalue)


def _run_job(job: tuple["Experiment", TrialConfig]) -> tuple[TrialResult, TrialLog]:
    experiment, cfg = job
    return experiment.run_trial(cfg)


@dataclass
class Experiment:
    """
    Wires human, strategies, admittance, whole-body controller and robot into
    a fixed-step loop, and turns the resulting logs into performance indexes.
    """

    kinematics: KinematicParams = field(default_factory=KinematicParams)
    hqp: HqpConfig = field(default_factory=HqpConfig)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    strategy: StrategyParams = field(default_factory=StrategyParams)

    # -- trial loop ---------------------------------------------------------

    def run_trial(
        self, cfg: TrialConfig, region: SupportRegion | None = None
    ) -> tuple[TrialResult, TrialLog]:
        """
        Simulate one trial.

        Args:
            cfg: Trial settings.
            region: Calibrated SP and DZ; calibrated from ``cfg`` when omitted.

        Returns:
            The trial indexes and the sampled log.

        Raises:
            SimulationError: If any state becomes non-finite.
        """
        robot = RobotModel(self.kinematics)
        controller = HqpController(self.hqp, robot)
        admittance = AdmittanceController(self.admittance)
        generator = ReferenceGenerator(
            cfg.strategy, admittance, self.strategy, cfg.seed
        )

        q = JointState(np.zeros(3), np.asarray(self.hqp.preferred_arm_config, float))
        ee, J = robot.kinematics(q)
        human = HumanModel(cfg.human, cfg.directed_behavior()).place_at_handle(
            ee.position
        )
        if region is None:
            region = human.calibrate_dz(cfg.max_safe_lean_fwd, cfg.max_safe_lean_bwd)
        generator.latch_wall(ee)

        person = human.initial_state(ee.position)
        adm_state = AdmittanceState(ee)
        sm = generator.initial_machine()
        assist = 0.0
        cop_prev = person.cop
        n_steps = int(round(cfg.duration / cfg.dt))
        every = max(1, int(round(cfg.log_period / cfg.dt)))
        stepped = False
        rows: list[list] = []
        logger.info(
            "Trial %s/%s seed=%d started",
            cfg.strategy.value,
            cfg.direction.value,
            cfg.seed,
        )

        for k in count():
            t = k * cfg.dt
            ee_twist = J @ q.qdot
            behavior = human.behavior_policy(person, t, assist, region)
            person = replace(
                person, phase=behavior.phase, phase_start=behavior.phase_start
            )
            wrench = human.grasp_wrench(person, ee, ee_twist, behavior.voluntary)
            measured = generator.measure(wrench)
            cop_velocity = (person.cop - cop_prev) / cfg.dt
            sm = generator.update_state(person.cop, region, sm, ee, cop_velocity, t)
            command = generator.command(sm, person.cop, ee, t)

            if not stepped and person.phase == Phase.STEPPED:
                stepped = True
                logger.info("Subject stepped at t=%.3f s", t)
            # A step ends the trial at the next log sample.
            if k % every == 0:
                rows.append(self._sample(t, person, region, measured, ee, command))
                if stepped:
                    break
            if k >= n_steps and not stepped:
                break

            adm_state = admittance.step(adm_state, measured, command, cfg.dt)
            solution = controller.track(q, ee, J, adm_state.pose, adm_state.twist)
            q = robot.integrate_joints(q, solution.qdot, cfg.dt)
            cop_prev = person.cop
            person = human.pendulum_step(
                person, behavior.tau_ankle, -wrench, ee.position, cfg.dt
            )
            assist = human.assist_force(command.spring_force(ee.position))
            self._check_finite(k, t, q, adm_state, person.phi)
            ee, J = robot.kinematics(q)
            person = human.update_elbow(person, ee.position)

        log = TrialLog(pd.DataFrame(rows, columns=LOG_COLUMNS))
        result = self.evaluate(log, cfg.human.weight)
        logger.info(
            "Trial %s/%s seed=%d finished (failed=%s)",
            cfg.strategy.value,
            cfg.direction.value,
            cfg.seed,
            result.failed,
        )
        return result, log

    @staticmethod
    def _sample(t, person, region, measured, ee, command) -> list:
        values = [
            t,
            person.cop[0],
            region.dz_lo[0],
            region.dz_hi[0],
            measured[0],
            measured[1],
            measured[2],
            ee.position[0],
            ee.position[2],
            command.x_ref.position[0],
            command.x_ref.position[2],
            person.elbow,
        ]
        return [_sig6(v) for v in values] + [person.phase.value]

    @staticmethod
    def _check_finite(k, t, q, adm_state, phi) -> None:
        if not np.all(np.isfinite(q.as_vector())):
            raise SimulationError(k, t, "joint configuration")
        if not np.all(np.isfinite(adm_state.twist)):
            raise SimulationError(k, t, "admittance twist")
        if not np.isfinite(phi):
            raise SimulationError(k, t, "body lean")

    # -- metrics ------------------------------------------------------------

    def exit_episode(self, log: TrialLog) -> ExitEpisode:
        """First DZ exit, its re-entry and the stepping time of a log."""
        t = log.frame["t"].to_numpy()
        outside = log.dz_distance() > 0
        stepped = (log.frame["phase"] == Phase.STEPPED.value).to_numpy()
        t_fail = float(t[np.argmax(stepped)]) if stepped.any() else None
        episode: ExitEpisode = {
            "t_out": None,
            "t_in": None,
            "t_fail": t_fail,
            "failed": t_fail is not None,
            "re_exit": False,
        }
        if not outside.any():
            return episode
        i_out = int(np.argmax(outside))
        episode["t_out"] = float(t[i_out])
        back = ~outside[i_out:]
        if back.any():
            i_in = i_out + int(np.argmax(back))
            episode["t_in"] = float(t[i_in])
            episode["re_exit"] = bool(outside[i_in:].any())
        return episode

    def _window(self, log: TrialLog, episode: ExitEpisode) -> np.ndarray:
        t = log.frame["t"].to_numpy()
        if episode["t_out"] is None:
            return np.zeros(t.size, dtype=bool)
        if episode["failed"]:
            end = episode["t_fail"]
        elif episode["t_in"] is not None:
            end = episode["t_in"]
        else:
            end = t[-1]
        return (t >= episode["t_out"]) & (t <= end)

    def metric_time_outside(self, log: TrialLog) -> float | None:
        """Time from the first DZ exit to the re-entry (s)."""
        episode = self.exit_episode(log)
        if episode["failed"] or episode["t_out"] is None:
            return None
        if episode["t_in"] is None:
            warnings.warn("CoP never re-entered the DZ; time outside undefined")
            return None
        return episode["t_in"] - episode["t_out"]

    def metric_max_distance(self, log: TrialLog) -> float | None:
        """Largest CoP distance from the DZ during the exit episode (m)."""
        episode = self.exit_episode(log)
        if episode["failed"] or episode["t_out"] is None:
            return None
        return float(np.max(log.dz_distance()[self._window(log, episode)]))

    def metric_max_force(self, log: TrialLog, w_h: float, axis: str) -> float:
        """
        Largest hand force along ``axis`` during the exit episode, in percent of
        body weight ``w_h`` (N).

        Raises:
            ValueError: For a non-positive weight or an axis other than X or Z.
        """
        if w_h <= 0:
            raise ValueError("Body weight must be positive")
        column = {"x": "f_x", "z": "f_z"}.get(axis.lower())
        if column is None:
            raise ValueError("Axis must be 'X' or 'Z'")
        window = self._window(log, self.exit_episode(log))
        if not window.any():
            return 0.0
        force = np.abs(log.frame[column].to_numpy()[window])
        return float(100.0 * np.max(force) / w_h)

    def evaluate(self, log: TrialLog, w_h: float) -> TrialResult:
        """All indexes of a log; ``w_h`` is the subject weight (N)."""
        episode = self.exit_episode(log)
        if episode["re_exit"]:
            logger.warning(
                "CoP left the DZ again after t=%.3f s; indexes use the first exit",
                episode["t_in"],
            )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            time_outside = self.metric_time_outside(log)
        for w in caught:
            logger.warning("%s", w.message)
        return TrialResult(
            time_outside=time_outside,
            max_distance=self.metric_max_distance(log),
            f_max_x=self.metric_max_force(log, w_h, "x"),
            f_max_z=self.metric_max_force(log, w_h, "z"),
            failed=episode["failed"],
            t_out=episode["t_out"],
            t_in=episode["t_in"],
            t_fail=episode["t_fail"],
        )

    def recompute(self, path: str | Path, mass: float) -> TrialResult:
        """Indexes of a persisted log for a subject of ``mass`` kg."""
        return self.evaluate(TrialLog.from_csv(path), mass * GRAVITY)

    # -- campaign -----------------------------------------------------------

    def campaign_trials(self, cfg: CampaignConfig) -> list[tuple[dict, TrialConfig]]:
        """Every trial of the campaign, ordered by trial id."""
        root = np.random.SeedSequence(cfg.master_seed)
        population_seq, *trial_seqs = root.spawn(
            1 + cfg.n_subjects * len(cfg.strategies) * 2 * cfg.trials_per_direction
        )
        subjects = sample_population(
            cfg.n_subjects,
            int(population_seq.generate_state(1)[0]),
            (cfg.mass_mean, cfg.mass_std),
            (cfg.height_mean, cfg.height_std),
        )
        trials = []
        seqs = iter(trial_seqs)
        for s, (mass, height) in enumerate(subjects):
            human = HumanParams.from_anthropometrics(mass, height, **cfg.human)
            for strategy in cfg.strategies:
                for j in range(2 * cfg.trials_per_direction):
                    direction = Direction.FWD if j % 2 == 0 else Direction.BWD
                    seed = int(next(seqs).generate_state(1)[0])
                    jitter = np.random.default_rng(seed).uniform(-1.0, 1.0)
                    behavior = replace(
                        cfg.trial.behavior,
                        lean_rate=cfg.trial.behavior.lean_rate
                        * (1.0 + cfg.lean_jitter * jitter),
                    )
                    trial = replace(
                        cfg.trial,
                        strategy=strategy,
                        direction=direction,
                        human=human,
                        behavior=behavior,
                        seed=seed,
                    )
                    meta = {
                        "trial_id": f"s{s:02d}_{strategy.value}_{j:02d}",
                        "subject": s,
                        "strategy": strategy.value,
                        "direction": direction.value,
                        "trial": j,
                        "mass": mass,
                        "height": height,
                    }
                    trials.append((meta, trial))
        return sorted(trials, key=lambda item: item[0]["trial_id"])

    def run_campaign(
        self, cfg: CampaignConfig, out_dir: str | Path | None = None
    ) -> dict[str, pd.DataFrame]:
        """
        Run the population protocol and aggregate it.

        Args:
            cfg: Campaign settings.
            out_dir: When given, per-trial logs and the aggregate CSVs are
                written there.

        Returns:
            Frames ``trial_results``, ``table``, ``failures`` and ``sign_tests``.
        """
        trials = self.campaign_trials(cfg)
        jobs = [(self, trial) for _, trial in trials]
        logger.info("Campaign: %d trials", len(jobs))
        if cfg.workers == 1:
            outcomes = [_run_job(job) for job in jobs]
        else:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                outcomes = list(pool.map(_run_job, jobs))

        records = []
        for (meta, _), (result, _) in zip(trials, outcomes):
            record = dict(meta)
            record.update(
                failed=result.failed,
                t_out=result.t_out,
                t_in=result.t_in,
                t_fail=result.t_fail,
                time_outside=result.time_outside,
                max_distance=result.max_distance,
                f_max_x=result.f_max_x,
                f_max_z=result.f_max_z,
            )
            records.append(record)
        numeric = ("t_out", "t_in", "t_fail", *METRICS)
        trial_results = pd.DataFrame.from_records(records).astype(
            {column: float for column in numeric}
        )
        frames = {"trial_results": trial_results}
        frames.update(self.aggregate(frames["trial_results"], cfg.strategies))

        if out_dir is not None:
            out = Path(out_dir)
            (out / "trials").mkdir(parents=True, exist_ok=True)
            for (meta, _), (_, log) in zip(trials, outcomes):
                log.to_csv(out / "trials" / f"{meta['trial_id']}.csv")
            for name, frame in frames.items():
                frame.to_csv(
                    out / f"{name}.csv", index=False, float_format=FLOAT_FORMAT
                )
            logger.info("Campaign results written to %s", out)
        return frames

    def aggregate(
        self, results: pd.DataFrame, strategies: tuple[Strategy, ...]
    ) -> dict[str, pd.DataFrame]:
        """Table of means/stds, failure rates and pairwise sign tests."""
        names = [Strategy(s).value for s in strategies]
        ok = results[~results["failed"].astype(bool)].copy()
        ok["max_distance_cm"] = ok["max_distance"] * 100.0
        columns = ("time_outside", "max_distance_cm", "f_max_x", "f_max_z")

        table, failures = [], []
        for direction in (Direction.FWD.value, Direction.BWD.value):
            for name in names:
                group = ok[(ok["direction"] == direction) & (ok["strategy"] == name)]
                row = {"direction": direction, "strategy": name}
                for column in columns:
                    values = group[column].dropna().astype(float)
                    row[f"{column}_mean"] = values.mean()
                    row[f"{column}_std"] = values.std(ddof=1)
                table.append(row)
                every = results[
                    (results["direction"] == direction)
                    & (results["strategy"] == name)
                ]
                n_failed = int(every["failed"].astype(bool).sum())
                failures.append(
                    {
                        "direction": direction,
                        "strategy": name,
                        "trials": len(every),
                        "failures": n_failed,
                        "failure_rate": n_failed / len(every) if len(every) else 0.0,
                    }
                )

        tests = []
        for direction in (Direction.FWD.value, Direction.BWD.value):
            subset = ok[ok["direction"] == direction]
            for metric in METRICS:
                means = subset.pivot_table(
                    index="subject", columns="strategy", values=metric, aggfunc="mean"
                )
                for a, b in combinations(names, 2):
                    if a not in means or b not in means:
                        continue
                    diffs = (means[a] - means[b]).dropna().to_numpy()
                    nonzero = diffs[diffs != 0]
                    tests.append(
                        {
                            "direction": direction,
                            "metric": metric,
                            "strategy_a": a,
                            "strategy_b": b,
                            "n": int(nonzero.size),
                            "positive": int(np.sum(nonzero > 0)),
                            "p_value": sign_test(list(diffs)),
                        }
                    )
        return {
            "table": pd.DataFrame(table),
            "failures": pd.DataFrame(failures),
            "sign_tests": pd.DataFrame(
                tests,
                columns=[
                    "direction",
                    "metric",
                    "strategy_a",
                    "strategy_b",
                    "n",
                    "positive",
                    "p_value",
                ],
            ),
        }
