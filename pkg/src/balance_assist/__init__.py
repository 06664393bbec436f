from .admittance import AdmittanceController, AdmittanceParams, PrincipalAdmittance
from .config import AppConfig, ConfigError, load_config
from .experiment import (
    CampaignConfig,
    Direction,
    Experiment,
    SimulationError,
    TrialConfig,
    TrialLog,
    TrialResult,
    sample_population,
    sign_test,
)
from .hqp_controller import HqpConfig, HqpController
from .human_model import BehaviorConfig, HumanModel, HumanParams, SupportRegion
from .robot_model import JointState, KinematicParams, Pose6, RobotModel
from .strategies import ReferenceGenerator, Strategy, StrategyParams

__all__ = [
    "AdmittanceController",
    "AdmittanceParams",
    "AppConfig",
    "BalanceAssist",
    "BehaviorConfig",
    "CampaignConfig",
    "ConfigError",
    "Direction",
    "Experiment",
    "HqpConfig",
    "HqpController",
    "HumanModel",
    "HumanParams",
    "JointState",
    "KinematicParams",
    "Pose6",
    "PrincipalAdmittance",
    "ReferenceGenerator",
    "RobotModel",
    "SimulationError",
    "Strategy",
    "StrategyParams",
    "SupportRegion",
    "TrialConfig",
    "TrialLog",
    "TrialResult",
    "load_config",
    "sample_population",
    "sign_test",
]


class BalanceAssist:
    """
    Robot-assisted balance recovery simulator, built from one configuration.
    """

    def __init__(self, config: AppConfig | None = None):
        self._config = config if config is not None else load_config()
        cfg = self._config
        self._robot_model = RobotModel(cfg.kinematics)
        self._hqp_controller = HqpController(cfg.hqp, self._robot_model)
        self._admittance = AdmittanceController(cfg.admittance)
        self._human_model = HumanModel(cfg.trial.human, cfg.trial.directed_behavior())
        self._strategies = ReferenceGenerator(
            cfg.trial.strategy, self._admittance, cfg.strategy, cfg.trial.seed
        )
        self._experiment = cfg.experiment()

    @property
    def config(self):
        """The configuration the components were built from."""
        return self._config

    @property
    def robot_model(self):
        """Provides access to the mobile-manipulator kinematics."""
        return self._robot_model

    @property
    def hqp_controller(self):
        """Provides access to the whole-body velocity controller."""
        return self._hqp_controller

    @property
    def admittance(self):
        """Provides access to the task-space admittance."""
        return self._admittance

    @property
    def human_model(self):
        """Provides access to the simulated subject."""
        return self._human_model

    @property
    def strategies(self):
        """Provides access to the assistance reference generator."""
        return self._strategies

    @property
    def experiment(self):
        """Provides access to trials, metrics and campaigns."""
        return self._experiment
