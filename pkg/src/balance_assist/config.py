"""Sectioned TOML configuration with packaged defaults."""

import logging
import os
import tomllib
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .admittance import AdmittanceParams
from .experiment import CampaignConfig, Experiment, TrialConfig
from .hqp_controller import HqpConfig
from .human_model import BehaviorConfig, HumanParams
from .robot_model import KinematicParams
from .strategies import StrategyParams

logger = logging.getLogger(__name__)

ENV_VAR = "BALANCE_ASSIST_CONFIG"


class ConfigError(ValueError):
    """Unreadable configuration, unknown key or out-of-range value."""


@dataclass(frozen=True)
class AppConfig:
    """All parameter groups of the simulator."""

    kinematics: KinematicParams = field(default_factory=KinematicParams)
    hqp: HqpConfig = field(default_factory=HqpConfig)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    strategy: StrategyParams = field(default_factory=StrategyParams)
    human: dict[str, float] = field(default_factory=dict)
    trial: TrialConfig = field(default_factory=TrialConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)

    def experiment(self) -> Experiment:
        return Experiment(self.kinematics, self.hqp, self.admittance, self.strategy)

    def subject(self, mass: float, height: float) -> HumanParams:
        """Anthropometrics of a subject under the configured human constants."""
        return HumanParams.from_anthropometrics(mass, height, **self.human)


def default_config_text() -> str:
    return resources.files(__package__).joinpath("default.toml").read_text()


def resolve_config_path(path: str | Path | None = None) -> Path | None:
    """Explicit path first, then ``$BALANCE_ASSIST_CONFIG``, else None."""
    if path is not None:
        return Path(path)
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else None


def _merge(defaults: dict, user: dict, source: str) -> dict:
    merged = {name: dict(section) for name, section in defaults.items()}
    for name, section in user.items():
        if name not in defaults:
            raise ConfigError(f"{source}: unknown section [{name}]")
        if not isinstance(section, dict):
            raise ConfigError(f"{source}: [{name}] must be a table")
        for key, value in section.items():
            if key not in defaults[name]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{name}]")
            merged[name][key] = value
    return merged


def _arrays(section: dict[str, Any]) -> dict[str, Any]:
    return {
        k: np.asarray(v, dtype=float) if isinstance(v, list) else v
        for k, v in section.items()
    }


def build_config(data: dict[str, dict[str, Any]]) -> AppConfig:
    """
    Turn merged TOML tables into typed parameter groups.

    Raises:
        ConfigError: If a value is rejected by its parameter group.
    """
    try:
        kinematics = KinematicParams(**_arrays(data["kinematics"]))
        hqp = HqpConfig(
            velocity_limits=kinematics.velocity_limits, **_arrays(data["hqp"])
        )
        admittance = AdmittanceParams(**data["admittance"])
        strategy = StrategyParams(**data["strategy"])
        human = dict(data["human"])
        trial_section = dict(data["trial"])
        mass = trial_section.pop("mass")
        height = trial_section.pop("height")
        trial = TrialConfig(
            human=HumanParams.from_anthropometrics(mass, height, **human),
            behavior=BehaviorConfig(**data["behavior"]),
            **trial_section,
        )
        campaign_section = dict(data["campaign"])
        workers = campaign_section.pop("workers")
        campaign = CampaignConfig(
            strategies=tuple(campaign_section.pop("strategies")),
            workers=workers or None,
            human=human,
            trial=trial,
            **campaign_section,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return AppConfig(kinematics, hqp, admittance, strategy, human, trial, campaign)


def load_config(path: str | Path | None = None) -> AppConfig:
    """
    Load the packaged defaults overridden by a user TOML file.

    Args:
        path: User file; falls back to ``$BALANCE_ASSIST_CONFIG``.

    Raises:
        ConfigError: For unreadable files, unknown sections or keys, and
            invalid values.
    """
    defaults = tomllib.loads(default_config_text())
    resolved = resolve_config_path(path)
    if resolved is None:
        return build_config(defaults)
    try:
        user = tomllib.loads(resolved.read_text())
    except OSError as exc:
        raise ConfigError(f"Cannot read config {resolved}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{resolved}: {exc}") from exc
    logger.info("Configuration loaded from %s", resolved)
    return build_config(_merge(defaults, user, str(resolved)))


def with_trial(config: AppConfig, **changes: Any) -> AppConfig:
    """Copy of ``config`` with trial fields replaced."""
    try:
        trial = replace(config.trial, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return replace(config, trial=trial)
