"""Run configuration: one TOML file per profile, validated section by section."""
import copy
import os
from typing import Literal, Optional

import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from etp.Actionness import ActionnessConfig
from etp.Localization import LocalizationConfig
from etp.Refinement import RefinementConfig, UnitConfig
from logs import logger
from .errors import InputError

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "configs")
PROFILES = {
    "desk": os.path.join(CONFIG_DIR, "setting.toml"),
    "paper": os.path.join(CONFIG_DIR, "full.toml"),
    # alias of "paper"
    "full": os.path.join(CONFIG_DIR, "full.toml"),
}


class BasicConfig(BaseModel):
    seed: int = 0
    threads: int = Field(1, ge=1)
    profile: Literal["desk", "paper", "full"] = "desk"


class EvaluationConfig(BaseModel):
    iou_thresholds: list[float] = Field([0.3, 0.4, 0.5, 0.6, 0.7], min_length=1)

    @field_validator("iou_thresholds")
    @classmethod
    def check_thresholds(cls, values):
        for value in values:
            if not 0.0 < value <= 1.0:
                raise ValueError(f"IoU threshold {value} outside (0, 1]")
        return values


class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    basic: BasicConfig = Field(default_factory=BasicConfig)
    actionness: ActionnessConfig = Field(default_factory=ActionnessConfig)
    units: UnitConfig = Field(default_factory=UnitConfig)
    refinement: RefinementConfig = Field(default_factory=RefinementConfig)
    localization: LocalizationConfig = Field(default_factory=LocalizationConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    # synthetic data settings stay a plain table; data.synth validates them
    synth: dict = Field(default_factory=dict)


def read_config(toml_path=None):
    """Read configuration from TOML file

    Args:
        toml_path (str, optional): Path to the TOML configuration file.
                                 If None, use the desk profile.

    Returns:
        dict: Configuration content
    """
    if toml_path is None:
        toml_path = PROFILES["desk"]
    try:
        with open(toml_path, 'r') as f:
            return toml.load(f)
    except FileNotFoundError:
        raise InputError(f"config file not found: {toml_path}")
    except toml.TomlDecodeError as e:
        raise InputError(f"config file {toml_path} is not valid TOML: {e}")


def merge_config(base: dict, overrides: dict) -> dict:
    """Nested merge of ``overrides`` into a copy of ``base``; None values are skipped."""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = merge_config(current if isinstance(current, dict) else {}, value)
        elif value is not None:
            merged[key] = value
    return merged


def load_run_config(profile: str = "desk", toml_path: Optional[str] = None,
                    overrides: Optional[dict] = None) -> RunConfig:
    """Profile file, then ``toml_path`` layered on it, then per-section ``overrides``."""
    if profile not in PROFILES:
        raise InputError(f"unknown profile {profile!r}, expected one of {sorted(PROFILES)}")
    raw = read_config(PROFILES[profile])
    if toml_path is not None:
        raw = merge_config(raw, read_config(toml_path))
    raw = merge_config(raw, overrides or {})
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        logger.error("configuration failed validation")
        raise InputError(f"invalid configuration: {e}")
    logger.debug(f"configuration: {config.model_dump()}")
    return config
