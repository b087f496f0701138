"""
Run Configuration Module for LCDA.
Loads, validates and writes the single JSON file that describes a run.
Missing keys fall back to the defaults in config.py; the LLM credential is
never part of the file.
"""

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional

from cim_cost import UnitCosts
from config import (
    ADC_SCALING,
    BATCH_SIZE,
    COLDSTART_MAX_EPISODES,
    COLDSTART_SEEDS,
    COLDSTART_TOLERANCE,
    DEFAULT_EPISODES,
    DEFAULT_EVALUATOR,
    DEFAULT_OPTIMIZER,
    DEFAULT_SEED,
    LEARNING_RATE,
    LLM_API_KEY_ENV,
    LLM_BACKOFF_SECONDS,
    LLM_ENDPOINT,
    LLM_MAX_RETRIES,
    LLM_MAX_TOKENS,
    LLM_MODEL,
    LLM_TEMPERATURE,
    LLM_TIMEOUT_SECONDS,
    MAX_PROPOSAL_ATTEMPTS,
    MC_SAMPLES,
    NOISE_SIGMA,
    PROMPT_HISTORY_CAP,
    SYNTHETIC_IMAGE_SIZE,
    SYNTHETIC_NUM_CLASSES,
    SYNTHETIC_PIXEL_NOISE,
    SYNTHETIC_TEST_PER_CLASS,
    SYNTHETIC_TRAIN_PER_CLASS,
    TRAIN_EPOCHS,
    WEIGHT_BITS,
)
from design_space import DesignSpace, default_design_space
from errors import ConfigError, DesignSpaceError
from logger import get_logger
from optimizers import OPTIMIZER_NAMES
from search import RewardSpec

logger = get_logger(__name__)

EVALUATORS = ("surrogate", "trained")
DATASET_KINDS = ("synthetic", "image_batch")
CREDENTIAL_KEYS = {"api_key", "apikey", "key", "token", "authorization", "credential"}


@dataclass(frozen=True)
class HardwareSettings:
    unit_costs: UnitCosts = field(default_factory=UnitCosts)
    weight_bits: int = WEIGHT_BITS
    adc_scaling: bool = ADC_SCALING


@dataclass(frozen=True)
class TrainingSettings:
    epochs: int = TRAIN_EPOCHS
    learning_rate: float = LEARNING_RATE
    batch_size: int = BATCH_SIZE
    mc_samples: int = MC_SAMPLES


@dataclass(frozen=True)
class DatasetSettings:
    kind: str = "synthetic"
    num_classes: int = SYNTHETIC_NUM_CLASSES
    image_size: int = SYNTHETIC_IMAGE_SIZE
    train_per_class: int = SYNTHETIC_TRAIN_PER_CLASS
    test_per_class: int = SYNTHETIC_TEST_PER_CLASS
    pixel_noise: float = SYNTHETIC_PIXEL_NOISE
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    limit: Optional[int] = None


@dataclass(frozen=True)
class LlmSettings:
    endpoint: str = LLM_ENDPOINT
    model: str = LLM_MODEL
    temperature: float = LLM_TEMPERATURE
    max_tokens: int = LLM_MAX_TOKENS
    max_retries: int = LLM_MAX_RETRIES
    backoff_seconds: float = LLM_BACKOFF_SECONDS
    timeout_seconds: float = LLM_TIMEOUT_SECONDS
    history_cap: int = PROMPT_HISTORY_CAP
    max_attempts: int = MAX_PROPOSAL_ATTEMPTS


@dataclass(frozen=True)
class ColdstartSettings:
    seeds: int = COLDSTART_SEEDS
    max_episodes: int = COLDSTART_MAX_EPISODES
    tolerance: float = COLDSTART_TOLERANCE


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, one optimizer per run."""
    space: DesignSpace = field(default_factory=default_design_space)
    hardware: HardwareSettings = field(default_factory=HardwareSettings)
    sigma: float = NOISE_SIGMA
    training: TrainingSettings = field(default_factory=TrainingSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    reward: RewardSpec = field(default_factory=RewardSpec)
    optimizer: str = DEFAULT_OPTIMIZER
    evaluator: str = DEFAULT_EVALUATOR
    episodes: int = DEFAULT_EPISODES
    seed: int = DEFAULT_SEED
    llm: LlmSettings = field(default_factory=LlmSettings)
    transcript_path: Optional[str] = None
    output_dir: str = "runs/default"
    coldstart: ColdstartSettings = field(default_factory=ColdstartSettings)

    @property
    def backbone(self):
        return self.space.backbone


def _reject_credentials(data, where: str = "config"):
    if isinstance(data, dict):
        for key, value in data.items():
            if key.lower() in CREDENTIAL_KEYS:
                raise ConfigError(f"'{where}.{key}' looks like a credential; set {LLM_API_KEY_ENV} instead")
            _reject_credentials(value, f"{where}.{key}")


def _section(cls, data: Optional[Dict], name: str):
    """Build a settings dataclass from a dict, rejecting unknown keys."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in '{name}': {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid '{name}' section: {e}")


def _positive(name: str, value, allow_zero: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"'{name}' must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")


def validate_config(config: RunConfig) -> RunConfig:
    """
    Check cross-field consistency.

    Raises:
        ConfigError: on any inconsistent or out-of-range value
    """
    if config.optimizer not in OPTIMIZER_NAMES:
        raise ConfigError(f"optimizer must be one of {OPTIMIZER_NAMES}, got {config.optimizer!r}")
    if config.evaluator not in EVALUATORS:
        raise ConfigError(f"evaluator must be one of {EVALUATORS}, got {config.evaluator!r}")
    if config.dataset.kind not in DATASET_KINDS:
        raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {config.dataset.kind!r}")
    if isinstance(config.episodes, bool) or not isinstance(config.episodes, int) or config.episodes < 1:
        raise ConfigError(f"episodes must be a positive integer, got {config.episodes!r}")
    if isinstance(config.seed, bool) or not isinstance(config.seed, int) or config.seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {config.seed!r}")
    _positive("sigma", config.sigma, allow_zero=True)
    _positive("hardware.weight_bits", config.hardware.weight_bits)
    if not isinstance(config.hardware.adc_scaling, bool):
        raise ConfigError(f"hardware.adc_scaling must be true or false, got {config.hardware.adc_scaling!r}")
    for f in fields(UnitCosts):
        _positive(f"hardware.unit_costs.{f.name}", getattr(config.hardware.unit_costs, f.name))
    for f in fields(TrainingSettings):
        _positive(f"training.{f.name}", getattr(config.training, f.name))
    for name in ("max_tokens", "history_cap", "max_attempts", "timeout_seconds"):
        _positive(f"llm.{name}", getattr(config.llm, name))
    _positive("llm.max_retries", config.llm.max_retries, allow_zero=True)
    _positive("llm.temperature", config.llm.temperature, allow_zero=True)
    _positive("coldstart.seeds", config.coldstart.seeds)
    _positive("coldstart.max_episodes", config.coldstart.max_episodes)
    _positive("coldstart.tolerance", config.coldstart.tolerance, allow_zero=True)

    if config.evaluator == "trained":
        backbone, ds = config.backbone, config.dataset
        if ds.kind == "synthetic":
            height, width, _ = backbone.input_shape
            if (height, width) != (ds.image_size, ds.image_size):
                raise ConfigError(f"backbone input {height}x{width} does not match synthetic image size "
                                  f"{ds.image_size}")
        elif not (ds.train_path and ds.test_path):
            raise ConfigError("dataset.train_path and dataset.test_path are required for image_batch")
        if ds.num_classes != backbone.num_classes and ds.kind == "synthetic":
            raise ConfigError(f"dataset has {ds.num_classes} classes, backbone {backbone.num_classes}")
    return config


def config_from_dict(data: Dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("Configuration must be a JSON object")
    _reject_credentials(data)
    known = ({f.name for f in fields(RunConfig)} - {"space", "sigma"}) | {"design_space", "backbone", "noise"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {unknown}")

    hw_data = dict(data.get("hardware") or {})
    area_budget = hw_data.pop("area_budget", None)
    try:
        space_data = dict(data.get("design_space") or default_design_space().to_dict())
        space_data["backbone"] = data.get("backbone", space_data.get("backbone", {}))
        space = DesignSpace.from_dict(space_data, area_budget)
    except (KeyError, TypeError, DesignSpaceError) as e:
        raise ConfigError(f"Invalid design space: {e}")

    hardware = HardwareSettings(
        unit_costs=_section(UnitCosts, hw_data.pop("unit_costs", None), "hardware.unit_costs"),
        weight_bits=hw_data.pop("weight_bits", WEIGHT_BITS),
        adc_scaling=hw_data.pop("adc_scaling", ADC_SCALING),
    )
    if hw_data:
        raise ConfigError(f"Unknown keys in 'hardware': {sorted(hw_data)}")

    noise = data.get("noise") or {}
    if not isinstance(noise, dict) or set(noise) - {"sigma"}:
        raise ConfigError("'noise' must be an object with only a 'sigma' key")

    defaults = RunConfig(space=space)
    config = RunConfig(
        space=space,
        hardware=hardware,
        sigma=noise.get("sigma", NOISE_SIGMA),
        training=_section(TrainingSettings, data.get("training"), "training"),
        dataset=_section(DatasetSettings, data.get("dataset"), "dataset"),
        reward=_section(RewardSpec, data.get("reward"), "reward"),
        optimizer=data.get("optimizer", defaults.optimizer),
        evaluator=data.get("evaluator", defaults.evaluator),
        episodes=data.get("episodes", defaults.episodes),
        seed=data.get("seed", defaults.seed),
        llm=_section(LlmSettings, data.get("llm"), "llm"),
        transcript_path=data.get("transcript_path"),
        output_dir=data.get("output_dir", defaults.output_dir),
        coldstart=_section(ColdstartSettings, data.get("coldstart"), "coldstart"),
    )
    return validate_config(config)


def render_config(config: RunConfig) -> Dict:
    """Plain-dict form; config_from_dict(render_config(c)) == c."""
    space = config.space.to_dict()
    backbone = space.pop("backbone")
    return {
        "design_space": space,
        "backbone": backbone,
        "hardware": {
            "unit_costs": config.hardware.unit_costs.to_dict(),
            "weight_bits": config.hardware.weight_bits,
            "adc_scaling": config.hardware.adc_scaling,
            "area_budget": config.space.hardware.area_budget,
        },
        "noise": {"sigma": config.sigma},
        "training": {f.name: getattr(config.training, f.name) for f in fields(TrainingSettings)},
        "dataset": {f.name: getattr(config.dataset, f.name) for f in fields(DatasetSettings)},
        "reward": config.reward.to_dict(),
        "optimizer": config.optimizer,
        "evaluator": config.evaluator,
        "episodes": config.episodes,
        "seed": config.seed,
        "llm": {f.name: getattr(config.llm, f.name) for f in fields(LlmSettings)},
        "transcript_path": config.transcript_path,
        "output_dir": config.output_dir,
        "coldstart": {f.name: getattr(config.coldstart, f.name) for f in fields(ColdstartSettings)},
    }


def load_config(path: Path) -> RunConfig:
    """
    Load a run configuration file.

    Raises:
        ConfigError: if the file is missing, not JSON or invalid
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Configuration file {path} is not valid JSON: {e}")
    config = config_from_dict(data)
    logger.debug(f"Loaded configuration from {path}")
    return config


def save_config(config: RunConfig, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(render_config(config), f, indent=2)
        f.write("\n")
    logger.debug(f"Saved configuration to {path}")


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Replace top-level fields given on the command line; None values are ignored."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return config
    return validate_config(replace(config, **changes))


def default_config() -> RunConfig:
    return validate_config(RunConfig())
