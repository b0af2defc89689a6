"""Configuration management for the dual-control workbench."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        env_prefix="",
    )

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_dir: str = Field(default="logs", description="Directory for log files")
    log_rotation: str = Field(default="daily", description="Log rotation interval")
    log_retention_days: int = Field(default=30, description="Days to keep logs")

    # Execution
    output_dir: str = Field(default="results", description="Directory for CSV/SVG output")
    n_jobs: int = Field(default=1, description="Parallel workers for trials (joblib)")
    default_preset: str = Field(default="desk", description="Preset used when none is given")

    def create_directories(self):
        """Create output and log directories if they don't exist."""
        for directory in (Path(self.output_dir), Path(self.log_dir)):
            directory.mkdir(parents=True, exist_ok=True)


# ==================== Experiment Parameters ====================


class PlantSpec(BaseModel):
    """Physical and noise constants of the planar box-pushing task."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(default=0.1, gt=0, description="Step duration (s)")
    u_max: float = Field(default=5.0, gt=0, description="Bound on |F_x|, |F_y|, |T|")
    param_floor: float = Field(default=0.0625, gt=0, description="Lower bound on parameters")
    process_var: float = Field(default=0.01, ge=0, description="Truth process variance")
    filter_process_var: Optional[float] = Field(
        default=None, ge=0, description="Filter process variance (None = process_var)"
    )
    meas_var: float = Field(default=0.0, ge=0, description="Measurement noise variance")
    meas_floor: float = Field(default=1e-6, gt=0, description="Filter measurement floor")
    r_pos: float = Field(default=-2.5, le=0, description="Position reward weight")
    r_vel: float = Field(default=-50.0, le=0, description="Velocity reward weight")
    r_u: float = Field(default=-0.3, le=0, description="Control effort reward weight")
    horizon_steps: int = Field(default=50, ge=1, description="Closed-loop steps per trial")

    @property
    def filter_q(self) -> float:
        """Process variance assumed by the filter."""
        if self.filter_process_var is None:
            return self.process_var
        return self.filter_process_var

    @property
    def filter_r(self) -> float:
        """Measurement variance assumed by the filter."""
        return max(self.meas_var, self.meas_floor)


class SearchMode(str, Enum):
    """Tree-search variants."""

    MCTS = "MCTS"
    QMDP_TS = "QMDP_TS"


class BoundingParams(BaseModel):
    """Probabilistic bounding heuristic parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    beta_des: float = Field(default=6.0, gt=0, description="Desired next-state norm bound")
    alpha: float = Field(default=0.05, gt=0, lt=1, description="Significance level")
    n_u: int = Field(default=50, ge=1, description="Maximum action draws")
    n_b: int = Field(default=100, ge=1, description="Belief samples")


class SearchParams(BaseModel):
    """MCTS-DPW / QMDP-TS hyperparameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k_action: float = Field(default=22.0, gt=0)
    k_state: float = Field(default=5.0, gt=0)
    dpw_exponent: float = Field(default=1.0 / 30.0, ge=0)
    depth: int = Field(default=12, ge=1)
    explore_c: float = Field(default=27.0, ge=0)
    node_budget: int = Field(default=3000, ge=1)
    epsilon_mpc: float = Field(default=0.8, ge=0, le=1)
    discount: float = Field(default=0.99, gt=0, le=1)
    mode: SearchMode = Field(default=SearchMode.MCTS)
    bounding: Optional[BoundingParams] = Field(
        default=None, description="Action filter; None disables the bounding hook"
    )


class MpcVariant(str, Enum):
    """MPC flavours compared in the experiments."""

    STANDARD = "standard"
    ORACLE = "oracle"
    CAUTIOUS = "cautious"


class MpcParams(BaseModel):
    """Certainty-equivalent MPC parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    horizon: int = Field(default=12, ge=1)
    lp_tolerance: float = Field(default=1e-7, gt=0)
    variant: MpcVariant = Field(default=MpcVariant.STANDARD)
    cautious_inflation: float = Field(default=4.0, ge=1)


class CeConfig(BaseModel):
    """Cross-entropy tuner settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    init_mean: List[float] = Field(default=[20.0, 20.0, 10.0, 20.0], min_length=4, max_length=4)
    init_cov: List[float] = Field(default=[64.0, 64.0, 16.0, 81.0], min_length=4, max_length=4)
    population: int = Field(default=50, ge=1)
    elites: int = Field(default=10, ge=1)
    max_iters: int = Field(default=25, ge=1)
    eig_threshold: float = Field(default=3.0, gt=0)
    trials_per_sample: int = Field(default=5, ge=1)
    ridge: float = Field(default=1e-6, ge=0)

    @model_validator(mode="after")
    def check_elites(self) -> "CeConfig":
        """Elites must fit inside the population."""
        if self.elites > self.population:
            raise ValueError("elites must not exceed population")
        return self


class Policy(str, Enum):
    """Closed-loop policies."""

    MCTS = "MCTS"
    QMDP_TS = "QMDP_TS"
    MPC = "MPC"
    MPC_CAUTIOUS = "MPC_CAUTIOUS"
    MPC_ORACLE = "MPC_ORACLE"


class ExperimentConfig(BaseModel):
    """Everything one closed-loop experiment needs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    policy: Policy = Field(default=Policy.MCTS)
    trials: int = Field(default=20, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    state_bound: float = Field(default=6.0, gt=0, description="Norm bound for out-of-bound counts")
    spec: PlantSpec = Field(default_factory=PlantSpec)
    search: SearchParams = Field(default_factory=SearchParams)
    mpc: MpcParams = Field(default_factory=MpcParams)
    ce: CeConfig = Field(default_factory=CeConfig)
    bounding: Optional[BoundingParams] = Field(default=None)
    noise_values: List[float] = Field(default=[0.005, 0.01, 0.015, 0.02, 0.025, 0.03])
    floor_values: List[float] = Field(default=[0.0375, 0.05, 0.0625, 0.075, 0.0875, 0.1])
    bounds: List[float] = Field(default=[6.0, 5.0, 4.0])

    @property
    def steps(self) -> int:
        """Closed-loop steps per trial."""
        return self.spec.horizon_steps


# ==================== Presets ====================

PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {
        "trials": 20,
        "search": {"node_budget": 600},
        "ce": {"trials_per_sample": 5},
    },
    "paper-full": {
        "trials": 100,
        "search": {"node_budget": 3000},
        "ce": {"trials_per_sample": 5},
    },
}


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override dicts into a base dict."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_experiment(
    preset: str = "desk", overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Build an experiment config from a named preset plus overrides.

    Args:
        preset: Preset name ("desk" or "paper-full")
        overrides: Nested dict of field overrides

    Returns:
        Validated experiment configuration

    Raises:
        KeyError: If the preset is unknown
        pydantic.ValidationError: If the merged values violate a constraint
    """
    if preset not in PRESETS:
        raise KeyError(f"Unknown preset: {preset} (available: {', '.join(PRESETS)})")
    return ExperimentConfig.model_validate(_merge(PRESETS[preset], overrides or {}))


# ==================== Flat key = value files ====================

_NESTED_SECTIONS = ("spec", "search", "mpc", "ce", "bounding")


def parse_key_values(text: str) -> Dict[str, str]:
    """Parse `key = value` lines, ignoring blanks and # comments."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _coerce(value: str) -> Any:
    """Turn a config string into a JSON-ish python value for pydantic."""
    if value.lower() in ("none", "null", ""):
        return None
    if value.startswith("[") and value.endswith("]"):
        return [_coerce(item.strip()) for item in value[1:-1].split(",") if item.strip()]
    return value


def key_values_to_overrides(values: Dict[str, str]) -> Dict[str, Any]:
    """Map flat keys onto the nested ExperimentConfig structure.

    Bare keys that name a PlantSpec field go to `spec`; other bare keys are
    top-level experiment fields; dotted keys address nested sections.
    """
    overrides: Dict[str, Any] = {}
    for key, value in values.items():
        if "." in key:
            section, field = key.split(".", 1)
            if section not in _NESTED_SECTIONS:
                raise ValueError(f"Unknown config section: {section}")
            overrides.setdefault(section, {})[field] = _coerce(value)
        elif key in PlantSpec.model_fields:
            overrides.setdefault("spec", {})[key] = _coerce(value)
        else:
            overrides[key] = _coerce(value)
    return overrides


def load_experiment_file(path: str | Path, preset: str = "desk") -> ExperimentConfig:
    """Load a flat config file on top of a preset."""
    text = Path(path).read_text(encoding="utf-8")
    return build_experiment(preset, key_values_to_overrides(parse_key_values(text)))


def dump_plant_spec(spec: PlantSpec) -> str:
    """Serialize a PlantSpec to `key = value` text."""
    lines = []
    for name, value in spec.model_dump().items():
        lines.append(f"{name} = {'none' if value is None else repr(value)}")
    return "\n".join(lines) + "\n"


def load_plant_spec(text: str) -> PlantSpec:
    """Parse `key = value` text back into a PlantSpec."""
    values = parse_key_values(text)
    return PlantSpec.model_validate({k: _coerce(v) for k, v in values.items()})


# Global settings instance
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get or create the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def load_settings(env_file: str | None = None) -> Settings:
    """Load settings from the environment (and an optional env file)."""
    global _settings
    if env_file:
        _settings = Settings(_env_file=env_file)
    else:
        _settings = Settings()
    return _settings
