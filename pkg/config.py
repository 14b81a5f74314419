#!/usr/bin/env python3
"""
HSI Denoise Run Configuration

Layered configuration for scene generation, training and evaluation.
Layers, lowest first: profile defaults, HSI_DENOISE_* environment variables
(a .env file in the working directory is honored), a `key = value` config
file, then command-line flags. The resolved configuration of a run is
written next to its checkpoint as TOML.
"""

import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import tomli_w
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from models import EXTRACTOR_GAIN
from noise import UpdateSign

ENV_PREFIX = "HSI_DENOISE_"


class ConfigError(Exception):
    """Custom exception for invalid, unknown or out-of-range configuration values"""
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class Profile(str, Enum):
    """Named default sets: desk-scale CPU runs or the full-scale setting."""
    DESK = "desk"
    FULL_SCALE = "full-scale"


# desk runs take far fewer steps than full-scale ones and use a larger lr
PROFILES: Dict[Profile, Dict[str, Any]] = {
    Profile.DESK: {"k": 64, "d": 64, "lr": 1e-2, "per_class": 50, "epochs": 30},
    Profile.FULL_SCALE: {"k": 1024, "d": 400, "lr": 1e-4, "per_class": 200, "epochs": 30},
}


class RunConfig(BaseModel):
    """All options of a run, validated"""

    model_config = ConfigDict(extra="forbid")

    profile: Profile = Field(Profile.DESK, description="Default set for k, d, lr, per_class and epochs")
    cube: str = Field("scene.hsic", description="HSIC cube path")
    checkpoint: str = Field("runs/model.hdnm", description="HDNM checkpoint path")
    output_dir: str = Field("runs", description="Directory for logs, splits and maps")

    k: Optional[int] = Field(None, description="Number of base noises")
    d: Optional[int] = Field(None, description="Feature dimension")
    neighbor_size: int = Field(5, description="Odd patch side length")
    lr: Optional[float] = Field(None, description="Learning rate")
    batch: int = Field(4, description="Training batch size")
    alpha: float = Field(1.0, description="Diversity tradeoff")
    beta: float = Field(0.9, description="Noise space decay rate")
    epsilon: float = Field(1e-8, description="Norm guard of the noise reconstruction")
    lambda_c: float = Field(0.01, description="Center loss weight")
    gamma: float = Field(0.5, description="Center update rate")
    epochs: Optional[int] = Field(None, description="Training epochs")
    per_class: Optional[int] = Field(None, description="Training pixels per class")
    eval_limit: int = Field(512, description="Held-out pixels evaluated after every epoch")
    seed: int = Field(0, description="Seed for every random stream")
    update_sign: UpdateSign = Field(UpdateSign.DESCENT, description="descent or as-written noise update")
    baseline: bool = Field(False, description="Disable the noise module")
    extractor_gain: float = Field(EXTRACTOR_GAIN, description="Initial extractor weight scale, relative to 1/sqrt(d)")

    classes: int = Field(4, description="Scene classes")
    bands: int = Field(32, description="Scene bands")
    rows: int = Field(64, description="Scene rows")
    cols: int = Field(64, description="Scene columns")
    true_bases: int = Field(8, description="Generator-side base noises")
    noise_amplitude: float = Field(10.0, description="Scale of the generator noise weights")
    white_noise_sigma: float = Field(0.05, description="Sensor noise standard deviation")
    region_size: int = Field(16, description="Side of the square class regions")

    @field_validator('beta', 'gamma')
    def validate_unit_interval(cls, v, info):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f'{info.field_name} must be within [0, 1], got {v}')
        return v

    @field_validator('alpha', 'lambda_c', 'noise_amplitude', 'white_noise_sigma', 'lr', 'extractor_gain')
    def validate_non_negative(cls, v, info):
        if v is not None and v < 0:
            raise ValueError(f'{info.field_name} must be non-negative, got {v}')
        return v

    @field_validator('epsilon')
    def validate_epsilon(cls, v):
        if v <= 0:
            raise ValueError(f'epsilon must be positive, got {v}')
        return v

    @field_validator('neighbor_size')
    def validate_neighbor_size(cls, v):
        if v < 1 or v % 2 == 0:
            raise ValueError(f'neighbor_size must be a positive odd number, got {v}')
        return v

    @field_validator('k', 'd', 'batch', 'per_class', 'eval_limit', 'classes', 'bands', 'rows', 'cols',
                     'true_bases', 'region_size')
    def validate_positive(cls, v, info):
        if v is not None and v < 1:
            raise ValueError(f'{info.field_name} must be at least 1, got {v}')
        return v

    @field_validator('epochs')
    def validate_epochs(cls, v):
        if v is not None and v < 0:
            raise ValueError(f'epochs must be non-negative, got {v}')
        return v

    @model_validator(mode='after')
    def apply_profile(self):
        """Fill every unset profile-controlled option from the profile"""
        for key, value in PROFILES[self.profile].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self


FIELDS = tuple(RunConfig.model_fields)


def normalize_key(key: str) -> str:
    """Accept kebab-case and snake_case spellings"""
    return key.strip().replace('-', '_').lower()


def parse_value(text: str) -> Any:
    """Parse a value as TOML, falling back to the bare string"""
    text = text.strip()
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read `key = value` lines.

    Blank lines and lines starting with '#' are skipped.

    Raises:
        ConfigError: If the file is missing, or on a malformed line or an unknown key
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        if '=' not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{stripped}'")
        key, raw = stripped.split('=', 1)
        key = normalize_key(key)
        if key not in FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'", field=key)
        values[key] = parse_value(raw)
    return values


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Options set through HSI_DENOISE_<KEY> variables"""
    environ = os.environ if environ is None else environ
    values = {}
    for key in FIELDS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            values[key] = parse_value(environ[name])
    return values


def build_config(values: Mapping[str, Any]) -> RunConfig:
    """
    Validate merged option values.

    Raises:
        ConfigError: Naming the first offending field
    """
    unknown = [key for key in values if key not in FIELDS]
    if unknown:
        raise ConfigError(f"unknown option '{unknown[0]}'", field=unknown[0])
    try:
        return RunConfig(**values)
    except ValidationError as e:
        error = e.errors()[0]
        field = str(error['loc'][0]) if error['loc'] else None
        # pydantic prefixes validator messages
        message = error['msg'].removeprefix('Value error, ')
        raise ConfigError(f"{field}: {message}" if field else message, field=field) from e


def load_run_config(overrides: Optional[Mapping[str, Any]] = None,
                    config_path: Optional[Union[str, Path]] = None,
                    environ: Optional[Mapping[str, str]] = None,
                    dotenv_path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Resolve a run configuration from all layers.

    Args:
        overrides: Command-line values, highest precedence
        config_path: Optional `key = value` file
        environ: Environment to read (defaults to os.environ after loading .env)
        dotenv_path: Optional .env file; the working directory's .env otherwise

    Returns:
        RunConfig: Validated configuration with profile defaults applied
    """
    if environ is None:
        load_dotenv(dotenv_path) if dotenv_path else load_dotenv()
    # later layers win
    merged: Dict[str, Any] = {}
    merged.update(env_overrides(environ))
    if config_path:
        merged.update(read_config_file(config_path))
    if overrides:
        merged.update({normalize_key(k): v for k, v in overrides.items() if v is not None})
    return build_config(merged)


def save_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write the resolved configuration as TOML"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {key: value for key, value in config.model_dump(mode='json').items() if value is not None}
    with open(path, 'wb') as f:
        tomli_w.dump(data, f)
    return path
