### Process settings, logging setup, experiment config loading and run metadata

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from vortex_thermal.detection import DEFAULT_IDLER_WAIST, DetectorConfig, thermal_mask
from vortex_thermal.errors import ConfigError
from vortex_thermal.lg_modes import GridSpec
from vortex_thermal.spdc_source import SourceParams

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

ExperimentKind = Literal['spectrum', 'pump-sweep', 'aperture-sweep', 'turbulence', 'coherent-turbulence', 'ensemble']


class SimulatorSettings(BaseSettings):
    """Process-level settings read from VORTEX_* environment variables and .env."""

    model_config = SettingsConfigDict(env_prefix='VORTEX_', env_file='.env', extra='ignore')

    log_level: str = 'INFO'
    output_root: Path = Path('./runs')
    max_workers: int = Field(default=1, ge=1)
    configs_dir: Path = Path('./configs')


def load_settings(env_path: Optional[Path] = None) -> SimulatorSettings:
    """Load the .env file (current directory unless given) and build the settings."""
    env_path = Path(env_path) if env_path else Path.cwd() / '.env'
    load_dotenv(env_path, override=False)
    try:
        return SimulatorSettings()
    except ValidationError as e:
        raise ConfigError(f"invalid VORTEX_* settings: {e}") from e


def configure_logging(level: str = 'INFO'):
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level: {level}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)


class GridSettings(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    samples_per_axis: int = Field(default=512, ge=64)
    extent_factor: float = Field(default=8.0, gt=0)

    def for_waist(self, waist: float, L_max: Optional[int] = None) -> GridSpec:
        return GridSpec.for_waist(waist, self.samples_per_axis, self.extent_factor, L_max)


class DetectorSettings(BaseModel):
    """Idler detector; fiber_projection builds a thermal superposition mask at mask_alpha."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['bucket', 'aperture', 'fiber_projection'] = 'bucket'
    diameter: Optional[float] = Field(default=None, gt=0)
    waist: float = Field(default=DEFAULT_IDLER_WAIST, gt=0)
    mask_alpha: Optional[float] = Field(default=None, gt=0)
    literal_weights: bool = False

    @model_validator(mode='after')
    def _kind_fields(self):
        if self.kind == 'aperture' and self.diameter is None:
            raise ValueError("aperture detector needs a diameter")
        if self.kind == 'fiber_projection' and self.mask_alpha is None:
            raise ValueError("fiber_projection detector needs mask_alpha")
        return self

    def to_detector(self, L_max: int, diameter: Optional[float] = None) -> DetectorConfig:
        """Detector object; diameter overrides the configured one (None keeps it)."""
        if self.kind == 'fiber_projection':
            return DetectorConfig.fiber_projection(thermal_mask(self.mask_alpha, L_max, self.literal_weights),
                                                   self.waist)
        diameter = diameter if diameter is not None else self.diameter
        if self.kind == 'bucket' and diameter is None:
            return DetectorConfig.bucket()
        return DetectorConfig.aperture(diameter)


class TurbulenceSettings(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    strength: float = Field(default=0.5, ge=0)
    beam_waist: float = Field(default=1e-3, gt=0)
    subharmonics: bool = True
    n_seeds: int = Field(default=20, ge=1)
    n_masks: int = Field(default=10, ge=1)


class ExperimentConfig(BaseModel):
    """One experiment run, validated from a YAML file."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: ExperimentKind
    seed: int
    source: SourceParams
    detector: DetectorSettings = DetectorSettings()
    grid: GridSettings = GridSettings()
    turbulence: TurbulenceSettings = TurbulenceSettings()
    counts: float = Field(default=1e5, gt=0)
    window: int = Field(default=10, ge=1)
    pump_waists: Optional[List[float]] = None
    # None entries are open (bucket) detectors
    diameters: Optional[List[Optional[float]]] = None
    output_dir: Optional[str] = None

    @model_validator(mode='after')
    def _kind_requirements(self):
        if self.kind == 'pump-sweep':
            if self.source.is_thermal:
                raise ValueError("pump-sweep needs pump_waist and collection_waist in source")
            if not self.pump_waists or len(self.pump_waists) < 2 or min(self.pump_waists) <= 0:
                raise ValueError("pump-sweep needs at least two positive pump_waists")
        if self.kind == 'aperture-sweep':
            if not self.diameters:
                raise ValueError("aperture-sweep needs a list of diameters")
            if any(d is not None and d <= 0 for d in self.diameters):
                raise ValueError("aperture diameters must be positive (use null for an open iris)")
        if self.kind in ('turbulence', 'coherent-turbulence', 'ensemble') and not self.source.is_thermal:
            raise ValueError(f"{self.kind} needs a thermal source (source.alpha)")
        return self


def load_experiment_config(path, settings: Optional[SimulatorSettings] = None) -> ExperimentConfig:
    """
    Load and validate an experiment YAML file.

    Args:
        path: File path; a bare name is also looked up in settings.configs_dir

    Returns:
        ExperimentConfig: The validated configuration
    """
    path = Path(path)
    if not path.is_file() and settings is not None:
        candidate = settings.configs_dir / path
        path = candidate if candidate.is_file() else candidate.with_suffix('.yaml')
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}:\n{e}") from e


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def create_run_config(config: ExperimentConfig, run_name: Optional[str] = None) -> Dict[str, Any]:
    """
    Run metadata derived from the config alone (no clock, no random ids).

    Args:
        config: Validated experiment config
        run_name: Optional label; defaults to the experiment kind

    Returns:
        dict: run_name, run_id, config_hash, seed, kind and the canonical config dump

    Use it like so (example):
        run = create_run_config(load_experiment_config('configs/thermal_spectrum.yaml'))
        out_dir = settings.output_root / run['run_id']
    """
    digest = config_hash(config)
    return {
        'run_name': run_name or config.kind,
        'run_id': f"{config.kind}-{digest[:12]}",
        'config_hash': digest,
        'seed': config.seed,
        'kind': config.kind,
        'config': config.model_dump(mode='json'),
    }
