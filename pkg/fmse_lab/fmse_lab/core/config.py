"""
Configuration management for the FMSE lab.
Supports environment variables (development default) and a JSON settings file
layered on top of the environment.
"""
import os
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, fields, replace
from typing import Optional, Dict, Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class LabConfig:
    """Lab-wide numerical tolerances and run defaults."""

    # Identity tolerances
    tolerance: float = 1e-10
    adjoint_tolerance: float = 1e-12
    symmetry_tolerance: float = 1e-12
    probability_tolerance: float = 1e-15

    # Linear algebra limits
    condition_limit: float = 1e12
    rank_cutoff: float = 1e-10

    # Random walk statistics
    chi_square_quantile: float = 0.999

    # Runs
    default_seed: int = 20240601
    threads: int = 1
    output_dir: str = "fmse_output"
    report_schema_version: str = "1"

    # Environment
    environment: str = "development"


class LabSettingsFile(BaseModel):
    """Schema of the optional JSON settings file (every key optional, none unknown)."""

    model_config = ConfigDict(extra='forbid')

    tolerance: Optional[float] = Field(default=None, gt=0)
    adjoint_tolerance: Optional[float] = Field(default=None, gt=0)
    symmetry_tolerance: Optional[float] = Field(default=None, gt=0)
    probability_tolerance: Optional[float] = Field(default=None, gt=0)
    condition_limit: Optional[float] = Field(default=None, gt=1)
    rank_cutoff: Optional[float] = Field(default=None, gt=0, lt=1)
    chi_square_quantile: Optional[float] = Field(default=None, gt=0, lt=1)
    default_seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    threads: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[str] = None


class ConfigProvider(ABC):
    """Abstract base class for configuration providers."""

    @abstractmethod
    def get_config(self) -> LabConfig:
        """Get lab configuration."""
        pass

    @abstractmethod
    def get_setting(self, name: str) -> Optional[str]:
        """Get a single raw setting value."""
        pass


class EnvironmentConfigProvider(ConfigProvider):
    """Configuration provider that reads FMSE_* environment variables."""

    def get_config(self) -> LabConfig:
        """Load configuration from environment variables."""
        return LabConfig(
            tolerance=float(os.getenv('FMSE_TOLERANCE', '1e-10')),
            adjoint_tolerance=float(os.getenv('FMSE_ADJOINT_TOLERANCE', '1e-12')),
            symmetry_tolerance=float(os.getenv('FMSE_SYMMETRY_TOLERANCE', '1e-12')),
            probability_tolerance=float(os.getenv('FMSE_PROBABILITY_TOLERANCE', '1e-15')),

            condition_limit=float(os.getenv('FMSE_CONDITION_LIMIT', '1e12')),
            rank_cutoff=float(os.getenv('FMSE_RANK_CUTOFF', '1e-10')),

            chi_square_quantile=float(os.getenv('FMSE_CHI_SQUARE_QUANTILE', '0.999')),

            default_seed=int(os.getenv('FMSE_SEED', '20240601')),
            threads=int(os.getenv('FMSE_THREADS', '1')),
            output_dir=os.getenv('FMSE_OUTPUT_DIR', 'fmse_output'),

            environment=os.getenv('ENVIRONMENT', 'development')
        )

    def get_setting(self, name: str) -> Optional[str]:
        """Get setting from environment variable."""
        return os.getenv(name)


class FileConfigProvider(ConfigProvider):
    """Configuration provider that overlays a JSON settings file on the environment."""

    def __init__(self, path: str):
        """
        Args:
            path: JSON file whose keys are a subset of LabConfig fields
        """
        self.path = path
        self._config_cache: Optional[LabConfig] = None
        self._raw: Optional[Dict[str, Any]] = None

    def _load(self) -> Dict[str, Any]:
        if self._raw is None:
            with open(self.path, 'r', encoding='utf-8') as handle:
                payload = json.load(handle)
            try:
                settings = LabSettingsFile.model_validate(payload)
            except ValidationError as e:
                from fmse_lab.src.exceptions import ConfigurationError
                raise ConfigurationError(f"Invalid settings file '{self.path}': {e}") from e
            self._raw = settings.model_dump(exclude_none=True)
        return self._raw

    def get_setting(self, name: str) -> Optional[str]:
        value = self._load().get(name)
        return None if value is None else str(value)

    def get_config(self) -> LabConfig:
        """Environment configuration with file values taking precedence."""
        if self._config_cache is not None:
            return self._config_cache

        base = EnvironmentConfigProvider().get_config()
        known = {f.name for f in fields(LabConfig)}
        overrides = {k: v for k, v in self._load().items() if k in known}
        self._config_cache = replace(base, **overrides)
        logger.info(f"Loaded lab settings from {self.path}: {sorted(overrides)}")
        return self._config_cache


def get_config_provider() -> ConfigProvider:
    """
    Factory function to get the configuration provider.

    Returns:
        ConfigProvider: file provider when FMSE_CONFIG_FILE is set, else environment provider
    """
    settings_file = os.getenv('FMSE_CONFIG_FILE')

    if settings_file:
        if os.path.exists(settings_file):
            logger.info(f"Using settings file provider: {settings_file}")
            return FileConfigProvider(settings_file)
        logger.warning(f"FMSE_CONFIG_FILE={settings_file} not found, falling back to environment variables")
    return EnvironmentConfigProvider()


# Global configuration instance
_config_provider: Optional[ConfigProvider] = None
_lab_config: Optional[LabConfig] = None


def get_lab_config() -> LabConfig:
    """
    Get lab configuration singleton.

    Returns:
        LabConfig: lab configuration instance
    """
    global _config_provider, _lab_config

    if _lab_config is None:
        if _config_provider is None:
            _config_provider = get_config_provider()
        _lab_config = _config_provider.get_config()

    return _lab_config


def reset_config():
    """Reset configuration cache - useful for testing."""
    global _config_provider, _lab_config
    _config_provider = None
    _lab_config = None
