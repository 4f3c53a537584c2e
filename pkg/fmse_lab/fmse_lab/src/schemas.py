"""
Schema-validated experiment configuration (pydantic v2).

Unknown keys are rejected everywhere so a misspelled option can never silently fall
back to a default; all validation failures surface as ConfigurationError.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigurationError

SCHEMA_VERSION = "1"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class OmegaBox(StrictModel):
    box: List[Tuple[float, float]]


class OmegaBallSpec(StrictModel):
    center: List[float]
    radius: float = Field(gt=0)


class OmegaBall(StrictModel):
    ball: OmegaBallSpec


class GridSettings(StrictModel):
    """The grid JSON object: {"n", "s", "box", "nodes_per_axis", "omega"}."""

    n: int
    s: float
    box: List[Tuple[float, float]]
    nodes_per_axis: int
    omega: Union[OmegaBox, OmegaBall]

    @classmethod
    def parse_mapping(cls, payload: Mapping[str, Any]) -> "GridSettings":
        try:
            return cls.model_validate(dict(payload))
        except ValidationError as e:
            raise ConfigurationError(f"invalid grid configuration: {e}") from e

    def omega_mapping(self) -> Dict[str, Any]:
        return self.omega.model_dump()


class PotentialsSource(StrictModel):
    """Either a named preset (with parameters) or CSV/binary files for A and q."""

    preset: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)
    a_path: Optional[str] = None
    q_path: Optional[str] = None

    @model_validator(mode='after')
    def _one_source(self) -> "PotentialsSource":
        has_files = self.a_path is not None or self.q_path is not None
        if self.preset is None and not has_files:
            raise ValueError("potentials need a preset or a_path/q_path")
        if self.preset is not None and has_files:
            raise ValueError("potentials take either a preset or files, not both")
        return self


class Tolerances(StrictModel):
    identity: float = Field(default=1e-10, gt=0)
    adjoint: float = Field(default=1e-12, gt=0)
    symmetry: float = Field(default=1e-12, gt=0)
    probability: float = Field(default=1e-15, gt=0)
    recovery: float = Field(default=1e-8, gt=0)
    parameter: float = Field(default=1e-3, gt=0)
    fourier: float = Field(default=0.05, gt=0)


class InvertOptions(StrictModel):
    reg: float = Field(default=0.0, ge=0)
    measured: Literal['perturbation', 'partner'] = 'perturbation'
    dn_path: Optional[str] = None
    sources: Optional[List[int]] = None
    sinks: Optional[List[int]] = None
    condition_limit: float = Field(default=1e8, gt=1)


class WalkOptions(StrictModel):
    steps: int = Field(default=10, ge=1)
    count: int = Field(default=1_000_000, ge=1)
    node: Optional[List[float]] = None
    max_jump: Optional[float] = Field(default=None, ge=1)


class FourierOptions(StrictModel):
    s: float = Field(default=0.5, gt=0, lt=1)
    nodes: List[int] = Field(default_factory=lambda: [128, 256])
    box: Tuple[float, float] = (-8.0, 8.0)

    @model_validator(mode='after')
    def _powers_of_two(self) -> "FourierOptions":
        for count in self.nodes:
            if count < 4 or count & (count - 1):
                raise ValueError(f"fourier node count {count} is not a power of two ≥ 4")
        if self.box[1] <= self.box[0]:
            raise ValueError("fourier box must be increasing")
        return self


class ReduceOptions(StrictModel):
    gamma_amplitude: float = Field(default=0.5, gt=0, lt=1)
    samples: int = Field(default=5, ge=1)


class CheckOptions(StrictModel):
    samples: int = Field(default=5, ge=1)


class ExperimentConfig(StrictModel):
    """Top-level configuration of one `fmse` run."""

    schema_version: Literal["1"] = SCHEMA_VERSION
    grid: Optional[GridSettings] = None
    potentials: PotentialsSource = Field(default_factory=lambda: PotentialsSource(preset='random-1d'))
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    exterior_data_path: Optional[str] = None
    check: CheckOptions = Field(default_factory=CheckOptions)
    invert: InvertOptions = Field(default_factory=InvertOptions)
    walk: WalkOptions = Field(default_factory=WalkOptions)
    fourier: FourierOptions = Field(default_factory=FourierOptions)
    reduce: ReduceOptions = Field(default_factory=ReduceOptions)
    output_dir: Optional[str] = None


def parse_experiment_config(payload: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a decoded JSON document against the experiment schema."""
    try:
        return ExperimentConfig.model_validate(dict(payload))
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment configuration: {e}") from e


def load_experiment_config(path: Union[str, Path, None]) -> ExperimentConfig:
    """Read and validate a JSON experiment file; None yields the defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return parse_experiment_config(payload)
