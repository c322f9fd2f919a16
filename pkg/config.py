"""
Experiment configuration
YAML experiment files validated with pydantic, process defaults from the environment
"""

import os
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ctmc_engine import DEFAULT_EVENT_CAP, DynamicsLaw, ModelParams
from graph_model import BipartiteGraph, GraphError, graph_from_spec
from queue_dynamics import FIXED, QueueParams, RateFunctions, UnstableQueueError

load_dotenv()


def _env_flag(name: str, default: str = '1') -> bool:
    return os.getenv(name, default).strip().lower() not in ('0', 'false', 'no', 'off', '')


CONFIG = {
    'workers': int(os.getenv('CSMA_WORKERS', 1)),
    'output_dir': os.getenv('CSMA_OUTPUT_DIR', './sweep_output'),
    'event_cap': int(float(os.getenv('CSMA_EVENT_CAP', DEFAULT_EVENT_CAP))),
    'show_progress': _env_flag('CSMA_SHOW_PROGRESS'),
}


class ConfigError(ValueError):
    """Experiment file is missing, malformed or violates a model constraint"""


# =============================================================================
# SCHEMA
# =============================================================================

class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class RatesConfig(_Strict):
    mode: Literal['fixed', 'queue'] = FIXED
    B: float = Field(1.0, gt=0)
    beta: float = Field(0.5, gt=0)
    B_prime: float = Field(1.0, gt=0)
    beta_prime: float = Field(2.0, gt=0)

    @model_validator(mode='after')
    def _aggressive_v(self):
        if not self.beta_prime > self.beta + 1:
            raise ValueError(f"need beta_prime > beta + 1 (got beta={self.beta}, beta_prime={self.beta_prime})")
        return self


class QueuesConfig(_Strict):
    arrival_rate: float = Field(0.0, ge=0)
    mean_service_u: float = Field(1.0, gt=0)
    mean_service_v: float = Field(1.0, gt=0)
    drain_speed: float = Field(1.0, gt=0)
    gamma_u: float = Field(1.0, gt=0)
    gamma_v: float = Field(1.0, gt=0)

    @model_validator(mode='after')
    def _stable(self):
        rho_u = self.arrival_rate * self.mean_service_u
        rho_v = self.arrival_rate * self.mean_service_v
        if rho_u >= self.drain_speed or rho_v >= self.drain_speed:
            raise ValueError(f"unstable queues: rho_U={rho_u:g}, rho_V={rho_v:g}, c={self.drain_speed:g}")
        if self.gamma_u < self.gamma_v:
            raise ValueError(f"need gamma_u >= gamma_v (got {self.gamma_u}, {self.gamma_v})")
        return self


class DynamicsConfig(_Strict):
    """static | fast (lambda = r^a) | regular (lambda = C) | slow (lambda = r^-alpha)"""
    kind: Literal['static', 'fast', 'regular', 'slow'] = 'static'
    a: Optional[float] = Field(None, gt=0)
    C: Optional[float] = Field(None, gt=0)
    alpha: Optional[float] = Field(None, gt=0)

    @model_validator(mode='after')
    def _one_parameter(self):
        needed = {'static': None, 'fast': 'a', 'regular': 'C', 'slow': 'alpha'}[self.kind]
        given = {name for name in ('a', 'C', 'alpha') if getattr(self, name) is not None}
        if needed is None and given:
            raise ValueError(f"static dynamics take no parameters (got {sorted(given)})")
        if needed is not None and given != {needed}:
            raise ValueError(f"{self.kind} dynamics need exactly '{needed}' (got {sorted(given)})")
        return self

    def law(self) -> DynamicsLaw:
        if self.kind == 'fast':
            return DynamicsLaw('fast', exponent=self.a)
        if self.kind == 'regular':
            return DynamicsLaw('regular', constant=self.C)
        if self.kind == 'slow':
            return DynamicsLaw('slow', exponent=self.alpha)
        return DynamicsLaw('static')


class TolerancesConfig(_Strict):
    exponent: float = Field(0.1, gt=0)
    ratio_drift: float = Field(2.0, gt=1)


class ExperimentConfig(_Strict):
    """One sweep over r for a fixed graph and parameter set"""
    name: str = 'experiment'
    graph: Union[str, Dict[str, Any]]
    rates: RatesConfig = RatesConfig()
    queues: QueuesConfig = QueuesConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    r_grid: List[float]
    replications: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    deactivate_on_empty: bool = True
    skip_blocked_attempts: bool = True
    event_cap: Optional[int] = Field(None, ge=1)
    output_dir: Optional[str] = None
    tolerances: TolerancesConfig = TolerancesConfig()

    @field_validator('r_grid')
    @classmethod
    def _grid(cls, grid: List[float]) -> List[float]:
        if not grid:
            raise ValueError("r_grid must not be empty")
        if any(r <= 0 for r in grid):
            raise ValueError("r_grid values must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("r_grid must be strictly increasing")
        return grid

    def build_graph(self) -> BipartiteGraph:
        return graph_from_spec(self.graph)

    def model_params(self, r: float) -> ModelParams:
        return ModelParams(
            queues=QueueParams(r=float(r), **self.queues.model_dump()).validate(),
            rates=RateFunctions(**self.rates.model_dump()).validate(),
            dynamics=self.dynamics.law(),
            deactivate_on_empty=self.deactivate_on_empty,
            skip_blocked_attempts=self.skip_blocked_attempts,
            event_cap=self.event_cap or CONFIG['event_cap'],
        )


# =============================================================================
# LOADING
# =============================================================================

def parse_config(data: Dict[str, Any], base_dir: str = '.') -> ExperimentConfig:
    """Validate a config mapping, including the graph it references"""
    if not isinstance(data, dict):
        raise ConfigError(f"Config must be a mapping, got {type(data).__name__}")
    graph = data.get('graph')
    if isinstance(graph, str) and not os.path.isabs(graph):
        data = {**data, 'graph': os.path.join(base_dir, graph)}
    try:
        config = ExperimentConfig.model_validate(data)
        config.build_graph()
        config.model_params(config.r_grid[0])
    except ValidationError as e:
        raise ConfigError(f"Invalid config:\n{e}") from e
    except (GraphError, UnstableQueueError, OSError, ValueError) as e:
        raise ConfigError(f"Invalid config: {e}") from e
    return config


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))
