"""
Experiment configuration.

A config is one JSON document mirroring `ExperimentConfig` section by
section. Everything is validated up front so a bad config fails before any
rollout runs. Batch schedulers can override the output directory, the seed
list and the worker count through the environment:

    CURRICULA_OUTPUT_DIR=/scratch/runs
    CURRICULA_SEEDS=0,1,2
    CURRICULA_WORKERS=4
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .errors import ConfigError
from .services.distributions import Family

SCHEDULERS = ("doraemon", "fixed", "nodr", "autodr")
LEARNERS = ("cem", "oracle")
SAMPLING_METHODS = ("rejection", "inverse_cdf")


@dataclass(frozen=True)
class EnvironmentSection:
    id: str = "inclined_plane"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SchedulerSection:
    id: str = "doraemon"
    alpha: float = 0.5
    epsilon: float = 0.05
    episodes_per_update: int = 50
    iterations: int = 100
    backup_enabled: bool = True
    family: str = Family.BETA.value
    initial_concentration: float = 200.0
    initial_center: Optional[Tuple[float, ...]] = None
    sampling_method: str = "rejection"
    # None: the environment's own success notion
    indicator: Optional[Dict[str, Any]] = None
    solver: Dict[str, Any] = field(default_factory=dict)
    autodr: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class LearnerSection:
    id: str = "cem"
    population: int = 32
    elite_fraction: float = 0.25
    init_std: float = 0.5
    noise_std: float = 0.1
    noise_decay: float = 0.97
    window: int = 5
    hidden_sizes: Tuple[int, ...] = ()
    workers: int = 1


@dataclass(frozen=True)
class EvaluationSection:
    n_eval: int = 500
    eval_every: int = 5
    grid_size: int = 64
    grid_dims: Tuple[int, ...] = (0,)
    grid_repeats: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    scheduler: SchedulerSection = field(default_factory=SchedulerSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs"
    workers: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def with_scheduler(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, scheduler=dataclasses.replace(self.scheduler, **changes))


_SECTIONS = {
    "environment": EnvironmentSection,
    "scheduler": SchedulerSection,
    "learner": LearnerSection,
    "evaluation": EvaluationSection,
}
_TUPLE_FIELDS = {"initial_center", "hidden_sizes", "grid_dims", "seeds"}


def _build(cls, data: Mapping[str, Any], where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    values = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is ExperimentConfig:
            value = _build(_SECTIONS[key], value, key)
        elif key in _TUPLE_FIELDS and value is not None:
            value = tuple(value)
        values[key] = value
    return cls(**values)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    from .environments import ENVIRONMENTS

    s = cfg.scheduler
    if cfg.environment.id not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {cfg.environment.id!r}; expected one of {sorted(ENVIRONMENTS)}")
    if s.id not in SCHEDULERS:
        raise ConfigError(f"unknown scheduler {s.id!r}; expected one of {list(SCHEDULERS)}")
    if cfg.learner.id not in LEARNERS:
        raise ConfigError(f"unknown learner {cfg.learner.id!r}; expected one of {list(LEARNERS)}")
    if not 0.0 <= s.alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {s.alpha}")
    if not s.epsilon > 0.0:
        raise ConfigError(f"epsilon must be positive, got {s.epsilon}")
    if s.episodes_per_update < 1 or s.iterations < 0:
        raise ConfigError("episodes_per_update must be >= 1 and iterations >= 0")
    try:
        Family(s.family)
    except ValueError:
        raise ConfigError(f"unknown family {s.family!r}; expected one of {[f.value for f in Family]}")
    if s.sampling_method not in SAMPLING_METHODS:
        raise ConfigError(f"unknown sampling method {s.sampling_method!r}")
    if not cfg.seeds:
        raise ConfigError("seeds must not be empty")
    if cfg.evaluation.n_eval < 1 or cfg.evaluation.eval_every < 1:
        raise ConfigError("n_eval and eval_every must be >= 1")
    if cfg.workers < 1 or cfg.learner.workers < 1:
        raise ConfigError("worker counts must be >= 1")
    return cfg


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    try:
        cfg = _build(ExperimentConfig, data, "config")
    except TypeError as e:
        raise ConfigError(f"invalid config: {e}") from e
    return validate(cfg)


def apply_env_overrides(cfg: ExperimentConfig) -> ExperimentConfig:
    changes: Dict[str, Any] = {}
    output_dir = os.environ.get("CURRICULA_OUTPUT_DIR")
    if output_dir:
        changes["output_dir"] = output_dir
    seeds = os.environ.get("CURRICULA_SEEDS")
    if seeds:
        try:
            changes["seeds"] = tuple(int(s) for s in seeds.split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"CURRICULA_SEEDS must be a comma list of integers, got {seeds!r}")
    workers = os.environ.get("CURRICULA_WORKERS")
    if workers:
        try:
            changes["workers"] = int(workers)
        except ValueError:
            raise ConfigError(f"CURRICULA_WORKERS must be an integer, got {workers!r}")
    return validate(dataclasses.replace(cfg, **changes)) if changes else cfg


def load_config(path: Union[str, Path], env_overrides: bool = True) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cfg = config_from_dict(data)
    return apply_env_overrides(cfg) if env_overrides else cfg
