from typing import Any, Dict, Mapping, Type

from ..errors import ConfigError
from .base import Environment, Policy
from .inclined_plane import (InclinedPlaneConfig, InclinedPlaneEnvironment, PlaneState,
                             ScriptedBalancePolicy, feasible_half_width, plane_rollout, plane_step)
from .skill_region import SkillRegionConfig, SkillRegionEnvironment, skill_rollout, success_probability

ENVIRONMENTS: Dict[str, Type[Environment]] = {
    InclinedPlaneEnvironment.name: InclinedPlaneEnvironment,
    SkillRegionEnvironment.name: SkillRegionEnvironment,
}


def make_environment(env_id: str, params: Mapping[str, Any]) -> Environment:
    if env_id not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {env_id!r}; expected one of {sorted(ENVIRONMENTS)}")
    try:
        return ENVIRONMENTS[env_id].from_params(params)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid parameters for environment {env_id!r}: {e}") from e
