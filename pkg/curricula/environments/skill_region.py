"""
Policy-free synthetic task: an episode succeeds when xi falls inside a box
around `center` whose half-widths grow with the number of training episodes.
Success probabilities under any independent spec are available in closed
form, which makes this the deterministic testbed for schedulers.
"""

from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..services import distributions as dist
from ..services.distributions import BoundedSupport, DistributionSpec
from ..services.estimator import Predicate, TrajectorySummary
from .base import Environment

INSIDE = "inside"


@dataclass(frozen=True)
class SkillRegionConfig:
    center: Sequence[float]
    half_width: Sequence[float]
    # multiplier grows linearly from initial_skill to 1 over this many training episodes
    full_skill_episodes: int = 0
    initial_skill: float = 1.0

    def __post_init__(self):
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        half_width = tuple(float(h) for h in np.atleast_1d(self.half_width))
        if len(center) != len(half_width) or any(h <= 0 for h in half_width):
            raise ValueError("center and positive half_width must have equal length")
        if not 0.0 < self.initial_skill <= 1.0 or self.full_skill_episodes < 0:
            raise ValueError("initial_skill must lie in (0, 1] and full_skill_episodes >= 0")
        object.__setattr__(self, 'center', center)
        object.__setattr__(self, 'half_width', half_width)

    def multiplier(self, training_episode_index: int) -> float:
        if self.full_skill_episodes == 0:
            return 1.0
        frac = training_episode_index / self.full_skill_episodes
        return min(1.0, self.initial_skill + (1.0 - self.initial_skill) * frac)

    def box(self, training_episode_index: int):
        scale = self.multiplier(training_episode_index)
        c, h = np.asarray(self.center), np.asarray(self.half_width) * scale
        return c - h, c + h


def skill_rollout(cfg: SkillRegionConfig, xi: Any, training_episode_index: int) -> TrajectorySummary:
    lo, hi = cfg.box(training_episode_index)
    point = np.atleast_1d(np.asarray(xi, dtype=float))
    success = bool(np.all((point >= lo) & (point <= hi)))
    return TrajectorySummary(return_value=float(success), steps=1, fields={"success": success})


def success_probability(cfg: SkillRegionConfig, spec: DistributionSpec, training_episode_index: int) -> float:
    """Probability mass `spec` places inside the box (product of per-dimension CDF differences)."""
    lo, hi = cfg.box(training_episode_index)
    support = spec.support
    lo = np.clip(lo, support.lo_array, support.hi_array)
    hi = np.clip(hi, support.lo_array, support.hi_array)
    mass = 1.0
    for d in range(spec.dims):
        upper, lower = dist.cdf(spec, [hi[d], lo[d]], dim=d)
        mass *= max(0.0, float(upper - lower))
    return mass


class SkillRegionEnvironment(Environment):
    name = "skill_region"

    def __init__(self, cfg: SkillRegionConfig, support: Optional[BoundedSupport] = None):
        support = support or BoundedSupport.unit(len(cfg.center))
        if support.dims != len(cfg.center):
            raise ValueError(f"box has {len(cfg.center)} dimensions, support has {support.dims}")
        lo, hi = cfg.box(10 ** 12)
        if np.any(lo < support.lo_array) or np.any(hi > support.hi_array):
            raise ValueError("success box must lie inside the support")
        super().__init__(support)
        self.cfg = cfg

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "SkillRegionEnvironment":
        params = dict(params)
        support = None
        if "lo" in params or "hi" in params:
            support = BoundedSupport(params.pop("lo"), params.pop("hi"), tuple(params.pop("names", ())))
        return cls(SkillRegionConfig(**params), support)

    def rollout(self, policy, xi, rng, progress=0) -> TrajectorySummary:
        return skill_rollout(self.cfg, xi, progress)

    def success_probability(self, spec: DistributionSpec, progress: int = 0) -> float:
        return success_probability(self.cfg, spec, progress)

    @property
    def predicates(self) -> Mapping[str, Predicate]:
        return {INSIDE: lambda summary: bool(summary.fields["success"])}

    @property
    def default_return_threshold(self) -> float:
        return 1.0
