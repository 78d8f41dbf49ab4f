import math

import numpy as np
import pytest

from curricula.config import config_from_dict
from curricula.services import distributions as dist
from curricula.services.distributions import BoundedSupport
from curricula.services.estimator import EpisodeRecord


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_support():
    return BoundedSupport.unit(1)


@pytest.fixture
def plane_support():
    return BoundedSupport((-math.pi / 2,), (math.pi / 2,), ("omega",))


@pytest.fixture
def make_records():
    """Records drawn from `spec`, with success decided by `rule(xi) -> bool`."""

    def _make(spec, count, rule, rng, iteration=1):
        xis = dist.sample(spec, count, rng)
        return [EpisodeRecord(xi=tuple(x), return_value=float(rule(x)), success=bool(rule(x)), steps=1,
                              iteration=iteration, episode=k)
                for k, x in enumerate(xis)]

    return _make


@pytest.fixture
def skill_config(tmp_path):
    """Small skill-region experiment writing under tmp_path."""

    def _make(**overrides):
        data = {
            "name": "skill",
            "environment": {"id": "skill_region", "params": {"center": [0.5], "half_width": [0.2]}},
            "scheduler": {"id": "doraemon", "alpha": 0.5, "epsilon": 0.1, "episodes_per_update": 60,
                          "iterations": 4, "solver": {"restarts": 1}},
            "learner": {"id": "oracle"},
            "evaluation": {"n_eval": 50, "eval_every": 2},
            "seeds": [3],
            "output_dir": str(tmp_path / "runs"),
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return config_from_dict(data)

    return _make
