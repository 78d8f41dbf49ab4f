import abc
from typing import Any, Dict, Mapping, Optional, Protocol

import numpy as np

from ..services.distributions import BoundedSupport
from ..services.estimator import Predicate, SuccessIndicator, TrajectorySummary


class Policy(Protocol):
    """Anything that maps a window of past transitions plus the current state to an action.

    `history` has one row per past step, oldest first, laid out as
    (x, v, a / a_max); it may be shorter than the policy's window.
    """

    def act(self, history: np.ndarray, state: np.ndarray) -> float:
        ...


class Environment(abc.ABC):
    """A family of MDPs indexed by a dynamics vector xi inside `support`."""

    name: str = "environment"
    # Width of one observation row handed to policies; 0 for policy-free environments.
    observation_size: int = 0
    action_scale: float = 1.0

    def __init__(self, support: BoundedSupport, nominal: Optional[np.ndarray] = None):
        self.support = support
        self.nominal = support.midpoint if nominal is None else np.asarray(nominal, dtype=float)
        if not bool(support.contains(self.nominal)[0]):
            raise ValueError(f"nominal {self.nominal} lies outside the support")

    @abc.abstractmethod
    def rollout(self, policy: Optional[Policy], xi: Any, rng: np.random.Generator,
                progress: int = 0) -> TrajectorySummary:
        """Run one episode on dynamics `xi`.

        Args:
            policy: Acting policy, ignored by policy-free environments
            xi: Dynamics vector inside the support
            rng: Generator owned by this episode
            progress: Number of training episodes seen so far
        """

    @property
    def predicates(self) -> Mapping[str, Predicate]:
        return {}

    @property
    @abc.abstractmethod
    def default_return_threshold(self) -> float:
        ...

    def default_indicator(self) -> SuccessIndicator:
        return SuccessIndicator.return_lower_bound(self.default_return_threshold)

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "support": self.support.to_dict(), "nominal": self.nominal.tolist()}
