"""
Success-probability estimates from recycled training episodes.

`is_success_rate` is the plain (unnormalized) importance-sampling estimate of
the probability of success under a candidate distribution, using episodes
collected under the distribution they were drawn from. Densities are
evaluated on the physical support so the unit-space Jacobians cancel.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import EstimatorError, UnknownPredicateError
from .distributions import DistributionSpec, log_pdf, check_comparable

_log = logging.getLogger('curricula.main')


@dataclass(frozen=True)
class EpisodeRecord:
    xi: Tuple[float, ...]
    return_value: float
    success: bool
    steps: int
    iteration: int = 0
    episode: int = 0
    # AutoDR boundary tag: (dimension, side) with side in {"lo", "hi"}
    boundary: Optional[Tuple[int, str]] = None

    def __post_init__(self):
        object.__setattr__(self, 'xi', tuple(float(v) for v in np.atleast_1d(self.xi)))
        object.__setattr__(self, 'success', bool(self.success))
        if self.steps < 1:
            raise ValueError(f"episode must last at least one step, got {self.steps}")
        if self.boundary is not None:
            object.__setattr__(self, 'boundary', (int(self.boundary[0]), str(self.boundary[1])))

    def to_dict(self) -> Dict[str, Any]:
        row = {
            "iter": self.iteration,
            "episode": self.episode,
            "xi": list(self.xi),
            "return": self.return_value,
            "success": self.success,
            "steps": self.steps,
        }
        if self.boundary is not None:
            row["boundary"] = list(self.boundary)
        return row

    @classmethod
    def from_dict(cls, row: Mapping[str, Any]) -> "EpisodeRecord":
        boundary = row.get("boundary")
        return cls(
            xi=tuple(row["xi"]),
            return_value=float(row["return"]),
            success=bool(row["success"]),
            steps=int(row["steps"]),
            iteration=int(row.get("iter", 0)),
            episode=int(row.get("episode", 0)),
            boundary=tuple(boundary) if boundary is not None else None,
        )


@dataclass(frozen=True)
class TrajectorySummary:
    """What an environment reports about a finished episode."""
    return_value: float
    steps: int
    fields: Dict[str, Any] = field(default_factory=dict)


class IndicatorKind(str, enum.Enum):
    RETURN_LOWER_BOUND = "return_lower_bound"
    ENVIRONMENT_PREDICATE = "environment_predicate"


@dataclass(frozen=True)
class SuccessIndicator:
    kind: IndicatorKind
    j_lb: Optional[float] = None
    predicate: Optional[str] = None

    @classmethod
    def return_lower_bound(cls, j_lb: float) -> "SuccessIndicator":
        return cls(IndicatorKind.RETURN_LOWER_BOUND, j_lb=float(j_lb))

    @classmethod
    def environment_predicate(cls, predicate: str) -> "SuccessIndicator":
        return cls(IndicatorKind.ENVIRONMENT_PREDICATE, predicate=predicate)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind is IndicatorKind.RETURN_LOWER_BOUND:
            return {"kind": self.kind.value, "j_lb": self.j_lb}
        return {"kind": self.kind.value, "predicate": self.predicate}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SuccessIndicator":
        kind = IndicatorKind(data["kind"])
        if kind is IndicatorKind.RETURN_LOWER_BOUND:
            return cls.return_lower_bound(data["j_lb"])
        return cls.environment_predicate(data["predicate"])


Predicate = Callable[[TrajectorySummary], bool]


def evaluate_sigma(indicator: SuccessIndicator, summary: TrajectorySummary,
                   predicates: Optional[Mapping[str, Predicate]] = None) -> bool:
    """Success of one finished trajectory. Return bounds are inclusive (J >= J_LB)."""
    if indicator.kind is IndicatorKind.RETURN_LOWER_BOUND:
        return bool(summary.return_value >= indicator.j_lb)
    predicates = predicates or {}
    if indicator.predicate not in predicates:
        raise UnknownPredicateError(f"unknown success predicate {indicator.predicate!r}")
    return bool(predicates[indicator.predicate](summary))


def records_arrays(records: Sequence[EpisodeRecord]) -> Tuple[np.ndarray, np.ndarray]:
    if not records:
        raise EstimatorError("no episode records to estimate from")
    xi = np.asarray([r.xi for r in records], dtype=float)
    successes = np.asarray([r.success for r in records], dtype=float)
    return xi, successes


def importance_weights(records: Sequence[EpisodeRecord], phi_old: DistributionSpec,
                       phi_new: DistributionSpec) -> np.ndarray:
    check_comparable(phi_old, phi_new)
    xi, _ = records_arrays(records)
    return np.exp(log_pdf(phi_new, xi) - log_pdf(phi_old, xi))


def effective_sample_size(weights: np.ndarray) -> float:
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        return 0.0
    return float(total ** 2 / np.sum(weights ** 2))


def is_success_rate(records: Sequence[EpisodeRecord], phi_old: DistributionSpec,
                    phi_new: DistributionSpec, clip: Optional[float] = None) -> float:
    """(1/K) sum_k w_k * success_k with w_k = nu_new(xi_k) / nu_old(xi_k).

    Records must have been drawn from `phi_old`. The estimate is not
    normalized and may exceed 1. With `clip`, each weight is capped.
    """
    _, successes = records_arrays(records)
    if phi_old == phi_new:
        weights = np.ones_like(successes)
    else:
        weights = importance_weights(records, phi_old, phi_new)
    if clip is not None:
        clipped = int(np.count_nonzero(weights > clip))
        if clipped:
            _log.warning("IS weights clipped at %.3g for %d of %d records (variance control)",
                         clip, clipped, len(records))
        weights = np.minimum(weights, clip)
    return float(np.mean(weights * successes))


def mc_success_rate(records: Sequence[EpisodeRecord]) -> float:
    _, successes = records_arrays(records)
    return float(np.mean(successes))


# Optional hook: re-estimate success with fresh rollouts instead of recycled ones.
FreshEvaluationHook = Callable[[DistributionSpec, int], Sequence[EpisodeRecord]]
