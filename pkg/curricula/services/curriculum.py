"""
Training-distribution schedulers.

Every scheduler exposes the same loop contract: `sampler()` returns the
callable the learner draws dynamics from, `update(records)` consumes the
episodes collected under it and returns the per-iteration diagnostics row.
"""

import abc
import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import InfeasibleStartError
from . import distributions as dist
from .autodr import AutoDRState, Boundary, autodr_sample, autodr_update
from .distributions import BoundedSupport, DistributionSpec, Family
from .estimator import (EpisodeRecord, FreshEvaluationHook, effective_sample_size, importance_weights,
                        mc_success_rate)
from .optimizer import StepConfig, StepStatus, backup_step, doraemon_step

_log = logging.getLogger('curricula.main')

# (count, rng) -> (xi array of shape (count, dims), boundary tag per draw)
Sampler = Callable[[int, np.random.Generator], Tuple[np.ndarray, List[Optional[Boundary]]]]

BRANCH_MAIN = "main"
BRANCH_BACKUP_MAIN = "backup_then_main"
BRANCH_BACKUP_CONTINUE = "backup_continue"


class SpecSampler:
    def __init__(self, spec: DistributionSpec, method: str = "rejection"):
        self.spec = spec
        self.method = method

    def __call__(self, count, rng):
        return dist.sample(self.spec, count, rng, method=self.method), [None] * count


class PointSampler:
    """Degenerate sampler that always yields the same dynamics vector."""

    def __init__(self, point: np.ndarray):
        self.point = np.asarray(point, dtype=float)

    def __call__(self, count, rng):
        return np.tile(self.point, (count, 1)), [None] * count


class AutoDRSampler:
    def __init__(self, state: AutoDRState):
        self.state = state

    def __call__(self, count, rng):
        draws = [autodr_sample(self.state, rng) for _ in range(count)]
        return np.asarray([xi for xi, _ in draws]), [tag for _, tag in draws]


def fixed_dr_spec(support: BoundedSupport, family: Family = Family.BETA) -> DistributionSpec:
    return dist.max_entropy_spec(support, family)


def no_dr_spec(support: BoundedSupport, nominal: Optional[Sequence[float]] = None) -> PointSampler:
    point = support.midpoint if nominal is None else np.asarray(nominal, dtype=float)
    if not bool(support.contains(point)[0]):
        raise ValueError(f"nominal {point} lies outside the support")
    return PointSampler(point)


# ---------------------------------------------------------------------------
# DORAEMON


@dataclass(frozen=True)
class CurriculumState:
    phi_current: DistributionSpec
    iteration: int = 0
    episodes_per_update: int = 50
    max_iterations: int = 100
    history: Tuple[Dict[str, Any], ...] = ()
    best_snapshot: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        if self.iteration > self.max_iterations:
            raise ValueError(f"iteration {self.iteration} exceeds max_iterations {self.max_iterations}")


def doraemon_iteration(state: CurriculumState, records: Sequence[EpisodeRecord], cfg: StepConfig,
                       backup_enabled: bool = True) -> CurriculumState:
    """One distribution update.

    If the Monte-Carlo success rate of `records` misses alpha, a backup step
    first moves towards higher success; when even that cannot reach alpha the
    backup result becomes the next distribution and the main step is skipped.
    Otherwise the entropy-maximizing step runs from the current (or backup)
    distribution, always importance-weighting against `state.phi_current`.

    After a backup step the main step's trust region is centred on the backup
    result, while its success estimate is still reweighted against
    `state.phi_current`, the distribution the records were actually drawn from.
    """
    phi = state.phi_current
    mc_rate = mc_success_rate(records)
    phi_start, branch, backup = phi, BRANCH_MAIN, None

    if backup_enabled and mc_rate < cfg.alpha:
        backup = backup_step(phi, records, cfg)
        if backup.estimated_success < cfg.alpha:
            branch = BRANCH_BACKUP_CONTINUE
        else:
            phi_start, branch = backup.phi_next, BRANCH_BACKUP_MAIN

    row: Dict[str, Any] = {"in_dist_success": mc_rate, "branch_taken": branch}
    if backup is not None:
        row["backup"] = backup.diagnostics()

    if branch == BRANCH_BACKUP_CONTINUE:
        phi_next = backup.phi_next
        step_status = backup.status
    else:
        try:
            result = doraemon_step(phi_start, records, cfg, phi_sampling=phi,
                                   allow_infeasible_start=not backup_enabled)
        except InfeasibleStartError:
            # backup result sits within tol_g of alpha but the reweighted estimate fell short
            _log.warning("Main step start infeasible at iteration %d; keeping start point", state.iteration + 1)
            result = None
        if result is None or result.status is StepStatus.STALLED:
            phi_next, step_status = phi_start, StepStatus.STALLED
        else:
            phi_next, step_status = result.phi_next, result.status
        if result is not None:
            row["main"] = result.diagnostics()

    if phi_next != phi:
        row["ess"] = effective_sample_size(importance_weights(records, phi, phi_next))
    row["status"] = step_status.value
    row["entropy"] = dist.entropy(phi_next)
    row["distribution"] = dist.spec_to_dict(phi_next)
    _log.info("Iteration %d: %s, MC success %.3f, entropy %.4f", state.iteration + 1, branch,
              mc_rate, row["entropy"])
    return replace(state, phi_current=phi_next, iteration=state.iteration + 1,
                   history=state.history + (row,))


# ---------------------------------------------------------------------------
# scheduler implementations


class Scheduler(abc.ABC):
    name: str = "scheduler"

    @abc.abstractmethod
    def sampler(self) -> Sampler:
        ...

    @abc.abstractmethod
    def update(self, records: Sequence[EpisodeRecord]) -> Dict[str, Any]:
        ...

    @abc.abstractmethod
    def entropy(self) -> float:
        ...

    @abc.abstractmethod
    def distribution_dict(self) -> Dict[str, Any]:
        ...

    def record_best(self, snapshot: Dict[str, Any]) -> None:
        """Told about every new best evaluated policy; stateless schedulers ignore it."""

    def _row(self, records: Sequence[EpisodeRecord], **extra) -> Dict[str, Any]:
        row = {"scheduler": self.name, "in_dist_success": mc_success_rate(records)}
        row.update(extra)
        row["entropy"] = self.entropy()
        row["distribution"] = self.distribution_dict()
        return row


class DoraemonScheduler(Scheduler):
    name = "doraemon"

    def __init__(self, initial: DistributionSpec, cfg: StepConfig, episodes_per_update: int = 50,
                 max_iterations: int = 100, backup_enabled: bool = True, sampling_method: str = "rejection",
                 fresh_evaluation: Optional[FreshEvaluationHook] = None):
        self.cfg = cfg
        self.backup_enabled = backup_enabled
        self.sampling_method = sampling_method
        # diagnostic only: success of the updated distribution on newly collected episodes
        self.fresh_evaluation = fresh_evaluation
        self.state = CurriculumState(initial, 0, episodes_per_update, max_iterations)

    def sampler(self) -> Sampler:
        return SpecSampler(self.state.phi_current, self.sampling_method)

    def update(self, records):
        self.state = doraemon_iteration(self.state, records, self.cfg, self.backup_enabled)
        row = {"scheduler": self.name, **self.state.history[-1]}
        if self.fresh_evaluation is not None:
            fresh = self.fresh_evaluation(self.state.phi_current, self.state.episodes_per_update)
            row["fresh_success"] = mc_success_rate(fresh)
        return row

    def entropy(self):
        return dist.entropy(self.state.phi_current)

    def distribution_dict(self):
        return dist.spec_to_dict(self.state.phi_current)

    def record_best(self, snapshot):
        self.state = replace(self.state, best_snapshot={"phi": self.distribution_dict(), **snapshot})


class FixedDRScheduler(Scheduler):
    name = "fixed"

    def __init__(self, support: BoundedSupport, family: Family = Family.BETA, sampling_method: str = "rejection"):
        self.spec = fixed_dr_spec(support, family)
        self.sampling_method = sampling_method

    def sampler(self) -> Sampler:
        return SpecSampler(self.spec, self.sampling_method)

    def update(self, records):
        return self._row(records, branch_taken="fixed")

    def entropy(self):
        return dist.entropy(self.spec)

    def distribution_dict(self):
        return dist.spec_to_dict(self.spec)


class NoDRScheduler(Scheduler):
    name = "nodr"

    def __init__(self, support: BoundedSupport, nominal: Optional[Sequence[float]] = None):
        self.support = support
        self._sampler = no_dr_spec(support, nominal)

    def sampler(self) -> Sampler:
        return self._sampler

    def update(self, records):
        return self._row(records, branch_taken="fixed")

    def entropy(self):
        # a point mass has no density; reported as null in the logs
        return float("-inf")

    def distribution_dict(self):
        return {"family": "Point", "xi": self._sampler.point.tolist(), "names": list(self.support.names)}


class AutoDRScheduler(Scheduler):
    name = "autodr"

    def __init__(self, state: AutoDRState):
        self.state = state

    def sampler(self) -> Sampler:
        return AutoDRSampler(self.state)

    def update(self, records):
        tagged = 0
        for record in sorted(records, key=lambda r: r.episode):
            if record.boundary is not None:
                self.state = autodr_update(self.state, record)
                tagged += 1
        return self._row(records, branch_taken="autodr", boundary_episodes=tagged)

    def entropy(self):
        return self.state.entropy()

    def distribution_dict(self):
        return self.state.to_dict()
