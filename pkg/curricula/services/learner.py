"""
History-conditioned policies and the episodic learners behind the trainer interface.

The scheduler only ever calls `collect_and_train(sampler, count, rng)`; it
gets back the episodes collected under the sampler, with the exact xi drawn
for each, and the learner updates itself in between.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..environments.base import Environment
from .estimator import EpisodeRecord, SuccessIndicator, TrajectorySummary, evaluate_sigma

_log = logging.getLogger('curricula.main')


@dataclass
class HistoryPolicy:
    """Small feedforward map from the last `window` transitions plus the current state to an action.

    Short histories are zero-padded on the oldest side. The output goes
    through tanh and is scaled by `action_scale`, so actions are always
    inside [-action_scale, action_scale] and zero weights give a zero action.
    """
    window: int = 5
    row_size: int = 3
    state_size: int = 2
    hidden_sizes: Tuple[int, ...] = ()
    action_scale: float = 1.0
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.window < 0:
            raise ValueError(f"window must be >= 0, got {self.window}")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.weights is None:
            self.weights = np.zeros(self.n_params)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.size != self.n_params:
            raise ValueError(f"expected {self.n_params} weights, got {self.weights.size}")

    @property
    def input_size(self) -> int:
        return self.window * self.row_size + self.state_size

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        sizes = [self.input_size, *self.hidden_sizes, 1]
        return [(n_out, n_in) for n_in, n_out in zip(sizes[:-1], sizes[1:])]

    @property
    def n_params(self) -> int:
        return sum(n_out * n_in + n_out for n_out, n_in in self.layer_shapes)

    def features(self, history: np.ndarray, state: np.ndarray) -> np.ndarray:
        padded = np.zeros((self.window, self.row_size))
        if self.window:
            recent = np.asarray(history, dtype=float).reshape(-1, self.row_size)[-self.window:]
            if len(recent):
                padded[-len(recent):] = recent
        return np.concatenate([padded.ravel(), np.asarray(state, dtype=float).ravel()])

    def act(self, history: np.ndarray, state: np.ndarray) -> float:
        h = self.features(history, state)
        offset = 0
        shapes = self.layer_shapes
        for n_out, n_in in shapes:
            w = self.weights[offset:offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = self.weights[offset:offset + n_out]
            offset += n_out
            h = np.tanh(w @ h + b)
        return float(h[0] * self.action_scale)

    def with_weights(self, weights: np.ndarray) -> "HistoryPolicy":
        return HistoryPolicy(self.window, self.row_size, self.state_size, self.hidden_sizes,
                             self.action_scale, np.array(weights, dtype=float))

    def metadata(self) -> Dict[str, Any]:
        return {
            "window": self.window,
            "row_size": self.row_size,
            "state_size": self.state_size,
            "hidden_sizes": list(self.hidden_sizes),
            "action_scale": self.action_scale,
        }


class Trainer(Protocol):
    episodes_seen: int

    def collect_and_train(self, sampler, count: int, rng: np.random.Generator,
                          iteration: int = 0) -> List[EpisodeRecord]:
        ...

    @property
    def policy(self) -> Optional[HistoryPolicy]:
        ...


def _episode_rngs(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    seed_seq = np.random.SeedSequence(int(rng.integers(2 ** 63)))
    return [np.random.default_rng(child) for child in seed_seq.spawn(count)]


def _record(summary: TrajectorySummary, xi, tag, indicator, predicates, iteration, episode) -> EpisodeRecord:
    return EpisodeRecord(
        xi=tuple(np.atleast_1d(xi)),
        return_value=float(summary.return_value),
        success=evaluate_sigma(indicator, summary, predicates),
        steps=summary.steps,
        iteration=iteration,
        episode=episode,
        boundary=tag,
    )


@dataclass(frozen=True)
class CEMConfig:
    population: int = 32
    elite_fraction: float = 0.25
    init_std: float = 0.5
    # extra additive noise on the refit std, annealed every epoch
    noise_std: float = 0.1
    noise_decay: float = 0.97
    min_noise: float = 0.005
    window: int = 5
    hidden_sizes: Tuple[int, ...] = ()
    workers: int = 1

    def __post_init__(self):
        if self.population < 1 or not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("population must be >= 1 and elite_fraction in (0, 1]")
        object.__setattr__(self, 'hidden_sizes', tuple(self.hidden_sizes))


class CEMTrainer:
    """Cross-entropy method over flat policy weights.

    Each epoch draws a population around the current mean, assigns the K
    episodes round-robin to members (episode k goes to member k mod P), scores
    members by mean return and refits mean and std on the elite.
    """

    def __init__(self, env: Environment, indicator: SuccessIndicator, cfg: CEMConfig = CEMConfig()):
        if env.observation_size == 0:
            raise ValueError(f"{env.name} takes no policy; use OracleTrainer")
        self.env = env
        self.indicator = indicator
        self.cfg = cfg
        self._template = HistoryPolicy(cfg.window, env.observation_size, 2, cfg.hidden_sizes, env.action_scale)
        self.mean = np.zeros(self._template.n_params)
        self.std = np.full(self._template.n_params, cfg.init_std)
        self.noise = cfg.noise_std
        self.episodes_seen = 0
        self.epochs = 0

    @property
    def policy(self) -> HistoryPolicy:
        return self._template.with_weights(self.mean)

    def _rollout(self, job):
        weights, xi, rng = job
        return self.env.rollout(self._template.with_weights(weights), xi, rng, self.episodes_seen)

    def train_epoch(self, sampler, count: int, rng: np.random.Generator,
                    iteration: int = 0) -> Tuple[List[EpisodeRecord], HistoryPolicy]:
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        members = self.mean + self.std * rng.standard_normal((self.cfg.population, self.mean.size))
        xis, tags = sampler(count, rng)
        jobs = [(members[k % len(members)], xis[k], episode_rng)
                for k, episode_rng in enumerate(_episode_rngs(rng, count))]
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as executor:
                summaries = list(executor.map(self._rollout, jobs))
        else:
            summaries = [self._rollout(job) for job in jobs]

        predicates = self.env.predicates
        records = [_record(s, xis[k], tags[k], self.indicator, predicates, iteration, k)
                   for k, s in enumerate(summaries)]

        returns: Dict[int, List[float]] = {}
        for k, s in enumerate(summaries):
            returns.setdefault(k % len(members), []).append(s.return_value)
        scored = sorted(returns, key=lambda m: (-float(np.mean(returns[m])), m))
        n_elite = max(1, int(math.ceil(self.cfg.elite_fraction * len(scored))))
        elite = members[scored[:n_elite]]
        self.mean = elite.mean(axis=0)
        self.std = elite.std(axis=0) + self.noise
        self.noise = max(self.cfg.min_noise, self.noise * self.cfg.noise_decay)

        self.episodes_seen += count
        self.epochs += 1
        _log.debug("CEM epoch %d: best member return %.3f, elite mean %.3f", self.epochs,
                   float(np.mean(returns[scored[0]])),
                   float(np.mean([np.mean(returns[m]) for m in scored[:n_elite]])))
        return records, self.policy

    def collect_and_train(self, sampler, count, rng, iteration=0) -> List[EpisodeRecord]:
        records, _ = self.train_epoch(sampler, count, rng, iteration)
        return records


class OracleTrainer:
    """Trainer for policy-free environments; skill comes from the episode count alone."""

    policy = None

    def __init__(self, env: Environment, indicator: SuccessIndicator):
        self.env = env
        self.indicator = indicator
        self.episodes_seen = 0

    def collect_and_train(self, sampler, count, rng, iteration=0) -> List[EpisodeRecord]:
        xis, tags = sampler(count, rng)
        records = []
        for k, episode_rng in enumerate(_episode_rngs(rng, count)):
            summary = self.env.rollout(None, xis[k], episode_rng, self.episodes_seen + k)
            records.append(_record(summary, xis[k], tags[k], self.indicator, self.env.predicates, iteration, k))
        self.episodes_seen += count
        return records


class ReplayTrainer:
    """Feeds back logged episodes iteration by iteration, ignoring the sampler."""

    policy = None

    def __init__(self, records_by_iteration: Mapping[int, Sequence[EpisodeRecord]]):
        self.records_by_iteration = {int(k): list(v) for k, v in records_by_iteration.items()}
        self.episodes_seen = 0

    def collect_and_train(self, sampler, count, rng, iteration=0) -> List[EpisodeRecord]:
        records = sorted(self.records_by_iteration.get(iteration, ()), key=lambda r: r.episode)
        if len(records) != count:
            raise ValueError(f"iteration {iteration}: logged {len(records)} episodes, expected {count}")
        self.episodes_seen += count
        return records


# ---------------------------------------------------------------------------
# snapshots


def save_snapshot(path: Path, policy: Optional[HistoryPolicy], metadata: Mapping[str, Any]) -> Path:
    """Write flat weights plus metadata as one JSON document."""
    payload = dict(metadata)
    payload["policy"] = None if policy is None else {**policy.metadata(), "weights": policy.weights.tolist()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def load_snapshot(path: Path) -> Tuple[Optional[HistoryPolicy], Dict[str, Any]]:
    with open(path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    data = payload.get("policy")
    policy = None
    if data is not None:
        policy = HistoryPolicy(data["window"], data["row_size"], data["state_size"],
                               tuple(data["hidden_sizes"]), data["action_scale"], np.asarray(data["weights"]))
    return policy, payload
