"""
Experiment driver: builds the pieces named by an `ExperimentConfig`, runs the
scheduler/learner loop per seed, evaluates on the maximum-entropy distribution
and writes the run directory. Also hosts sweeps, grid evaluation and log
replay.
"""

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import ExperimentConfig, config_from_dict
from ..environments import Environment, make_environment
from ..errors import ConfigError
from ..persistence.run_log import RunLog, dumps, load_records, load_rows, to_jsonable
from ..utils import run_paths
from . import distributions as dist
from .autodr import AutoDRState
from .curriculum import (AutoDRScheduler, DoraemonScheduler, FixedDRScheduler, NoDRScheduler, Scheduler)
from .distributions import Family
from .estimator import SuccessIndicator, evaluate_sigma
from .learner import (CEMConfig, CEMTrainer, OracleTrainer, ReplayTrainer, Trainer, load_snapshot,
                      save_snapshot)
from .optimizer import StepConfig

_log = logging.getLogger('curricula.main')

SWEEP_AXES = ("alpha", "epsilon", "j_lb", "family")
# two-sided 95% normal quantile
_Z95 = 1.96


# ---------------------------------------------------------------------------
# construction


def build_environment(cfg: ExperimentConfig) -> Environment:
    return make_environment(cfg.environment.id, cfg.environment.params)


def build_indicator(cfg: ExperimentConfig, env: Environment) -> SuccessIndicator:
    if cfg.scheduler.indicator is None:
        return env.default_indicator()
    try:
        return SuccessIndicator.from_dict(cfg.scheduler.indicator)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"invalid success indicator {cfg.scheduler.indicator!r}: {e}") from e


def _step_config(cfg: ExperimentConfig, seed: int) -> StepConfig:
    s = cfg.scheduler
    try:
        return StepConfig(alpha=s.alpha, epsilon=s.epsilon, seed=seed, **s.solver)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid solver settings {s.solver!r}: {e}") from e


def build_scheduler(cfg: ExperimentConfig, env: Environment, indicator: SuccessIndicator, seed: int) -> Scheduler:
    s = cfg.scheduler
    family = Family(s.family)
    if s.id == "doraemon":
        try:
            initial = dist.initial_spec(env.support, family, s.initial_concentration, s.initial_center)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return DoraemonScheduler(initial, _step_config(cfg, seed), s.episodes_per_update, s.iterations,
                                 s.backup_enabled, s.sampling_method)
    if s.id == "fixed":
        return FixedDRScheduler(env.support, family, s.sampling_method)
    if s.id == "nodr":
        return NoDRScheduler(env.support, env.nominal)
    threshold = indicator.j_lb if indicator.j_lb is not None else env.default_return_threshold
    params = dict(s.autodr)
    params.setdefault("t_high", threshold)
    try:
        return AutoDRScheduler(AutoDRState.initial(env.support, **params))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid AutoDR settings {s.autodr!r}: {e}") from e


def build_trainer(cfg: ExperimentConfig, env: Environment, indicator: SuccessIndicator) -> Trainer:
    if cfg.learner.id == "oracle" or env.observation_size == 0:
        return OracleTrainer(env, indicator)
    fields = {f.name for f in dataclasses.fields(CEMConfig)}
    learner = {k: v for k, v in dataclasses.asdict(cfg.learner).items() if k in fields}
    return CEMTrainer(env, indicator, CEMConfig(**learner))


# ---------------------------------------------------------------------------
# evaluation


def global_success_rate(env: Environment, policy, indicator: SuccessIndicator, n_eval: int,
                        rng: np.random.Generator, progress: int = 0) -> Tuple[float, float]:
    """Success rate on the uniform distribution over the whole support.

    Returns:
        (rate, 95% binomial half-width)
    """
    if n_eval < 1:
        raise ValueError(f"n_eval must be >= 1, got {n_eval}")
    xis = dist.sample(dist.max_entropy_spec(env.support), n_eval, rng)
    seed_seq = np.random.SeedSequence(int(rng.integers(2 ** 63)))
    successes = 0
    for xi, child in zip(xis, seed_seq.spawn(n_eval)):
        summary = env.rollout(policy, xi, np.random.default_rng(child), progress)
        successes += evaluate_sigma(indicator, summary, env.predicates)
    rate = successes / n_eval
    return rate, _Z95 * math.sqrt(rate * (1.0 - rate) / n_eval)


@dataclass
class GridResult:
    names: Tuple[str, ...]
    axes: Tuple[np.ndarray, ...]
    mean_return: np.ndarray
    success: np.ndarray


def evaluate_grid(env: Environment, policy, indicator: SuccessIndicator, dims: Sequence[int], size: int,
                  rng: np.random.Generator, repeats: int = 1, progress: int = 0,
                  nominal: Optional[Sequence[float]] = None) -> GridResult:
    """Evaluate a 1-D or 2-D slice of the support, other dimensions held at nominal.

    Each cell runs `repeats` episodes; its success flag is the strict majority.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) not in (1, 2) or len(set(dims)) != len(dims):
        raise ValueError(f"grid needs one or two distinct dimensions, got {dims}")
    if any(not 0 <= d < env.support.dims for d in dims):
        raise ValueError(f"grid dimensions {dims} out of range for {env.support.dims} dims")
    if size < 1 or repeats < 1:
        raise ValueError("size and repeats must be >= 1")
    base = np.asarray(env.nominal if nominal is None else nominal, dtype=float)
    support = env.support
    axes = tuple(np.array([base[d]]) if size == 1 else np.linspace(support.lo[d], support.hi[d], size)
                 for d in dims)
    shape = tuple(len(a) for a in axes)
    mean_return = np.zeros(shape)
    success = np.zeros(shape, dtype=bool)
    for index in np.ndindex(*shape):
        xi = base.copy()
        for axis, d in enumerate(dims):
            xi[d] = axes[axis][index[axis]]
        returns, wins = [], 0
        for _ in range(repeats):
            summary = env.rollout(policy, xi, rng, progress)
            returns.append(summary.return_value)
            wins += evaluate_sigma(indicator, summary, env.predicates)
        mean_return[index] = np.mean(returns)
        success[index] = wins * 2 > repeats
    return GridResult(tuple(support.names[d] for d in dims), axes, mean_return, success)


def write_grid_csv(grid: GridResult, directory: Path) -> Tuple[Path, Path]:
    """One CSV per matrix; the header row names the dimensions and the column grid values."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = (directory / run_paths.GRID_RETURNS_FILE, directory / run_paths.GRID_SUCCESS_FILE)
    for path, matrix in zip(paths, (grid.mean_return, grid.success.astype(int))):
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            if len(grid.axes) == 1:
                writer.writerow([grid.names[0], "value"])
                for x, v in zip(grid.axes[0], matrix):
                    writer.writerow([repr(float(x)), v])
            else:
                writer.writerow([f"{grid.names[0]}\\{grid.names[1]}", *(repr(float(y)) for y in grid.axes[1])])
                for x, row in zip(grid.axes[0], matrix):
                    writer.writerow([repr(float(x)), *row.tolist()])
    return paths


# ---------------------------------------------------------------------------
# single run


@dataclass
class RunResult:
    directory: Path
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any]


def _snapshot_metadata(cfg: ExperimentConfig, indicator: SuccessIndicator, seed: int, iteration: int,
                       rate: float, progress: int) -> Dict[str, Any]:
    return {
        "environment": {"id": cfg.environment.id, "params": cfg.environment.params},
        "indicator": indicator.to_dict(),
        "seed": seed,
        "iteration": iteration,
        "global_success": rate,
        "progress": progress,
    }


def run_experiment(cfg: ExperimentConfig, seed: int) -> RunResult:
    """Run one seed of `cfg` and write its run directory.

    Training episodes and evaluation episodes are tallied separately. A
    mid-run failure still leaves the rows written so far plus a summary with
    status "failed", then re-raises.
    """
    env = build_environment(cfg)
    indicator = build_indicator(cfg, env)
    scheduler = build_scheduler(cfg, env, indicator, seed)
    trainer = build_trainer(cfg, env, indicator)

    directory = run_paths.run_dir(cfg.output_dir, cfg.name, seed)
    with open(directory / run_paths.CONFIG_FILE, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(cfg.to_dict()), f, indent=2, sort_keys=True)
    log = RunLog(directory)

    train_rng, eval_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    k = cfg.scheduler.episodes_per_update
    m = cfg.scheduler.iterations
    ev = cfg.evaluation
    training_episodes = eval_episodes = 0
    best = {"global_success": None, "iteration": None, "entropy": None}

    def evaluate(row: Dict[str, Any], iteration: int) -> None:
        nonlocal eval_episodes
        if iteration % ev.eval_every != 0 and iteration != m:
            return
        rate, half_width = global_success_rate(env, trainer.policy, indicator, ev.n_eval, eval_rng,
                                               trainer.episodes_seen)
        eval_episodes += ev.n_eval
        row["global_success"] = rate
        row["global_success_hw"] = half_width
        # strict improvement only, so the earlier iteration keeps a tie
        if best["global_success"] is None or rate > best["global_success"]:
            best.update(global_success=rate, iteration=iteration, entropy=scheduler.entropy())
            metadata = _snapshot_metadata(cfg, indicator, seed, iteration, rate, trainer.episodes_seen)
            snapshot_path = save_snapshot(directory / run_paths.SNAPSHOT_FILE, trainer.policy, metadata)
            scheduler.record_best({"iteration": iteration, "global_success": rate, "policy": str(snapshot_path)})

    iteration = 0
    try:
        row = {"iter": 0, "scheduler": scheduler.name, "branch_taken": "init",
               "entropy": scheduler.entropy(), "distribution": scheduler.distribution_dict()}
        evaluate(row, 0)
        row.update(training_episodes=0, eval_episodes=eval_episodes)
        log.append_row(row)
        for iteration in range(1, m + 1):
            records = trainer.collect_and_train(scheduler.sampler(), k, train_rng, iteration=iteration)
            training_episodes += len(records)
            log.append_records(records)
            row = {"iter": iteration, **scheduler.update(records)}
            evaluate(row, iteration)
            row.update(training_episodes=training_episodes, eval_episodes=eval_episodes)
            log.append_row(row)
            if iteration % ev.eval_every == 0:
                _log.info(f"[{cfg.name} seed {seed}] iter {iteration}/{m}: entropy {scheduler.entropy():.4f}, "
                          f"global success {row.get('global_success')}")
    except Exception as e:
        _log.error(f"[{cfg.name} seed {seed}] failed at iteration {iteration}: {e}")
        log.write_summary({"status": "failed", "error": f"{type(e).__name__}: {e}", "seed": seed,
                           "failed_iteration": iteration, "iterations": len(log.rows) - 1,
                           "training_episodes": training_episodes, "eval_episodes": eval_episodes})
        raise

    summary = {
        "status": "complete",
        "name": cfg.name,
        "seed": seed,
        "scheduler": scheduler.name,
        "environment": env.describe(),
        "iterations": m,
        "training_episodes": training_episodes,
        "eval_episodes": eval_episodes,
        "final_entropy": scheduler.entropy(),
        "final_distribution": scheduler.distribution_dict(),
        "best_global_success": best["global_success"],
        "best_iteration": best["iteration"],
        "entropy_at_best": best["entropy"],
    }
    log.write_summary(summary)
    return RunResult(directory, log.rows, log.summary)


def run_seeds(cfg: ExperimentConfig) -> List[RunResult]:
    """All seeds of `cfg`, concurrently in worker processes when `cfg.workers` > 1."""
    if cfg.workers <= 1 or len(cfg.seeds) == 1:
        return [run_experiment(cfg, seed) for seed in cfg.seeds]
    with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
        futures = [executor.submit(run_experiment, cfg, seed) for seed in cfg.seeds]
        return [future.result() for future in futures]


# ---------------------------------------------------------------------------
# sweeps


def sweep_variant(cfg: ExperimentConfig, axis: str, value: Any) -> ExperimentConfig:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {list(SWEEP_AXES)}")
    if axis == "alpha":
        variant = cfg.with_scheduler(alpha=float(value))
    elif axis == "epsilon":
        variant = cfg.with_scheduler(epsilon=float(value))
    elif axis == "j_lb":
        variant = cfg.with_scheduler(indicator=SuccessIndicator.return_lower_bound(float(value)).to_dict())
    else:
        variant = cfg.with_scheduler(family=Family(value).value)
    return config_from_dict({**variant.to_dict(), "name": f"{cfg.name}-{axis}={value}"})


def _quartiles(values: Sequence[Optional[float]]) -> Dict[str, Optional[float]]:
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if not finite:
        return {"median": None, "q25": None, "q75": None}
    q25, median, q75 = np.percentile(finite, [25, 50, 75])
    return {"median": float(median), "q25": float(q25), "q75": float(q75)}


def _curves(result: RunResult) -> Dict[str, List[Any]]:
    return {
        "iter": [row["iter"] for row in result.rows],
        "entropy": [row.get("entropy") for row in result.rows],
        "in_dist_success": [row.get("in_dist_success") for row in result.rows],
        "global_success": [row.get("global_success") for row in result.rows],
    }


def run_sweep(cfg: ExperimentConfig, axis: str, values: Sequence[Any]) -> Dict[str, Any]:
    """Run every seed for each value on `axis`; writes and returns the aggregated summary."""
    variants = [sweep_variant(cfg, axis, value) for value in values]
    points = []
    for value, variant in zip(values, variants):
        results = run_seeds(variant)
        final_entropy = [r.summary["final_entropy"] for r in results]
        best_success = [r.summary["best_global_success"] for r in results]
        points.append({
            "value": value,
            "name": variant.name,
            "seeds": list(variant.seeds),
            "final_entropy": final_entropy,
            "best_global_success": best_success,
            "final_entropy_stats": _quartiles(final_entropy),
            "best_global_success_stats": _quartiles(best_success),
            "curves": {str(r.summary["seed"]): _curves(r) for r in results},
        })
    summary = to_jsonable({"axis": axis, "base": cfg.name, "points": points})
    path = run_paths.runs_root(cfg.output_dir) / f"{cfg.name}-sweep-{axis}" / run_paths.SWEEP_SUMMARY_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    _log.info(f"Sweep over {axis} written to {path}")
    return summary


# ---------------------------------------------------------------------------
# replay


@dataclass
class ReplayResult:
    matches: bool
    logged: List[str]
    replayed: List[str]
    first_mismatch: Optional[int] = None


def replay_run(directory: Path) -> ReplayResult:
    """Drive a fresh scheduler with the logged episodes and compare distribution trajectories.

    Distributions are compared through their serialized JSON, so a match is
    exact to the last digit written.
    """
    directory = Path(directory)
    with open(directory / run_paths.CONFIG_FILE, 'r', encoding='utf-8') as f:
        cfg = config_from_dict(json.load(f))
    rows = load_rows(directory)
    if not rows:
        raise ValueError(f"no iteration rows in {directory}")
    seed = int(directory.name.split("_", 1)[1])
    env = build_environment(cfg)
    indicator = build_indicator(cfg, env)
    scheduler = build_scheduler(cfg, env, indicator, seed)
    trainer = ReplayTrainer(load_records(directory))

    logged = [dumps(row["distribution"]) for row in rows]
    replayed = [dumps(scheduler.distribution_dict())]
    rng = np.random.default_rng(seed)
    for row in rows[1:]:
        records = trainer.collect_and_train(scheduler.sampler(), cfg.scheduler.episodes_per_update, rng,
                                            iteration=row["iter"])
        scheduler.update(records)
        replayed.append(dumps(to_jsonable(scheduler.distribution_dict())))
    mismatch = next((i for i, (a, b) in enumerate(zip(logged, replayed)) if a != b), None)
    if mismatch is None and len(logged) != len(replayed):
        mismatch = min(len(logged), len(replayed))
    if mismatch is not None:
        _log.warning(f"Replay of {directory} diverges at row {mismatch}")
    return ReplayResult(mismatch is None, logged, replayed, mismatch)


# ---------------------------------------------------------------------------
# snapshots


def _from_snapshot(path: Path):
    policy, meta = load_snapshot(path)
    env = make_environment(meta["environment"]["id"], meta["environment"]["params"])
    indicator = SuccessIndicator.from_dict(meta["indicator"])
    return env, policy, indicator, meta


def evaluate_snapshot(path: Path, n_eval: int, seed: int = 0) -> Dict[str, Any]:
    env, policy, indicator, meta = _from_snapshot(path)
    rate, half_width = global_success_rate(env, policy, indicator, n_eval, np.random.default_rng(seed),
                                           meta.get("progress", 0))
    return {"snapshot": str(path), "n_eval": n_eval, "global_success": rate, "half_width": half_width}


def grid_snapshot(path: Path, dims: Sequence[int], size: int, repeats: int = 1, seed: int = 0,
                  out_dir: Optional[Path] = None) -> Tuple[GridResult, Tuple[Path, Path]]:
    env, policy, indicator, meta = _from_snapshot(path)
    grid = evaluate_grid(env, policy, indicator, dims, size, np.random.default_rng(seed), repeats,
                         meta.get("progress", 0))
    return grid, write_grid_csv(grid, Path(out_dir) if out_dir is not None else Path(path).parent)
