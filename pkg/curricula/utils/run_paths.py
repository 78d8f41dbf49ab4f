"""
Run directory layout.

    <output_dir>/<experiment name>/seed_<seed>/
        config.json        experiment config as run
        iterations.jsonl   one diagnostics row per iteration
        episodes.jsonl     one row per training episode
        summary.json       final summary (or failure marker)
        best_policy.json   best snapshot by global success rate
"""

import logging
import os
from pathlib import Path
from typing import List, Optional, Union

_log = logging.getLogger('curricula.main')

PROJECT_ROOT = Path(__file__).parent.parent.parent
DEFAULT_OUTPUT_DIR = PROJECT_ROOT / "runs"

CONFIG_FILE = "config.json"
ROWS_FILE = "iterations.jsonl"
RECORDS_FILE = "episodes.jsonl"
SUMMARY_FILE = "summary.json"
SNAPSHOT_FILE = "best_policy.json"
GRID_RETURNS_FILE = "grid_returns.csv"
GRID_SUCCESS_FILE = "grid_success.csv"
SWEEP_SUMMARY_FILE = "sweep_summary.json"


def runs_root(output_dir: Optional[Union[str, Path]] = None) -> Path:
    """Directory holding experiments; `CURRICULA_RUNS_DIR` wins over the default."""
    if output_dir is not None:
        return Path(output_dir).absolute()
    return Path(os.environ.get("CURRICULA_RUNS_DIR", DEFAULT_OUTPUT_DIR)).absolute()


def run_dir(output_dir: Union[str, Path], name: str, seed: int, create: bool = True) -> Path:
    """
    Directory for one (experiment, seed) job.

    Args:
        output_dir: Root output directory
        name: Experiment name
        seed: Seed of the job
        create: Create the directory if missing

    Returns:
        Absolute path of the job directory
    """
    path = runs_root(output_dir) / name / f"seed_{seed}"
    if create:
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            _log.error(f"Failed to create run directory {path}: {e}")
            raise
    return path


def list_run_dirs(root: Union[str, Path]) -> List[Path]:
    """All job directories under `root` that carry a summary, sorted by path."""
    root = Path(root)
    if not root.exists():
        return []
    return sorted(p.parent for p in root.glob(f"*/seed_*/{SUMMARY_FILE}"))
