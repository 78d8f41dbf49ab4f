from pathlib import Path

from flask import Blueprint, abort, current_app, jsonify

from ..persistence.run_log import load_rows, load_summary
from ..utils import run_paths

bp = Blueprint('runs', __name__)


def _root() -> Path:
    return Path(current_app.config['RUNS_DIR'])


def _job_dir(name: str, seed: int) -> Path:
    root = _root().resolve()
    path = (root / name / f"seed_{seed}").resolve()
    # names come from the URL; stay inside the runs directory
    if root not in path.parents or not path.is_dir():
        abort(404)
    return path


@bp.route('/runs', methods=['GET'])
def list_runs():
    runs = []
    for directory in run_paths.list_run_dirs(_root()):
        summary = load_summary(directory) or {}
        runs.append({
            "name": directory.parent.name,
            "seed": summary.get("seed"),
            "status": summary.get("status"),
            "scheduler": summary.get("scheduler"),
            "best_global_success": summary.get("best_global_success"),
            "final_entropy": summary.get("final_entropy"),
        })
    return jsonify(runs)


@bp.route('/runs/<name>/<int:seed>/summary', methods=['GET'])
def run_summary(name, seed):
    summary = load_summary(_job_dir(name, seed))
    if summary is None:
        abort(404)
    return jsonify(summary)


@bp.route('/runs/<name>/<int:seed>/iterations', methods=['GET'])
def run_iterations(name, seed):
    return jsonify(load_rows(_job_dir(name, seed)))
