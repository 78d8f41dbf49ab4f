import json
import os
from pathlib import Path

import click

from .config import load_config
from .errors import CurriculaError
from .logging_config import configure_logging


def _echo(data) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


def _parse_value(raw: str):
    try:
        return float(raw)
    except ValueError:
        return raw


@click.group()
@click.option('--log-level', default=None, help='Overrides LOG_LEVEL.')
def cli(log_level):
    """Entropy-maximizing domain-randomization curricula."""
    configure_logging(log_level=log_level)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(exists=True, dir_okay=False))
def run(config_path):
    """Run every seed of an experiment config."""
    from .services.harness import run_seeds

    try:
        cfg = load_config(config_path)
        results = run_seeds(cfg)
    except CurriculaError as e:
        raise click.ClickException(str(e))
    _echo([{**r.summary, "directory": str(r.directory)} for r in results])


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--axis', required=True, type=click.Choice(["alpha", "epsilon", "j_lb", "family"]))
@click.option('--values', required=True, help='Comma-separated values along the axis.')
def sweep(config_path, axis, values):
    """Run a one-axis sweep over a base config."""
    from .services.harness import run_sweep

    parsed = [_parse_value(v.strip()) for v in values.split(",") if v.strip()]
    try:
        summary = run_sweep(load_config(config_path), axis, parsed)
    except CurriculaError as e:
        raise click.ClickException(str(e))
    _echo([{"value": p["value"], **p["final_entropy_stats"]} for p in summary["points"]])


@cli.command('eval')
@click.option('--snapshot', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--n', 'n_eval', default=500, show_default=True, type=int)
@click.option('--seed', default=0, show_default=True, type=int)
def evaluate(snapshot, n_eval, seed):
    """Global success rate of a saved policy snapshot."""
    from .services.harness import evaluate_snapshot

    _echo(evaluate_snapshot(Path(snapshot), n_eval, seed))


@cli.command()
@click.option('--snapshot', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--dims', required=True, help='One or two dimension indices, e.g. "0" or "0,1".')
@click.option('--size', default=64, show_default=True, type=int)
@click.option('--repeats', default=1, show_default=True, type=int)
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--out', 'out_dir', default=None, type=click.Path(file_okay=False))
def grid(snapshot, dims, size, repeats, seed, out_dir):
    """Evaluate a snapshot on a 1-D or 2-D grid slice and write CSV matrices."""
    from .services.harness import grid_snapshot

    try:
        dim_list = [int(d) for d in dims.split(",")]
        result, paths = grid_snapshot(Path(snapshot), dim_list, size, repeats, seed, out_dir)
    except ValueError as e:
        raise click.ClickException(str(e))
    _echo({"dims": list(result.names), "success_fraction": float(result.success.mean()),
           "files": [str(p) for p in paths]})


@cli.command()
@click.option('--run-dir', required=True, type=click.Path(exists=True, file_okay=False))
def replay(run_dir):
    """Replay a run's episodes through a fresh scheduler and check the distribution trajectory."""
    from .services.harness import replay_run

    result = replay_run(Path(run_dir))
    _echo({"matches": result.matches, "rows": len(result.logged), "first_mismatch": result.first_mismatch})
    if not result.matches:
        raise SystemExit(1)


@cli.command()
@click.option('--host', default='127.0.0.1', show_default=True)
@click.option('--port', default=5000, show_default=True, type=int)
@click.option('--runs-dir', default=None, type=click.Path(file_okay=False))
def serve(host, port, runs_dir):
    """Serve run summaries and iteration rows as JSON."""
    from . import create_app

    debug = os.environ.get("FLASK_DEBUG", "false").lower() in ("1", "true", "yes", "on")
    create_app(runs_dir).run(host=host, port=port, debug=debug)
