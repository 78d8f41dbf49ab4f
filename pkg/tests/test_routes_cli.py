import json

import pytest
from click.testing import CliRunner

from curricula import create_app
from curricula.cli import cli
from curricula.services.harness import run_experiment
from curricula.utils import run_paths


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
    for name in ("CURRICULA_OUTPUT_DIR", "CURRICULA_SEEDS", "CURRICULA_WORKERS"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def finished_run(skill_config):
    cfg = skill_config()
    return cfg, run_experiment(cfg, 3)


@pytest.fixture
def client(finished_run):
    cfg, _ = finished_run
    app = create_app(cfg.output_dir)
    app.config['TESTING'] = True
    return app.test_client()


def test_list_runs(client):
    response = client.get('/runs')
    assert response.status_code == 200
    runs = response.get_json()
    assert runs == [{"name": "skill", "seed": 3, "status": "complete", "scheduler": "doraemon",
                     "best_global_success": runs[0]["best_global_success"],
                     "final_entropy": runs[0]["final_entropy"]}]


def test_summary_and_iterations(client, finished_run):
    _, result = finished_run
    summary = client.get('/runs/skill/3/summary').get_json()
    assert summary == result.summary
    rows = client.get('/runs/skill/3/iterations').get_json()
    assert [row["iter"] for row in rows] == [0, 1, 2, 3, 4]


def test_missing_runs_are_404(client):
    assert client.get('/runs/skill/9/summary').status_code == 404
    assert client.get('/runs/nothing/3/iterations').status_code == 404
    assert client.get('/runs/..%2F..%2Fetc/3/summary').status_code == 404


def _write_config(skill_config, tmp_path, **overrides):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(skill_config(**overrides).to_dict()))
    return path


def test_cli_run_then_replay(skill_config, tmp_path):
    runner = CliRunner(mix_stderr=False)
    config_path = _write_config(skill_config, tmp_path)
    result = runner.invoke(cli, ['run', '--config', str(config_path)])
    assert result.exit_code == 0, result.output
    summaries = json.loads(result.output)
    assert summaries[0]["status"] == "complete"

    directory = summaries[0]["directory"]
    result = runner.invoke(cli, ['replay', '--run-dir', directory])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["matches"] is True

    snapshot = str(run_paths.run_dir(tmp_path / "runs", "skill", 3, create=False) / run_paths.SNAPSHOT_FILE)
    result = runner.invoke(cli, ['eval', '--snapshot', snapshot, '--n', '40'])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["n_eval"] == 40

    out_dir = tmp_path / "grid"
    result = runner.invoke(cli, ['grid', '--snapshot', snapshot, '--dims', '0', '--size', '11', '--out', str(out_dir)])
    assert result.exit_code == 0, result.output
    assert (out_dir / run_paths.GRID_SUCCESS_FILE).exists()


def test_cli_reports_bad_configs(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"scheduler": {"alpha": 2.0}}))
    result = CliRunner(mix_stderr=False).invoke(cli, ['run', '--config', str(path)])
    assert result.exit_code != 0
    assert "alpha" in result.stderr


def test_cli_sweep(skill_config, tmp_path):
    config_path = _write_config(skill_config, tmp_path, scheduler={"iterations": 1})
    result = CliRunner(mix_stderr=False).invoke(cli, ['sweep', '--config', str(config_path), '--axis', 'epsilon',
                                                       '--values', '0.05,0.2'])
    assert result.exit_code == 0, result.output
    assert [p["value"] for p in json.loads(result.output)] == [0.05, 0.2]
