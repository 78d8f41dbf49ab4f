import numpy as np
import pytest
from scipy import stats

from curricula.environments import InclinedPlaneEnvironment, SkillRegionConfig, SkillRegionEnvironment
from curricula.services import distributions as dist
from curricula.services.curriculum import PointSampler, SpecSampler
from curricula.services.estimator import EpisodeRecord, SuccessIndicator
from curricula.services.learner import (CEMConfig, CEMTrainer, HistoryPolicy, OracleTrainer, ReplayTrainer,
                                        load_snapshot, save_snapshot)


@pytest.fixture
def plane():
    return InclinedPlaneEnvironment()


@pytest.fixture
def skill():
    return SkillRegionEnvironment(SkillRegionConfig(center=[0.5], half_width=[0.2]))


def test_zero_weights_give_zero_action():
    policy = HistoryPolicy(window=4, hidden_sizes=(8,), action_scale=3.0)
    assert policy.act(np.ones((6, 3)), np.array([0.3, -0.2])) == 0.0


def test_memoryless_policy_shapes():
    policy = HistoryPolicy(window=0)
    assert policy.input_size == 2
    assert policy.n_params == 3
    assert policy.act(np.empty((0, 3)), np.array([1.0, 1.0])) == 0.0


def test_short_histories_are_zero_padded(rng):
    policy = HistoryPolicy(window=5, hidden_sizes=(4,), action_scale=2.0)
    policy = policy.with_weights(rng.normal(size=policy.n_params))
    history = rng.normal(size=(2, 3))
    padded = np.vstack([np.zeros((3, 3)), history])
    state = np.array([0.1, 0.2])
    assert policy.act(history, state) == pytest.approx(policy.act(padded, state))
    # rows older than the window are ignored
    longer = np.vstack([rng.normal(size=(4, 3)), padded])
    assert policy.act(longer, state) == pytest.approx(policy.act(padded, state))


def test_actions_are_bounded_by_the_scale(rng):
    policy = HistoryPolicy(window=3, action_scale=2.5)
    policy = policy.with_weights(100.0 * rng.normal(size=policy.n_params))
    for _ in range(50):
        assert abs(policy.act(rng.normal(size=(3, 3)), rng.normal(size=2))) <= 2.5


def test_weight_count_is_checked():
    with pytest.raises(ValueError):
        HistoryPolicy(window=2, weights=np.zeros(3))


def test_single_episode_epoch(plane, rng):
    trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig(population=4))
    records = trainer.collect_and_train(PointSampler([0.1]), 1, rng, iteration=3)
    assert len(records) == 1
    assert records[0].iteration == 3
    assert records[0].xi == (0.1,)
    assert trainer.episodes_seen == 1


def test_records_carry_the_sampled_dynamics(plane):
    sampler = SpecSampler(dist.beta_spec(plane.support, 5.0, 5.0))
    trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig(population=5))
    # the trainer draws its population before handing the generator to the sampler
    replay = np.random.default_rng(9)
    replay.standard_normal((5, trainer.mean.size))
    expected, _ = sampler(20, replay)
    records = trainer.collect_and_train(sampler, 20, np.random.default_rng(9))
    assert [r.episode for r in records] == list(range(20))
    assert [r.xi for r in records] == [tuple(x) for x in expected]


def test_oracle_trainer_draws_from_the_sampler(skill):
    spec = dist.beta_spec(skill.support, 2.0, 5.0)
    trainer = OracleTrainer(skill, skill.default_indicator())
    records = trainer.collect_and_train(SpecSampler(spec), 2000, np.random.default_rng(4))
    xs = [r.xi[0] for r in records]
    assert stats.kstest(xs, stats.beta(2.0, 5.0).cdf).pvalue > 0.001
    assert all(r.success == (0.3 <= r.xi[0] <= 0.7) for r in records)
    assert trainer.episodes_seen == 2000


def test_cem_is_deterministic_given_the_generator(plane):
    results = []
    for _ in range(2):
        trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig(population=6))
        rng = np.random.default_rng(11)
        records = trainer.collect_and_train(SpecSampler(dist.max_entropy_spec(plane.support)), 12, rng)
        results.append(([r.to_dict() for r in records], trainer.mean.copy()))
    assert results[0][0] == results[1][0]
    np.testing.assert_array_equal(results[0][1], results[1][1])


def test_parallel_rollouts_match_serial(plane):
    outcomes = []
    for workers in (1, 2):
        trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig(population=6, workers=workers))
        records = trainer.collect_and_train(SpecSampler(dist.max_entropy_spec(plane.support)), 12,
                                            np.random.default_rng(5))
        outcomes.append(([r.to_dict() for r in records], trainer.mean.copy()))
    assert outcomes[0][0] == outcomes[1][0]
    np.testing.assert_array_equal(outcomes[0][1], outcomes[1][1])


def test_cem_rejects_policy_free_environments(skill):
    with pytest.raises(ValueError):
        CEMTrainer(skill, skill.default_indicator())


def test_snapshot_round_trip(tmp_path, rng):
    policy = HistoryPolicy(window=2, hidden_sizes=(3,), action_scale=6.9)
    policy = policy.with_weights(rng.normal(size=policy.n_params))
    path = save_snapshot(tmp_path / "snap" / "policy.json", policy, {"iteration": 7, "global_success": 0.8})
    loaded, payload = load_snapshot(path)
    assert payload["iteration"] == 7
    np.testing.assert_allclose(loaded.weights, policy.weights)
    assert loaded.metadata() == policy.metadata()
    _, empty = load_snapshot(save_snapshot(tmp_path / "none.json", None, {"iteration": 0}))
    assert empty["policy"] is None


def test_replay_trainer_returns_logged_episodes():
    logged = {1: [EpisodeRecord(xi=(0.2,), return_value=1.0, success=True, steps=1, iteration=1, episode=k)
                  for k in (1, 0)]}
    trainer = ReplayTrainer(logged)
    records = trainer.collect_and_train(None, 2, None, iteration=1)
    assert [r.episode for r in records] == [0, 1]
    with pytest.raises(ValueError):
        trainer.collect_and_train(None, 3, None, iteration=1)


@pytest.mark.slow
def test_nominal_training_balances_the_flat_plane(plane):
    trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig(population=16))
    rng = np.random.default_rng(0)
    for iteration in range(20):
        trainer.collect_and_train(PointSampler(plane.nominal), 16, rng, iteration)
    balanced = plane.predicates["balanced"]
    outcomes = [balanced(plane.rollout(trainer.policy, plane.nominal, np.random.default_rng(s))) for s in range(40)]
    assert np.mean(outcomes) >= 0.95


@pytest.mark.slow
def test_cem_learns_a_tilted_plane():
    plane = InclinedPlaneEnvironment()
    trainer = CEMTrainer(plane, SuccessIndicator.environment_predicate("balanced"), CEMConfig())
    rng = np.random.default_rng(1)
    for iteration in range(60):
        trainer.collect_and_train(PointSampler([0.3]), 64, rng, iteration)
    balanced = plane.predicates["balanced"]
    outcomes = [balanced(plane.rollout(trainer.policy, [0.3], np.random.default_rng(s))) for s in range(50)]
    assert np.mean(outcomes) >= 0.95


def test_beyond_the_feasible_edge_nothing_succeeds(plane):
    trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig(population=8))
    rng = np.random.default_rng(3)
    for iteration in range(3):
        records = trainer.collect_and_train(PointSampler([1.2]), 16, rng, iteration)
        assert not any(r.success for r in records)


def _mean_return(env, policy, omega, episodes=20):
    return float(np.mean([env.rollout(policy, [omega], np.random.default_rng(s)).return_value
                          for s in range(episodes)]))


@pytest.mark.slow
def test_training_does_not_make_the_policy_worse(plane):
    improved = 0
    for seed in range(10):
        trainer = CEMTrainer(plane, plane.default_indicator(), CEMConfig())
        before = _mean_return(plane, trainer.policy, 0.3)
        rng = np.random.default_rng(seed)
        for iteration in range(30):
            trainer.collect_and_train(PointSampler([0.3]), 64, rng, iteration)
        improved += _mean_return(plane, trainer.policy, 0.3) >= before
    assert improved >= 9
