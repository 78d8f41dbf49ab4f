import math

import numpy as np
import pytest

from curricula.services import distributions as dist
from curricula.services.curriculum import (BRANCH_BACKUP_CONTINUE, BRANCH_BACKUP_MAIN, BRANCH_MAIN, CurriculumState,
                                           DoraemonScheduler, FixedDRScheduler, NoDRScheduler, doraemon_iteration,
                                           fixed_dr_spec, no_dr_spec)
from curricula.services.distributions import BoundedSupport
from curricula.services.optimizer import StepConfig


@pytest.fixture
def start(unit_support):
    return dist.beta_spec(unit_support, 10.0, 10.0)


def test_main_branch_when_success_meets_alpha(start, make_records, rng):
    records = make_records(start, 100, lambda x: abs(x[0] - 0.5) <= 0.15, rng)
    state = doraemon_iteration(CurriculumState(start), records, StepConfig(alpha=0.5, epsilon=0.05))
    row = state.history[-1]
    assert row["branch_taken"] == BRANCH_MAIN
    assert row["in_dist_success"] >= 0.5
    assert state.iteration == 1
    assert dist.entropy(state.phi_current) > dist.entropy(start)


def test_backup_then_main_when_backup_restores_alpha(start, make_records, rng):
    records = make_records(start, 200, lambda x: x[0] > 0.55, rng)
    state = doraemon_iteration(CurriculumState(start), records, StepConfig(alpha=0.5, epsilon=1.0))
    row = state.history[-1]
    assert row["in_dist_success"] < 0.5
    assert row["branch_taken"] == BRANCH_BACKUP_MAIN
    assert row["backup"]["G_hat_after"] >= 0.5
    assert row["main"]["G_hat_before"] >= 0.5


def test_backup_continue_when_alpha_is_out_of_reach(start, make_records, rng):
    records = make_records(start, 200, lambda x: x[0] > 0.6, rng)
    state = doraemon_iteration(CurriculumState(start), records, StepConfig(alpha=0.5, epsilon=0.01))
    row = state.history[-1]
    assert row["branch_taken"] == BRANCH_BACKUP_CONTINUE
    assert "main" not in row
    assert dist.mean(state.phi_current)[0] > 0.5
    assert dist.kl_divergence(state.phi_current, start) <= 0.01 + 1e-4


def test_disabled_backup_always_runs_the_main_step(start, make_records, rng):
    records = make_records(start, 200, lambda x: x[0] > 0.6, rng)
    state = doraemon_iteration(CurriculumState(start), records, StepConfig(alpha=0.5), backup_enabled=False)
    assert state.history[-1]["branch_taken"] == BRANCH_MAIN
    assert "backup" not in state.history[-1]


def test_fixed_and_no_dr_distributions():
    support = BoundedSupport((0.0, 0.0), (1.0, 1.0))
    fixed = fixed_dr_spec(support)
    assert fixed.params.a == (1.0, 1.0) and fixed.params.b == (1.0, 1.0)
    wide = BoundedSupport((-1.0, 2.0), (3.0, 2.5))
    assert dist.entropy(fixed_dr_spec(wide)) == pytest.approx(math.log(4.0) + math.log(0.5))
    xis, tags = no_dr_spec(wide)(5, np.random.default_rng(0))
    assert np.all(xis == wide.midpoint)
    assert tags == [None] * 5
    with pytest.raises(ValueError):
        no_dr_spec(wide, [10.0, 2.2])


def test_schedulers_are_pure_functions_of_their_records(start, make_records, rng):
    records = [make_records(start, 60, lambda x: abs(x[0] - 0.5) <= 0.2, rng, iteration=i) for i in (1, 2)]
    cfg = StepConfig(alpha=0.5, epsilon=0.05)
    first, second = DoraemonScheduler(start, cfg), DoraemonScheduler(start, cfg)
    for batch in records:
        assert first.update(batch) == second.update(batch)
    assert first.distribution_dict() == second.distribution_dict()


def test_baseline_rows(unit_support, make_records, rng):
    fixed = FixedDRScheduler(unit_support)
    records = make_records(fixed.spec, 20, lambda x: x[0] < 0.5, rng)
    row = fixed.update(records)
    assert row["scheduler"] == "fixed"
    assert row["entropy"] == 0.0
    nodr = NoDRScheduler(unit_support)
    assert nodr.entropy() == -math.inf
    assert nodr.distribution_dict()["xi"] == [0.5]


def test_fresh_evaluation_hook_reports_success_of_the_new_distribution(start, make_records, rng):
    calls = []

    def hook(spec, count):
        calls.append((spec, count))
        return make_records(spec, count, lambda x: x[0] < 0.5, np.random.default_rng(0))

    scheduler = DoraemonScheduler(start, StepConfig(alpha=0.5, epsilon=0.05), episodes_per_update=30,
                                  fresh_evaluation=hook)
    row = scheduler.update(make_records(start, 30, lambda x: abs(x[0] - 0.5) <= 0.2, rng))
    assert calls == [(scheduler.state.phi_current, 30)]
    assert 0.0 <= row["fresh_success"] <= 1.0


def test_best_snapshot_follows_the_current_distribution(start, make_records, rng):
    scheduler = DoraemonScheduler(start, StepConfig(alpha=0.5, epsilon=0.05))
    assert scheduler.state.best_snapshot is None
    scheduler.record_best({"iteration": 0, "global_success": 0.2, "policy": "best_policy.json"})
    scheduler.update(make_records(start, 60, lambda x: abs(x[0] - 0.5) <= 0.2, rng))
    assert scheduler.state.best_snapshot["phi"] == dist.spec_to_dict(start)
    scheduler.record_best({"iteration": 1, "global_success": 0.4, "policy": "best_policy.json"})
    assert scheduler.state.best_snapshot == {"phi": scheduler.distribution_dict(), "iteration": 1,
                                             "global_success": 0.4, "policy": "best_policy.json"}
    FixedDRScheduler(start.support).record_best({"iteration": 0})
