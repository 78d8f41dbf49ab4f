import dataclasses
import logging

import numpy as np
import pytest
from scipy import stats

from curricula.errors import EstimatorError, UnknownPredicateError
from curricula.services import distributions as dist
from curricula.services.estimator import (EpisodeRecord, SuccessIndicator, TrajectorySummary, effective_sample_size,
                                          evaluate_sigma, importance_weights, is_success_rate, mc_success_rate)


def test_identical_specs_reduce_to_monte_carlo(unit_support, make_records, rng):
    phi = dist.beta_spec(unit_support, 3.0, 3.0)
    records = make_records(phi, 40, lambda x: x[0] < 0.4, rng)
    assert is_success_rate(records, phi, phi) == mc_success_rate(records)
    twin = dist.beta_spec(unit_support, 3.0, 3.0)
    assert is_success_rate(records, phi, twin) == mc_success_rate(records)


def test_importance_sampling_is_unbiased(unit_support, make_records):
    rng = np.random.default_rng(2024)
    phi_old = dist.beta_spec(unit_support, 2.0, 2.0)
    phi_new = dist.beta_spec(unit_support, 2.0, 5.0)
    truth = stats.beta(2.0, 5.0).cdf(0.5)
    estimates = [is_success_rate(make_records(phi_old, 100, lambda x: x[0] < 0.5, rng), phi_old, phi_new)
                 for _ in range(300)]
    standard_error = np.std(estimates) / np.sqrt(len(estimates))
    assert abs(np.mean(estimates) - truth) < 3 * standard_error


def test_weights_and_effective_sample_size(unit_support, make_records, rng):
    phi = dist.beta_spec(unit_support, 2.0, 2.0)
    records = make_records(phi, 25, lambda x: True, rng)
    weights = importance_weights(records, phi, phi)
    assert weights == pytest.approx(np.ones(25))
    assert effective_sample_size(weights) == pytest.approx(25.0)
    assert effective_sample_size(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_clipping_caps_weights_and_warns(unit_support, make_records, rng, caplog):
    phi_old = dist.beta_spec(unit_support, 2.0, 2.0)
    phi_new = dist.beta_spec(unit_support, 8.0, 2.0)
    records = make_records(phi_old, 200, lambda x: x[0] > 0.6, rng)
    unclipped = is_success_rate(records, phi_old, phi_new)
    with caplog.at_level(logging.WARNING, logger='curricula.main'):
        clipped = is_success_rate(records, phi_old, phi_new, clip=1.5)
    assert clipped < unclipped
    assert clipped <= 1.5
    assert "clipped" in caplog.text


def test_empty_records_are_rejected(unit_support):
    phi = dist.max_entropy_spec(unit_support)
    with pytest.raises(EstimatorError):
        is_success_rate([], phi, phi)
    with pytest.raises(EstimatorError):
        mc_success_rate([])


def test_return_threshold_is_inclusive():
    indicator = SuccessIndicator.return_lower_bound(25.0)
    assert evaluate_sigma(indicator, TrajectorySummary(25.0, 200))
    assert not evaluate_sigma(indicator, TrajectorySummary(24.999, 200))


def test_environment_predicates():
    summary = TrajectorySummary(0.0, 10, {"in_band_steps": 30})
    predicates = {"balanced": lambda s: s.fields["in_band_steps"] >= 25}
    assert evaluate_sigma(SuccessIndicator.environment_predicate("balanced"), summary, predicates)
    with pytest.raises(UnknownPredicateError):
        evaluate_sigma(SuccessIndicator.environment_predicate("upright"), summary, predicates)
    with pytest.raises(KeyError):
        evaluate_sigma(SuccessIndicator.environment_predicate("upright"), summary, predicates)


def test_indicator_serialization():
    for indicator in (SuccessIndicator.return_lower_bound(1600.0), SuccessIndicator.environment_predicate("inside")):
        assert SuccessIndicator.from_dict(indicator.to_dict()) == indicator


def test_record_rows_keep_boundary_tags():
    record = EpisodeRecord(xi=(0.1, 0.2), return_value=3.5, success=True, steps=7, iteration=2, episode=4,
                           boundary=(1, "hi"))
    row = record.to_dict()
    assert row["boundary"] == [1, "hi"]
    assert row["iter"] == 2
    assert EpisodeRecord.from_dict(row) == record
    with pytest.raises(ValueError):
        EpisodeRecord(xi=(0.1,), return_value=0.0, success=False, steps=0)


def test_turning_a_failure_into_a_success_never_lowers_the_estimate(unit_support, make_records, rng):
    for _ in range(20):
        phi_old = dist.beta_spec(unit_support, *rng.uniform(1.0, 20.0, size=2))
        phi_new = dist.beta_spec(unit_support, *rng.uniform(1.0, 20.0, size=2))
        threshold = rng.uniform(0.2, 0.8)
        records = make_records(phi_old, 30, lambda x: x[0] < threshold, rng)
        base = is_success_rate(records, phi_old, phi_new)
        for k, record in enumerate(records):
            if record.success:
                continue
            flipped = records[:k] + [dataclasses.replace(record, success=True)] + records[k + 1:]
            assert is_success_rate(flipped, phi_old, phi_new) >= base


def test_clipping_never_raises_the_estimate(unit_support, make_records, rng):
    for _ in range(50):
        phi_old = dist.beta_spec(unit_support, *rng.uniform(1.0, 20.0, size=2))
        phi_new = dist.beta_spec(unit_support, *rng.uniform(1.0, 20.0, size=2))
        threshold = rng.uniform(0.1, 0.9)
        records = make_records(phi_old, 40, lambda x: x[0] > threshold, rng)
        clip = rng.uniform(0.5, 5.0)
        assert is_success_rate(records, phi_old, phi_new, clip=clip) <= is_success_rate(records, phi_old, phi_new)
