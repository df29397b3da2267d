import itertools

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from fairbench import metrics, postmethods
from fairbench.data import SensitiveEncoding
from fairbench.errors import ApplicationError, FitError, FormatError


def _enc(groups, G=None):
    groups = np.asarray(groups)
    G = G or int(groups.max()) + 1
    return SensitiveEncoding("intersectional", np.eye(G)[groups], tuple("ABCDEFG"[:G]), ((0, G),))


def test_top_score_per_group_example():
    scores = np.array([0.9, 0.7, 0.2, 0.8, 0.3, 0.1])
    labels = np.array([1, 0, 0, 1, 0, 0])
    enc = _enc([0, 0, 0, 1, 1, 1])
    policy = postmethods.fit_error_parity(scores, labels, enc, "dem_par", 0.0)
    hard = postmethods.apply_thresholds(scores, enc, policy)
    assert_array_equal(hard, [1, 0, 0, 1, 0, 0])
    assert policy.achieved_violation == 0.0 and not policy.infeasible
    assert policy.fit_accuracy == 1.0


def test_loose_tolerance_matches_best_unconstrained():
    rng = np.random.default_rng(0)
    scores = rng.random(60)
    labels = (rng.random(60) < scores).astype(int)
    enc = _enc(rng.integers(0, 2, 60))
    policy = postmethods.fit_error_parity(scores, labels, enc, "dem_par", np.inf)
    assert policy.fit_accuracy >= metrics.accuracy(metrics.harden(scores), labels)


def test_single_group():
    scores = np.array([0.1, 0.4, 0.6, 0.9])
    labels = np.array([0, 0, 1, 1])
    policy = postmethods.fit_error_parity(scores, labels, _enc([0, 0, 0, 0]), "dem_par", 0.0)
    assert policy.achieved_violation == 0.0 and policy.fit_accuracy == 1.0


def test_fit_errors():
    enc = _enc([0, 0, 1, 1])
    with pytest.raises(FitError, match="B"):
        postmethods.fit_error_parity([0.1, 0.2, 0.3, 0.4], [1, 0, 0, 0], enc, "eq_opp")
    with pytest.raises(FitError):
        postmethods.fit_error_parity([0.1, 0.2, 0.3, 0.4], [1, 0, 1, 0], enc, "acc_eq")
    par = SensitiveEncoding("parallel", np.eye(2)[[0, 0, 1, 1]], ("A", "B"), ((0, 2),))
    with pytest.raises(FormatError):
        postmethods.fit_error_parity([0.1, 0.2, 0.3, 0.4], [1, 0, 1, 0], par)


def test_infeasible_flagged():
    # group B has a single sample: its rate is 0 or 1, group A's is in {0, 1/2, 1}
    scores = np.array([0.9, 0.1, 0.5])
    labels = np.array([1, 0, 1])
    policy = postmethods.fit_error_parity(scores, labels, _enc([0, 0, 1]), "dem_par", 0.0)
    # all-ones or all-zeros would satisfy parity; all-ones is feasible with mean 1
    assert not policy.infeasible
    policy = postmethods.fit_error_parity(scores, labels, _enc([0, 0, 1]), "dem_par", -1.0)
    assert policy.infeasible


def test_apply_thresholds():
    scores = np.array([0.2, 0.6, 0.5, 0.9])
    enc = _enc([0, 0, 1, 1])
    uniform = postmethods.ThresholdPolicy(("A", "B"), np.array([0.5, 0.5]), "dem_par", 0.0, 0.0, 1.0)
    assert_array_equal(postmethods.apply_thresholds(scores, enc, uniform), metrics.harden(scores))
    saturated = postmethods.ThresholdPolicy(("A", "B"), np.array([1.1, 0.5]), "dem_par", 0.0, 0.0, 1.0)
    assert_array_equal(postmethods.apply_thresholds(scores, enc, saturated), [0, 0, 1, 1])
    partial = postmethods.ThresholdPolicy(("A",), np.array([0.5]), "dem_par", 0.0, 0.0, 1.0)
    with pytest.raises(ApplicationError):
        postmethods.apply_thresholds(scores, enc, partial)


def test_apply_monotone_in_scores():
    rng = np.random.default_rng(1)
    enc = _enc(rng.integers(0, 3, 40))
    policy = postmethods.ThresholdPolicy(("A", "B", "C"), rng.random(3), "dem_par", 0.0, 0.0, 1.0)
    scores = rng.random(40)
    raised = scores + rng.random(40) * 0.3
    assert np.all(postmethods.apply_thresholds(raised, enc, policy) >= postmethods.apply_thresholds(scores, enc, policy))


def test_policy_serialization():
    policy = postmethods.ThresholdPolicy(("A", "B"), np.array([0.3, 0.7]), "eq_opp", 0.05, 0.01, 0.8)
    back = postmethods.ThresholdPolicy.from_dict(policy.to_dict())
    assert back.group_names == policy.group_names
    assert_array_equal(back.thresholds, policy.thresholds)


def test_sweep_fallback_on_large_instances():
    rng = np.random.default_rng(2)
    groups = rng.integers(0, 3, 3000)
    scores = rng.random(3000)
    labels = (rng.random(3000) < np.clip(scores + 0.2 * (groups == 0), 0, 1)).astype(int)
    enc = _enc(groups)
    policy = postmethods.fit_error_parity(scores, labels, enc, "dem_par", 0.02)
    hard = postmethods.apply_thresholds(scores, enc, policy).astype(float)
    achieved = metrics.violation(metrics.statistic("dem_par", hard, labels, enc))
    assert not policy.infeasible
    assert achieved <= 0.02 + 1e-12
    assert achieved == pytest.approx(policy.achieved_violation)
    assert policy.fit_accuracy == pytest.approx(metrics.accuracy(hard, labels))
