import csv
import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from abmsurrogate.active import (
    ENTROPY_FALLBACK,
    POSITIVE_SAMPLING,
    SEED,
    LoopConfig,
    NoPositiveSeedError,
    binary_entropy,
    predict_positives,
    run_calibration,
    seed_points,
    seed_round,
    select_batch,
)
from abmsurrogate.labelers import Labeler, PositiveSet, SyntheticLabeler, synthetic_space
from abmsurrogate.metrics import confusion_from_labels, precision
from abmsurrogate.sampling import draw_pool

FAST = dict(hpo_trials=2, hpo_trials_late=1, hpo_late_after=1)


class ConstantLabeler(Labeler):
    def __init__(self, value, dimension=3):
        self.space = synthetic_space(dimension)
        self.positive = PositiveSet("binary")
        self.value = value
        self.calls = 0

    def label_one(self, vector):
        self.calls += 1
        return self.value


def test_config_validation_and_batch_size():
    assert LoopConfig(budget=500).batch == math.ceil(math.log(500))
    assert LoopConfig(budget=500, c=2.5).batch == math.ceil(2.5 * math.log(500))
    assert LoopConfig(budget=500, batch_size=3).batch == 3
    assert LoopConfig(budget=100).seed_cap == 50
    with pytest.raises(ValueError):
        LoopConfig(budget=20, n_seed=35)
    with pytest.raises(ValueError):
        LoopConfig(budget=100, pool_size=100)
    with pytest.raises(ValueError):
        LoopConfig(budget=100, family="forest")


def test_seed_round_all_positive_stops_at_n():
    lab = ConstantLabeler(1.0)
    X, y = seed_round(lab, LoopConfig(budget=100, n_seed=35))
    assert len(y) == 35 and lab.calls == 35


def test_seed_round_all_negative_aborts_at_cap():
    lab = ConstantLabeler(0.0)
    with pytest.raises(NoPositiveSeedError) as err:
        seed_round(lab, LoopConfig(budget=200, n_seed=35))
    assert err.value.evaluated == 100 and lab.calls == 100
    assert "no positive seed found" in str(err.value)


def test_seed_points_are_distinct_and_in_box():
    space = synthetic_space(5)
    pts = seed_points(space, 300, 7)
    assert space.contains(pts).all()
    assert len(np.unique(pts, axis=0)) == 300
    assert not np.array_equal(pts, seed_points(space, 300, 8))


def test_rare_positive_seed_found_nearly_always():
    lab = SyntheticLabeler(rate=0.01, dimension=5)
    found = 0
    for s in range(100):
        try:
            seed_round(lab, LoopConfig(budget=500, sampler_seed=s))
            found += 1
        except NoPositiveSeedError:
            pass
    assert found >= 95


def test_select_all_positive_draws_uniform_subset():
    mask = np.ones(50, bool)
    idx, mode = select_batch(mask, np.full(50, 0.9), 7, round_seed=1)
    assert mode == POSITIVE_SAMPLING and len(idx) == 7 and len(set(idx)) == 7
    other, _ = select_batch(mask, np.full(50, 0.9), 7, round_seed=2)
    assert not np.array_equal(idx, other)
    hits = np.zeros(50)
    for s in range(400):
        hits[select_batch(mask, np.zeros(50), 5, s)[0]] += 1
    assert hits.min() > 10  # every candidate gets drawn


def test_select_only_predicted_positives():
    mask = np.zeros(30, bool)
    mask[[3, 8, 21]] = True
    idx, mode = select_batch(mask, np.linspace(0, 1, 30), 10, 0)
    assert mode == POSITIVE_SAMPLING and idx.tolist() == [3, 8, 21]


def test_entropy_fallback_examples():
    idx, mode = select_batch(np.zeros(3, bool), np.array([0.5, 0.9, 0.1]), 1, 0)
    assert mode == ENTROPY_FALLBACK and idx.tolist() == [0]
    # 0.2 and 0.8 tie on entropy, lower index wins
    idx, _ = select_batch(np.zeros(4, bool), np.array([0.05, 0.8, 0.2, 0.01]), 1, 0)
    assert idx.tolist() == [1]
    assert binary_entropy([0.0, 1.0]).tolist() == [0.0, 0.0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 0.5), min_size=1, max_size=200), st.integers(1, 20))
def test_entropy_fallback_takes_most_uncertain(probs, size):
    p = np.array(probs)
    idx, _ = select_batch(np.zeros(len(p), bool), p, size, 0)
    h = binary_entropy(p)
    chosen = np.zeros(len(p), bool)
    chosen[idx] = True
    assert len(idx) == min(size, len(p))
    if (~chosen).any():
        assert h[chosen].min() >= h[~chosen].max()


def _check_invariants(run, cfg):
    assert run.evaluations == cfg.budget
    assert len(np.unique(run.X, axis=0)) == len(run.X)
    assert np.all(np.diff(run.rounds_of) >= 0)
    assert run.rounds_of[: run.seed_evaluations].max() == 0
    assert run.modes[: run.seed_evaluations] == [SEED] * run.seed_evaluations
    sizes = [r.n_labeled for r in run.rounds]
    assert sizes == sorted(sizes) and len(set(sizes)) == len(sizes)
    if run.rounds:
        assert sizes[-1] == cfg.budget
    for r in run.rounds:
        assert len(r.batch) == int(np.sum(run.rounds_of == r.round)) <= cfg.batch
    spent = run.seed_evaluations + sum(len(r.batch) for r in run.rounds)
    assert spent == cfg.budget


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(budget=st.integers(35, 90), n_seed=st.integers(5, 35), rate=st.sampled_from([0.05, 0.1, 0.2]),
       seed=st.integers(0, 1000), refresh=st.booleans(), batch=st.one_of(st.none(), st.integers(1, 9)))
def test_loop_invariants(budget, n_seed, rate, seed, refresh, batch):
    lab = SyntheticLabeler(rate=rate, dimension=3)
    cfg = LoopConfig(budget=budget, n_seed=n_seed, pool_size=400, batch_size=batch, refresh_pool=refresh,
                     sampler_seed=seed, surrogate_seed=seed, **FAST)
    try:
        run = run_calibration(lab, cfg)
    except NoPositiveSeedError:
        return
    _check_invariants(run, cfg)


def test_budget_equal_to_seed_size_has_no_rounds():
    lab = SyntheticLabeler(rate=0.3, dimension=3)
    run = run_calibration(lab, LoopConfig(budget=35, pool_size=100, **FAST))
    assert run.rounds == [] and run.evaluations == 35
    assert run.model is not None


def test_labeled_set_only_grows():
    lab = SyntheticLabeler(rate=0.1, dimension=3)
    cfg = LoopConfig(budget=80, pool_size=500, sampler_seed=2, **FAST)
    run = run_calibration(lab, cfg)
    _check_invariants(run, cfg)
    small = run_calibration(lab, LoopConfig(budget=60, pool_size=500, sampler_seed=2, **FAST))
    # the same seed set starts both runs
    assert np.array_equal(run.X[: small.seed_evaluations], small.X[: small.seed_evaluations])


def test_active_sampling_enriches_positives():
    shares = []
    for s in range(10):
        lab = SyntheticLabeler(rate=0.05, dimension=4)
        run = run_calibration(lab, LoopConfig(budget=150, pool_size=3000, sampler_seed=s, surrogate_seed=s, **FAST))
        later = run.rounds_of > 3
        shares.append(run.y[later].mean())
    assert np.median(shares) > 0.05


def test_real_valued_loop_and_outputs():
    lab = SyntheticLabeler(kind_="real", rate=0.1, dimension=3)
    run = run_calibration(lab, LoopConfig(budget=70, pool_size=800, **FAST))
    assert run.kind == "real" and run.model.loss == "squared"
    assert np.all(np.isfinite(run.pre_prob[run.rounds_of > 0]))
    assert np.all((run.pre_prob[run.rounds_of > 0] >= 0) & (run.pre_prob[run.rounds_of > 0] <= 1))


def test_logit_family_and_platt():
    lab = SyntheticLabeler(rate=0.2, dimension=3)
    run = run_calibration(lab, LoopConfig(budget=70, pool_size=800, family="logit"))
    assert type(run.model).__name__ == "LogitModel"
    with pytest.raises(ValueError):
        run_calibration(SyntheticLabeler(kind_="real"), LoopConfig(budget=40, family="logit"))
    boosted = run_calibration(lab, LoopConfig(budget=70, pool_size=800, platt=True, **FAST))
    active = boosted.rounds_of > 0
    assert np.all(np.isnan(boosted.pre_platt[~active]))
    assert np.isfinite(boosted.pre_platt[active]).any()


def test_jobs_do_not_change_results():
    lab = SyntheticLabeler(rate=0.1, dimension=3)
    cfg = LoopConfig(budget=60, pool_size=500, **FAST)
    a, b = run_calibration(lab, cfg, jobs=1), run_calibration(lab, cfg, jobs=2)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert a.model.to_json() == b.model.to_json()


def test_predict_positives_recalls_training_positives():
    lab = SyntheticLabeler(rate=0.05, dimension=3)
    run = run_calibration(lab, LoopConfig(budget=200, pool_size=3000, sampler_seed=1, surrogate_seed=1))
    own = run.X[run.y == 1]
    idx, scores = predict_positives(run, own, lab.positive)
    assert len(idx) >= 0.9 * len(own)
    assert np.all(np.diff(scores) <= 0)
    empty_idx, empty_scores = predict_positives(run, np.zeros((0, 3)), lab.positive)
    assert len(empty_idx) == 0 and len(empty_scores) == 0
    with pytest.raises(ValueError):
        predict_positives(run, np.zeros((4, 5)), lab.positive)


@pytest.mark.slow
def test_synthetic_precision_at_budget_500():
    lab = SyntheticLabeler(rate=0.01, dimension=5)
    fresh = draw_pool(lab.space, 100_000, "uniform", 999)
    truth = lab.label_many(fresh)
    precisions = []
    for s in range(10):
        run = run_calibration(lab, LoopConfig(budget=500, pool_size=100_000, sampler_seed=s, surrogate_seed=s))
        idx, _ = predict_positives(run, fresh, lab.positive)
        pred = np.zeros(len(fresh), int)
        pred[idx] = 1
        precisions.append(precision(confusion_from_labels(pred, truth.astype(int))))
    assert np.median(precisions) >= 0.85


def test_run_artifacts(tmp_path):
    lab = SyntheticLabeler(rate=0.2, dimension=3)
    run = run_calibration(lab, LoopConfig(budget=50, pool_size=300, **FAST))
    run.write(tmp_path)
    doc = json.loads((tmp_path / "run.json").read_text())
    assert doc["evaluations"] == 50 and doc["dimensions"] == ["x0", "x1", "x2"]
    rows = list(csv.reader(open(tmp_path / "samples.csv", newline="")))
    assert rows[0] == ["round", "x0", "x1", "x2", "label_kind", "label_value", "selection_mode"]
    assert len(rows) == 51
    assert json.loads((tmp_path / "model.json").read_text())["feature_names"] == ["x0", "x1", "x2"]
