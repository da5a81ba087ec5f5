import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohawkes.domain import Conversation, Dataset, KernelParams, SEParams, UnivariateModel
from cohawkes.evaluation import (
    PredictionRecord,
    auc,
    ecdf,
    evaluate_agent_idleness,
    evaluate_prediction,
    extract_durations,
    extract_gaps,
    ks_two_sample,
    label_activity,
    qq_points,
    roc_curve,
    sample_times,
    write_records,
)


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def brute_ks(x, y):
    pts = sorted(set(x) | set(y))
    return max(abs(sum(v <= p for v in x) / len(x) - sum(v <= p for v in y) / len(y)) for p in pts)


def test_durations_and_gaps():
    d = Dataset([Conversation("a", [0.0, 5.0, 12.0], [0, 1, 0]), Conversation("b", [0.0], [0])])
    assert list(extract_durations(d)) == [12.0, 0.0]
    assert list(extract_gaps(Dataset([Conversation("c", [0.0, 2.0, 7.0], [0, 0, 0])]))) == [2.0, 5.0]
    e = Dataset([Conversation("c", [0.0, 1.0, 3.0], [0, 1, 0])])
    assert list(extract_gaps(e, "customer")) == [2.0]
    assert list(extract_gaps(e, "agent")) == [1.0]


@pytest.mark.parametrize("x,y,D", [([1, 2], [1, 2], 0.0), ([1, 2], [3, 4], 1.0), ([1, 3], [2, 4], 0.5)])
def test_ks_toy_cases(x, y, D):
    assert ks_two_sample(x, y)[0] == D


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(0, 30), min_size=1, max_size=40),
    st.lists(st.integers(0, 30), min_size=1, max_size=40),
)
def test_ks_matches_brute_force_symmetric_invariant(x, y):
    D = ks_two_sample(x, y)[0]
    assert D == pytest.approx(brute_ks(x, y), abs=1e-12)
    assert ks_two_sample(y, x)[0] == D
    assert ks_two_sample(np.exp(np.array(x) / 7), np.exp(np.array(y) / 7))[0] == D


def test_ks_p_value_asymptotic():
    rng = np.random.default_rng(0)
    _, p = ks_two_sample(rng.normal(size=2000), rng.normal(size=2000))
    assert 0.0 < p <= 1.0
    _, p = ks_two_sample(rng.normal(size=2000), rng.normal(1, size=2000))
    assert p < 1e-10


def test_qq_points():
    x = np.random.default_rng(1).exponential(size=500)
    q = qq_points(x, x)
    assert q.shape == (99, 2)
    np.testing.assert_array_equal(q[:, 0], q[:, 1])
    np.testing.assert_allclose(qq_points(x, 2 * x)[:, 1], 2 * q[:, 0])
    with pytest.raises(ValueError):
        qq_points(x, x, [0.0, 0.5])


def test_ecdf_steps():
    np.testing.assert_array_equal(ecdf([1, 1, 2]), [[1, 2 / 3], [2, 1.0]])


def test_sample_times():
    c = Conversation("a", [0.0, 4.0, 9.0], [0, 1, 0], close_time=25.0)
    d = Dataset([c])
    assert sample_times(d, "deterministic", 10) == [("a", 10.0), ("a", 20.0)]
    assert sample_times(d, "activity") == [("a", 0.0), ("a", 4.0), ("a", 9.0)]
    (cid, t), = sample_times(d, "random", seed=1)
    assert 0 <= t < 25 and sample_times(d, "random", seed=1) == [(cid, t)]
    short = Dataset([Conversation("s", [0.0], [0], close_time=5.0)])
    assert sample_times(short, "deterministic", 10) == []
    with pytest.raises(ValueError):
        sample_times(d, "deterministic", 0)


def test_labels():
    c = Conversation("a", [0.0, 5.0], [0, 1], close_time=6.0)
    assert label_activity(c, 4.0, 2.0)
    assert not label_activity(c, 5.0, math.inf)
    assert not label_activity(c, 0.0, 4.999)
    assert label_activity(c, 0.0, 5.0)  # closed right end
    assert not label_activity(c, 5.0, 1.0)  # message at t is not in (t, t + delta]


def test_auc_simple_cases():
    assert auc(([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])) == 1.0
    assert auc(([0.5] * 4, [1, 0, 1, 0])) == 0.5
    s, y = [0.3, 0.7, 0.7, 0.2], [1, 1, 0, 0]
    assert auc((s, y)) == brute_auc(s, y)
    with pytest.raises(ValueError, match="2 positive, 0 negative"):
        auc(([0.1, 0.2], [1, 1]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.booleans()), min_size=2, max_size=200))
def test_auc_matches_pairs(data):
    s = [a / 10 for a, _ in data]
    y = [b for _, b in data]
    if all(y) or not any(y):
        return
    assert auc((s, y)) == pytest.approx(brute_auc(s, y), abs=1e-12)


def test_roc_curve_monotone_ends():
    rng = np.random.default_rng(2)
    s = rng.random(100).round(1)
    y = rng.random(100) < s
    pts = roc_curve((s, y))
    assert (pts[0].fpr, pts[0].tpr) == (0.0, 0.0) and (pts[-1].fpr, pts[-1].tpr) == (1.0, 1.0)
    assert all(a.fpr <= b.fpr and a.tpr <= b.tpr for a, b in zip(pts, pts[1:]))
    area = sum((b.fpr - a.fpr) * (a.tpr + b.tpr) / 2 for a, b in zip(pts, pts[1:]))
    assert area == pytest.approx(auc((s, y)), abs=1e-12)


def test_records_accept_dataclasses():
    recs = [PredictionRecord("a", 1.0, 5.0, 0.9, True), PredictionRecord("b", 1.0, 5.0, 0.1, False)]
    assert auc(recs) == 1.0


def _dataset():
    rng = np.random.default_rng(3)
    convs = []
    for i in range(40):
        n = int(rng.integers(1, 12))
        t = np.concatenate(([0.0], np.sort(rng.uniform(0, 40, n - 1))))
        convs.append(
            Conversation(f"c{i}", t, [0] * n, close_time=t[-1] + 15, agent_id=f"ag{i % 3}", start_epoch=float(i * 7))
        )
    return Dataset(convs)


def test_evaluate_prediction_baseline_infinite_horizon_is_half():
    table, records = evaluate_prediction(SEParams(0.2), _dataset(), "deterministic", [5.0, math.inf])
    assert table[math.inf] == 0.5
    assert all(0 <= r.score <= 1 for r in records)


def test_evaluate_prediction_strategies_run():
    m = UnivariateModel(KernelParams(0.5, 0.2))
    for strategy in ("deterministic", "activity", "random"):
        table, _ = evaluate_prediction(m, _dataset(), strategy, [10.0, math.inf], seed=1)
        assert set(table) == {10.0, math.inf}


def test_idleness_single_agent_single_conversation_matches_conversation_level():
    c = Conversation("x", [0.0, 3.0, 14.0, 26.0], [0, 1, 0, 1], close_time=45.0, agent_id="A", start_epoch=100.0)
    m = UnivariateModel(KernelParams(0.5, 0.1))
    _, agent = evaluate_agent_idleness(m, Dataset([c]), step=10.0, deltas_seconds=[60.0])
    _, conv = evaluate_prediction(m, Dataset([c]), "deterministic", [1.0], step=10.0)
    assert [r.score for r in agent] == pytest.approx([r.score for r in conv], rel=1e-12)
    assert [r.label for r in agent] == [r.label for r in conv]


def test_idleness_seconds_converted():
    m = UnivariateModel(KernelParams(0.5, 0.1))
    table, records = evaluate_agent_idleness(m, _dataset(), step=10.0, deltas_seconds=[10.0, 30.0, 60.0])
    assert {r.delta for r in records} == {10.0, 30.0, 60.0}


def test_write_records(tmp_path):
    p = tmp_path / "r.csv"
    write_records(p, [PredictionRecord("a", 1.0, math.inf, 0.5, True)], provenance="test")
    lines = p.read_text().splitlines()
    assert lines[0] == "# test" and lines[1] == "conversation_id,t_min,delta_min,score,label"
    assert lines[2] == "a,1.0,inf,0.5,1"
