import math

import numpy as np
import pytest
from hypothesis import given, settings

from cohawkes.domain import ConcurrencyTimeline, Conversation, KernelParams, SEParams, SGSParams, UnivariateModel
from cohawkes.intensity import compensator
from cohawkes.prediction import (
    ActivityQuery,
    agent_log_quiet,
    log_quiet,
    p_agent_all_over,
    p_agent_quiet_interval,
    p_conversation_over,
    p_quiet_interval,
)
from cohawkes.simulation import first_new_event_times

from conftest import VARIANTS, random_conversation, random_model, seeds

UNIT = UnivariateModel(KernelParams(1.0, 1.0))


def test_initial_only_over_probability():
    c = Conversation("a", [0.0], [0])
    assert p_conversation_over(UNIT, c, 0.0) == pytest.approx(math.exp(-1))
    assert p_quiet_interval(UNIT, ActivityQuery(c, 0.0, math.inf)) == pytest.approx(math.exp(-1))


def test_vanishing_horizon_is_certain_quiet():
    rng = np.random.default_rng(0)
    for v in VARIANTS:
        c = random_conversation(rng)
        assert p_quiet_interval(random_model(rng, v), c, 1.0, 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_query_validation():
    c = Conversation("a", [0.0], [0])
    with pytest.raises(ValueError):
        ActivityQuery(c, -1.0, 1.0)
    with pytest.raises(ValueError):
        p_quiet_interval(UNIT, c, 1.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_matches_compensator_of_truncated_history(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, VARIANTS[seed % 5])
    c = random_conversation(rng, 12)
    t = float(rng.uniform(0, 6))
    delta = float(rng.uniform(0.01, 5))
    h = c.history(t).replace(concurrency=ConcurrencyTimeline.constant(c.concurrency.value_at(t)))
    expect = math.exp(-compensator(m, h, t, t + delta).sum())
    assert p_quiet_interval(m, c, t, delta) == pytest.approx(expect, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_monotone_in_horizon_and_bounded_by_over(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, VARIANTS[seed % 5])
    c = random_conversation(rng, 10)
    t = float(rng.uniform(0, 6))
    ds = np.sort(rng.uniform(0.01, 20, 6))
    p = np.exp(log_quiet(m, c, np.full(6, t), ds))
    assert np.all(np.diff(p) <= 1e-15)
    over = p_conversation_over(m, c, t)
    assert np.all(p >= over - 1e-15)
    assert 0 < over <= 1


def test_over_probability_nondecreasing_after_last_message():
    rng = np.random.default_rng(3)
    c = random_conversation(rng, 10)
    m = random_model(rng, "sbhp")
    ts = c.last_time + np.linspace(0, 10, 30)
    p = np.exp(log_quiet(m, c, ts, math.inf))
    assert np.all(np.diff(p) >= -1e-15)


def test_large_horizon_limit():
    rng = np.random.default_rng(4)
    for v in VARIANTS:
        m, c = random_model(rng, v), random_conversation(rng)
        assert abs(p_quiet_interval(m, c, 2.0, 1e6) - p_conversation_over(m, c, 2.0)) < 1e-9


def test_future_messages_do_not_matter():
    rng = np.random.default_rng(5)
    c = random_conversation(rng, 12)
    m = random_model(rng, "cbhp")
    t = float(np.median(c.times))
    n = int(np.searchsorted(c.times, t, side="right"))
    changed = c.replace(
        times=np.concatenate([c.times[:n], c.times[n:] + 0.5]),
        words=np.concatenate([c.words[:n], c.words[n:] * 3]),
        close_time=c.close_time + 0.5,
    )
    assert p_quiet_interval(m, c, t, 1.0) == p_quiet_interval(m, changed, t, 1.0)


# --- agent level ------------------------------------------------------------


def _group(rng, n, variant="cbhp"):
    out = []
    for i in range(n):
        c = random_conversation(rng, 8, id=f"g{i}")
        out.append(c.replace(start_epoch=float(rng.uniform(0, 2)), close_time=c.last_time + 20))
    return out


def test_agent_single_conversation_reduces_to_conversation():
    rng = np.random.default_rng(6)
    m = random_model(rng, "cbhp")
    (c,) = _group(rng, 1)
    t_abs = c.start_epoch + 2.0
    # a lone open conversation has concurrency 1 at the agent level
    c1 = c.replace(concurrency=ConcurrencyTimeline.constant(1))
    assert p_agent_quiet_interval(m, [c], t_abs, 0.7) == pytest.approx(p_quiet_interval(m, c1, 2.0, 0.7), rel=1e-14)
    assert p_agent_all_over(m, [c], t_abs) == pytest.approx(p_conversation_over(m, c1, 2.0), rel=1e-14)


def test_agent_log_is_sum_of_logs():
    rng = np.random.default_rng(7)
    m = random_model(rng, "wbhp")
    group = _group(rng, 4)
    t_abs = 3.0
    q = agent_log_quiet(m, group, t_abs, 0.4)
    parts = [log_quiet(m, c, t_abs - c.start_epoch, 0.4, k=4)[0] for c in group]
    assert q.log_p == pytest.approx(sum(parts), abs=1e-12)


def test_agent_two_copies_square():
    rng = np.random.default_rng(8)
    m = random_model(rng, "bhp")
    c = _group(rng, 1)[0]
    twin = c.replace(id="twin")
    single = p_quiet_interval(m, c, 3.0 - c.start_epoch, 0.5)
    assert p_agent_quiet_interval(m, [c, twin], 3.0, 0.5) == pytest.approx(single**2, rel=1e-12)


def test_agent_limit_and_empty_group():
    rng = np.random.default_rng(9)
    m = random_model(rng, "cbhp")
    group = _group(rng, 3)
    assert abs(p_agent_quiet_interval(m, group, 3.0, 1e6) - p_agent_all_over(m, group, 3.0)) < 1e-9
    assert p_agent_quiet_interval(m, [], 3.0, 1.0) == 1.0
    assert p_agent_all_over(m, [], 3.0) == 1.0


def test_agent_excludes_conversations_not_open():
    rng = np.random.default_rng(10)
    m = random_model(rng, "bhp")
    a, b, late = _group(rng, 3)
    late = late.replace(start_epoch=100.0)
    closed = b.replace(start_epoch=0.0, close_time=b.last_time)
    t_abs = max(closed.close_epoch, a.start_epoch) + 0.1
    q = agent_log_quiet(m, [a, closed, late], t_abs, 1.0)
    assert set(q.excluded) == {late.id, closed.id}
    assert q.used == (a.id,)


# --- baselines --------------------------------------------------------------


def test_baseline_quiet_probabilities():
    c = Conversation("a", [0.0, 1.0], [0, 1], close_time=5.0)
    assert p_quiet_interval(SEParams(0.5), c, 1.0, 2.0) == pytest.approx(math.exp(-1.0))
    assert p_quiet_interval(SEParams(0.5), c, 1.0, math.inf) == 0.0
    # gamma with shape 1 is exponential: memoryless survival ratio
    assert p_quiet_interval(SGSParams(1.0, 0.5), c, 2.0, 2.0) == pytest.approx(math.exp(-1.0))


# --- Monte-Carlo continuation oracle ----------------------------------------


@pytest.mark.slow
def test_fixed_six_message_bhp_query(bhp):
    c = Conversation("six", [0.0, 0.5, 1.2, 4.0, 7.5, 9.0], [0, 1, 0, 1, 1, 0], close_time=12.0)
    n = 100_000
    rng = np.random.default_rng(123)
    p = p_quiet_interval(bhp, c, 10.0, 5.0)
    first = first_new_event_times(bhp, c, 10.0, n, rng)
    freq = np.mean(first > 15.0)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(freq - p) <= 3 * se
