import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import integrate

from cohawkes.domain import (
    BivariateModel,
    BivariateParams,
    ConcurrencyTimeline,
    Conversation,
    KernelParams,
    MarkModel,
    UnivariateModel,
)
from cohawkes.intensity import compensator, mark_g, mark_values, rates, uhp_rate

from conftest import random_conversation, random_model, seeds


def quad_compensator(model, c, start, stop):
    """Adaptive quadrature of each rate, split at every discontinuity."""
    cuts = set(c.times[(c.times > start) & (c.times < stop)])
    cuts |= set(c.concurrency.breakpoints[(c.concurrency.breakpoints > start) & (c.concurrency.breakpoints < stop)])
    edges = [start] + sorted(cuts) + [stop]
    out = np.zeros(model.n_rates)
    for x in range(model.n_rates):
        for lo, hi in zip(edges[:-1], edges[1:]):
            fn = lambda t: rates(model, c, t, side="left")[x]  # noqa: E731
            v, _ = integrate.quad(fn, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
            out[x] += v
    return out


def test_uhp_rate_by_hand():
    c = Conversation("a", [0.0, 1.0], [0, 1])
    p = KernelParams(2.0, 1.0)
    assert uhp_rate(p, c, 1.0) == pytest.approx(2 * math.exp(-1) + 2)
    assert uhp_rate(p, c, 1.0, side="left") == pytest.approx(2 * math.exp(-1))


def test_bivariate_rates_use_channel_params():
    m = BivariateModel(BivariateParams.from_arrays([1, 2, 3, 4], [1, 1, 1, 1]))
    c = Conversation("a", [0.0, 1.0], [0, 1])
    lam = rates(m, c, 2.0)
    assert lam[0] == pytest.approx(1 * math.exp(-2) + 2 * math.exp(-1))
    assert lam[1] == pytest.approx(3 * math.exp(-2) + 4 * math.exp(-1))


def test_concurrency_scales_agent_jump_and_decay():
    m = BivariateModel(BivariateParams.from_arrays([1, 1, 2, 1], [1, 1, 3, 1]), MarkModel("concurrency"))
    c = Conversation("a", [0.0], [0], concurrency=ConcurrencyTimeline([0.0, 1.0], [1, 4]))
    assert rates(m, c, 2.0)[1] == pytest.approx(2 / 4 * math.exp(-3 / 4 * 2.0))
    assert rates(m, c, 0.5)[1] == pytest.approx(2 * math.exp(-3 * 0.5))


def test_sentiment_mark_clamped_positive():
    m = MarkModel("sentiment", mean_sentiment=0.15, min_sentiment=-14.0)
    assert mark_g(m, -14.0, 5) == pytest.approx(1e-6)
    assert mark_g(m, 0.15, 5) == pytest.approx(1.0)
    assert mark_g(MarkModel("word", mean_words=10.0), 0.0, 25) == 2.5


def test_mark_values_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    c = random_conversation(rng, 20)
    for m in (MarkModel("word", mean_words=12.0), MarkModel("sentiment", mean_sentiment=0.1, min_sentiment=-2)):
        expect = [mark_g(m, s, w) for s, w in zip(c.sentiments, c.words)]
        np.testing.assert_allclose(mark_values(m, c), expect, rtol=1e-15)


def test_uhp_compensator_initial_only():
    c = Conversation("a", [0.0], [0])
    assert compensator(UnivariateModel(KernelParams(1.0, 1.0)), c, 0.0)[0] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_compensator_matches_quadrature_property(seed):
    rng = np.random.default_rng(seed)
    variant = ("uhp", "bhp", "wbhp", "sbhp", "cbhp")[seed % 5]
    m = random_model(rng, variant)
    c = random_conversation(rng, 8)
    a = float(rng.uniform(0, 3))
    b = a + float(rng.uniform(0.1, 6))
    np.testing.assert_allclose(compensator(m, c, a, b), quad_compensator(m, c, a, b), rtol=1e-8, atol=1e-10)


def test_compensator_additive_over_split():
    rng = np.random.default_rng(5)
    m = random_model(rng, "cbhp")
    c = random_conversation(rng, 10)
    np.testing.assert_allclose(
        compensator(m, c, 0.0, 2.0) + compensator(m, c, 2.0, math.inf), compensator(m, c, 0.0), rtol=1e-12
    )
