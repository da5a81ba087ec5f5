"""Correspondence rates and their exact integrals for all Hawkes variants."""
from __future__ import annotations

import math

import numpy as np

from .domain import (
    BivariateModel,
    Conversation,
    KernelParams,
    MarkModel,
    UnivariateModel,
)

MARK_FLOOR = 1e-6


def mark_g(m: MarkModel, sentiment: float, words: int) -> float:
    """Message mark multiplying the jump a message causes."""
    if m.g_override is not None:
        return float(m.g_override(sentiment, words))
    if m.kind == "word":
        return words / m.mean_words
    if m.kind == "sentiment":
        g = (sentiment - m.min_sentiment) / (m.mean_sentiment - m.min_sentiment)
        return max(g, MARK_FLOOR)
    return 1.0


def mark_values(m: MarkModel, c: Conversation) -> np.ndarray:
    """Vectorised :func:`mark_g` over all messages of ``c``."""
    if m.g_override is not None:
        return np.array(
            [m.g_override(float(s), int(w)) for s, w in zip(c.sentiments, c.words)], dtype=np.float64
        )
    if m.kind == "word":
        return c.words / m.mean_words
    if m.kind == "sentiment":
        g = (c.sentiments - m.min_sentiment) / (m.mean_sentiment - m.min_sentiment)
        return np.maximum(g, MARK_FLOOR)
    return np.ones(len(c.times))


def mark_f(m: MarkModel, k) -> float:
    """Concurrency factor applied to agent-side jumps and decays."""
    if m.kind == "concurrency":
        return 1.0 / k
    return 1.0 if np.ndim(k) == 0 else np.ones(np.shape(k))


def channel_params(model):
    """(alpha, beta) as 2x2 arrays indexed [receiving rate, source sender].

    For the univariate model both sources share the single kernel and only
    row 0 is used.
    """
    if isinstance(model, UnivariateModel):
        a = np.full((2, 2), model.params.alpha)
        b = np.full((2, 2), model.params.beta)
        return a, b
    p = model.params
    return p.alphas().reshape(2, 2), p.betas().reshape(2, 2)


def _marks(model, c: Conversation) -> np.ndarray:
    if isinstance(model, UnivariateModel):
        return np.ones(len(c.times))
    return mark_values(model.marks, c)


def _uses_concurrency(model) -> bool:
    return isinstance(model, BivariateModel) and model.marks.kind == "concurrency"


def rates(model, c: Conversation, t: float, side: str = "inclusive") -> np.ndarray:
    """Rates at ``t``: shape (1,) for UHP, (2,) = (customer, agent) otherwise.

    ``side='left'`` excludes messages at exactly ``t`` (left limit).
    """
    if side not in ("inclusive", "left"):
        raise ValueError("side must be 'inclusive' or 'left'")
    mask = c.times <= t if side == "inclusive" else c.times < t
    A = c.times[mask]
    src = c.senders[mask].astype(np.intp)
    g = _marks(model, c)[mask]
    alpha, beta = channel_params(model)
    fa = mark_f(model.marks, c.concurrency.value_at(t)) if _uses_concurrency(model) else 1.0
    out = np.empty(model.n_rates)
    with np.errstate(under="ignore"):
        for x in range(model.n_rates):
            f = fa if x == 1 else 1.0
            out[x] = np.sum(alpha[x, src] * f * g * np.exp(-beta[x, src] * f * (t - A)))
    return out


def uhp_rate(p: KernelParams, c: Conversation, t: float, side: str = "inclusive") -> float:
    return float(rates(UnivariateModel(p), c, t, side)[0])


def bivariate_rates(model: BivariateModel, c: Conversation, t: float, side: str = "inclusive"):
    lam = rates(model, c, t, side)
    return float(lam[0]), float(lam[1])


def _segment_integral(A, g, alpha_over_beta, beta, f, lo, hi):
    """Sum over parents of (alpha/beta) g (e^{-beta f (lo-A)+} - e^{-beta f (hi-A)+})."""
    u0 = np.maximum(lo - A, 0.0)
    e0 = np.exp(-beta * f * u0)
    if math.isinf(hi):
        e1 = 0.0
    else:
        e1 = np.exp(-beta * f * np.maximum(hi - A, 0.0))
    return float(np.sum(alpha_over_beta * g * (e0 - e1)))


def compensator(model, c: Conversation, start: float, stop: float = math.inf) -> np.ndarray:
    """Exact integral of each rate over ``[start, stop)``.

    The agent rate of the concurrency variant is split at concurrency
    breakpoints; the last segment may extend to infinity.
    """
    if not 0 <= start <= stop:
        raise ValueError("need 0 <= start <= stop")
    out = np.zeros(model.n_rates)
    if start == stop:
        return out
    keep = c.times < stop
    A = c.times[keep]
    src = c.senders[keep].astype(np.intp)
    g = _marks(model, c)[keep]
    alpha, beta = channel_params(model)
    ratio = alpha / beta
    with np.errstate(under="ignore"):
        for x in range(model.n_rates):
            a_b = ratio[x, src]
            b = beta[x, src]
            if x == 1 and _uses_concurrency(model):
                lo, hi, ks = c.concurrency.segments(start, stop)
                for seg_lo, seg_hi, k in zip(lo, hi, ks):
                    f = mark_f(model.marks, int(k))
                    out[x] += _segment_integral(A, g, a_b, b, f, seg_lo, seg_hi)
            else:
                out[x] = _segment_integral(A, g, a_b, b, 1.0, start, stop)
    return out
