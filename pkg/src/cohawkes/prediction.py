"""Probabilities of future (in)activity for a conversation or an agent.

All functions look only at messages at or before the query time and hold
the agent's concurrency fixed from the query time onwards. Horizons are
minutes; ``math.inf`` asks whether the conversation is over for good.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import baselines
from .domain import Conversation, UnivariateModel, is_hawkes
from .intensity import channel_params, mark_f, mark_values

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ActivityQuery:
    conversation: Conversation
    t: float
    delta: float = math.inf

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError("query time must be >= 0")
        if not self.delta > 0:
            raise ValueError("horizon must be > 0 (or inf)")


def _hawkes_log_quiet(model, c: Conversation, ts: np.ndarray, deltas: np.ndarray, k=None) -> np.ndarray:
    alpha, beta = channel_params(model)
    uni = isinstance(model, UnivariateModel)
    if uni:
        g = np.ones(len(c.times))
    else:
        g = mark_values(model.marks, c)
    seen = c.times[None, :] <= ts[:, None]  # (queries, messages)
    n_seen = np.searchsorted(c.times, ts, side="right")
    lag = np.where(seen, ts[:, None] - c.times[None, :], 0.0)
    if uni:
        f_agent = np.ones(len(ts))
    else:
        K = c.concurrency.value_at(ts) if k is None else np.full(len(ts), float(k))
        f_agent = np.asarray(mark_f(model.marks, K), dtype=np.float64) * np.ones(len(ts))
    total = np.zeros(len(ts))
    src = np.zeros(len(c.times), dtype=np.intp) if uni else c.senders.astype(np.intp)
    for x in ((0,) if uni else (0, 1)):
        f = np.ones(len(ts)) if x == 0 else f_agent
        b = beta[x, src][None, :] * f[:, None]
        remaining = np.exp(-b * lag)
        # fraction of the remaining mass that falls inside the horizon
        with np.errstate(invalid="ignore"):
            inside = np.where(np.isinf(deltas)[:, None], 1.0, -np.expm1(-b * deltas[:, None]))
        term = (alpha[x, src] / beta[x, src] * g)[None, :] * remaining * inside
        # running sums are sequential, so each query's value depends only on
        # its own history prefix (bitwise, whatever comes later)
        run = np.cumsum(np.where(seen, term, 0.0), axis=1)
        total += np.where(n_seen > 0, run[np.arange(len(ts)), np.maximum(n_seen - 1, 0)], 0.0)
    return -total


def log_quiet(model, c: Conversation, t, delta=math.inf, k=None) -> np.ndarray:
    """Vectorised log probability of no message in ``(t, t + delta]``.

    Works for Hawkes models and the gap baselines. ``k`` overrides the
    frozen concurrency level (used for agent-level queries).
    """
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    deltas = np.broadcast_to(np.asarray(delta, dtype=np.float64), ts.shape).copy()
    if np.any(ts < 0) or np.any(~(deltas > 0)):
        raise ValueError("need t >= 0 and delta > 0")
    if not is_hawkes(model):
        return baselines.log_quiet(model, c, ts, deltas)
    return _hawkes_log_quiet(model, c, ts, deltas, k)


def p_quiet_interval(model, c_or_query, t: float | None = None, delta: float = math.inf) -> float:
    """Probability that no message arrives in the next ``delta`` minutes after ``t``."""
    if isinstance(c_or_query, ActivityQuery):
        c, t, delta = c_or_query.conversation, c_or_query.t, c_or_query.delta
    else:
        c = c_or_query
        ActivityQuery(c, t, delta)
    return float(np.exp(log_quiet(model, c, t, delta)[0]))


def p_conversation_over(model, c: Conversation, t: float) -> float:
    """Probability that no further message ever arrives after ``t``."""
    return p_quiet_interval(model, c, t, math.inf)


@dataclass
class AgentQuiet:
    log_p: float
    used: tuple
    excluded: tuple

    @property
    def p(self) -> float:
        return math.exp(self.log_p)


def agent_log_quiet(model, group: Sequence[Conversation], t_abs: float, delta: float = math.inf) -> AgentQuiet:
    """Sum of per-conversation log quiet probabilities over the agent's open conversations.

    Conversations not yet started or already closed at ``t_abs`` are left
    out and reported; the remaining ones define the concurrency level.
    """
    open_, excluded = [], []
    for c in group:
        if c.start_epoch <= t_abs < c.close_epoch:
            open_.append(c)
        else:
            excluded.append(c.id)
    if excluded:
        log.info("agent query at %g: excluded %d conversations not open", t_abs, len(excluded))
    if not open_:
        log.warning("agent query at %g: no open conversations; probability is 1", t_abs)
        return AgentQuiet(0.0, (), tuple(excluded))
    k = len(open_)
    parts = [float(log_quiet(model, c, t_abs - c.start_epoch, delta, k=k)[0]) for c in open_]
    return AgentQuiet(math.fsum(parts), tuple(c.id for c in open_), tuple(excluded))


def p_agent_quiet_interval(model, group: Sequence[Conversation], t_abs: float, delta: float) -> float:
    """Probability that none of the agent's open conversations has a message in ``(t_abs, t_abs + delta]``."""
    return agent_log_quiet(model, group, t_abs, delta).p


def p_agent_all_over(model, group: Sequence[Conversation], t_abs: float) -> float:
    """Probability that all of the agent's open conversations are finished."""
    return agent_log_quiet(model, group, t_abs, math.inf).p
