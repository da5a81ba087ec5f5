"""Path-independent gap models (SE, SGS, SGD): fitting and survival scoring."""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy import special, stats

from .domain import Conversation, Dataset, SEParams, SGDParams, SGSParams

log = logging.getLogger(__name__)

SGD_POOL_FROM = 14


def conversation_gaps(c: Conversation) -> np.ndarray:
    return np.diff(c.times)


def _all_gaps(d: Dataset) -> np.ndarray:
    if len(d) == 0:
        return np.empty(0)
    return np.concatenate([conversation_gaps(c) for c in d])


def gamma_mle(x, tol: float = 1e-13, max_iter: int = 100) -> tuple[float, float]:
    """Maximum-likelihood (shape, rate) of a gamma sample.

    Newton iteration on ``log a - digamma(a) = log(mean) - mean(log x)``;
    the rate then follows from ``shape / rate = mean``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("gamma MLE needs at least 2 observations")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("gamma MLE needs positive finite observations")
    mean = math.fsum(x) / x.size
    s = math.log(mean) - math.fsum(np.log(x)) / x.size
    if not s > 1e-14:
        raise ValueError("degenerate sample: all observations (nearly) equal")
    # Minka's closed-form start, within a few percent of the root
    a = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(max_iter):
        f = math.log(a) - special.digamma(a) - s
        fp = 1.0 / a - special.polygamma(1, a)
        step = f / fp
        a_new = a - step
        if a_new <= 0:
            a_new = a / 2.0
        if abs(a_new - a) <= tol * a:
            a = a_new
            break
        a = a_new
    else:
        log.warning("gamma MLE Newton iteration did not converge (shape=%g)", a)
    return float(a), float(a / mean)


def fit_se(d: Dataset) -> SEParams:
    gaps = _all_gaps(d)
    if gaps.size == 0:
        raise ValueError("SE fit needs at least one gap")
    mean = math.fsum(gaps) / gaps.size
    if mean <= 0:
        raise ValueError("SE fit needs a positive mean gap")
    return SEParams(1.0 / mean)


def _positive(gaps: np.ndarray, what: str) -> np.ndarray:
    pos = gaps[gaps > 0]
    if pos.size < gaps.size:
        log.warning("%s: dropped %d zero-length gaps (tied timestamps)", what, gaps.size - pos.size)
    return pos


def fit_sgs(d: Dataset) -> SGSParams:
    gaps = _positive(_all_gaps(d), "SGS fit")
    return SGSParams(*gamma_mle(gaps))


def _gaps_by_index(d: Dataset) -> dict[int, list]:
    by_index: dict[int, list] = {}
    for c in d:
        for j, g in enumerate(conversation_gaps(c), start=1):
            by_index.setdefault(j, []).append(g)
    return by_index


def fit_sgd(d: Dataset, pool_from: int = SGD_POOL_FROM) -> SGDParams:
    """Per-gap-index gamma fits for indices below ``pool_from``; one pooled fit beyond.

    An index with too few (or degenerate) gaps ends the per-index table: it
    and every later index go to the pooled tail. If the tail itself cannot
    be fitted it falls back to the fit over all gaps.
    """
    if pool_from < 1:
        raise ValueError("pool_from must be >= 1")
    by_index = _gaps_by_index(d)
    if not by_index:
        raise ValueError("SGD fit needs at least one gap")
    stages = []
    cut = pool_from
    for j in range(1, pool_from):
        gaps = _positive(np.asarray(by_index.get(j, [])), f"SGD gap {j}")
        try:
            stages.append(gamma_mle(gaps))
        except ValueError:
            cut = j
            break
    tail_gaps = [g for j, gs in by_index.items() if j >= cut for g in gs]
    try:
        tail = gamma_mle(_positive(np.asarray(tail_gaps), "SGD tail"))
    except ValueError:
        tail = gamma_mle(_positive(_all_gaps(d), "SGD tail fallback"))
    if not stages and cut == 1:
        log.warning("SGD: no gap index could be fitted separately; using one pooled gamma")
    return SGDParams(tuple(stages), tail)


# --- scoring ----------------------------------------------------------------


def _gamma_logsf(x, shape, rate):
    return stats.gamma.logsf(x, shape, scale=1.0 / rate)


def log_quiet(b, c: Conversation, t, delta) -> np.ndarray:
    """Log probability of no message in ``(t, t+delta]`` under a baseline.

    SE is memoryless; SGS/SGD use the survival ratio of the gap in progress,
    ``S(e + delta) / S(e)`` with ``e`` the time since the last message.
    SGD picks the gap index as the number of replies seen so far plus one.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), t.shape)
    out = np.full(t.shape, -np.inf)
    finite = np.isfinite(delta)
    if isinstance(b, SEParams):
        out[finite] = -b.rate * delta[finite]
        return out
    n_seen = np.searchsorted(c.times, t, side="right")
    elapsed = t - c.times[np.maximum(n_seen - 1, 0)]
    if isinstance(b, SGSParams):
        shape = np.full(t.shape, b.shape)
        rate = np.full(t.shape, b.rate)
    elif isinstance(b, SGDParams):
        pars = np.array([b.gap_params(int(n)) for n in n_seen])  # next gap index = replies + 1
        shape, rate = pars[:, 0], pars[:, 1]
    else:
        raise TypeError(f"not a baseline model: {b!r}")
    if finite.any():
        f = finite
        e, dl, a, m = elapsed[f], delta[f], shape[f], rate[f]
        with np.errstate(invalid="ignore"):
            r = _gamma_logsf(e + dl, a, m) - _gamma_logsf(e, a, m)
        bad = ~np.isfinite(r)
        if bad.any():
            # far tail: S(x) ~ (rate x)^(a-1) exp(-rate x) / Gamma(a)
            eb, db, ab, mb = e[bad], dl[bad], a[bad], m[bad]
            r[bad] = (ab - 1.0) * np.log1p(db / eb) - mb * db
        out[f] = r
    return np.minimum(out, 0.0)


def sample_gaps(b, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw gaps 1..n of one conversation."""
    if isinstance(b, SEParams):
        return rng.exponential(1.0 / b.rate, size=n)
    if isinstance(b, SGSParams):
        return rng.gamma(b.shape, 1.0 / b.rate, size=n)
    if isinstance(b, SGDParams):
        pars = np.array([b.gap_params(j) for j in range(1, n + 1)]).reshape(-1, 2)
        return rng.gamma(pars[:, 0], 1.0 / pars[:, 1])
    raise TypeError(f"not a baseline model: {b!r}")
