"""Goodness-of-fit statistics and prediction-accuracy evaluation."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .domain import Conversation, Dataset
from .prediction import agent_log_quiet, log_quiet

log = logging.getLogger(__name__)

DEFAULT_DELTAS = (5.0, 10.0, 15.0, 30.0, 60.0, math.inf)
IDLENESS_DELTAS_SECONDS = (10.0, 30.0, 60.0)
DEFAULT_STEP = 10.0
STRATEGIES = ("deterministic", "activity", "random")


# --- descriptive extraction -------------------------------------------------


def extract_durations(d: Dataset) -> np.ndarray:
    """Time from the initial query to the last message, per conversation."""
    return np.array([c.last_time for c in d], dtype=np.float64)


def extract_gaps(d: Dataset, by: str = "all") -> np.ndarray:
    """Inter-message gaps; ``by`` keeps gaps ending in a customer or agent message."""
    if by not in ("all", "customer", "agent"):
        raise ValueError(f"by must be all, customer or agent, not {by!r}")
    out = []
    for c in d:
        g = np.diff(c.times)
        if by != "all":
            g = g[c.senders[1:] == (0 if by == "customer" else 1)]
        out.append(g)
    return np.concatenate(out) if out else np.empty(0)


# --- distribution comparison ------------------------------------------------


def ks_two_sample(x, y) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    y = np.sort(np.asarray(y, dtype=np.float64))
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("both samples must be nonempty")
    pts = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pts, side="right") / n
    cdf_y = np.searchsorted(y, pts, side="right") / m
    D = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(n * m / (n + m))
    p = float(stats.kstwobign.sf(en * D)) if D > 0 else 1.0
    return D, p


def ks_critical_value(n: int, m: int, level: float = 0.05) -> float:
    """Asymptotic two-sample critical value of D at the given level."""
    return float(stats.kstwobign.isf(level)) * math.sqrt((n + m) / (n * m))


def qq_points(x, y, q: Optional[Sequence[float]] = None) -> np.ndarray:
    """``(quantile_x(q), quantile_y(q))`` rows on a grid (default 0.01..0.99)."""
    q = np.linspace(0.01, 0.99, 99) if q is None else np.asarray(q, dtype=np.float64)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile grid must lie in (0, 1)")
    return np.column_stack([np.quantile(np.asarray(x, float), q), np.quantile(np.asarray(y, float), q)])


def ecdf(x, grid=None) -> np.ndarray:
    """Empirical CDF rows ``(value, F(value))``; default grid is the sorted sample."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    grid = np.unique(x) if grid is None else np.asarray(grid, dtype=np.float64)
    return np.column_stack([grid, np.searchsorted(x, grid, side="right") / len(x)])


# --- prediction records -----------------------------------------------------


@dataclass(frozen=True)
class PredictionRecord:
    conversation_id: str
    t: float
    delta: float
    score: float  # predicted activity probability
    label: bool


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


def sample_times(d: Dataset, strategy: str = "deterministic", step: float = DEFAULT_STEP, seed=None):
    """Query times per conversation as a list of ``(conversation id, t)``.

    deterministic: ``step, 2*step, ...`` strictly before closure; activity:
    every message time; random: one uniform time in ``[0, close_time)``.
    """
    out = []
    if strategy == "deterministic":
        if not step > 0:
            raise ValueError("step must be > 0")
        for c in d:
            n = int(math.ceil(c.close_time / step)) if c.close_time > 0 else 0
            ts = step * np.arange(1, n + 1)
            out.extend((c.id, float(t)) for t in ts[ts < c.close_time])
    elif strategy == "activity":
        for c in d:
            out.extend((c.id, float(t)) for t in c.times)
    elif strategy == "random":
        if seed is None:
            raise ValueError("random sampling needs a seed")
        rng = np.random.default_rng(seed)
        for c in d:
            out.append((c.id, float(rng.uniform(0.0, c.close_time))))
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return out


def label_activity(c: Conversation, t: float, delta: float) -> bool:
    """Whether some message falls in ``(t, t + delta]``."""
    i = np.searchsorted(c.times, t, side="right")
    if i >= len(c.times):
        return False
    return bool(c.times[i] <= t + delta)


def _labels(c: Conversation, ts: np.ndarray, delta: float) -> np.ndarray:
    i = np.searchsorted(c.times, ts, side="right")
    nxt = np.append(c.times, np.inf)[i]
    return np.isfinite(nxt) & (nxt <= ts + delta)


def _scores_labels(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, tuple) and len(records) == 2 and not isinstance(records[0], PredictionRecord):
        s, y = records
        return np.asarray(s, dtype=np.float64), np.asarray(y, dtype=bool)
    records = list(records)
    return (
        np.array([r.score for r in records], dtype=np.float64),
        np.array([r.label for r in records], dtype=bool),
    )


def _check_classes(y):
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both classes: {n_pos} positive, {n_neg} negative records")
    return n_pos, n_neg


def auc(records) -> float:
    """Area under the ROC curve: Mann-Whitney statistic with half credit for ties.

    Accepts PredictionRecords or a ``(scores, labels)`` pair.
    """
    s, y = _scores_labels(records)
    n_pos, n_neg = _check_classes(y)
    ranks = stats.rankdata(s)  # average ranks resolve ties
    u = math.fsum(ranks[y]) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_curve(records) -> list[RocPoint]:
    """ROC points over the distinct score thresholds, from (0, 0) to (1, 1)."""
    s, y = _scores_labels(records)
    n_pos, n_neg = _check_classes(y)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.append(s[1:] != s[:-1], True)  # last record of each tie block
    pts = [RocPoint(math.inf, 0.0, 0.0)]
    for i in np.flatnonzero(last):
        pts.append(RocPoint(float(s[i]), tp[i] / n_pos, fp[i] / n_neg))
    return pts


# --- protocols --------------------------------------------------------------


def prediction_records(model, d: Dataset, times, deltas: Iterable[float]) -> list[PredictionRecord]:
    """Score every (conversation, t) for each horizon; history includes messages at t."""
    by_conv = defaultdict(list)
    for cid, t in times:
        by_conv[cid].append(t)
    out = []
    for cid, ts in by_conv.items():
        c = d[cid]
        ts = np.asarray(ts, dtype=np.float64)
        for delta in deltas:
            lq = log_quiet(model, c, ts, delta)
            score = -np.expm1(lq)
            lab = _labels(c, ts, delta)
            out.extend(
                PredictionRecord(cid, float(t), float(delta), float(p), bool(l)) for t, p, l in zip(ts, score, lab)
            )
    return out


def auc_by_delta(records: Sequence[PredictionRecord]) -> dict:
    groups = defaultdict(list)
    for r in records:
        groups[r.delta].append(r)
    out = {}
    for delta, rs in groups.items():
        try:
            out[delta] = auc(rs)
        except ValueError as e:
            log.warning("delta=%g: AUC undefined (%s)", delta, e)
            out[delta] = math.nan
    return out


def evaluate_prediction(
    model,
    d: Dataset,
    strategy: str = "deterministic",
    deltas: Iterable[float] = DEFAULT_DELTAS,
    step: float = DEFAULT_STEP,
    seed=None,
):
    """Per-horizon AUC of activity predictions; returns ``(auc table, records)``."""
    deltas = list(deltas)
    records = prediction_records(model, d, sample_times(d, strategy, step, seed), deltas)
    return auc_by_delta(records), records


def agent_groups(d: Dataset) -> dict:
    groups = defaultdict(list)
    for c in d:
        groups[c.agent_id].append(c)
    return dict(groups)


def _absolute_labels(group, t_abs, delta) -> bool:
    for c in group:
        if c.start_epoch <= t_abs < c.close_epoch and label_activity(c, t_abs - c.start_epoch, delta):
            return True
    return False


def idleness_records(model, d: Dataset, step: float = DEFAULT_STEP, deltas_seconds=IDLENESS_DELTAS_SECONDS):
    """Agent-level records: score = chance some open conversation of the agent gets a message."""
    out = []
    for agent, group in sorted(agent_groups(d).items()):
        first = min(c.start_epoch for c in group)
        last = max(c.close_epoch for c in group)
        n = int(math.ceil((last - first) / step))
        for t_abs in first + step * np.arange(1, n + 1):
            if t_abs >= last:
                break
            if not any(c.start_epoch <= t_abs < c.close_epoch for c in group):
                continue
            for ds in deltas_seconds:
                delta = ds / 60.0
                q = agent_log_quiet(model, group, float(t_abs), delta)
                out.append(
                    PredictionRecord(
                        agent, float(t_abs), float(ds), float(-math.expm1(q.log_p)),
                        _absolute_labels(group, float(t_abs), delta),
                    )
                )
    return out


def evaluate_agent_idleness(model, d: Dataset, step: float = DEFAULT_STEP, deltas_seconds=IDLENESS_DELTAS_SECONDS):
    """Per-horizon AUC (keys in seconds) of agent-level activity predictions."""
    records = idleness_records(model, d, step, deltas_seconds)
    return auc_by_delta(records), records


# --- CSV output -------------------------------------------------------------

RECORD_HEADER = ("conversation_id", "t_min", "delta_min", "score", "label")
ROC_HEADER = ("threshold", "tpr", "fpr")
KS_HEADER = ("model", "metric", "D", "p_value")
QQ_HEADER = ("quantile", "observed", "simulated")
CDF_HEADER = ("value", "cdf", "sample")
AUC_HEADER = ("model", "delta", "auc")


def _fmt(x):
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows, provenance: Optional[str] = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_records(path, records, provenance=None):
    write_csv(path, RECORD_HEADER, ((r.conversation_id, r.t, r.delta, r.score, r.label) for r in records), provenance)


def write_roc(path, points, provenance=None):
    write_csv(path, ROC_HEADER, ((p.threshold, p.tpr, p.fpr) for p in points), provenance)
