"""CSV ingestion, concurrency derivation and parameter documents."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np

from .domain import (
    BivariateModel,
    BivariateParams,
    ConcurrencyTimeline,
    Conversation,
    Dataset,
    KernelParams,
    MarkModel,
    SEParams,
    SGDParams,
    SGSParams,
    Sender,
    UnivariateModel,
    validate_conversation,
)

log = logging.getLogger(__name__)

MESSAGE_HEADER = (
    "conversation_id",
    "agent_id",
    "start_epoch_min",
    "close_min",
    "t_min",
    "sender",
    "words",
    "sentiment",
)
ASSIGNMENT_HEADER = ("agent_id", "conversation_id", "assign_epoch_min", "close_epoch_min")
TIMELINE_HEADER = ("conversation_id", "segment_start_min", "k")
FORMAT_VERSION = 1


class DataError(ValueError):
    """Malformed or invalid input data."""


def _read_rows(path, header):
    """Yield ``(line number, row)`` after checking the header; ``#`` lines are metadata."""
    meta = {}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = []
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, sep, val = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            if line.strip():
                lines.append((lineno, line))
    if not lines:
        raise DataError(f"{path}: missing header row")
    got = next(csv.reader([lines[0][1]]))
    if tuple(h.strip() for h in got) != header:
        raise DataError(f"{path}:{lines[0][0]}: expected header {','.join(header)}")
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append((lineno, [v.strip() for v in row]))
    return rows, meta


def _num(v, kind, path, lineno, field):
    try:
        x = kind(v)
    except ValueError:
        raise DataError(f"{path}:{lineno}: field {field}: cannot parse {v!r}") from None
    if kind is float and not math.isfinite(x):
        raise DataError(f"{path}:{lineno}: field {field}: not finite")
    return x


def load_messages(path, strict: bool = True) -> Dataset:
    """Read a message CSV into a Dataset (concurrency defaults to 1).

    Times are shifted so each conversation's first message is at 0; the
    shift is added to the start epoch. Within a conversation messages are
    ordered by time, ties broken by sender (customer first) and then by
    line. Invalid conversations raise in strict mode and are dropped with a
    warning otherwise.
    """
    rows, meta = _read_rows(path, MESSAGE_HEADER)
    groups = defaultdict(list)
    order = []
    for lineno, r in rows:
        cid, agent = r[0], r[1]
        if not cid:
            raise DataError(f"{path}:{lineno}: empty conversation_id")
        try:
            sender = int(Sender.from_code(r[5]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: field sender: expected 'c' or 'a', got {r[5]!r}") from None
        rec = (
            _num(r[4], float, path, lineno, "t_min"),
            sender,
            lineno,
            agent,
            _num(r[2], float, path, lineno, "start_epoch_min"),
            _num(r[3], float, path, lineno, "close_min"),
            _num(r[6], int, path, lineno, "words"),
            _num(r[7], float, path, lineno, "sentiment"),
        )
        if cid not in groups:
            order.append(cid)
        groups[cid].append(rec)

    convs, rejected = [], []
    for cid in sorted(order):
        recs = sorted(groups[cid], key=lambda x: (x[0], x[1], x[2]))
        problems = []
        agents = {x[3] for x in recs}
        epochs = {x[4] for x in recs}
        closes = {x[5] for x in recs}
        if len(agents) > 1 or len(epochs) > 1 or len(closes) > 1:
            problems.append("conversation fields agent_id/start_epoch_min/close_min differ across rows")
        t = np.array([x[0] for x in recs])
        shift = float(t[0])
        c = Conversation(
            cid,
            t - shift,
            [x[1] for x in recs],
            [x[6] for x in recs],
            [x[7] for x in recs],
            close_time=recs[0][5] - shift,
            agent_id=recs[0][3],
            start_epoch=recs[0][4] + shift,
        )
        problems += validate_conversation(c)
        if problems:
            rejected.append((cid, problems))
            continue
        convs.append(c)
    if rejected:
        report = "; ".join(f"{cid}: {', '.join(p)}" for cid, p in rejected)
        if strict:
            raise DataError(f"{path}: invalid conversations: {report}")
        log.warning("%s: dropped %d invalid conversations: %s", path, len(rejected), report)
    metadata = {"time_unit": "minutes", "source": str(path)}
    if "epoch_origin" in meta:
        metadata["epoch_origin"] = meta["epoch_origin"]
    return Dataset(convs, metadata)


def _f(x: float) -> str:
    return repr(float(x))


def save_messages(d: Dataset, path, provenance: Optional[str] = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        if "epoch_origin" in d.metadata:
            fh.write(f"# epoch_origin={d.metadata['epoch_origin']}\n")
        w = csv.writer(fh)
        w.writerow(MESSAGE_HEADER)
        for c in d:
            for t, s, wd, x in zip(c.times, c.senders, c.words, c.sentiments):
                w.writerow(
                    [c.id, c.agent_id, _f(c.start_epoch), _f(c.close_time), _f(t), Sender(int(s)).code, int(wd), _f(x)]
                )


# --- concurrency ------------------------------------------------------------


def derive_concurrency(path, start_epochs: Optional[dict] = None) -> dict:
    """Per-conversation concurrency timelines from an assignment CSV.

    ``K`` at an absolute time is the number of the agent's assignments whose
    ``[assign, close)`` interval covers it. Timelines are expressed on the
    conversation's local clock starting at its own assignment (or at
    ``start_epochs[id]`` when given).
    """
    rows, _ = _read_rows(path, ASSIGNMENT_HEADER)
    by_agent = defaultdict(list)
    for lineno, r in rows:
        a = _num(r[2], float, path, lineno, "assign_epoch_min")
        b = _num(r[3], float, path, lineno, "close_epoch_min")
        if b < a:
            raise DataError(f"{path}:{lineno}: close before assignment")
        by_agent[r[0]].append((r[1], a, b))
    out = {}
    for agent, items in by_agent.items():
        events = sorted({x for _, a, b in items for x in (a, b)})
        ev = np.array(events)
        starts = np.array([a for _, a, _ in items])
        ends = np.array([b for _, _, b in items])
        # covering count on each elementary interval [ev[i], ev[i+1])
        counts = np.searchsorted(np.sort(starts), ev, side="right") - np.searchsorted(np.sort(ends), ev, side="right")
        for cid, a, b in items:
            origin = a if start_epochs is None or cid not in start_epochs else start_epochs[cid]
            i = np.searchsorted(ev, origin, side="right") - 1
            bp, vals = [0.0], [max(int(counts[i]) if i >= 0 else 0, 1)]
            for e, k in zip(ev, counts):
                if origin < e < b:
                    k = max(int(k), 1)
                    if k != vals[-1]:
                        bp.append(float(e - origin))
                        vals.append(k)
            out[cid] = ConcurrencyTimeline(bp, vals)
    return out


def attach_concurrency(d: Dataset, timelines: dict) -> Dataset:
    convs = []
    missing = 0
    for c in d:
        tl = timelines.get(c.id)
        if tl is None:
            missing += 1
            tl = ConcurrencyTimeline.constant(1)
        convs.append(c.replace(concurrency=tl))
    if missing:
        log.warning("%d conversations have no assignment record; using concurrency 1", missing)
    return Dataset(convs, d.metadata)


def load_timelines(path) -> dict:
    """Read an explicit timeline CSV (``conversation_id,segment_start_min,k``)."""
    rows, _ = _read_rows(path, TIMELINE_HEADER)
    segs = defaultdict(list)
    for lineno, r in rows:
        segs[r[0]].append((_num(r[1], float, path, lineno, "segment_start_min"), _num(r[2], int, path, lineno, "k")))
    out = {}
    for cid, s in segs.items():
        s.sort()
        try:
            out[cid] = ConcurrencyTimeline([x for x, _ in s], [k for _, k in s])
        except ValueError as e:
            raise DataError(f"{path}: conversation {cid}: {e}") from None
    return out


def save_timelines(d: Dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TIMELINE_HEADER)
        for c in d:
            for b, k in zip(c.concurrency.breakpoints, c.concurrency.values):
                w.writerow([c.id, _f(b), int(k)])


# --- parameter documents ----------------------------------------------------


def params_to_dict(model, meta: Optional[dict] = None) -> dict:
    doc = {"format_version": FORMAT_VERSION, "model": model.name}
    if isinstance(model, UnivariateModel):
        doc["params"] = {"alpha": model.params.alpha, "beta": model.params.beta}
    elif isinstance(model, BivariateModel):
        p = model.params
        doc["params"] = {ch: {"alpha": getattr(p, ch).alpha, "beta": getattr(p, ch).beta} for ch in ("cc", "ca", "ac", "aa")}
        m = model.marks
        if m.g_override is not None:
            raise ValueError("custom mark functions cannot be serialized")
        if m.kind == "word":
            doc["marks"] = {"mean_words": m.mean_words}
        elif m.kind == "sentiment":
            doc["marks"] = {"mean_sentiment": m.mean_sentiment, "min_sentiment": m.min_sentiment}
    elif isinstance(model, SEParams):
        doc["params"] = {"rate": model.rate}
    elif isinstance(model, SGSParams):
        doc["params"] = {"shape": model.shape, "rate": model.rate}
    elif isinstance(model, SGDParams):
        doc["params"] = {
            "stages": [{"shape": a, "rate": r} for a, r in model.stages],
            "tail": {"shape": model.tail[0], "rate": model.tail[1]},
        }
    else:
        raise TypeError(f"cannot serialize {model!r}")
    if meta:
        doc["fit"] = meta
    return doc


def _need(doc, key, what="field"):
    if key not in doc:
        raise DataError(f"{what} missing: {key}")
    return doc[key]


def params_from_dict(doc: dict):
    version = _need(doc, "format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported format_version {version}")
    name = _need(doc, "model")
    p = _need(doc, "params")
    if name == "uhp":
        return UnivariateModel(KernelParams(float(_need(p, "alpha")), float(_need(p, "beta"))))
    if name in ("bhp", "wbhp", "sbhp", "cbhp"):
        chans = {}
        for ch in ("cc", "ca", "ac", "aa"):
            q = _need(p, ch, "channel")
            chans[ch] = KernelParams(float(_need(q, "alpha")), float(_need(q, "beta")))
        kind = {"bhp": "unit", "wbhp": "word", "sbhp": "sentiment", "cbhp": "concurrency"}[name]
        marks = doc.get("marks", {})
        if kind == "word":
            m = MarkModel(kind, mean_words=float(_need(marks, "mean_words", "mark statistic")))
        elif kind == "sentiment":
            m = MarkModel(
                kind,
                mean_sentiment=float(_need(marks, "mean_sentiment", "mark statistic")),
                min_sentiment=float(_need(marks, "min_sentiment", "mark statistic")),
            )
        else:
            m = MarkModel(kind)
        return BivariateModel(BivariateParams(**chans), m)
    if name == "se":
        return SEParams(float(_need(p, "rate")))
    if name == "sgs":
        return SGSParams(float(_need(p, "shape")), float(_need(p, "rate")))
    if name == "sgd":
        stages = [(float(_need(s, "shape")), float(_need(s, "rate"))) for s in _need(p, "stages")]
        tail = _need(p, "tail")
        return SGDParams(tuple(stages), (float(_need(tail, "shape")), float(_need(tail, "rate"))))
    raise DataError(f"unknown model variant {name!r}")


def save_params(model, path, meta: Optional[dict] = None):
    """Write a JSON parameter document (floats round-trip exactly)."""
    Path(path).write_text(json.dumps(params_to_dict(model, meta), indent=2) + "\n", encoding="utf-8")


def load_params(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a parameter document ({e})") from None
    return params_from_dict(doc)


def load_fit_metadata(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("fit", {})
