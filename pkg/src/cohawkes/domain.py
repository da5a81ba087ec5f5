"""Core value types: messages, conversations, concurrency, model parameters.

Times are minutes (real-valued) and rates are per minute throughout the
package. Conversations keep their message stream as parallel read-only
numpy arrays; ``Conversation.messages`` gives the record view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np


class Sender(IntEnum):
    CUSTOMER = 0
    AGENT = 1

    @property
    def code(self) -> str:
        return "c" if self is Sender.CUSTOMER else "a"

    @classmethod
    def from_code(cls, code: str) -> "Sender":
        if code == "c":
            return cls.CUSTOMER
        if code == "a":
            return cls.AGENT
        raise ValueError(f"unknown sender code {code!r} (expected 'c' or 'a')")


class Message(NamedTuple):
    time: float
    sender: Sender
    words: int
    sentiment: float


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class ConcurrencyTimeline:
    """Piecewise-constant agent concurrency ``K_t`` on ``[0, inf)``.

    ``values[k]`` holds on ``[breakpoints[k], breakpoints[k+1])``; the last
    segment is unbounded.
    """

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints: Sequence[float] = (0.0,), values: Sequence[int] = (1,)):
        bp = _frozen(breakpoints, np.float64)
        vals = _frozen(values, np.int64)
        if bp.ndim != 1 or vals.ndim != 1 or len(bp) != len(vals) or len(bp) == 0:
            raise ValueError("breakpoints and values must be nonempty 1-d sequences of equal length")
        if bp[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(vals < 1):
            raise ValueError("concurrency values must be >= 1")
        self.breakpoints = bp
        self.values = vals

    @classmethod
    def constant(cls, k: int = 1) -> "ConcurrencyTimeline":
        return cls((0.0,), (int(k),))

    def value_at(self, t):
        """Concurrency at time(s) ``t``; right-continuous at breakpoints."""
        idx = np.searchsorted(self.breakpoints, np.maximum(t, 0.0), side="right") - 1
        out = self.values[idx]
        return int(out) if np.ndim(out) == 0 else out

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1

    def segments(self, start: float, stop: float):
        """Split ``[start, stop)`` at breakpoints.

        Returns ``(lo, hi, k)`` arrays; ``stop`` may be ``inf``.
        """
        inner = self.breakpoints[(self.breakpoints > start) & (self.breakpoints < stop)]
        lo = np.concatenate(([start], inner))
        hi = np.concatenate((inner, [stop]))
        return lo, hi, self.value_at(lo)

    def __eq__(self, other):
        if not isinstance(other, ConcurrencyTimeline):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.breakpoints.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return f"ConcurrencyTimeline({self.breakpoints.tolist()}, {self.values.tolist()})"


class Conversation:
    """One conversation: the marked message stream plus close time and metadata.

    ``times`` are minutes since the initial query (which should be at 0 and
    sent by the customer). Construction only checks array shapes; use
    :func:`validate_conversation` for the full set of invariants.
    """

    __slots__ = (
        "id",
        "agent_id",
        "start_epoch",
        "times",
        "senders",
        "words",
        "sentiments",
        "close_time",
        "concurrency",
    )

    def __init__(
        self,
        id: str,
        times,
        senders,
        words=None,
        sentiments=None,
        close_time: Optional[float] = None,
        agent_id: str = "",
        start_epoch: float = 0.0,
        concurrency: Optional[ConcurrencyTimeline] = None,
    ):
        self.id = str(id)
        self.agent_id = str(agent_id)
        self.start_epoch = float(start_epoch)
        self.times = _frozen(times, np.float64)
        self.senders = _frozen(senders, np.int8)
        n = len(self.times)
        self.words = _frozen(np.ones(n) if words is None else words, np.int64)
        self.sentiments = _frozen(np.zeros(n) if sentiments is None else sentiments, np.float64)
        if not (self.times.ndim == self.senders.ndim == self.words.ndim == self.sentiments.ndim == 1):
            raise ValueError("message fields must be 1-d")
        if not (len(self.senders) == len(self.words) == len(self.sentiments) == n):
            raise ValueError("message fields must have equal length")
        last = float(self.times[-1]) if n else 0.0
        self.close_time = last if close_time is None else float(close_time)
        self.concurrency = concurrency if concurrency is not None else ConcurrencyTimeline.constant(1)

    @classmethod
    def from_messages(cls, id: str, messages: Sequence[Message], **kwargs) -> "Conversation":
        return cls(
            id,
            [m.time for m in messages],
            [int(m.sender) for m in messages],
            [m.words for m in messages],
            [m.sentiment for m in messages],
            **kwargs,
        )

    @property
    def messages(self) -> tuple:
        return tuple(
            Message(float(t), Sender(int(s)), int(w), float(x))
            for t, s, w, x in zip(self.times, self.senders, self.words, self.sentiments)
        )

    def __len__(self):
        return len(self.times)

    @property
    def n_messages(self) -> int:
        return len(self.times)

    @property
    def last_time(self) -> float:
        return float(self.times[-1])

    @property
    def close_epoch(self) -> float:
        return self.start_epoch + self.close_time

    def history(self, t: float) -> "Conversation":
        """Conversation truncated to messages with time <= t."""
        n = int(np.searchsorted(self.times, t, side="right"))
        return self.replace(
            times=self.times[:n],
            senders=self.senders[:n],
            words=self.words[:n],
            sentiments=self.sentiments[:n],
            close_time=max(t, float(self.times[n - 1])) if n else t,
        )

    def replace(self, **changes) -> "Conversation":
        kw = {
            "id": self.id,
            "times": self.times,
            "senders": self.senders,
            "words": self.words,
            "sentiments": self.sentiments,
            "close_time": self.close_time,
            "agent_id": self.agent_id,
            "start_epoch": self.start_epoch,
            "concurrency": self.concurrency,
        }
        kw.update(changes)
        return Conversation(**kw)

    def __eq__(self, other):
        if not isinstance(other, Conversation):
            return NotImplemented
        return (
            self.id == other.id
            and self.agent_id == other.agent_id
            and self.start_epoch == other.start_epoch
            and self.close_time == other.close_time
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.senders, other.senders)
            and np.array_equal(self.words, other.words)
            and np.array_equal(self.sentiments, other.sentiments)
            and self.concurrency == other.concurrency
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"Conversation(id={self.id!r}, n={len(self)}, last={self.last_time if len(self) else None}, "
            f"close={self.close_time})"
        )


def validate_conversation(c: Conversation) -> list[str]:
    """Return a list of invariant violations (empty when ``c`` is valid)."""
    problems = []
    n = len(c.times)
    if n == 0:
        return ["messages: conversation must contain at least the initial query"]
    if c.times[0] != 0.0:
        problems.append("messages[0].time: initial query must be at time 0")
    if c.senders[0] != Sender.CUSTOMER:
        problems.append("messages[0].sender: initial query must be customer")
    if not np.all(np.isfinite(c.times)) or np.any(c.times < 0):
        problems.append("messages.time: times must be finite and nonnegative")
    if np.any(np.diff(c.times) < 0):
        problems.append("messages.time: times must be nondecreasing")
    if np.any((c.senders != 0) & (c.senders != 1)):
        problems.append("messages.sender: sender must be customer or agent")
    if np.any(c.words < 1):
        problems.append("messages.words: word counts must be >= 1")
    if not np.all(np.isfinite(c.sentiments)):
        problems.append("messages.sentiment: sentiment must be finite")
    if not math.isfinite(c.close_time) or c.close_time < c.times[-1]:
        problems.append("close_time: close_time before last message")
    return problems


def prefix_counts(c: Conversation, t: float) -> tuple[int, int]:
    """(customer, agent) message counts on ``(0, t]``; the initial query is excluded."""
    n = int(np.searchsorted(c.times, t, side="right"))
    s = c.senders[1:n]
    n_agent = int(np.count_nonzero(s == Sender.AGENT))
    return len(s) - n_agent, n_agent


# --- model parameters -------------------------------------------------------


@dataclass(frozen=True)
class KernelParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")

    @property
    def ratio(self) -> float:
        """Responsiveness ratio alpha/beta."""
        return self.alpha / self.beta


CHANNELS = ("cc", "ca", "ac", "aa")


@dataclass(frozen=True)
class BivariateParams:
    """Kernel parameters per channel; first letter is the receiving rate,
    second the stimulating sender."""

    cc: KernelParams
    ca: KernelParams
    ac: KernelParams
    aa: KernelParams

    def channel(self, receiver: int, source: int) -> KernelParams:
        return getattr(self, CHANNELS[2 * receiver + source])

    def ratio_matrix(self) -> np.ndarray:
        return np.array(
            [[self.cc.ratio, self.ca.ratio], [self.ac.ratio, self.aa.ratio]], dtype=np.float64
        )

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.ratio_matrix()))))

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0

    @classmethod
    def from_arrays(cls, alpha: Sequence[float], beta: Sequence[float]) -> "BivariateParams":
        """Build from length-4 arrays ordered cc, ca, ac, aa."""
        return cls(*(KernelParams(float(a), float(b)) for a, b in zip(alpha, beta)))

    def alphas(self) -> np.ndarray:
        return np.array([getattr(self, ch).alpha for ch in CHANNELS])

    def betas(self) -> np.ndarray:
        return np.array([getattr(self, ch).beta for ch in CHANNELS])


MARK_KINDS = ("unit", "word", "sentiment", "concurrency")


@dataclass(frozen=True)
class MarkModel:
    """Mark functions of the bivariate variants.

    ``unit`` is the plain BHP. ``word`` scales jumps by ``words / mean_words``;
    ``sentiment`` by ``(S - min_sentiment) / (mean_sentiment - min_sentiment)``;
    ``concurrency`` scales agent-side jumps and decays by ``1/K``.
    ``g_override`` replaces the message mark function (not serializable).
    """

    kind: str = "unit"
    mean_words: Optional[float] = None
    mean_sentiment: Optional[float] = None
    min_sentiment: Optional[float] = None
    g_override: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in MARK_KINDS:
            raise ValueError(f"unknown mark kind {self.kind!r}")
        if self.kind == "word":
            if self.mean_words is None or not self.mean_words > 0:
                raise ValueError("word marks need mean_words > 0")
        if self.kind == "sentiment":
            if self.mean_sentiment is None or self.min_sentiment is None:
                raise ValueError("sentiment marks need mean_sentiment and min_sentiment")
            if not self.min_sentiment < self.mean_sentiment:
                raise ValueError("sentiment marks need min_sentiment < mean_sentiment")


@dataclass(frozen=True)
class UnivariateModel:
    params: KernelParams

    name = "uhp"
    n_rates = 1

    def is_stable(self) -> bool:
        return self.params.ratio < 1.0

    def spectral_radius(self) -> float:
        return self.params.ratio


_BIVARIATE_NAMES = {"unit": "bhp", "word": "wbhp", "sentiment": "sbhp", "concurrency": "cbhp"}


@dataclass(frozen=True)
class BivariateModel:
    params: BivariateParams
    marks: MarkModel = MarkModel()

    n_rates = 2

    @property
    def name(self) -> str:
        return _BIVARIATE_NAMES[self.marks.kind]

    def is_stable(self) -> bool:
        return self.params.is_stable()

    def spectral_radius(self) -> float:
        return self.params.spectral_radius()


HawkesModelSpec = Union[UnivariateModel, BivariateModel]
HAWKES_MODELS = ("uhp", "bhp", "wbhp", "sbhp", "cbhp")


# --- path-independent baselines ---------------------------------------------


def _check_positive(**values):
    for name, v in values.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class SEParams:
    """Exponential gaps with rate ``rate`` (per minute)."""

    rate: float
    name = "se"

    def __post_init__(self):
        _check_positive(rate=self.rate)


@dataclass(frozen=True)
class SGSParams:
    """Independent identically distributed Gamma(shape, rate) gaps."""

    shape: float
    rate: float
    name = "sgs"

    def __post_init__(self):
        _check_positive(shape=self.shape, rate=self.rate)


@dataclass(frozen=True)
class SGDParams:
    """Gamma gaps whose parameters depend on the gap index.

    ``stages[j-1]`` is ``(shape, rate)`` for gap index ``j``; indices past
    ``len(stages)`` use the pooled ``tail``.
    """

    stages: tuple
    tail: tuple
    name = "sgd"

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple((float(a), float(m)) for a, m in self.stages))
        object.__setattr__(self, "tail", (float(self.tail[0]), float(self.tail[1])))
        for a, m in self.stages + (self.tail,):
            _check_positive(shape=a, rate=m)

    def gap_params(self, index: int) -> tuple[float, float]:
        if index < 1:
            raise ValueError("gap indices start at 1")
        return self.stages[index - 1] if index <= len(self.stages) else self.tail


BaselineParams = Union[SEParams, SGSParams, SGDParams]
BASELINE_MODELS = ("se", "sgs", "sgd")
ALL_MODELS = BASELINE_MODELS + HAWKES_MODELS


def is_hawkes(model) -> bool:
    return isinstance(model, (UnivariateModel, BivariateModel))


# --- datasets ---------------------------------------------------------------


class Dataset:
    """An ordered collection of conversations with unique ids."""

    def __init__(self, conversations: Sequence[Conversation], metadata: Optional[Mapping] = None):
        self.conversations = tuple(conversations)
        self.metadata = dict(metadata or {})
        self.metadata.setdefault("time_unit", "minutes")
        ids = [c.id for c in self.conversations]
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise ValueError(f"duplicate conversation id {dup!r}")
        self._index = {c.id: i for i, c in enumerate(self.conversations)}

    def __len__(self):
        return len(self.conversations)

    def __iter__(self):
        return iter(self.conversations)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.conversations[self._index[key]]
        if isinstance(key, slice):
            return Dataset(self.conversations[key], self.metadata)
        return self.conversations[key]

    def subset(self, predicate) -> "Dataset":
        return Dataset([c for c in self.conversations if predicate(c)], self.metadata)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.conversations == other.conversations

    __hash__ = None

    def __repr__(self):
        return f"Dataset(n={len(self)})"
