"""Log-likelihood and EM estimation of the Hawkes conversation models.

The E-step assigns each non-initial message a distribution over the
strictly earlier messages of its conversation that could have prompted
it. The M-step re-parameterises each channel by its responsiveness ratio
``alpha_hat = alpha / beta`` so the critical points are closed form.
Per-conversation accumulators are reduced with :func:`math.fsum`, making a
fit independent of the order of conversations in the dataset.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._backend import get_kernels
from .baselines import fit_se, fit_sgd, fit_sgs  # noqa: F401  (re-exported)
from .domain import (
    HAWKES_MODELS,
    BivariateModel,
    BivariateParams,
    Conversation,
    Dataset,
    KernelParams,
    MarkModel,
    UnivariateModel,
)
from .intensity import mark_f, mark_values

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500


class EstimationError(RuntimeError):
    pass


# --- model <-> flat parameter vectors ---------------------------------------


def _chmap(model) -> np.ndarray:
    if isinstance(model, UnivariateModel):
        return np.zeros((2, 2), dtype=np.int64)
    return np.array([[0, 1], [2, 3]], dtype=np.int64)


def _vectors(model) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(model, UnivariateModel):
        return np.array([model.params.alpha]), np.array([model.params.beta])
    return model.params.alphas(), model.params.betas()


def _rebuild(template, alpha, beta):
    if isinstance(template, UnivariateModel):
        return UnivariateModel(KernelParams(float(alpha[0]), float(beta[0])))
    return BivariateModel(BivariateParams.from_arrays(alpha, beta), template.marks)


def mark_model_for(variant: str, d: Dataset) -> MarkModel:
    """Mark model with its statistics computed from ``d`` (pooled over both senders)."""
    if variant in ("bhp", "uhp"):
        return MarkModel("unit")
    if variant == "cbhp":
        return MarkModel("concurrency")
    if variant == "wbhp":
        words = np.concatenate([c.words for c in d]).astype(np.float64)
        return MarkModel("word", mean_words=math.fsum(words) / len(words))
    if variant == "sbhp":
        s = np.concatenate([c.sentiments for c in d])
        return MarkModel(
            "sentiment", mean_sentiment=math.fsum(s) / len(s), min_sentiment=float(np.min(s))
        )
    raise ValueError(f"unknown Hawkes variant {variant!r}; expected one of {HAWKES_MODELS}")


def random_init(variant: str, marks: Optional[MarkModel], seed: int):
    """Log-uniform ratio in [0.05, 0.95] and decay in [0.1, 100] for every channel."""
    rng = np.random.default_rng(seed)
    n_ch = 1 if variant == "uhp" else 4
    ratio = np.exp(rng.uniform(math.log(0.05), math.log(0.95), size=n_ch))
    beta = np.exp(rng.uniform(math.log(0.1), math.log(100.0), size=n_ch))
    if variant == "uhp":
        return UnivariateModel(KernelParams(float(ratio[0] * beta[0]), float(beta[0])))
    return BivariateModel(BivariateParams.from_arrays(ratio * beta, beta), marks or MarkModel())


# --- packed data ------------------------------------------------------------


class Packed:
    """Flat arrays for a dataset under a fixed model family (marks are fixed)."""

    def __init__(self, model, d: Dataset):
        convs = d.conversations
        if not convs:
            raise ValueError("empty dataset")
        self.ids = [c.id for c in convs]
        lengths = np.array([len(c.times) for c in convs], dtype=np.int64)
        self.conv_ptr = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
        self.times = np.ascontiguousarray(np.concatenate([c.times for c in convs]))
        self.senders = np.ascontiguousarray(np.concatenate([c.senders for c in convs]).astype(np.int8))
        self.conv_of = np.repeat(np.arange(len(convs)), lengths)
        bivariate = isinstance(model, BivariateModel)
        if bivariate:
            self.g = np.concatenate([mark_values(model.marks, c) for c in convs])
        else:
            self.g = np.ones(len(self.times))
        self.log_g = np.ascontiguousarray(np.log(self.g))
        self.concurrency = bivariate and model.marks.kind == "concurrency"
        f_target = np.ones(len(self.times))
        if self.concurrency:
            k_at = np.concatenate([c.concurrency.value_at(c.times) for c in convs])
            agent = self.senders == 1
            f_target[agent] = mark_f(model.marks, k_at[agent])
            self._build_segments(model.marks, convs, lengths)
        self.f_target = np.ascontiguousarray(f_target)
        self.chmap = _chmap(model)
        self.n_ch = 1 if not bivariate else 4
        self.n_conv = len(convs)
        self._sum_g = self._source_mass()

    def _source_mass(self) -> np.ndarray:
        """Per conversation and channel: sum of source marks (the f == 1 compensator)."""
        out = np.zeros((self.n_conv, self.n_ch))
        if self.n_ch == 1:
            out[:, 0] = np.bincount(self.conv_of, weights=self.g, minlength=self.n_conv)
            return out
        for y in (0, 1):
            w = np.where(self.senders == y, self.g, 0.0)
            s = np.bincount(self.conv_of, weights=w, minlength=self.n_conv)
            out[:, y] = s  # customer receiver: channels cc (0), ca (1)
            out[:, 2 + y] = s  # agent receiver: ac (2), aa (3)
        return out

    def _build_segments(self, marks, convs, lengths):
        # one row per (message, concurrency segment of its conversation)
        ev, lo, hi, f = [], [], [], []
        offset = 0
        for c, n in zip(convs, lengths):
            bp = c.concurrency.breakpoints
            seg_hi = np.append(bp[1:], np.inf)
            seg_f = mark_f(marks, c.concurrency.values.astype(np.float64))
            idx = np.arange(offset, offset + n)
            ev.append(np.repeat(idx, len(bp)))
            lo.append(np.tile(bp, n))
            hi.append(np.tile(seg_hi, n))
            f.append(np.tile(seg_f, n))
            offset += n
        ev = np.concatenate(ev)
        A = self.times[ev]
        self.seg_event = ev
        self.seg_u0 = np.maximum(np.concatenate(lo) - A, 0.0)
        self.seg_u1 = np.maximum(np.concatenate(hi) - A, 0.0)
        self.seg_f = np.concatenate(f)

    def compensator_terms(self, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per (conversation, channel): compensator per unit ratio, and its beta-derivative."""
        C = self._sum_g.copy()
        D = np.zeros_like(C)
        if not self.concurrency:
            return C, D
        ev = self.seg_event
        src = self.senders[ev]
        g = self.g[ev]
        conv = self.conv_of[ev]
        for y in (0, 1):
            ch = 2 + y
            sel = src == y
            b = beta[ch]
            f, u0, u1 = self.seg_f[sel], self.seg_u0[sel], self.seg_u1[sel]
            with np.errstate(under="ignore", invalid="ignore"):
                e0 = np.exp(-b * f * u0)
                e1 = np.exp(-b * f * u1)
                t1 = np.where(np.isinf(u1), 0.0, f * u1 * e1)
            t0 = f * u0 * e0
            C[:, ch] = np.bincount(conv[sel], weights=g[sel] * (e0 - e1), minlength=self.n_conv)
            D[:, ch] = np.bincount(conv[sel], weights=g[sel] * (t1 - t0), minlength=self.n_conv)
        return C, D


@dataclass
class PassResult:
    loglam: np.ndarray  # per conversation: sum of log left-limit intensities
    mass: np.ndarray  # (n_conv, n_ch) response mass
    delay: np.ndarray  # (n_conv, n_ch) response-weighted (f * delay)
    orphans: np.ndarray  # per conversation: targets without admissible parents


def run_pass(packed: Packed, alpha, beta, backend: Optional[str] = None) -> PassResult:
    k = get_kernels(backend)
    n, n_ch = packed.n_conv, packed.n_ch
    out = PassResult(np.zeros(n), np.zeros((n, n_ch)), np.zeros((n, n_ch)), np.zeros(n, dtype=np.int64))
    with np.errstate(under="ignore", divide="ignore"):
        k.em_pass(
            packed.times,
            packed.senders,
            packed.log_g,
            packed.f_target,
            packed.conv_ptr,
            packed.chmap,
            np.ascontiguousarray(np.log(alpha), dtype=np.float64),
            np.ascontiguousarray(beta, dtype=np.float64),
            out.loglam,
            out.mass,
            out.delay,
            out.orphans,
        )
    return out


def _conv_loglik(res: PassResult, alpha, beta, C) -> np.ndarray:
    return res.loglam - C @ (np.asarray(alpha) / np.asarray(beta))


# --- public single-conversation API ----------------------------------------


def log_likelihood(model, c: Conversation) -> float:
    """Log-likelihood of one conversation; ``-inf`` if a message has zero left-limit intensity."""
    return dataset_log_likelihood(model, Dataset([c]))


def conversation_log_likelihoods(model, d: Dataset, backend: Optional[str] = None) -> np.ndarray:
    packed = Packed(model, d)
    alpha, beta = _vectors(model)
    res = run_pass(packed, alpha, beta, backend)
    C, _ = packed.compensator_terms(beta)
    return _conv_loglik(res, alpha, beta, C)


def dataset_log_likelihood(model, d: Dataset, backend: Optional[str] = None) -> float:
    ll = conversation_log_likelihoods(model, d, backend)
    if np.any(np.isneginf(ll)):
        return -math.inf
    return math.fsum(ll)


@dataclass
class ResponseMatrix:
    """``probs[k, j]``: probability that message ``k`` responds to message ``j``.

    Only strictly earlier messages are admissible parents; row 0 (the
    initial query) is empty. ``degenerate`` lists rows that fell back to a
    uniform distribution; ``orphans`` lists non-initial rows with no
    admissible parent at all.
    """

    probs: np.ndarray
    degenerate: tuple = ()
    orphans: tuple = ()

    def row_sums(self) -> np.ndarray:
        return self.probs.sum(axis=1)


def _pair_logc(model, c: Conversation):
    alpha, beta = _vectors(model)
    chmap = _chmap(model)
    if isinstance(model, BivariateModel):
        g = mark_values(model.marks, c)
    else:
        g = np.ones(len(c.times))
    f = np.ones(len(c.times))
    if isinstance(model, BivariateModel) and model.marks.kind == "concurrency":
        agent = c.senders == 1
        f[agent] = mark_f(model.marks, c.concurrency.value_at(c.times[agent]))
    s = c.senders.astype(np.intp)
    ch = chmap[s[:, None], s[None, :]]
    dt = c.times[:, None] - c.times[None, :]
    admissible = dt > 0
    with np.errstate(divide="ignore", under="ignore", invalid="ignore"):
        logc = np.log(alpha)[ch] + np.log(f)[:, None] + np.log(g)[None, :] - beta[ch] * f[:, None] * dt
    logc = np.where(admissible, logc, -np.inf)
    return logc, ch, f, dt, admissible


def e_step(model, c: Conversation) -> ResponseMatrix:
    """Response probabilities for every non-initial message of ``c``."""
    logc, _, _, _, admissible = _pair_logc(model, c)
    n = len(c.times)
    probs = np.zeros((n, n))
    degenerate, orphans = [], []
    for k in range(1, n):
        row = logc[k]
        ok = admissible[k]
        if not ok.any():
            orphans.append(k)
            continue
        mx = np.max(row[ok])
        with np.errstate(invalid="ignore", under="ignore"):
            w = np.exp(row[ok] - mx)
        s = w.sum()
        if not (np.isfinite(mx) and s > 0 and np.isfinite(s)):
            probs[k, ok] = 1.0 / ok.sum()
            degenerate.append(k)
            continue
        probs[k, ok] = w / s
    if degenerate:
        log.warning("conversation %s: %d degenerate response rows", c.id, len(degenerate))
    return ResponseMatrix(probs, tuple(degenerate), tuple(orphans))


def response_statistics(model, c: Conversation, r: ResponseMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel response mass and response-weighted delays from a response matrix."""
    _, ch, f, dt, admissible = _pair_logc(model, c)
    n_ch = 1 if isinstance(model, UnivariateModel) else 4
    p = np.where(admissible, r.probs, 0.0)
    mass = np.bincount(ch.ravel(), weights=p.ravel(), minlength=n_ch)
    delay = np.bincount(ch.ravel(), weights=(p * f[:, None] * np.where(admissible, dt, 0.0)).ravel(), minlength=n_ch)
    return mass, delay


# --- M-step -----------------------------------------------------------------


@dataclass
class MStepInfo:
    held: list = field(default_factory=list)


def _update(alpha, beta, mass, delay, C, D, info: Optional[MStepInfo] = None):
    """Closed-form channel updates from dataset-level sums.

    ``ratio = mass / C(beta_prev)``; ``beta = mass / (delay + ratio * C'(beta_prev))``.
    When the agent side has no concurrency variation ``C'`` is zero and the
    update is the exact maximiser.
    """
    new_a, new_b = np.array(alpha, dtype=float), np.array(beta, dtype=float)
    for ch in range(len(alpha)):
        P, T, Cs, Ds = mass[ch], delay[ch], C[ch], D[ch]
        if not P > 0 or not Cs > 0:
            if info is not None:
                info.held.append(ch)
            continue
        ratio = P / Cs
        denom = T + ratio * Ds
        if denom > 0:
            new_b[ch] = P / denom
        elif info is not None:
            info.held.append(ch)
        new_a[ch] = ratio * new_b[ch]
    return new_a, new_b


def _fsum_cols(a: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(a[:, j]) for j in range(a.shape[1])])


def m_step(d: Dataset, responses, prev, info: Optional[MStepInfo] = None):
    """One M-step from per-conversation response matrices computed under ``prev``."""
    packed = Packed(prev, d)
    alpha, beta = _vectors(prev)
    stats = [response_statistics(prev, c, r) for c, r in zip(d, responses)]
    mass = _fsum_cols(np.array([s[0] for s in stats]))
    delay = _fsum_cols(np.array([s[1] for s in stats]))
    C, D = packed.compensator_terms(beta)
    new_a, new_b = _update(alpha, beta, mass, delay, _fsum_cols(C), _fsum_cols(D), info)
    return _rebuild(prev, new_a, new_b)


# --- EM driver --------------------------------------------------------------


@dataclass
class EmTrace:
    loglik: list = field(default_factory=list)  # at the parameters entering each iteration
    params: list = field(default_factory=list)  # (alpha, beta) entering each iteration
    deltas: list = field(default_factory=list)  # L1 parameter movement of each iteration
    held_channels: list = field(default_factory=list)
    converged: bool = False
    final_loglik: float = float("nan")

    @property
    def n_iter(self) -> int:
        return len(self.deltas)


def _check_finite(res: PassResult, ll_conv: np.ndarray, ids):
    bad = np.flatnonzero(~np.isfinite(ll_conv))
    if len(bad):
        m = int(bad[0])
        why = (
            "a message has no strictly earlier message to respond to"
            if res.orphans[m]
            else "non-finite log-likelihood"
        )
        raise EstimationError(f"conversation {ids[m]!r}: {why}")


def fit_em(
    d: Dataset,
    variant: Union[str, None] = None,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    backend: Optional[str] = None,
):
    """Fit a Hawkes variant by EM.

    ``init`` is a starting model (its family fixes the variant) or ``None``
    for a seeded random start. Iterates until the L1 movement of all jump
    sizes and decays is at most ``tol`` or ``max_iter`` iterations.
    Returns ``(model, trace)``.
    """
    if len(d) == 0:
        raise ValueError("empty dataset")
    if init is None:
        if variant is None:
            raise ValueError("need a variant name or an initial model")
        marks = None if variant == "uhp" else mark_model_for(variant, d)
        init = random_init(variant, marks, seed)
    elif variant is not None and init.name != variant:
        raise ValueError(f"initial model is {init.name}, requested {variant}")

    packed = Packed(init, d)
    alpha, beta = _vectors(init)
    trace = EmTrace()
    for it in range(max_iter):
        res = run_pass(packed, alpha, beta, backend)
        C, D = packed.compensator_terms(beta)
        ll_conv = _conv_loglik(res, alpha, beta, C)
        _check_finite(res, ll_conv, packed.ids)
        info = MStepInfo()
        new_a, new_b = _update(
            alpha, beta, _fsum_cols(res.mass), _fsum_cols(res.delay), _fsum_cols(C), _fsum_cols(D), info
        )
        delta = float(np.sum(np.abs(new_a - alpha)) + np.sum(np.abs(new_b - beta)))
        trace.loglik.append(math.fsum(ll_conv))
        trace.params.append((alpha.copy(), beta.copy()))
        trace.deltas.append(delta)
        if info.held:
            trace.held_channels.append((it, sorted(set(info.held))))
        alpha, beta = new_a, new_b
        if delta <= tol:
            trace.converged = True
            break
    else:
        log.info("EM stopped at max_iter=%d (last movement %.3g)", max_iter, trace.deltas[-1])

    res = run_pass(packed, alpha, beta, backend)
    C, _ = packed.compensator_terms(beta)
    ll_conv = _conv_loglik(res, alpha, beta, C)
    _check_finite(res, ll_conv, packed.ids)
    trace.final_loglik = math.fsum(ll_conv)
    return _rebuild(init, alpha, beta), trace


def fit_model(name: str, d: Dataset, **kwargs):
    """Fit any of the eight model families by name."""
    if name == "se":
        return fit_se(d), None
    if name == "sgs":
        return fit_sgs(d), None
    if name == "sgd":
        return fit_sgd(d, **{k: v for k, v in kwargs.items() if k == "pool_from"}), None
    kwargs.pop("pool_from", None)
    return fit_em(d, variant=name, **kwargs)
