from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from cohawkes.domain import (
    BivariateModel,
    BivariateParams,
    ConcurrencyTimeline,
    Conversation,
    KernelParams,
    MarkModel,
    UnivariateModel,
)
from cohawkes.simulation import default_samplers

# fitted BHP parameters used as the generating truth throughout
REF_ALPHA = (0.89, 14.67, 3.76, 20.22)  # cc, ca, ac, aa
REF_BETA = (3.73, 38.35, 4.21, 48.28)
UHP_ALPHA, UHP_BETA = 7.81, 8.39


def ref_bhp(marks: MarkModel = MarkModel()) -> BivariateModel:
    return BivariateModel(BivariateParams.from_arrays(REF_ALPHA, REF_BETA), marks)


@pytest.fixture(scope="session")
def bhp():
    return ref_bhp()


@pytest.fixture(scope="session")
def samplers():
    return default_samplers()


def random_timeline(rng, horizon: float, max_segments: int = 4) -> ConcurrencyTimeline:
    n = int(rng.integers(1, max_segments + 1))
    bp = np.concatenate(([0.0], np.sort(rng.uniform(0.01, horizon, n - 1))))
    bp = np.unique(bp)
    return ConcurrencyTimeline(bp, rng.integers(1, 7, len(bp)))


def random_conversation(rng, n_max: int = 12, id: str = "r", multi_segment: bool = True) -> Conversation:
    n = int(rng.integers(1, n_max + 1))
    t = np.concatenate(([0.0], np.sort(rng.uniform(0.0, 5.0, n - 1))))
    senders = np.concatenate(([0], rng.integers(0, 2, n - 1)))
    words = rng.integers(1, 40, n)
    sents = rng.normal(0.15, 0.8, n)
    tl = random_timeline(rng, 6.0) if multi_segment else ConcurrencyTimeline.constant(int(rng.integers(1, 6)))
    return Conversation(id, t, senders, words, sents, close_time=t[-1] + 1.0, concurrency=tl)


MARKS = (
    MarkModel("unit"),
    MarkModel("word", mean_words=15.0),
    MarkModel("sentiment", mean_sentiment=0.15, min_sentiment=-3.0),
    MarkModel("concurrency"),
)


def random_model(rng, variant: str):
    """Random positive parameters (not necessarily subcritical)."""
    alpha = np.exp(rng.uniform(np.log(0.05), np.log(20.0), 4))
    beta = np.exp(rng.uniform(np.log(0.1), np.log(50.0), 4))
    if variant == "uhp":
        return UnivariateModel(KernelParams(float(alpha[0]), float(beta[0])))
    marks = {"bhp": MARKS[0], "wbhp": MARKS[1], "sbhp": MARKS[2], "cbhp": MARKS[3]}[variant]
    return BivariateModel(BivariateParams.from_arrays(alpha, beta), marks)


def random_stable_model(rng, variant: str, max_radius: float = 0.8):
    while True:
        m = random_model(rng, variant)
        if m.spectral_radius() < max_radius:
            return m


VARIANTS = ("uhp", "bhp", "wbhp", "sbhp", "cbhp")

seeds = st.integers(min_value=0, max_value=2**32 - 1)


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES: dict = {}


def report(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
