"""Hawkes process models of two-party conversations.

Fit by EM, simulate via the branching structure, predict future activity
analytically, and evaluate fit and prediction accuracy.
"""
from __future__ import annotations

__version__ = "0.1.0"

from ._backend import BACKEND
from .domain import (
    ALL_MODELS,
    BASELINE_MODELS,
    HAWKES_MODELS,
    BivariateModel,
    BivariateParams,
    ConcurrencyTimeline,
    Conversation,
    Dataset,
    KernelParams,
    MarkModel,
    Message,
    SEParams,
    Sender,
    SGDParams,
    SGSParams,
    UnivariateModel,
    validate_conversation,
)
from .estimation import EstimationError, dataset_log_likelihood, e_step, fit_em, fit_model, log_likelihood, m_step
from .intensity import compensator, rates
from .prediction import p_agent_all_over, p_agent_quiet_interval, p_conversation_over, p_quiet_interval
from .simulation import build_samplers, default_samplers, simulate_baseline, simulate_conversation, simulate_dataset
