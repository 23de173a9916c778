"""
Inference backends: the output type, the token-probability confidence
measure, a seeded oracle standing in for the onboard and ground models, and a
replay backend for recorded traces.
python_file: inference.py
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from config.settings import (
    DEFAULT_CONF_SPREAD,
    DEFAULT_CONTEXT_GAIN,
    DEFAULT_CORRECT_CONF_MEAN,
    DEFAULT_INCORRECT_CONF_MEAN,
    DEFAULT_TOKENS_PER_ANSWER,
    GROUND_BASE_ACCURACY,
    SATELLITE_BASE_ACCURACY,
)
from skyrag.errors import CorpusParseError, EmptyGenerationError, MissingTraceError

logger = logging.getLogger(__name__)

ROLES = {"satellite": 0, "ground": 1}
MIN_TOKEN_PROB = 1e-6


@dataclass(frozen=True)
class InferenceOutput:
    """Answer text plus the probability of every generated token."""

    answer: str
    token_probs: tuple
    n_inp: int = 0

    def __post_init__(self):
        probs = tuple(float(p) for p in self.token_probs)
        object.__setattr__(self, "token_probs", probs)
        for p in probs:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"token probability {p} outside (0, 1]")

    @property
    def n_gen(self):
        return len(self.token_probs)


class InferenceBackend(Protocol):
    """A model that answers a query given retrieved context."""

    def generate(self, query, context):
        ...


def confidence(out):
    """
    Geometric mean of the generated-token probabilities.

    Args:
        out (InferenceOutput): Model output

    Returns:
        float: confidence in (0, 1]

    Raises:
        EmptyGenerationError: if no tokens were generated
    """
    probs = out.token_probs
    if not probs:
        raise EmptyGenerationError("confidence of an empty generation is undefined")
    if all(p == probs[0] for p in probs):
        return probs[0]
    value = math.exp(math.fsum(math.log(p) for p in probs) / len(probs))
    return min(max(value, min(probs)), max(probs))


class OracleBackendParams(BaseModel):
    """Calibration of the synthetic backend."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base_accuracy: float = SATELLITE_BASE_ACCURACY
    context_gain: float = DEFAULT_CONTEXT_GAIN
    max_accuracy: float = 1.0
    correct_conf_mean: float = DEFAULT_CORRECT_CONF_MEAN
    incorrect_conf_mean: float = DEFAULT_INCORRECT_CONF_MEAN
    conf_spread: float = DEFAULT_CONF_SPREAD
    tokens_per_answer: int = DEFAULT_TOKENS_PER_ANSWER
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self):
        for name in ("base_accuracy", "context_gain", "max_accuracy",
                     "correct_conf_mean", "incorrect_conf_mean", "conf_spread"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.tokens_per_answer < 1:
            raise ValueError("tokens_per_answer must be at least 1")
        return self


def satellite_params(**overrides):
    return OracleBackendParams(**{"base_accuracy": SATELLITE_BASE_ACCURACY, **overrides})


def ground_params(**overrides):
    return OracleBackendParams(**{"base_accuracy": GROUND_BASE_ACCURACY, **overrides})


def count_tokens(text):
    return len(text.split())


def input_tokens(query, context):
    """Rough prompt length: the instruction plus every context pair."""
    total = count_tokens(query.instruction)
    for record in context:
        total += count_tokens(record.instruction) + count_tokens(record.ground_truth)
    return total


def wrong_answer(truth, vocabulary, rng):
    """A deterministic answer that differs from the truth."""
    candidates = sorted(a for a in set(vocabulary) if a != truth)
    if not candidates:
        return f"not {truth}"
    return candidates[int(rng.integers(len(candidates)))]


def oracle_generate(query, context, params, role="satellite", vocabulary=()):
    """
    Seeded stand-in for a vision-language model.

    The answer is correct with probability
    min(max_accuracy, base_accuracy + context_gain * n) where n counts the
    context records sharing the query's scene label. Token probabilities are
    drawn around correct_conf_mean or incorrect_conf_mean accordingly.

    Args:
        query (Query): The query, carrying its ground truth
        context (list): RetrievedRecord list handed to the model
        params (OracleBackendParams): Calibration
        role (str): satellite | ground; selects an independent random stream
        vocabulary (iterable): Answers to draw wrong answers from

    Returns:
        InferenceOutput: deterministic for (query id, params, role)
    """
    label = query.image.scene_label
    matching = sum(1 for record in context if record.image.scene_label == label)
    p_correct = min(params.max_accuracy, params.base_accuracy + params.context_gain * matching)

    draw_rng, answer_rng, token_rng = (
        np.random.default_rng(s)
        for s in np.random.SeedSequence([params.seed, query.id, ROLES[role]]).spawn(3)
    )
    correct = draw_rng.random() < p_correct
    answer = query.ground_truth if correct else wrong_answer(query.ground_truth, vocabulary, answer_rng)

    mean = params.correct_conf_mean if correct else params.incorrect_conf_mean
    probs = token_rng.uniform(mean - params.conf_spread, mean + params.conf_spread,
                              size=params.tokens_per_answer)
    probs = np.clip(probs, MIN_TOKEN_PROB, 1.0)
    return InferenceOutput(answer=answer, token_probs=tuple(probs), n_inp=input_tokens(query, context))


class OracleBackend:
    """InferenceBackend backed by oracle_generate."""

    def __init__(self, params, role="satellite", vocabulary=()):
        if role not in ROLES:
            raise ValueError(f"unknown backend role: {role}")
        self.params = params
        self.role = role
        self.vocabulary = tuple(sorted(set(vocabulary)))

    def generate(self, query, context):
        return oracle_generate(query, context, self.params, self.role, self.vocabulary)


@dataclass(frozen=True)
class TraceEntry:
    answer: str
    token_probs: tuple
    recorded_confidence: Optional[float] = None


def parse_trace_text(text):
    """
    Parse a trace table.

    Each line is `query_id <TAB> answer <TAB> probabilities`, probabilities
    space-separated, with an optional fourth column holding the confidence
    recorded alongside the trace.

    Returns:
        dict: query id -> TraceEntry
    """
    table = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        fields = raw.rstrip("\n").split("\t")
        if len(fields) not in (3, 4):
            raise CorpusParseError(f"trace line {lineno}: expected 3 or 4 tab-separated fields")
        try:
            qid = int(fields[0])
            probs = tuple(float(p) for p in fields[2].split())
            recorded = float(fields[3]) if len(fields) == 4 else None
        except ValueError as e:
            raise CorpusParseError(f"trace line {lineno}: {e}") from e
        if qid in table:
            raise CorpusParseError(f"trace line {lineno}: duplicate query id {qid}")
        table[qid] = TraceEntry(answer=fields[1], token_probs=probs, recorded_confidence=recorded)
    return table


def trace_generate(query, context, trace_table):
    """Replay the recorded output for a query verbatim."""
    try:
        entry = trace_table[query.id]
    except KeyError:
        raise MissingTraceError(f"no trace recorded for query {query.id}") from None
    return InferenceOutput(answer=entry.answer, token_probs=entry.token_probs,
                           n_inp=input_tokens(query, context))


class TraceBackend:
    """InferenceBackend that replays a trace table."""

    def __init__(self, trace_table):
        self.trace_table = trace_table

    def generate(self, query, context):
        return trace_generate(query, context, self.trace_table)
