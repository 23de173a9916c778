"""
Satellite node: onboard retrieval, the two-stage dispatcher (matching test,
then cognitive test), LRU refresh on accepted answers, and the two-tier
transmission buffer.
python_file: satellite.py
"""

import logging
from dataclasses import dataclass
from typing import Optional

from skyrag.core import make_rng
from skyrag.errors import DuplicateQueryError, EmptyArchiveError
from skyrag.inference import confidence

logger = logging.getLogger(__name__)

INSUFFICIENT_CONTEXT = "insufficient_context"
LOW_CONFIDENCE = "low_confidence"
EMPTY_ARCHIVE = "empty_archive"

# Random stream used by the retrieval ablation modes
RETRIEVAL_STREAM = 2


@dataclass(frozen=True)
class DispatchDecision:
    """Outcome of onboard processing plus what each stage saw."""

    accepted: bool
    answer: Optional[str] = None
    confidence: Optional[float] = None
    reason: Optional[str] = None
    survivors: int = 0
    retrieved: tuple = ()
    matching: str = "skip"
    cognitive: str = "skip"

    @property
    def outcome(self):
        return "accept" if self.accepted else "transmit"


@dataclass(frozen=True)
class MatchedContext:
    """Retrieval result of a query that passed the matching test."""

    retrieved: tuple
    survivors: tuple


def matching_test(records, config):
    """
    Keep records similar enough in both modalities.

    A record survives when its image similarity reaches image_threshold AND
    its instruction similarity reaches instruction_threshold. With
    min_records = 0 nothing is filtered.

    Args:
        records (list): RetrievedRecord, top-K from the satellite archive
        config (SystemConfig): Thresholds

    Returns:
        list: surviving records, or None when fewer than min_records survive
    """
    if config.min_records == 0:
        return list(records)
    survivors = [
        r for r in records
        if r.image_similarity >= config.image_threshold
        and r.instruction_similarity >= config.instruction_threshold
    ]
    if len(survivors) < config.min_records:
        return None
    return survivors


class TransmissionBuffer:
    """
    Pending queries split into the most recent `capacity` (priority) and
    everything older (secondary, oldest first).
    """

    def __init__(self, capacity, priority_enabled=True):
        self.capacity = capacity
        self.priority_enabled = priority_enabled
        self.priority = []
        self.secondary = []
        self._ids = set()

    def __len__(self):
        return len(self.priority) + len(self.secondary)

    def __contains__(self, query_id):
        return query_id in self._ids

    def cache(self, query):
        if query.id in self._ids:
            raise DuplicateQueryError(f"query {query.id} is already buffered")
        self._ids.add(query.id)
        if not self.priority_enabled:
            self.secondary.append(query)
            return
        self.priority.append(query)
        if len(self.priority) > self.capacity:
            self.secondary.append(self.priority.pop(0))

    def next_chunk(self, size):
        return list(self.secondary[:size])

    def remove_delivered(self, query_ids):
        """Drop delivered queries from whichever list holds them."""
        gone = set(query_ids)
        self.priority = [q for q in self.priority if q.id not in gone]
        self.secondary = [q for q in self.secondary if q.id not in gone]
        self._ids -= gone


class SatelliteNode:
    """Onboard half of the system."""

    def __init__(self, config, archive, backend):
        """
        Args:
            config (SystemConfig): Validated configuration
            archive (SatelliteArchive): Capacity-bounded onboard archive
            backend: InferenceBackend for the onboard model
        """
        self.config = config
        self.archive = archive
        self.backend = backend
        self.buffer = TransmissionBuffer(config.priority_capacity, config.priority_enabled)

    def process_query(self, query):
        """
        Decide whether to answer onboard or send the query to the ground.

        Every failure path caches the query for transmission and returns a
        Transmit decision; Accept refreshes the LRU entries of the retrieved
        images in rank order.

        Returns:
            DispatchDecision
        """
        stage = self.match_query(query)
        if isinstance(stage, DispatchDecision):
            return stage
        return self.infer_query(query, stage)

    def match_query(self, query):
        """
        Retrieval and the matching test, which run before any inference.

        Returns:
            MatchedContext when the query goes on to the onboard model, else
            the Transmit DispatchDecision (the query is already buffered)
        """
        cfg = self.config
        rng = make_rng(cfg.rng_seed, query.id, RETRIEVAL_STREAM)
        try:
            retrieved = self.archive.retrieve(query, cfg.top_k, mode=cfg.retrieval_mode, rng=rng)
        except EmptyArchiveError:
            self.cache_for_transmission(query)
            return DispatchDecision(accepted=False, reason=EMPTY_ARCHIVE)

        ids = tuple(r.image_id for r in retrieved)
        survivors = matching_test(retrieved, cfg)
        if survivors is None:
            self.cache_for_transmission(query)
            return DispatchDecision(accepted=False, reason=INSUFFICIENT_CONTEXT,
                                    retrieved=ids, matching="reject")
        return MatchedContext(retrieved=ids, survivors=tuple(survivors))

    def infer_query(self, query, matched):
        """
        Onboard inference on matched context, then the cognitive test.

        Images evicted since retrieval are skipped when the LRU is refreshed.

        Returns:
            DispatchDecision
        """
        cfg = self.config
        out = self.backend.generate(query, list(matched.survivors))
        conf = confidence(out)
        if conf < cfg.confidence_threshold:
            self.cache_for_transmission(query)
            return DispatchDecision(accepted=False, reason=LOW_CONFIDENCE, confidence=conf,
                                    survivors=len(matched.survivors), retrieved=matched.retrieved,
                                    matching="pass", cognitive="fail")

        resident = [image_id for image_id in matched.retrieved if image_id in self.archive]
        if resident:
            self.archive.touch(resident)
        return DispatchDecision(accepted=True, answer=out.answer, confidence=conf,
                                survivors=len(matched.survivors), retrieved=matched.retrieved,
                                matching="pass", cognitive="pass")

    def cache_for_transmission(self, query):
        self.buffer.cache(query)
        logger.debug("query %d buffered (priority=%d secondary=%d)",
                     query.id, len(self.buffer.priority), len(self.buffer.secondary))

    def missing_ids(self, advertised_ids):
        """Advertised ids that are not resident, in advertised order."""
        return [image_id for image_id in advertised_ids if image_id not in self.archive]

    def apply_archive_update(self, records):
        evicted = self.archive.evict_and_insert(records, self.config.sat_archive_cap)
        logger.debug("archive update: %d records, %d evicted", len(records), len(evicted))
        return evicted
