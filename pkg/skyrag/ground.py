"""
Ground node: comprehensive archive, priority-first retrieval, the inference
task queue, archive-update planning, and exactly-once answering.
python_file: ground.py
"""

import logging
from collections import deque
from dataclasses import dataclass

from skyrag.core import make_rng
from skyrag.errors import EmptyArchiveError, UnknownIdError

logger = logging.getLogger(__name__)

PRIORITY = "priority"
SECONDARY = "secondary"

# Random stream used by the retrieval ablation modes on the ground
GROUND_RETRIEVAL_STREAM = 3


@dataclass(frozen=True)
class GroundTask:
    query: object
    context: tuple
    kind: str
    enqueue_time: float


class UpdatePlan:
    """Image ids advertised to the satellite in one priority round."""

    def __init__(self):
        self.metadata = []
        self._advertised = set()

    def __len__(self):
        return len(self.metadata)

    def __contains__(self, image_id):
        return image_id in self._advertised

    def add(self, image_ids):
        for image_id in image_ids:
            if image_id not in self._advertised:
                self._advertised.add(image_id)
                self.metadata.append(image_id)


class GroundNode:
    """Ground station half of the system."""

    def __init__(self, config, archive, backend):
        """
        Args:
            config (SystemConfig): Validated configuration
            archive (MultimodalArchive): The comprehensive ground archive
            backend: InferenceBackend for the ground model
        """
        self.config = config
        self.archive = archive
        self.backend = backend
        self.plan = UpdatePlan()
        self.priority_backlog = deque()
        self.parked = deque()
        self.priority_tasks = deque()
        self.secondary_tasks = deque()
        self.received = set()
        # (time, query id, class, priority backlog size) per retrieval
        self.retrieval_log = []

    def pending_tasks(self):
        return len(self.priority_tasks) + len(self.secondary_tasks)

    def begin_round(self):
        """Start a fresh update plan for the next priority batch."""
        self.plan = UpdatePlan()

    def _accept(self, query):
        if query.id in self.received:
            logger.debug("query %d already received; ignoring duplicate", query.id)
            return False
        self.received.add(query.id)
        return True

    def _retrieve(self, query):
        rng = make_rng(self.config.rng_seed, query.id, GROUND_RETRIEVAL_STREAM)
        try:
            return tuple(self.archive.retrieve(query, self.config.top_k,
                                               mode=self.config.retrieval_mode, rng=rng))
        except EmptyArchiveError:
            logger.warning("ground archive is empty; answering query %d without context", query.id)
            return ()

    def handle_priority_query(self, query, now=0.0):
        """
        Receive a priority query; it waits for retrieval ahead of any
        parked secondary query.
        """
        if self._accept(query):
            self.priority_backlog.append(query)
        return self.process_retrievals(now)

    def handle_priority_batch(self, queries, now=0.0):
        for query in queries:
            if self._accept(query):
                self.priority_backlog.append(query)
        return self.process_retrievals(now)

    def handle_secondary_chunk(self, queries, now=0.0):
        """
        Park a received secondary chunk. The ack is unconditional; retrieval
        waits until no priority query awaits retrieval.

        Returns:
            list: ids acknowledged (the whole chunk, duplicates included)
        """
        for query in queries:
            if self._accept(query):
                self.parked.append(query)
        self.process_retrievals(now)
        return [q.id for q in queries]

    def process_retrievals(self, now=0.0):
        """
        Drain the priority backlog, then parked secondary queries.

        Returns:
            list: image ids newly added to the update plan
        """
        added = []
        while self.priority_backlog:
            query = self.priority_backlog.popleft()
            context = self._retrieve(query)
            self.retrieval_log.append((now, query.id, PRIORITY, len(self.priority_backlog)))
            before = len(self.plan)
            self.plan.add(r.image_id for r in context)
            added.extend(self.plan.metadata[before:])
            self.priority_tasks.append(GroundTask(query, context, PRIORITY, now))
        while self.parked and not self.priority_backlog:
            query = self.parked.popleft()
            context = self._retrieve(query)
            self.retrieval_log.append((now, query.id, SECONDARY, len(self.priority_backlog)))
            self.secondary_tasks.append(GroundTask(query, context, SECONDARY, now))
        return added

    def resolve_missing(self, requested_ids):
        """
        Full records for ids the satellite reported missing.

        Raises:
            UnknownIdError: for an id that was never advertised
        """
        records = []
        for image_id in requested_ids:
            if image_id not in self.plan:
                raise UnknownIdError(f"image {image_id} was never advertised")
            records.append(self.archive.record(image_id))
        return records

    def next_task(self):
        if self.priority_tasks:
            return self.priority_tasks.popleft()
        if self.secondary_tasks:
            return self.secondary_tasks.popleft()
        return None

    def ground_inference_step(self):
        """
        Answer the head of the task queue, priority class first.

        Ground answers are final: there is no cognitive test.

        Returns:
            tuple: (GroundTask, InferenceOutput), or None when idle
        """
        task = self.next_task()
        if task is None:
            return None
        out = self.backend.generate(task.query, list(task.context))
        return task, out
