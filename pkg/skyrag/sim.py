"""
Deterministic discrete-event engine tying the satellite, the link and the
ground station together, plus the per-query metrics and run summary.
python_file: sim.py
"""

import csv
import heapq
import io
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from skyrag.archive import MultimodalArchive, SatelliteArchive
from skyrag.core import config_from_mapping, validate
from skyrag.embedding import provider_from_config
from skyrag.errors import InvariantViolation
from skyrag.ground import GroundNode
from skyrag.link import ACK, FULL_RECORDS, HierarchicalLink
from skyrag.satellite import DispatchDecision, SatelliteNode
from skyrag.workload import WorkloadParams, generate_workload

logger = logging.getLogger(__name__)

CAPTURE = "Capture"
ONBOARD_INFERENCE_DONE = "OnboardInferenceDone"
WINDOW_OPEN = "WindowOpen"
WINDOW_CLOSE = "WindowClose"
TRANSFER_DONE = "TransferDone"
CHUNK_ACK = "ChunkAck"
GROUND_INFERENCE_DONE = "GroundInferenceDone"

ONBOARD = "onboard"
GROUND = "ground"

QUERY_COLUMNS = (
    "query_id", "capture_time", "disposition", "answer_time", "latency", "correct",
    "matching", "cognitive", "reason", "confidence", "survivors", "onboard_wait",
    "delivered_time", "ground_wait", "compute_time",
)


@dataclass(order=True, frozen=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    data: object = field(compare=False, default=None)


class EventQueue:
    """Events ordered by (time, seq); seq is the insertion counter."""

    def __init__(self):
        self._heap = []
        self._seq = 0

    def __len__(self):
        return len(self._heap)

    def push(self, time, kind, data=None):
        event = Event(time, self._seq, kind, data)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def pop(self):
        return heapq.heappop(self._heap)

    def peek_time(self):
        return self._heap[0].time if self._heap else None


@dataclass
class QueryRecord:
    """Everything measured about one query."""

    query_id: int
    capture_time: float
    disposition: Optional[str] = None
    answer_time: Optional[float] = None
    correct: Optional[bool] = None
    matching: str = "skip"
    cognitive: str = "skip"
    reason: str = ""
    confidence: Optional[float] = None
    survivors: int = 0
    onboard_start: Optional[float] = None
    delivered_time: Optional[float] = None
    ground_start: Optional[float] = None
    compute_time: Optional[float] = None

    @property
    def answered(self):
        return self.disposition is not None

    @property
    def latency(self):
        if self.answer_time is None:
            return None
        return self.answer_time - self.capture_time

    @property
    def onboard_wait(self):
        if self.onboard_start is None:
            return None
        return self.onboard_start - self.capture_time

    @property
    def ground_wait(self):
        if self.ground_start is None or self.delivered_time is None:
            return None
        return self.ground_start - self.delivered_time

    def finish(self, disposition, answer_time, correct, compute_time):
        if self.disposition is not None:
            raise InvariantViolation(f"query {self.query_id} answered twice")
        self.disposition = disposition
        self.answer_time = answer_time
        self.correct = correct
        self.compute_time = compute_time

    def row(self):
        values = [getattr(self, name) for name in QUERY_COLUMNS]
        return [_cell(v) for v in values]


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunSummary:
    queries: int
    answered: int
    unanswered: int
    accuracy: float
    onboard_accuracy: float
    ground_accuracy: float
    onboard_fraction: float
    onboard_answers: int
    ground_answers: int
    mean_latency: float
    median_latency: float
    max_latency: float
    uplink_bytes: int
    downlink_bytes: int
    dropped_bytes: int
    windows: int
    evictions: int

    def to_text(self):
        lines = []
        for name in self.__dataclass_fields__:
            lines.append(f"{name} = {_cell(getattr(self, name))}")
        return "\n".join(lines) + "\n"


def _fraction(numerator, denominator):
    return numerator / denominator if denominator else 0.0


def summarize(records, link, windows, evictions):
    """
    Aggregate per-query records.

    Latency statistics and accuracy cover answered queries only.

    Returns:
        RunSummary
    """
    answered = [r for r in records if r.answered]
    onboard = [r for r in answered if r.disposition == ONBOARD]
    ground = [r for r in answered if r.disposition == GROUND]
    latencies = np.array([r.latency for r in answered], dtype=np.float64)
    return RunSummary(
        queries=len(records),
        answered=len(answered),
        unanswered=len(records) - len(answered),
        accuracy=_fraction(sum(r.correct for r in answered), len(answered)),
        onboard_accuracy=_fraction(sum(r.correct for r in onboard), len(onboard)),
        ground_accuracy=_fraction(sum(r.correct for r in ground), len(ground)),
        onboard_fraction=_fraction(len(onboard), len(answered)),
        onboard_answers=len(onboard),
        ground_answers=len(ground),
        mean_latency=float(latencies.mean()) if len(latencies) else 0.0,
        median_latency=float(np.median(latencies)) if len(latencies) else 0.0,
        max_latency=float(latencies.max()) if len(latencies) else 0.0,
        uplink_bytes=link.bytes_sent["up"],
        downlink_bytes=link.bytes_sent["down"],
        dropped_bytes=link.bytes_dropped,
        windows=windows,
        evictions=evictions,
    )


@dataclass
class Scenario:
    """
    Everything a run needs.

    Attributes:
        config (SystemConfig): System configuration
        corpus (list): ArchiveRecord list for the ground archive
        windows (list): ContactWindow schedule
        horizon (float): Captures happen in [0, horizon)
        satellite_backend: InferenceBackend onboard
        ground_backend: InferenceBackend on the ground
        drain (float): Extra time after the horizon for backlog to clear
        initial_records (list): Records pre-loaded onboard
        workload (list): Queries; generated from workload_params when None
        workload_params (WorkloadParams): Synthetic workload shape
        provider: EmbeddingProvider; synthetic from the config when None
        allow_degenerate (bool): Permit min_records > top_k
        check_invariants (bool): Assert archive invariants at every event
    """

    config: object
    corpus: list
    windows: list
    horizon: float
    satellite_backend: object
    ground_backend: object
    drain: float = 0.0
    initial_records: list = field(default_factory=list)
    workload: Optional[list] = None
    workload_params: Optional[WorkloadParams] = None
    provider: object = None
    allow_degenerate: bool = False
    check_invariants: bool = True

    def with_config(self, **changes):
        """Copy with config fields changed; values are type-coerced."""
        config = config_from_mapping({**self.config.model_dump(), **changes})
        return replace(self, config=config)

    def queries(self):
        if self.workload is not None:
            return [q for q in self.workload if q.capture_time < self.horizon]
        return generate_workload(self.config, self.horizon, self.workload_params)


@dataclass
class RunResult:
    summary: RunSummary
    records: list
    trace: list
    events: list
    backlog: list
    retrieval_log: list
    journal: list

    def summary_text(self):
        return self.summary.to_text()

    def queries_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(QUERY_COLUMNS)
        for record in self.records:
            writer.writerow(record.row())
        return out.getvalue()

    def trace_text(self):
        return "".join(entry.format() + "\n" for entry in self.trace)

    def events_text(self):
        return "".join(line + "\n" for line in self.events)

    def backlog_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("time", "backlog"))
        for time, backlog in self.backlog:
            writer.writerow((repr(time), backlog))
        return out.getvalue()


class Simulation:
    """One run of a scenario."""

    def __init__(self, scenario):
        """
        Args:
            scenario (Scenario): Run definition

        Raises:
            ConfigError: if the configuration is invalid
        """
        self.scenario = scenario
        self.config = validate(scenario.config, allow_degenerate=scenario.allow_degenerate)
        provider = scenario.provider or provider_from_config(self.config)

        ground_archive = MultimodalArchive(provider)
        for record in scenario.corpus:
            ground_archive.insert(record)
        self.sat_archive = SatelliteArchive(provider, self.config.sat_archive_cap)
        self.sat_archive.evict_and_insert(list(scenario.initial_records))

        self.satellite = SatelliteNode(self.config, self.sat_archive, scenario.satellite_backend)
        self.ground = GroundNode(self.config, ground_archive, scenario.ground_backend)
        self.link = HierarchicalLink(self.config, self.satellite, self.ground)

        self.queue = EventQueue()
        self.records = {}
        self.onboard_waiting = deque()
        self.onboard_busy = False
        self.ground_busy = False
        self.evictions = 0
        self.event_log = []
        self.backlog = []
        self._captured = 0
        self._answered = 0

    @property
    def end_time(self):
        return self.scenario.horizon + self.scenario.drain

    def _schedule(self):
        queries = self.scenario.queries()
        ids = [q.id for q in queries]
        if len(set(ids)) != len(ids):
            raise InvariantViolation("workload contains duplicate query ids")
        for query in queries:
            self.records[query.id] = QueryRecord(query.id, query.capture_time)
            self.queue.push(query.capture_time, CAPTURE, query)
        windows = [w for w in self.scenario.windows if w.open_time < self.end_time]
        for window in windows:
            self.queue.push(window.open_time, WINDOW_OPEN, window)
            self.queue.push(window.close_time, WINDOW_CLOSE, window)
        return len(windows)

    def run(self):
        """
        Process events in (time, seq) order until the queue empties or the
        next event lies beyond horizon + drain.

        Returns:
            RunResult
        """
        n_windows = self._schedule()
        logger.info("run start: %d queries, %d windows", len(self.records), n_windows)
        handlers = {
            CAPTURE: self._on_capture,
            ONBOARD_INFERENCE_DONE: self._on_onboard_done,
            WINDOW_OPEN: self._on_window_open,
            WINDOW_CLOSE: self._on_window_close,
            TRANSFER_DONE: self._on_transfer_done,
            CHUNK_ACK: self._on_transfer_done,
            GROUND_INFERENCE_DONE: self._on_ground_done,
        }
        while self.queue and self.queue.peek_time() <= self.end_time:
            event = self.queue.pop()
            detail = handlers[event.kind](event)
            self.event_log.append(f"{event.time!r} {event.seq} {event.kind} {detail}")
            self._note_backlog(event.time)
            if self.scenario.check_invariants:
                self.check_invariants()

        records = [self.records[qid] for qid in sorted(self.records)]
        unanswered = sum(1 for r in records if not r.answered)
        if unanswered:
            logger.warning("%d queries unanswered at end of run", unanswered)
        summary = summarize(records, self.link, n_windows, self.evictions)
        logger.info("run finished: accuracy=%.3f mean latency=%.3f", summary.accuracy, summary.mean_latency)
        return RunResult(
            summary=summary,
            records=records,
            trace=list(self.link.trace),
            events=self.event_log,
            backlog=self.backlog,
            retrieval_log=list(self.ground.retrieval_log),
            journal=list(self.sat_archive.journal),
        )

    def _note_backlog(self, now):
        backlog = self._captured - self._answered
        if not self.backlog or self.backlog[-1][1] != backlog:
            self.backlog.append((now, backlog))

    def _on_capture(self, event):
        query = event.data
        self.onboard_waiting.append(query)
        self._captured += 1
        self._start_onboard(event.time)
        return f"query={query.id}"

    def _start_onboard(self, now):
        """
        Dequeue waiting queries. Retrieval and the matching test take no
        server time; only a query that passes them occupies the onboard model.
        """
        while not self.onboard_busy and self.onboard_waiting:
            query = self.onboard_waiting.popleft()
            self.records[query.id].onboard_start = now
            stage = self.satellite.match_query(query)
            if isinstance(stage, DispatchDecision):
                self._note_decision(query, stage, now)
                continue
            self.onboard_busy = True
            self.queue.push(now + self.config.onboard_inference_time, ONBOARD_INFERENCE_DONE, (query, stage))

    def _on_onboard_done(self, event):
        (query, matched), now = event.data, event.time
        decision = self.satellite.infer_query(query, matched)
        self._note_decision(query, decision, now)
        self.onboard_busy = False
        self._start_onboard(now)
        return f"query={query.id} {decision.outcome}"

    def _note_decision(self, query, decision, now):
        record = self.records[query.id]
        record.matching = decision.matching
        record.cognitive = decision.cognitive
        record.confidence = decision.confidence
        record.survivors = decision.survivors
        if decision.accepted:
            record.finish(ONBOARD, now, decision.answer == query.ground_truth,
                          self.config.onboard_inference_time)
            self._answered += 1
        else:
            record.reason = decision.reason
            self._pump(now)

    def _on_window_open(self, event):
        window = event.data
        self.link.open_window(window)
        self._pump(event.time)
        return f"[{window.open_time!r},{window.close_time!r})"

    def _on_window_close(self, event):
        self.link.close_window()
        return f"[{event.data.open_time!r},{event.data.close_time!r})"

    def _pump(self, now):
        end = self.link.pump(now)
        if end is not None:
            msg = self.link.in_flight[0]
            self.queue.push(end, CHUNK_ACK if msg.kind == ACK else TRANSFER_DONE, msg.kind)

    def _on_transfer_done(self, event):
        msg = self.link.complete(event.time)
        if msg.kind == FULL_RECORDS:
            self.evictions = sum(1 for op, _ in self.sat_archive.journal if op == "evict")
        self._start_ground(event.time)
        self._pump(event.time)
        return f"{msg.kind} items={len(msg.items)}"

    def _start_ground(self, now):
        if self.ground_busy:
            return
        step = self.ground.ground_inference_step()
        if step is None:
            return
        task, out = step
        record = self.records[task.query.id]
        record.delivered_time = task.enqueue_time
        record.ground_start = now
        self.ground_busy = True
        self.queue.push(now + self.config.ground_inference_time, GROUND_INFERENCE_DONE, (task, out))

    def _on_ground_done(self, event):
        task, out = event.data
        query = task.query
        self.records[query.id].finish(GROUND, event.time, out.answer == query.ground_truth,
                                      self.config.ground_inference_time)
        self._answered += 1
        self.ground_busy = False
        self._start_ground(event.time)
        return f"query={query.id} {task.kind}"

    def check_invariants(self):
        """Raise InvariantViolation if the onboard archive state is inconsistent."""
        archive = self.sat_archive
        if len(archive) > self.config.sat_archive_cap:
            raise InvariantViolation(f"satellite archive holds {len(archive)} images, cap {self.config.sat_archive_cap}")
        if len(archive.lru) != len(archive) or any(i not in archive for i in archive.lru.order()):
            raise InvariantViolation("LRU queue and archive membership differ")


def run(scenario):
    """Run a scenario once and return its RunResult."""
    return Simulation(scenario).run()
