import pytest

from skyrag.archive import RetrievedRecord, SatelliteArchive
from skyrag.core import ImagePayload, SystemConfig
from skyrag.errors import DuplicateQueryError
from skyrag.inference import InferenceOutput, OracleBackend, OracleBackendParams
from skyrag.satellite import (
    EMPTY_ARCHIVE,
    INSUFFICIENT_CONTEXT,
    LOW_CONFIDENCE,
    DispatchDecision,
    MatchedContext,
    SatelliteNode,
    TransmissionBuffer,
    matching_test,
)


class FixedBackend:
    def __init__(self, probs, answer="3"):
        self.out = InferenceOutput(answer, probs)
        self.calls = 0

    def generate(self, query, context):
        self.calls += 1
        return self.out


def _hit(n, s_m, s_i):
    return RetrievedRecord(ImagePayload(str(n), n, "a"), "q", "a", s_m, s_i, s_m + s_i)


def test_matching_test_keeps_records_passing_both_thresholds():
    hits = [_hit(1, 0.9, 0.95), _hit(2, 0.9, 0.9), _hit(3, 0.7, 0.99), _hit(4, 0.8, 0.94), _hit(5, 0.85, 0.97)]
    survivors = matching_test(hits, SystemConfig())
    assert [h.image_id for h in survivors] == ["1", "4", "5"]


def test_matching_test_rejects_when_too_few_survive():
    hits = [_hit(1, 0.9, 0.95), _hit(2, 0.9, 0.9), _hit(3, 0.81, 0.99)]
    assert matching_test(hits, SystemConfig(min_records=3)) is None


def test_matching_test_disabled_with_zero_min_records():
    hits = [_hit(1, 0.0, 0.0)]
    assert matching_test(hits, SystemConfig(min_records=0)) == hits


def test_buffer_overflow_demotes_oldest_priority(make_query):
    buffer = TransmissionBuffer(capacity=2)
    for qid in range(1, 6):
        buffer.cache(make_query(qid))
    assert [q.id for q in buffer.priority] == [4, 5]
    assert [q.id for q in buffer.secondary] == [1, 2, 3]
    assert [q.id for q in buffer.next_chunk(2)] == [1, 2]
    buffer.remove_delivered([1, 5])
    assert [q.id for q in buffer.priority] == [4]
    assert [q.id for q in buffer.secondary] == [2, 3]
    assert 1 not in buffer
    assert len(buffer) == 3


def test_buffer_without_priority_tier(make_query):
    buffer = TransmissionBuffer(capacity=2, priority_enabled=False)
    for qid in range(3):
        buffer.cache(make_query(qid))
    assert buffer.priority == []
    assert [q.id for q in buffer.secondary] == [0, 1, 2]


def test_buffer_rejects_duplicate(make_query):
    buffer = TransmissionBuffer(capacity=2)
    buffer.cache(make_query(1))
    with pytest.raises(DuplicateQueryError):
        buffer.cache(make_query(1))


def _node(provider, make_record, backend, labels=("a",), per_label=5, **config):
    cfg = SystemConfig(**config)
    archive = SatelliteArchive(provider, cfg.sat_archive_cap)
    for label in labels:
        archive.evict_and_insert([make_record(f"{label}{i}", label=label) for i in range(per_label)])
    return SatelliteNode(cfg, archive, backend)


def test_confident_answer_is_accepted_and_refreshes_lru(basis_provider, make_record, make_query):
    backend = OracleBackend(OracleBackendParams(base_accuracy=1.0, correct_conf_mean=0.95, conf_spread=0.0))
    node = _node(basis_provider, make_record, backend, labels=("a", "b"))
    assert node.archive.lru.order()[:5] == ["b0", "b1", "b2", "b3", "b4"]

    decision = node.process_query(make_query(0, label="a"))
    assert decision.accepted
    assert decision.outcome == "accept"
    assert decision.answer == "3"
    assert decision.confidence == 0.95
    assert decision.survivors == 5
    assert decision.retrieved == ("a0", "a1", "a2", "a3", "a4")
    assert node.archive.lru.order() == ["a0", "a1", "a2", "a3", "a4", "b0", "b1", "b2", "b3", "b4"]
    assert len(node.buffer) == 0


def test_low_confidence_is_transmitted(basis_provider, make_record, make_query):
    node = _node(basis_provider, make_record, FixedBackend((0.5, 0.5)))
    before = node.archive.lru.order()
    decision = node.process_query(make_query(0, label="a"))
    assert not decision.accepted
    assert decision.reason == LOW_CONFIDENCE
    assert decision.cognitive == "fail"
    assert decision.confidence == 0.5
    assert 0 in node.buffer
    assert node.archive.lru.order() == before


def test_dissimilar_archive_is_insufficient_context(basis_provider, make_record, make_query):
    backend = FixedBackend((0.99,))
    node = _node(basis_provider, make_record, backend, labels=("b",))
    decision = node.process_query(make_query(0, label="a"))
    assert decision.reason == INSUFFICIENT_CONTEXT
    assert decision.matching == "reject"
    assert backend.calls == 0
    assert 0 in node.buffer


def test_empty_archive_is_transmitted(basis_provider, make_record, make_query):
    node = _node(basis_provider, make_record, FixedBackend((0.99,)), labels=())
    decision = node.process_query(make_query(0))
    assert decision.reason == EMPTY_ARCHIVE
    assert 0 in node.buffer


def test_missing_ids_and_archive_update(basis_provider, make_record):
    node = _node(basis_provider, make_record, FixedBackend((0.99,)), per_label=20)
    assert node.missing_ids(["a3", "n0", "a19", "n1"]) == ["n0", "n1"]
    evicted = node.apply_archive_update([make_record(f"n{i}") for i in range(3)])
    assert evicted == ["a19", "a18", "a17"]
    assert len(node.archive) == node.config.sat_archive_cap


def test_matching_runs_before_inference(basis_provider, make_record, make_query):
    backend = FixedBackend((0.99,))
    node = _node(basis_provider, make_record, backend)
    matched = node.match_query(make_query(0, label="a"))
    assert isinstance(matched, MatchedContext)
    assert matched.retrieved == ("a0", "a1", "a2", "a3", "a4")
    assert backend.calls == 0

    rejected = node.match_query(make_query(1, label="b"))
    assert isinstance(rejected, DispatchDecision)
    assert rejected.reason == INSUFFICIENT_CONTEXT
    assert 1 in node.buffer


def test_inference_tolerates_eviction_after_matching(basis_provider, make_record, make_query):
    node = _node(basis_provider, make_record, FixedBackend((0.99,)), sat_archive_cap=5)
    matched = node.match_query(make_query(0, label="a"))
    evicted = node.apply_archive_update([make_record("n0", label="b")])
    assert evicted == ["a4"]
    decision = node.infer_query(make_query(0, label="a"), matched)
    assert decision.accepted
    assert decision.retrieved == ("a0", "a1", "a2", "a3", "a4")
    assert "a4" not in node.archive
    assert node.archive.lru.order()[:4] == ["a0", "a1", "a2", "a3"]
