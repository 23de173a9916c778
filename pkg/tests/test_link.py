from pathlib import Path

import pytest

from skyrag.archive import MultimodalArchive, SatelliteArchive
from skyrag.core import SystemConfig
from skyrag.errors import OverlapError, ScheduleParseError
from skyrag.ground import GroundNode
from skyrag.inference import OracleBackend, OracleBackendParams
from skyrag.link import (
    ACK,
    DELIVERED,
    DROPPED,
    FULL_RECORDS,
    IDLE,
    METADATA,
    MISSING_REQUEST,
    PRIORITY_QUERIES,
    SECONDARY_CHUNK,
    UP,
    ContactWindow,
    HierarchicalLink,
    TransferRecord,
    generate_windows,
    load_windows,
    parse_schedule_text,
    run_window,
    transfer_time,
)
from skyrag.satellite import SatelliteNode


def test_generate_windows_is_periodic():
    windows = generate_windows(95.0, 5.0, 300.0)
    assert [(w.open_time, w.close_time) for w in windows] == [(0, 5), (95, 100), (190, 195), (285, 290)]


def test_generate_windows_duty_cycle():
    windows = generate_windows(5700.0, 300.0, 57000.0)
    assert len(windows) == 10
    assert sum(w.duration for w in windows) / 57000.0 == pytest.approx(300 / 5700)


@pytest.mark.parametrize("period,duration", [(10.0, 10.0), (10.0, 0.0), (10.0, 12.0)])
def test_generate_windows_rejects_bad_geometry(period, duration):
    with pytest.raises(ValueError):
        generate_windows(period, duration, 100.0)


def test_window_contains_is_half_open():
    window = ContactWindow(10.0, 20.0)
    assert window.contains(10.0)
    assert not window.contains(20.0)


def test_parse_schedule_text():
    windows = parse_schedule_text("# orbit\n0 300\n\n5700 6000  # second pass\n")
    assert [(w.open_time, w.close_time) for w in windows] == [(0, 300), (5700, 6000)]
    assert parse_schedule_text("") == []


def test_load_windows_reads_shipped_schedule():
    schedule = Path(__file__).resolve().parents[1] / "scenarios" / "schedule.txt"
    windows = load_windows(str(schedule))
    assert [(w.open_time, w.close_time) for w in windows] == [(0, 300), (5700, 6000), (11400, 11700)]


def test_parse_schedule_rejects_overlap():
    with pytest.raises(OverlapError):
        parse_schedule_text("0 300\n200 400\n")


@pytest.mark.parametrize("text", ["0\n", "0 1 2\n", "a b\n", "5 3\n"])
def test_parse_schedule_rejects_bad_lines(text):
    with pytest.raises(ScheduleParseError):
        parse_schedule_text(text)


def test_transfer_time():
    assert transfer_time(3_750_000, 30e6) == pytest.approx(1.0)
    assert transfer_time(0, 30e6) == 0.0
    assert transfer_time(5e9, 1.2e9) == pytest.approx(33.333, abs=1e-3)
    with pytest.raises(ValueError):
        transfer_time(10, 0.0)


def test_transfer_record_format():
    record = TransferRecord(0.5, UP, PRIORITY_QUERIES, 120, "priority_up", DELIVERED, (1, 2))
    assert record.format() == "0.5 up PriorityQueries 120 priority_up delivered 1,2"
    assert TransferRecord(1.0, UP, ACK, 64, "ack_down", DROPPED, ()).format().endswith(" -")


def _nodes(provider, make_record, config, satellite_ids=(), satellite_label="b", record_bytes=1000):
    sat_archive = SatelliteArchive(provider, config.sat_archive_cap)
    if satellite_ids:
        sat_archive.evict_and_insert([make_record(i, label=satellite_label) for i in satellite_ids])
    backend = OracleBackend(OracleBackendParams(base_accuracy=1.0))
    satellite = SatelliteNode(config, sat_archive, backend)
    ground_archive = MultimodalArchive(provider)
    for label in "ab":
        for i in range(5):
            ground_archive.insert(make_record(f"{label}{i}", label=label, record_bytes=record_bytes))
    ground = GroundNode(config, ground_archive, OracleBackend(OracleBackendParams(base_accuracy=1.0), "ground"))
    return satellite, ground


def test_idle_window_sends_nothing(basis_provider, make_record):
    config = SystemConfig()
    satellite, ground = _nodes(basis_provider, make_record, config)
    assert run_window(ContactWindow(0.0, 5.0), satellite, ground, config) == []


def test_priority_round_updates_satellite_archive(basis_provider, make_record, make_query):
    config = SystemConfig()
    satellite, ground = _nodes(basis_provider, make_record, config, [f"s{i}" for i in range(20)])
    for qid in range(2):
        satellite.cache_for_transmission(make_query(qid, label="a"))
    link = HierarchicalLink(config, satellite, ground)
    trace = run_window(ContactWindow(0.0, 10.0), satellite, ground, config, link)

    assert [r.kind for r in trace] == [PRIORITY_QUERIES, METADATA, MISSING_REQUEST, FULL_RECORDS]
    assert all(r.status == DELIVERED for r in trace)
    assert trace[1].items == ("a0", "a1", "a2", "a3", "a4")
    assert trace[2].items == ("a0", "a1", "a2", "a3", "a4")
    assert trace[3].size_bytes == 64 + 5 * 1000
    assert satellite.archive.lru.order()[:5] == ["a0", "a1", "a2", "a3", "a4"]
    assert "s19" not in satellite.archive
    assert len(satellite.archive) == 20
    assert len(satellite.buffer) == 0
    assert link.phase == IDLE
    assert [t.query.id for t in ground.priority_tasks] == [0, 1]


def test_round_with_nothing_missing_sends_empty_records(basis_provider, make_record, make_query):
    config = SystemConfig()
    satellite, ground = _nodes(basis_provider, make_record, config,
                               [f"a{i}" for i in range(5)], satellite_label="a")
    satellite.cache_for_transmission(make_query(0, label="a"))
    trace = run_window(ContactWindow(0.0, 10.0), satellite, ground, config)
    assert trace[2].kind == MISSING_REQUEST
    assert trace[2].items == ()
    assert trace[3].kind == FULL_RECORDS
    assert trace[3].items == ()
    assert trace[3].format().endswith(" -")


def test_chunk_cut_by_closure_is_resent_next_window(basis_provider, make_record, make_query):
    config = SystemConfig(priority_enabled=False, secondary_chunk_size=2,
                          uplink_rate=8e6, downlink_rate=4e6)
    satellite, ground = _nodes(basis_provider, make_record, config)
    for qid in range(5):
        satellite.cache_for_transmission(make_query(qid, image_bytes=100_000))
    link = HierarchicalLink(config, satellite, ground)

    first = run_window(ContactWindow(0.0, 0.45), satellite, ground, config, link)
    assert [(r.kind, r.status, r.items) for r in first] == [
        (SECONDARY_CHUNK, DELIVERED, (0, 1)),
        (ACK, DELIVERED, (0, 1)),
        (SECONDARY_CHUNK, DELIVERED, (2, 3)),
        (ACK, DELIVERED, (2, 3)),
        (SECONDARY_CHUNK, DROPPED, (4,)),
    ]
    assert [q.id for q in satellite.buffer.secondary] == [4]
    assert link.bytes_sent[UP] <= config.uplink_rate * 0.45 / 8

    second = run_window(ContactWindow(1.0, 2.0), satellite, ground, config, link)
    assert [(r.kind, r.status, r.items) for r in second] == [
        (SECONDARY_CHUNK, DELIVERED, (4,)),
        (ACK, DELIVERED, (4,)),
    ]
    assert len(satellite.buffer) == 0
    assert ground.received == {0, 1, 2, 3, 4}
    assert link.bytes_dropped > 0


def test_message_longer_than_window_is_dropped_and_blocks(basis_provider, make_record, make_query):
    config = SystemConfig(priority_enabled=False)
    satellite, ground = _nodes(basis_provider, make_record, config)
    satellite.cache_for_transmission(make_query(0, image_bytes=10_000_000))
    link = HierarchicalLink(config, satellite, ground)
    link.open_window(ContactWindow(0.0, 1.0))
    assert link.pump(0.0) is None
    assert link.blocked
    assert link.trace[-1].status == DROPPED
    assert link.pump(0.5) is None
    assert len(link.trace) == 1


def test_archive_update_is_split_across_windows(basis_provider, make_record, make_query):
    config = SystemConfig(downlink_rate=4e6)
    satellite, ground = _nodes(basis_provider, make_record, config, [f"s{i}" for i in range(20)],
                               record_bytes=100_000)
    satellite.cache_for_transmission(make_query(0, label="a"))
    link = HierarchicalLink(config, satellite, ground)

    first = run_window(ContactWindow(0.0, 0.5), satellite, ground, config, link)
    assert [(r.kind, r.status, r.items) for r in first[3:]] == [
        (FULL_RECORDS, DELIVERED, ("a0", "a1")),
        (FULL_RECORDS, DROPPED, ("a2",)),
    ]
    assert first[3].size_bytes == 64 + 2 * 100_000
    assert "a0" in satellite.archive and "a1" in satellite.archive
    assert "a2" not in satellite.archive
    assert link.phase != IDLE

    second = run_window(ContactWindow(1.0, 2.0), satellite, ground, config, link)
    assert [(r.kind, r.status, r.items) for r in second] == [
        (FULL_RECORDS, DELIVERED, ("a2", "a3", "a4")),
    ]
    assert all(f"a{i}" in satellite.archive for i in range(5))
    assert link.phase == IDLE


def test_record_larger_than_any_window_is_left_out(basis_provider, make_record, make_query):
    config = SystemConfig(downlink_rate=4e6)
    satellite, ground = _nodes(basis_provider, make_record, config, [f"s{i}" for i in range(20)],
                               record_bytes=100_000)
    satellite.cache_for_transmission(make_query(0, label="a"))
    link = HierarchicalLink(config, satellite, ground)

    trace = run_window(ContactWindow(0.0, 0.1), satellite, ground, config, link)
    dropped = [r for r in trace if r.kind == FULL_RECORDS]
    assert [(r.status, r.items) for r in dropped] == [(DROPPED, (f"a{i}",)) for i in range(5)]
    assert link.phase == IDLE
    assert not link.blocked
    assert len(satellite.archive) == 20
