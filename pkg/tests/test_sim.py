import pytest

from skyrag.errors import ConfigError, InvariantViolation
from skyrag.link import ContactWindow, generate_windows
from skyrag.satellite import INSUFFICIENT_CONTEXT
from skyrag.sim import GROUND, ONBOARD, QUERY_COLUMNS, EventQueue, QueryRecord, Simulation, run


def test_event_queue_orders_by_time_then_insertion():
    queue = EventQueue()
    queue.push(2.0, "b")
    queue.push(1.0, "a")
    queue.push(2.0, "c")
    assert [queue.pop().kind for _ in range(3)] == ["a", "b", "c"]
    assert queue.peek_time() is None


def test_query_record_answers_once():
    record = QueryRecord(1, 0.0)
    record.finish(ONBOARD, 1.5, True, 1.5)
    assert record.latency == 1.5
    with pytest.raises(InvariantViolation):
        record.finish(GROUND, 3.0, False, 0.3)


def test_query_record_row_formatting():
    record = QueryRecord(4, 8.0)
    row = record.row()
    assert len(row) == len(QUERY_COLUMNS)
    assert row[:3] == ["4", "8.0", ""]
    record.finish(ONBOARD, 9.5, False, 1.5)
    assert record.row()[3:6] == ["9.5", "1.5", "false"]


def test_zero_horizon_produces_empty_run(synthetic_scenario):
    result = run(synthetic_scenario(horizon=0.0))
    assert result.summary.queries == 0
    assert result.summary.mean_latency == 0.0
    assert result.queries_csv().splitlines() == [",".join(QUERY_COLUMNS)]


def test_invalid_config_is_rejected_before_running(synthetic_scenario):
    with pytest.raises(ConfigError):
        Simulation(synthetic_scenario(cfg_min_records=6))


def test_everything_answered_onboard_when_filters_are_off(synthetic_scenario):
    scenario = synthetic_scenario(horizon=20.0, cfg_min_records=0, cfg_confidence_threshold=0.0)
    summary = run(scenario).summary
    assert summary.queries == 10
    assert summary.onboard_answers == 10
    assert summary.onboard_fraction == 1.0
    assert summary.max_latency == pytest.approx(1.5)
    assert summary.uplink_bytes == 0


def test_everything_goes_to_ground_when_matching_cannot_pass(synthetic_scenario):
    scenario = synthetic_scenario(horizon=40.0, drain=200.0, windows=[ContactWindow(50.0, 150.0)],
                                  allow_degenerate=True, cfg_min_records=6, cfg_priority_capacity=2)
    result = run(scenario)
    assert result.summary.ground_answers == 20
    assert result.summary.onboard_answers == 0
    assert result.summary.unanswered == 0
    for record in result.records:
        assert record.disposition == GROUND
        assert record.reason == INSUFFICIENT_CONTEXT
        assert record.matching == "reject"
        assert record.answer_time >= 50.0


def test_unanswered_queries_are_counted(synthetic_scenario):
    scenario = synthetic_scenario(horizon=20.0, allow_degenerate=True, cfg_min_records=6)
    summary = run(scenario).summary
    assert summary.unanswered == 10
    assert summary.answered == 0
    assert summary.accuracy == 0.0


def test_runs_are_deterministic(synthetic_scenario):
    def once():
        scenario = synthetic_scenario(horizon=300.0, drain=200.0,
                                      windows=generate_windows(95.0, 5.0, 500.0), cfg_priority_capacity=4)
        return run(scenario)

    first, second = once(), once()
    assert first.queries_csv() == second.queries_csv()
    assert first.trace_text() == second.trace_text()
    assert first.events_text() == second.events_text()
    assert first.summary == second.summary


def test_seed_changes_the_run(synthetic_scenario):
    a = run(synthetic_scenario(horizon=100.0, cfg_rng_seed=1))
    b = run(synthetic_scenario(horizon=100.0, cfg_rng_seed=2))
    assert a.queries_csv() != b.queries_csv()


def test_lru_journal_replays_to_final_order(synthetic_scenario):
    scenario = synthetic_scenario(horizon=300.0, drain=200.0,
                                  windows=generate_windows(95.0, 5.0, 500.0), cfg_priority_capacity=4)
    sim = Simulation(scenario)
    result = sim.run()
    naive = []
    for op, ids in result.journal:
        if op == "evict":
            assert naive.pop() == ids[0]
        else:
            for image_id in reversed(ids):
                if image_id in naive:
                    naive.remove(image_id)
                naive.insert(0, image_id)
    assert naive == sim.sat_archive.lru.order()
    assert result.summary.evictions == sum(1 for op, _ in result.journal if op == "evict")


def test_backlog_series_tracks_captured_minus_answered(synthetic_scenario):
    result = run(synthetic_scenario(horizon=20.0, cfg_min_records=0, cfg_confidence_threshold=0.0))
    assert result.backlog[0] == (0.0, 1)
    assert max(b for _, b in result.backlog) == 1
    assert result.backlog[-1][1] == 0
    assert result.backlog_csv().startswith("time,backlog\n")


def test_rejected_queries_do_not_occupy_the_onboard_model(synthetic_scenario):
    scenario = synthetic_scenario(horizon=20.0, allow_degenerate=True, cfg_min_records=6,
                                  cfg_onboard_inference_time=10.0)
    result = run(scenario)
    assert len(result.records) == 10
    assert [r.onboard_wait for r in result.records] == [0.0] * 10
    assert all(r.matching == "reject" for r in result.records)
    assert not any(" OnboardInferenceDone " in line for line in result.events)


def test_only_matched_queries_wait_for_the_onboard_model(synthetic_scenario):
    scenario = synthetic_scenario(horizon=20.0, drain=20.0, cfg_min_records=0, cfg_confidence_threshold=0.0,
                                  cfg_onboard_inference_time=3.0)
    result = run(scenario)
    # captures every 2 s against a 3 s model: each query waits one second longer
    assert [r.onboard_wait for r in result.records] == pytest.approx([float(i) for i in range(10)])
