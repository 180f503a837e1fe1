"""Event engine and time-stepped oracle: stage composition, determinism,
conservation, loss handling, and cross-validation between the two routes."""

import dataclasses
import math

import numpy as np
import pytest
from conftest import (
    budget_scenario,
    max_timestamp_diff,
    overload_scenario,
    stable_scenario,
)

from edgeloop import _backend
from edgeloop.engine import (
    TRACE_CSV_COLUMNS,
    EventKind,
    _uplink_walk_py,
    derive_run_params,
    loss_bit_generator,
    metrics_to_dict,
    simulate,
    write_trace_csv,
)
from edgeloop.model import (
    EdgeSampling,
    EncodingKind,
    EncodingMode,
    RadioConfig,
    ScenarioConfig,
    SensorProfile,
    TddPattern,
    validate_scenario,
)
from edgeloop.oracle import OracleTooLarge, oracle_simulate
from edgeloop.radio import UnsupportedBandwidth, ZeroCapacity, packetize, transfer_duration

needs_core = pytest.mark.skipif(not _backend.HAVE_CORE, reason="compiled extension not built")


def tiny_lossy_scenario(per=1.0, max_retx=0, duration=250.0):
    return validate_scenario(
        ScenarioConfig(
            sensor=SensorProfile(frame_bytes=500_000, target_fps=5.0, acquisition_ms=200.0),
            radio=RadioConfig(packet_error_rate=per, max_retransmissions=max_retx),
            duration_ms=duration,
            seed=4,
        )
    )


# --- event kinds ---------------------------------------------------------------


def test_emergency_events_outrank_all_kinds():
    others = [k for k in EventKind if k not in (EventKind.EMERGENCY_ISSUED, EventKind.EMERGENCY_DELIVERED)]
    assert all(EventKind.EMERGENCY_ISSUED < k for k in others)
    assert all(EventKind.EMERGENCY_DELIVERED < k for k in others)


def test_event_ordering_contract():
    from edgeloop.engine import Event

    assert Event(5.0, EventKind.EMERGENCY_ISSUED, 9) < Event(5.0, EventKind.CAPTURE_DONE, 0)
    assert Event(4.9, EventKind.DOWNLINK_DONE, 0) < Event(5.0, EventKind.EMERGENCY_ISSUED, 1)
    assert Event(5.0, EventKind.CAPTURE_DONE, 0) < Event(5.0, EventKind.CAPTURE_DONE, 1)


# --- closed-form latency budget ---------------------------------------------------


def test_ideal_link_latency_is_stage_sum():
    # 16 (grant) + 0 (serialization) + 55 (edge midpoint) + 2 (DL grant) = 73
    metrics = simulate(budget_scenario())
    assert metrics.frames_total == 15
    for trace in metrics.frame_traces:
        latency = trace.t_dl_done - trace.t_encode_done
        assert latency == pytest.approx(73.0, abs=1e-9)
        assert latency < 100.0


def test_encode_latency_excluded_from_comm_edge_budget():
    scenario = validate_scenario(
        dataclasses.replace(
            budget_scenario(),
            encoding=EncodingMode(kind=EncodingKind.SEMANTIC, ratio=60.0, encode_latency_ms=25.0),
        )
    )
    metrics = simulate(scenario)
    for trace in metrics.frame_traces:
        assert trace.t_encode_done - trace.t_capture_done == pytest.approx(25.0)
        assert trace.t_dl_done - trace.t_encode_done == pytest.approx(73.0, abs=1e-9)


# --- loss and drops ----------------------------------------------------------------


def test_certain_loss_drops_the_only_frame():
    metrics = simulate(tiny_lossy_scenario(per=1.0, max_retx=0))
    assert metrics.frames_total == 1
    assert metrics.frames_dropped == 1
    trace = metrics.frame_traces[0]
    assert trace.dropped
    assert trace.t_ul_done is None and trace.t_edge_done is None and trace.t_dl_done is None
    assert metrics.dl_bytes_delivered == 0
    assert metrics.ul_bytes_delivered == 0
    assert math.isnan(metrics.comm_edge_p95_ms)


def test_retransmissions_recover_when_allowed():
    lossy = validate_scenario(
        ScenarioConfig(
            sensor=SensorProfile(frame_bytes=200_000, target_fps=5.0, acquisition_ms=200.0),
            radio=RadioConfig(packet_error_rate=0.05, max_retransmissions=4),
            duration_ms=2000.0,
            seed=12,
        )
    )
    metrics = simulate(lossy)
    assert metrics.frames_dropped == 0
    assert sum(t.retx_count for t in metrics.frame_traces) > 0
    assert metrics.ul_retx_bytes > 0


# --- walk timing ---------------------------------------------------------------------


def test_walk_retransmission_timing_hand_computed():
    # one 140-byte-wire packet at 1 Mbps: tx = 1.12 ms; flat 16 ms grant wait;
    # certain loss with two resends -> drop at t0 + 3*tx + 2*16
    rng = np.random.Generator(np.random.PCG64(0))
    end, retx, delivered, overhead = _uplink_walk_py(
        100, 140, 40, 1e6, 1.0, 2, 100.0, 16.0, 16.0, 16.0, rng
    )
    assert not delivered
    assert retx == 2
    assert overhead == 280
    assert end == pytest.approx(100.0 + 3 * 1.12 + 2 * 16.0, rel=1e-12)


def test_walk_lossless_duration_matches_transfer_duration():
    radio = RadioConfig()
    for payload in (0, 1460, 99_999, 3_000_000):
        end, retx, delivered, overhead = _uplink_walk_py(
            payload, 1500, 40, 39.9e6, 0.0, 3, 50.0, 16.0, 32.0, 16.0, None
        )
        assert delivered and retx == 0 and overhead == 0
        expected = transfer_duration(packetize(payload, radio), 39.9e6)
        assert end - 50.0 == pytest.approx(expected, rel=1e-12)


@needs_core
def test_walk_backends_agree_exactly():
    rng_master = np.random.default_rng(77)
    for _ in range(40):
        payload = int(rng_master.integers(0, 500_000))
        per = float(rng_master.choice([0.0, 0.01, 0.2, 0.9]))
        max_retx = int(rng_master.integers(0, 4))
        start = float(rng_master.uniform(0, 5000))
        ul_bps = float(rng_master.choice([5e6, 40e6, math.inf]))
        seed = int(rng_master.integers(0, 2**31))
        py = _uplink_walk_py(
            payload, 1500, 40, ul_bps, per, max_retx, start, 16.0, 32.0, 16.0,
            np.random.Generator(loss_bit_generator(seed, 0)) if per > 0 else None,
        )
        cy = _backend._core.uplink_walk(
            payload, 1500, 40, ul_bps, per, max_retx, start, 16.0, 32.0, 16.0,
            loss_bit_generator(seed, 0) if per > 0 else None,
        )
        assert py == cy


# --- determinism and seed sensitivity --------------------------------------------------


def test_simulate_is_bit_deterministic():
    scenario = stable_scenario(3000.0)
    a = simulate(scenario)
    b = simulate(scenario)
    assert a == b
    assert max_timestamp_diff(a, b) == 0.0


@needs_core
def test_simulate_backends_agree():
    for scenario in (stable_scenario(2500.0), tiny_lossy_scenario(0.3, 2, 600.0)):
        a = simulate(scenario, backend="python")
        b = simulate(scenario, backend="compiled")
        assert max_timestamp_diff(a, b) <= 1e-9


def test_seed_changes_latencies_but_not_stage_bounds():
    base = stable_scenario(3000.0)
    base = validate_scenario(
        dataclasses.replace(base, edge=dataclasses.replace(base.edge, sampling=EdgeSampling.UNIFORM_RANDOM))
    )
    p95s = set()
    for seed in (1, 2, 3):
        metrics = simulate(dataclasses.replace(base, seed=seed))
        p95s.add(metrics.comm_edge_p95_ms)
        for t in metrics.frame_traces:
            assert 16.0 <= t.t_ul_grant - t.t_encode_done <= 32.0
            assert 30.0 <= t.t_edge_done - t.t_ul_done <= 80.0
    assert len(p95s) == 3  # uniform edge sampling reacts to the seed


# --- conservation, causality, work conservation ---------------------------------------


def test_uplink_volume_conservation():
    scenario = overload_scenario(4000.0)
    metrics = simulate(scenario)
    params = derive_run_params(scenario)
    delivered = metrics.frames_total - metrics.frames_dropped
    assert metrics.ul_bytes_delivered == delivered * params.frame_wire_bytes
    assert metrics.ul_retx_bytes == 0  # zero PER here


def test_causality_of_trace_timestamps():
    for scenario in (stable_scenario(3000.0), overload_scenario(3000.0)):
        for t in simulate(scenario).frame_traces:
            if t.dropped:
                continue
            order = [
                t.t_capture_start,
                t.t_capture_done,
                t.t_encode_done,
                t.t_ul_grant,
                t.t_ul_done,
                t.t_edge_done,
                t.t_dl_done,
            ]
            assert order == sorted(order)


def test_uplink_resource_is_work_conserving():
    scenario = overload_scenario(4000.0)
    metrics = simulate(scenario)
    grants = {t.seq: t.t_ul_grant for t in metrics.frame_traces}
    previous_end = -math.inf
    for seq, start, end, _ in metrics.ul_service_log:
        assert start == max(grants[seq], previous_end if previous_end > 0 else grants[seq])
        assert end >= start
        previous_end = end


def test_achieved_fps_never_exceeds_target():
    for scenario in (stable_scenario(2500.0), overload_scenario(2500.0), budget_scenario(1999.0)):
        metrics = simulate(scenario)
        assert metrics.achieved_fps <= scenario.sensor.target_fps + 1e-12


def test_overload_latency_grows_monotonically():
    # compressed demand (~123 Mbps) against the 40 Mbps uplink diverges fast
    metrics = simulate(overload_scenario(5000.0))
    latencies = [t.t_dl_done - t.t_encode_done for t in metrics.frame_traces]
    assert all(b > a for a, b in zip(latencies, latencies[1:]))
    assert metrics.comm_edge_p95_ms > 100.0  # budget blown within 5 s of sim time


# --- error propagation ---------------------------------------------------------------


def test_unsupported_bandwidth_propagates():
    scenario = ScenarioConfig(radio=RadioConfig(bandwidth_mhz=40))
    with pytest.raises(UnsupportedBandwidth):
        simulate(scenario)


def test_infinite_capacity_bypasses_link_model():
    scenario = ScenarioConfig(radio=RadioConfig(bandwidth_mhz=40, infinite_capacity=True), duration_ms=500.0)
    assert simulate(scenario).frames_total == 2


def test_zero_ul_capacity_raises():
    scenario = ScenarioConfig(pattern=TddPattern(dl_slots=9, ul_slots=0, unassigned_slots=1), duration_ms=500.0)
    with pytest.raises(ZeroCapacity, match="uplink"):
        simulate(scenario)


def test_zero_dl_capacity_raises():
    scenario = ScenarioConfig(
        encoding=EncodingMode(kind=EncodingKind.SEMANTIC, ratio=1000.0),
        pattern=TddPattern(dl_slots=0, ul_slots=9, unassigned_slots=1),
        duration_ms=500.0,
    )
    with pytest.raises(ZeroCapacity, match="downlink"):
        simulate(scenario)


# --- oracle equivalence ----------------------------------------------------------------


def test_oracle_matches_engine_on_default_style_scenario():
    scenario = validate_scenario(
        ScenarioConfig(
            encoding=EncodingMode(kind=EncodingKind.SEMANTIC, ratio=100.0, encode_latency_ms=10.0),
            duration_ms=2000.0,  # 10 frames
            seed=21,
        )
    )
    assert max_timestamp_diff(simulate(scenario), oracle_simulate(scenario)) <= 0.01


def test_oracle_matches_engine_with_emergency():
    scenario = validate_scenario(
        dataclasses.replace(stable_scenario(1500.0), emergency_times_ms=(500.0,))
    )
    a = simulate(scenario)
    b = oracle_simulate(scenario)
    assert max_timestamp_diff(a, b) <= 0.01
    assert a.emergency_latencies_ms == pytest.approx(b.emergency_latencies_ms, abs=1e-9)


def test_no_frames_fit_gives_empty_metrics_from_both():
    scenario = validate_scenario(ScenarioConfig(duration_ms=1.0))
    a = simulate(scenario)
    b = oracle_simulate(scenario)
    assert a.frames_total == b.frames_total == 0
    assert math.isnan(a.comm_edge_p95_ms) and math.isnan(b.comm_edge_p95_ms)
    assert a.ul_bytes_delivered == b.ul_bytes_delivered == 0


def test_oracle_matches_engine_under_loss_and_drops():
    scenario = validate_scenario(
        ScenarioConfig(
            sensor=SensorProfile(frame_bytes=400_000, target_fps=8.0, acquisition_ms=120.0),
            encoding=EncodingMode(kind=EncodingKind.COMPRESSED, ratio=5.0, encode_latency_ms=5.0),
            radio=RadioConfig(packet_error_rate=0.08, max_retransmissions=1),
            duration_ms=1200.0,
            seed=7,
            emergency_times_ms=(300.0,),
        )
    )
    a = simulate(scenario)
    b = oracle_simulate(scenario)
    assert a.frames_dropped == b.frames_dropped > 0
    assert max_timestamp_diff(a, b) <= 0.01


def test_emergency_preempts_backlogged_downlink_queue():
    # 1.2 MB pose replies take ~227 ms on the 43 Mbps downlink, longer than the
    # 200 ms frame cadence, so the DL queue backs up; the stop must jump it.
    scenario = validate_scenario(
        ScenarioConfig(
            encoding=EncodingMode(kind=EncodingKind.SEMANTIC, ratio=100.0, encode_latency_ms=10.0),
            edge=dataclasses.replace(
                stable_scenario().edge, downlink_message_bytes=1_200_000
            ),
            duration_ms=2000.0,
            seed=6,
            emergency_times_ms=(1500.0,),
        )
    )
    metrics = simulate(scenario)
    latency = metrics.emergency_latencies_ms[0]
    delivered_at = 1500.0 + latency
    overtaken = [
        t for t in metrics.frame_traces
        if t.t_edge_done is not None and t.t_edge_done < 1500.0 and t.t_dl_done > delivered_at
    ]
    assert overtaken, "expected queued pose replies to be overtaken by the stop"
    # bounded by the in-service reply plus its own delivery, never the backlog
    assert latency < 240.0
    reference = oracle_simulate(scenario)
    assert max_timestamp_diff(metrics, reference) <= 0.01


@needs_core
def test_oracle_backends_agree():
    scenario = validate_scenario(
        dataclasses.replace(stable_scenario(1500.0), emergency_times_ms=(400.0, 800.0))
    )
    a = oracle_simulate(scenario, backend="python")
    b = oracle_simulate(scenario, backend="compiled")
    assert max_timestamp_diff(a, b) <= 1e-9
    assert a.ul_bytes_delivered == b.ul_bytes_delivered
    assert a.dl_bytes_delivered == b.dl_bytes_delivered


def test_oracle_rejects_large_scenarios():
    with pytest.raises(OracleTooLarge):
        oracle_simulate(validate_scenario(ScenarioConfig(duration_ms=30_000.0)))


def test_oracle_rejects_coarse_steps_and_short_stages():
    scenario = stable_scenario(1000.0)
    with pytest.raises(ValueError, match="step_ms"):
        oracle_simulate(scenario, step_ms=0.5)
    fast_edge = validate_scenario(
        dataclasses.replace(
            scenario,
            edge=dataclasses.replace(scenario.edge, processing_min_ms=0.001),
        )
    )
    with pytest.raises(ValueError, match="processing_min_ms"):
        oracle_simulate(fast_edge)


# --- trace CSV -----------------------------------------------------------------------


def test_trace_csv_header_and_roundtrip(tmp_path):
    metrics = simulate(stable_scenario(1500.0))
    path = tmp_path / "trace.csv"
    write_trace_csv(metrics, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_CSV_COLUMNS)
    assert len(lines) == 1 + metrics.frames_total
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[4]) == metrics.frame_traces[0].t_ul_grant


def test_trace_csv_is_byte_deterministic(tmp_path):
    scenario = stable_scenario(1500.0)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(simulate(scenario), p1)
    write_trace_csv(simulate(scenario), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dropped_frames_have_empty_tail_cells(tmp_path):
    metrics = simulate(tiny_lossy_scenario(per=1.0, max_retx=0))
    path = tmp_path / "trace.csv"
    write_trace_csv(metrics, path)
    row = path.read_text().splitlines()[1].split(",")
    assert row[5] == "" and row[6] == "" and row[7] == ""
    assert row[9] == "1"


def test_metrics_dict_is_json_safe():
    import json

    payload = metrics_to_dict(simulate(tiny_lossy_scenario(per=1.0, max_retx=0)))
    text = json.dumps(payload)
    assert "NaN" not in text
    assert payload["comm_edge_p95_ms"] is None
