"""Shared scenario builders and trace-comparison helpers."""

import numpy as np

from edgeloop.model import (
    EdgeProfile,
    EdgeSampling,
    EncodingKind,
    EncodingMode,
    RadioConfig,
    ScenarioConfig,
    SchedulingModel,
    SensorProfile,
    TddPattern,
    validate_scenario,
)

TIMESTAMP_FIELDS = (
    "t_capture_start",
    "t_capture_done",
    "t_encode_done",
    "t_ul_grant",
    "t_ul_done",
    "t_edge_done",
    "t_dl_done",
)


def max_timestamp_diff(a, b):
    """Largest per-timestamp difference between two runs of the same scenario."""
    assert a.frames_total == b.frames_total
    assert a.frames_dropped == b.frames_dropped
    worst = 0.0
    for ta, tb in zip(a.frame_traces, b.frame_traces):
        assert ta.dropped == tb.dropped, (ta.seq, ta.dropped, tb.dropped)
        assert ta.retx_count == tb.retx_count, (ta.seq, ta.retx_count, tb.retx_count)
        for field in TIMESTAMP_FIELDS:
            va, vb = getattr(ta, field), getattr(tb, field)
            assert (va is None) == (vb is None), (ta.seq, field, va, vb)
            if va is not None:
                worst = max(worst, abs(va - vb))
    assert len(a.emergency_latencies_ms) == len(b.emergency_latencies_ms)
    for ea, eb in zip(a.emergency_latencies_ms, b.emergency_latencies_ms):
        worst = max(worst, abs(ea - eb))
    return worst


def budget_scenario(duration_ms=3000.0):
    """Ideal link, fixed grant wait, midpoint edge: every stage is closed-form."""
    return validate_scenario(
        ScenarioConfig(
            radio=RadioConfig(infinite_capacity=True),
            scheduling=SchedulingModel(16.0, 16.0, 16.0),
            edge=EdgeProfile(sampling=EdgeSampling.MIDPOINT),
            duration_ms=duration_ms,
            seed=3,
        )
    )


def overload_scenario(duration_ms=6000.0):
    """Compressed 3 MB frames (about 123 Mbps on the wire) on a 40 Mbps uplink."""
    return validate_scenario(
        ScenarioConfig(
            encoding=EncodingMode(kind=EncodingKind.COMPRESSED, ratio=10.0, encode_latency_ms=15.0),
            edge=EdgeProfile(sampling=EdgeSampling.MIDPOINT),
            duration_ms=duration_ms,
            seed=5,
        )
    )


def stable_scenario(duration_ms=8000.0):
    """Semantic encoding at ratio 100: about 12 Mbps versus 40 Mbps uplink."""
    return validate_scenario(
        ScenarioConfig(
            encoding=EncodingMode(kind=EncodingKind.SEMANTIC, ratio=100.0, encode_latency_ms=20.0),
            edge=EdgeProfile(sampling=EdgeSampling.MIDPOINT),
            duration_ms=duration_ms,
            seed=9,
        )
    )


def random_small_scenario(rng: np.random.Generator) -> ScenarioConfig:
    """Randomized oracle-sized scenario; sized so drains stay short."""
    fps = float(rng.choice([3.0, 4.0, 5.0, 8.0, 10.0]))
    acquisition = float(rng.uniform(110.0, 240.0))
    pipelined = bool(rng.random() < 0.4)
    per = float(rng.choice([0.0, 0.0, 0.02, 0.05]))
    if per > 0:
        kind, ratio = EncodingKind.SEMANTIC, float(rng.choice([50.0, 100.0, 200.0]))
    else:
        kind, ratio = EncodingKind.COMPRESSED, float(rng.choice([5.0, 10.0]))
    frame_bytes = int(rng.integers(200_000, 3_000_000))
    pattern = [(3, 6, 1), (6, 3, 1), (2, 7, 1)][int(rng.integers(0, 3))]
    duration = float(rng.uniform(900.0, 2600.0))
    n_emergencies = int(rng.integers(0, 3))
    emergencies = tuple(sorted(float(rng.uniform(0, duration)) for _ in range(n_emergencies)))
    return validate_scenario(
        ScenarioConfig(
            sensor=SensorProfile(
                frame_bytes=frame_bytes,
                target_fps=fps,
                acquisition_ms=acquisition,
                pipelined_acquisition=pipelined,
            ),
            encoding=EncodingMode(kind=kind, ratio=ratio, encode_latency_ms=float(rng.uniform(0, 30))),
            radio=RadioConfig(
                packet_error_rate=per,
                max_retransmissions=int(rng.integers(0, 3)),
                infinite_capacity=bool(rng.random() < 0.15),
            ),
            pattern=TddPattern(*pattern),
            edge=EdgeProfile(
                sampling=EdgeSampling.UNIFORM_RANDOM if rng.random() < 0.5 else EdgeSampling.MIDPOINT
            ),
            duration_ms=duration,
            seed=int(rng.integers(0, 2**32)),
            emergency_times_ms=emergencies,
        )
    )
