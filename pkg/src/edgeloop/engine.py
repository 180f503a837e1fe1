"""Deterministic discrete-event engine for the perception loop.

Per frame: capture (fixed cadence) -> encode -> sawtooth grant wait -> FIFO
uplink serialization with per-packet Bernoulli loss and bounded
retransmissions -> edge processing -> downlink reply behind a fixed grant
delay, with emergency-stop messages jumping the downlink queue. All randomness
comes from per-frame substreams derived from the scenario seed, so a run is a
pure function of (scenario, seed) and independent of event-processing order.

Draw protocol (shared by the pure-Python walk, the compiled walk, and both
oracle backends): frame seq uses substream (seed, 1, seq) for packet loss and
a single uniform from substream (seed, 0, seq) for edge latency. Packets are
walked in order; one uniform per transmission attempt, drawn after the
packet's wire time; no draws at all when the loss probability is zero.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _backend
from .model import ScenarioConfig, scenario_fingerprint, validate_scenario
from .pipeline import (
    edge_latency,
    effective_frame_period,
    emergency_message,
    encode_frame,
    pose_message,
)
from .radio import ZeroCapacity, packetize, scheduling_delay, tdd_capacity

EDGE_STREAM = 0
LOSS_STREAM = 1


class EventKind(IntEnum):
    """Event kinds; numeric value is the tie-break priority at equal times.

    Emergency events outrank everything else at the same timestamp."""

    EMERGENCY_ISSUED = 0
    EMERGENCY_DELIVERED = 1
    CAPTURE_DONE = 2
    ENCODE_DONE = 3
    UPLINK_GRANT = 4
    UPLINK_DONE = 5
    EDGE_DONE = 6
    DOWNLINK_DONE = 7


@dataclass(frozen=True, order=True)
class Event:
    """Heap record; ordering (time, kind priority, insertion counter) is the
    engine's determinism contract."""

    time_ms: float
    kind: EventKind
    seq_tiebreak: int
    data: object = field(compare=False, default=None)


@dataclass(frozen=True)
class FrameTrace:
    seq: int
    t_capture_start: float
    t_capture_done: float
    t_encode_done: float
    t_ul_grant: float
    t_ul_done: float | None
    t_edge_done: float | None
    t_dl_done: float | None
    retx_count: int
    dropped: bool


@dataclass(frozen=True)
class RunMetrics:
    frame_traces: tuple[FrameTrace, ...]
    frames_total: int
    frames_dropped: int
    ul_bytes_delivered: int
    ul_retx_bytes: int
    dl_bytes_delivered: int
    emergency_latencies_ms: tuple[float, ...]
    comm_edge_p50_ms: float
    comm_edge_p95_ms: float
    comm_edge_max_ms: float
    achieved_fps: float
    duration_ms: float
    scenario_fingerprint: str
    # (seq, service_start, service_end, delivered) per uplink service, in order
    ul_service_log: tuple[tuple[int, float, float, bool], ...]


@dataclass(frozen=True)
class RunParams:
    """Scenario quantities shared by the event engine and the stepped oracle."""

    n_frames: int
    period_ms: float
    acquisition_ms: float
    encode_latency_ms: float
    payload_bytes: int
    frame_wire_bytes: int
    frame_packets: int
    ul_bps: float
    dl_bps: float
    pose_wire_bytes: int
    emergency_wire_bytes: int
    emergency_times: tuple[float, ...]


def derive_run_params(scenario: ScenarioConfig) -> RunParams:
    period = effective_frame_period(scenario.sensor)
    sample = encode_frame(scenario.sensor.frame_bytes, scenario.encoding, 0.0, 0)
    frame = packetize(sample.payload_bytes, scenario.radio)
    pose = packetize(pose_message(0, scenario.edge).payload_bytes, scenario.radio)
    emerg = packetize(emergency_message(0, scenario.edge).payload_bytes, scenario.radio)
    if scenario.radio.infinite_capacity:
        ul_bps = dl_bps = math.inf
    else:
        capacity = tdd_capacity(scenario.radio, scenario.pattern)
        ul_bps, dl_bps = capacity.ul_bps, capacity.dl_bps
    return RunParams(
        n_frames=int(scenario.duration_ms // period),
        period_ms=period,
        acquisition_ms=scenario.sensor.acquisition_ms,
        encode_latency_ms=scenario.encoding.encode_latency_ms,
        payload_bytes=sample.payload_bytes,
        frame_wire_bytes=frame.wire_bytes,
        frame_packets=frame.packet_count,
        ul_bps=ul_bps,
        dl_bps=dl_bps,
        pose_wire_bytes=pose.wire_bytes,
        emergency_wire_bytes=emerg.wire_bytes,
        emergency_times=tuple(scenario.emergency_times_ms),
    )


def edge_uniform(seed: int, seq: int) -> float:
    ss = np.random.SeedSequence((seed, EDGE_STREAM, seq))
    return np.random.Generator(np.random.PCG64(ss)).random()


def loss_bit_generator(seed: int, seq: int) -> np.random.PCG64:
    return np.random.PCG64(np.random.SeedSequence((seed, LOSS_STREAM, seq)))


def _uplink_walk_py(
    payload_bytes: int,
    mtu_bytes: int,
    header_bytes: int,
    ul_bps: float,
    per: float,
    max_retx: int,
    start_ms: float,
    sched_min: float,
    sched_max: float,
    sched_period: float,
    rng,
) -> tuple[float, int, bool, int]:
    """Serialize one frame's packets starting at start_ms.

    Returns (end_ms, retransmission_count, delivered, retx_overhead_bytes).
    A packet that fails all max_retx resends drops the whole frame and stops
    the walk. Mirrors edgeloop._core.uplink_walk operation for operation.
    """
    mss = mtu_bytes - header_bytes
    n_full, rem = divmod(payload_bytes, mss)
    amplitude = sched_max - sched_min
    t = start_ms
    retx = 0
    overhead = 0
    for i in range(n_full + (1 if rem else 0)):
        wire = mtu_bytes if i < n_full else rem + header_bytes
        tx_ms = wire * 8 / ul_bps * 1000.0
        attempt = 0
        while True:
            if attempt > 0:
                phase = math.fmod(t, sched_period)
                t += sched_min + ((sched_period - phase) % sched_period) / sched_period * amplitude
                t += tx_ms
                retx += 1
                overhead += wire
            else:
                t += tx_ms
            if per <= 0.0 or rng.random() >= per:
                break
            attempt += 1
            if attempt > max_retx:
                return t, retx, False, overhead
    return t, retx, True, overhead


def _walk(scenario, params, seq, start_ms, compiled):
    sched = scenario.scheduling
    radio = scenario.radio
    per = radio.packet_error_rate
    if params.payload_bytes > 0 and params.ul_bps == 0:
        raise ZeroCapacity("uplink capacity is 0 bit/s but frames are offered")
    if compiled:
        bg = loss_bit_generator(scenario.seed, seq) if per > 0 else None
        return _backend._core.uplink_walk(
            params.payload_bytes,
            radio.mtu_bytes,
            radio.header_bytes,
            params.ul_bps,
            per,
            radio.max_retransmissions,
            start_ms,
            sched.min_delay_ms,
            sched.max_delay_ms,
            sched.period_ms,
            bg,
        )
    rng = np.random.Generator(loss_bit_generator(scenario.seed, seq)) if per > 0 else None
    return _uplink_walk_py(
        params.payload_bytes,
        radio.mtu_bytes,
        radio.header_bytes,
        params.ul_bps,
        per,
        radio.max_retransmissions,
        start_ms,
        sched.min_delay_ms,
        sched.max_delay_ms,
        sched.period_ms,
        rng,
    )


class _Rec:
    __slots__ = (
        "t_capture_start",
        "t_capture_done",
        "t_encode_done",
        "t_ul_grant",
        "t_ul_done",
        "t_edge_done",
        "t_dl_done",
        "retx_count",
        "dropped",
    )

    def __init__(self):
        self.t_capture_start = 0.0
        self.t_capture_done = 0.0
        self.t_encode_done = 0.0
        self.t_ul_grant = 0.0
        self.t_ul_done = None
        self.t_edge_done = None
        self.t_dl_done = None
        self.retx_count = 0
        self.dropped = False


def simulate(scenario: ScenarioConfig, *, backend: str | None = None) -> RunMetrics:
    """Run the full event-driven simulation and return per-frame traces.

    Captures start every period until duration_ms; all in-flight work is
    drained to completion so every non-dropped frame carries a full trace.
    """
    scenario = validate_scenario(scenario)
    compiled = _backend.resolve(backend) == "compiled"
    params = derive_run_params(scenario)
    radio, edge, sched = scenario.radio, scenario.edge, scenario.scheduling

    heap: list[Event] = []
    counter = 0

    def push(time_ms: float, kind: EventKind, data) -> None:
        nonlocal counter
        heapq.heappush(heap, Event(time_ms, kind, counter, data))
        counter += 1

    recs = [_Rec() for _ in range(params.n_frames)]
    for seq in range(params.n_frames):
        recs[seq].t_capture_start = seq * params.period_ms
        push(seq * params.period_ms + params.acquisition_ms, EventKind.CAPTURE_DONE, seq)
    for idx, t_issue in enumerate(params.emergency_times):
        push(t_issue, EventKind.EMERGENCY_ISSUED, idx)

    ul_queue: deque[int] = deque()
    ul_busy = False
    ul_service_log: list[tuple[int, float, float, bool]] = []
    dl_emerg: deque[int] = deque()
    dl_pose: deque[int] = deque()
    dl_busy = False

    ul_delivered = 0
    ul_retx_bytes = 0
    dl_delivered = 0
    frames_dropped = 0
    emergency_latency = [math.nan] * len(params.emergency_times)

    def start_ul(now: float) -> None:
        nonlocal ul_busy
        seq = ul_queue.popleft()
        ul_busy = True
        end, retx, delivered, overhead = _walk(scenario, params, seq, now, compiled)
        push(end, EventKind.UPLINK_DONE, (seq, now, retx, delivered, overhead))

    def start_dl(now: float) -> None:
        nonlocal dl_busy
        if dl_emerg:
            ident = dl_emerg.popleft()
            wire, kind = params.emergency_wire_bytes, EventKind.EMERGENCY_DELIVERED
        else:
            ident = dl_pose.popleft()
            wire, kind = params.pose_wire_bytes, EventKind.DOWNLINK_DONE
        if params.dl_bps == 0:
            raise ZeroCapacity("downlink capacity is 0 bit/s but replies are offered")
        dl_busy = True
        done = now + radio.dl_sched_delay_ms + wire * 8 / params.dl_bps * 1000.0
        push(done, kind, ident)

    while heap:
        event = heapq.heappop(heap)
        now, kind, data = event.time_ms, event.kind, event.data
        if kind is EventKind.CAPTURE_DONE:
            seq = data
            recs[seq].t_capture_done = now
            push(now + params.encode_latency_ms, EventKind.ENCODE_DONE, seq)
        elif kind is EventKind.ENCODE_DONE:
            seq = data
            recs[seq].t_encode_done = now
            push(now + scheduling_delay(now, sched), EventKind.UPLINK_GRANT, seq)
        elif kind is EventKind.UPLINK_GRANT:
            seq = data
            recs[seq].t_ul_grant = now
            ul_queue.append(seq)
            if not ul_busy:
                start_ul(now)
        elif kind is EventKind.UPLINK_DONE:
            seq, service_start, retx, delivered, overhead = data
            ul_busy = False
            ul_service_log.append((seq, service_start, now, delivered))
            ul_retx_bytes += overhead
            recs[seq].retx_count = retx
            if delivered:
                recs[seq].t_ul_done = now
                ul_delivered += params.frame_wire_bytes
                latency = edge_latency(edge, edge_uniform(scenario.seed, seq))
                push(now + latency, EventKind.EDGE_DONE, seq)
            else:
                recs[seq].dropped = True
                frames_dropped += 1
            if ul_queue:
                start_ul(now)
        elif kind is EventKind.EDGE_DONE:
            seq = data
            recs[seq].t_edge_done = now
            dl_pose.append(seq)
            if not dl_busy:
                start_dl(now)
        elif kind is EventKind.DOWNLINK_DONE:
            seq = data
            recs[seq].t_dl_done = now
            dl_delivered += params.pose_wire_bytes
            dl_busy = False
            if dl_emerg or dl_pose:
                start_dl(now)
        elif kind is EventKind.EMERGENCY_ISSUED:
            idx = data
            dl_emerg.append(idx)
            if not dl_busy:
                start_dl(now)
        elif kind is EventKind.EMERGENCY_DELIVERED:
            idx = data
            emergency_latency[idx] = now - params.emergency_times[idx]
            dl_delivered += params.emergency_wire_bytes
            dl_busy = False
            if dl_emerg or dl_pose:
                start_dl(now)

    traces = tuple(
        FrameTrace(
            seq=seq,
            t_capture_start=r.t_capture_start,
            t_capture_done=r.t_capture_done,
            t_encode_done=r.t_encode_done,
            t_ul_grant=r.t_ul_grant,
            t_ul_done=r.t_ul_done,
            t_edge_done=r.t_edge_done,
            t_dl_done=r.t_dl_done,
            retx_count=r.retx_count,
            dropped=r.dropped,
        )
        for seq, r in enumerate(recs)
    )
    return build_metrics(
        scenario,
        traces,
        emergency_latency,
        ul_delivered,
        ul_retx_bytes,
        dl_delivered,
        frames_dropped,
        tuple(ul_service_log),
    )


def build_metrics(
    scenario: ScenarioConfig,
    traces: tuple[FrameTrace, ...],
    emergency_latencies: list[float],
    ul_bytes_delivered: int,
    ul_retx_bytes: int,
    dl_bytes_delivered: int,
    frames_dropped: int,
    ul_service_log: tuple[tuple[int, float, float, bool], ...],
) -> RunMetrics:
    latencies = [
        t.t_dl_done - t.t_encode_done for t in traces if t.t_dl_done is not None
    ]
    if latencies:
        p50, p95 = np.percentile(latencies, [50, 95])
        worst = max(latencies)
    else:
        p50 = p95 = worst = math.nan
    delivered = sum(1 for t in traces if t.t_dl_done is not None)
    return RunMetrics(
        frame_traces=traces,
        frames_total=len(traces),
        frames_dropped=frames_dropped,
        ul_bytes_delivered=ul_bytes_delivered,
        ul_retx_bytes=ul_retx_bytes,
        dl_bytes_delivered=dl_bytes_delivered,
        emergency_latencies_ms=tuple(emergency_latencies),
        comm_edge_p50_ms=float(p50),
        comm_edge_p95_ms=float(p95),
        comm_edge_max_ms=float(worst),
        achieved_fps=delivered * 1000.0 / scenario.duration_ms,
        duration_ms=scenario.duration_ms,
        scenario_fingerprint=scenario_fingerprint(scenario),
        ul_service_log=ul_service_log,
    )


# --- Trace export -------------------------------------------------------------

TRACE_CSV_COLUMNS = (
    "seq",
    "t_capture_start_ms",
    "t_capture_done_ms",
    "t_encode_done_ms",
    "t_ul_grant_ms",
    "t_ul_done_ms",
    "t_edge_done_ms",
    "t_dl_done_ms",
    "retx_count",
    "dropped",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return repr(value) if isinstance(value, float) else str(value)


def write_trace_csv(metrics: RunMetrics, path) -> None:
    """One row per frame, fixed column order; empty cells for unreached stages."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_COLUMNS)
        for t in metrics.frame_traces:
            writer.writerow(
                [
                    t.seq,
                    _cell(t.t_capture_start),
                    _cell(t.t_capture_done),
                    _cell(t.t_encode_done),
                    _cell(t.t_ul_grant),
                    _cell(t.t_ul_done),
                    _cell(t.t_edge_done),
                    _cell(t.t_dl_done),
                    t.retx_count,
                    _cell(t.dropped),
                ]
            )


def _json_num(value: float):
    return None if (isinstance(value, float) and math.isnan(value)) else value


def metrics_to_dict(metrics: RunMetrics) -> dict:
    """JSON-safe summary (traces live in the CSV, not here)."""
    return {
        "frames_total": metrics.frames_total,
        "frames_dropped": metrics.frames_dropped,
        "ul_bytes_delivered": metrics.ul_bytes_delivered,
        "ul_retx_bytes": metrics.ul_retx_bytes,
        "dl_bytes_delivered": metrics.dl_bytes_delivered,
        "emergency_latencies_ms": [_json_num(v) for v in metrics.emergency_latencies_ms],
        "comm_edge_p50_ms": _json_num(metrics.comm_edge_p50_ms),
        "comm_edge_p95_ms": _json_num(metrics.comm_edge_p95_ms),
        "comm_edge_max_ms": _json_num(metrics.comm_edge_max_ms),
        "achieved_fps": metrics.achieved_fps,
        "duration_ms": metrics.duration_ms,
        "scenario_fingerprint": metrics.scenario_fingerprint,
    }
