"""Brute-force time-stepped re-implementation of the simulation, used to
cross-validate the event-driven engine.

No event queue exists here: a scan clock advances in fixed steps and every
entity's state machine is re-examined each tick; a transition fires once the
clock passes its exact precondition time, and the exact time (not the tick) is
what gets recorded, so agreement with the engine is limited only by floating
point. Resource grabs are ordered by exact candidate times, which is why the
scan step must not exceed the smallest stage duration (see oracle_simulate).
"""

from __future__ import annotations

import math

import numpy as np

from . import _backend
from .engine import (
    RunMetrics,
    FrameTrace,
    build_metrics,
    derive_run_params,
    edge_uniform,
    loss_bit_generator,
)
from .model import ScenarioConfig, validate_scenario
from .pipeline import edge_latency
from .radio import ZeroCapacity

MAX_ORACLE_FRAMES = 100
MAX_STEP_MS = 0.01

# frame stages
_WAIT, _CAPTURING, _ENCODING, _AWAIT_GRANT, _READY, _TX, _EDGE, _AWAIT_DL, _DONE, _DROPPED = range(10)


class OracleTooLarge(ValueError):
    pass


def _sawtooth(t: float, smin: float, smax: float, period: float) -> float:
    phase = math.fmod(t, period)
    return smin + ((period - phase) % period) / period * (smax - smin)


def _oracle_walk(payload, mtu, header, ul_bps, per, max_retx, start, smin, smax, period, rng):
    """Oracle-route packet walk; same draw protocol as the engine walk but an
    independent implementation (chunk bookkeeping instead of full/remainder
    split, fused delay arithmetic)."""
    mss = mtu - header
    n_pkts = -(-payload // mss)
    t = start
    retx = 0
    overhead = 0
    sent = 0
    for _ in range(n_pkts):
        chunk = mss if payload - sent >= mss else payload - sent
        sent += chunk
        wire = chunk + header
        tx = wire * 8 / ul_bps * 1000.0
        attempts = 0
        while True:
            if attempts:
                t += _sawtooth(t, smin, smax, period) + tx
                retx += 1
                overhead += wire
            else:
                t += tx
            if per <= 0.0 or rng.random() >= per:
                break
            attempts += 1
            if attempts > max_retx:
                return t, retx, False, overhead
    return t, retx, True, overhead


def _drain_bound_ms(scenario, params) -> float:
    """Loose upper bound on when the last event can happen; runaway guard."""

    def tx_ms(wire, bps):
        return wire * 8 / bps * 1000.0 if 0 < bps != math.inf else 0.0

    sched_max = scenario.scheduling.max_delay_ms
    walk_worst = params.frame_packets * (scenario.radio.max_retransmissions + 1) * (
        tx_ms(scenario.radio.mtu_bytes, params.ul_bps) + sched_max
    )
    per_frame = (
        sched_max
        + walk_worst
        + scenario.edge.processing_max_ms
        + scenario.radio.dl_sched_delay_ms
        + tx_ms(params.pose_wire_bytes, params.dl_bps)
    )
    per_emergency = scenario.radio.dl_sched_delay_ms + tx_ms(params.emergency_wire_bytes, params.dl_bps)
    return (
        scenario.duration_ms
        + params.n_frames * per_frame
        + len(params.emergency_times) * per_emergency
        + 1000.0
    )


def _oracle_step_py(scenario, params, step_ms, hard_limit_ms, edge_draws):
    n = params.n_frames
    period = params.period_ms
    radio, sched, edge = scenario.radio, scenario.scheduling, scenario.edge
    per = radio.packet_error_rate
    smin, smax, speriod = sched.min_delay_ms, sched.max_delay_ms, sched.period_ms

    cap_done = [k * period + params.acquisition_ms for k in range(n)]
    enc_done = [t + params.encode_latency_ms for t in cap_done]
    grant = [0.0] * n
    ul_start = [math.nan] * n
    ul_end = [math.nan] * n
    edge_done = [math.nan] * n
    dl_done = [math.nan] * n
    retx = [0] * n
    delivered = [False] * n
    stage = [_WAIT] * n

    m = len(params.emergency_times)
    em_sorted = sorted(range(m), key=lambda i: (params.emergency_times[i], i))
    em_next = 0
    em_queue: list[int] = []
    em_delivered = [math.nan] * m

    ready: list[int] = []
    poses: list[int] = []
    ul_busy = False
    ul_free = 0.0
    dl_kind = 0  # 0 idle, 1 pose, 2 emergency
    dl_id = -1
    dl_done_t = 0.0
    dl_free = 0.0
    overhead_total = 0
    service_log: list[tuple[int, float, float, bool]] = []

    remaining = n + m
    lo = 0
    hi = 0
    t = 0.0
    tick = 0
    while remaining > 0:
        fired = False
        while em_next < m and params.emergency_times[em_sorted[em_next]] <= t:
            em_queue.append(em_sorted[em_next])
            em_next += 1
            fired = True
        while hi < n and hi * period <= t:
            stage[hi] = _CAPTURING
            hi += 1
            fired = True
        for k in range(lo, hi):
            st = stage[k]
            if st == _CAPTURING:
                if cap_done[k] <= t:
                    stage[k] = _ENCODING
                    fired = True
            elif st == _ENCODING:
                if enc_done[k] <= t:
                    grant[k] = enc_done[k] + _sawtooth(enc_done[k], smin, smax, speriod)
                    stage[k] = _AWAIT_GRANT
                    fired = True
            elif st == _AWAIT_GRANT:
                if grant[k] <= t:
                    stage[k] = _READY
                    ready.append(k)
                    fired = True
            elif st == _TX:
                if ul_end[k] <= t:
                    ul_busy = False
                    ul_free = ul_end[k]
                    if delivered[k]:
                        edge_done[k] = ul_end[k] + edge_latency(edge, edge_draws[k])
                        stage[k] = _EDGE
                    else:
                        stage[k] = _DROPPED
                        remaining -= 1
                    fired = True
            elif st == _EDGE:
                if edge_done[k] <= t:
                    stage[k] = _AWAIT_DL
                    poses.append(k)
                    fired = True
        while lo < n and stage[lo] >= _DONE:
            lo += 1
        if not ul_busy and ready:
            j = min(ready, key=lambda q: (grant[q], q))
            ready.remove(j)
            if params.payload_bytes > 0 and params.ul_bps == 0:
                raise ZeroCapacity("uplink capacity is 0 bit/s but frames are offered")
            start = grant[j] if grant[j] > ul_free else ul_free
            rng = np.random.Generator(loss_bit_generator(scenario.seed, j)) if per > 0 else None
            end, r_count, ok, ovh = _oracle_walk(
                params.payload_bytes, radio.mtu_bytes, radio.header_bytes, params.ul_bps,
                per, radio.max_retransmissions, start, smin, smax, speriod, rng,
            )
            ul_start[j], ul_end[j], retx[j], delivered[j] = start, end, r_count, ok
            overhead_total += ovh
            service_log.append((j, start, end, ok))
            stage[j] = _TX
            ul_busy = True
            fired = True
        if dl_kind and dl_done_t <= t:
            if dl_kind == 1:
                dl_done[dl_id] = dl_done_t
                stage[dl_id] = _DONE
            else:
                em_delivered[dl_id] = dl_done_t
            remaining -= 1
            dl_free = dl_done_t
            dl_kind = 0
            fired = True
        if not dl_kind and (em_queue or poses):
            e_cand = max(params.emergency_times[em_queue[0]], dl_free) if em_queue else math.inf
            if poses:
                p_lead = min(poses, key=lambda q: (edge_done[q], q))
                p_cand = max(edge_done[p_lead], dl_free)
            else:
                p_cand = math.inf
            if params.dl_bps == 0:
                raise ZeroCapacity("downlink capacity is 0 bit/s but replies are offered")
            if e_cand <= p_cand and e_cand <= t:
                dl_id = em_queue.pop(0)
                dl_kind = 2
                dl_done_t = e_cand + radio.dl_sched_delay_ms + params.emergency_wire_bytes * 8 / params.dl_bps * 1000.0
                fired = True
            elif p_cand < e_cand and p_cand <= t:
                poses.remove(p_lead)
                dl_id = p_lead
                dl_kind = 1
                dl_done_t = p_cand + radio.dl_sched_delay_ms + params.pose_wire_bytes * 8 / params.dl_bps * 1000.0
                fired = True
        if not fired:
            tick += 1
            t = tick * step_ms
            if t > hard_limit_ms:
                raise RuntimeError("oracle exceeded its drain-time bound; scenario diverges")

    return {
        "grant": grant,
        "ul_start": ul_start,
        "ul_end": ul_end,
        "edge_done": edge_done,
        "dl_done": dl_done,
        "retx": retx,
        "delivered": delivered,
        "em_delivered": em_delivered,
        "overhead": overhead_total,
        "service_log": service_log,
    }


def _oracle_step_compiled(scenario, params, step_ms, hard_limit_ms, edge_draws):
    n = params.n_frames
    m = len(params.emergency_times)
    radio, sched, edge = scenario.radio, scenario.scheduling, scenario.edge
    per = radio.packet_error_rate
    em_sorted = sorted(range(m), key=lambda i: (params.emergency_times[i], i))
    bitgens = [
        loss_bit_generator(scenario.seed, k) if per > 0 else None for k in range(n)
    ]
    out = {
        "grant": np.zeros(n),
        "ul_start": np.full(n, math.nan),
        "ul_end": np.full(n, math.nan),
        "edge_done": np.full(n, math.nan),
        "dl_done": np.full(n, math.nan),
        "retx": np.zeros(n, dtype=np.int64),
        "delivered": np.zeros(n, dtype=np.int8),
        "em_delivered": np.full(m, math.nan),
    }
    log_seq = np.zeros(n, dtype=np.int64)
    log_start = np.zeros(n)
    log_end = np.zeros(n)
    n_serviced, overhead = _backend._core.oracle_run(
        step_ms,
        hard_limit_ms,
        n,
        params.period_ms,
        params.acquisition_ms,
        params.encode_latency_ms,
        params.payload_bytes,
        radio.mtu_bytes,
        radio.header_bytes,
        params.ul_bps,
        params.dl_bps,
        per,
        radio.max_retransmissions,
        sched.min_delay_ms,
        sched.max_delay_ms,
        sched.period_ms,
        edge.processing_min_ms,
        edge.processing_max_ms,
        1 if edge.sampling.value == "midpoint" else 0,
        np.asarray(edge_draws, dtype=np.float64),
        bitgens,
        radio.dl_sched_delay_ms,
        params.pose_wire_bytes,
        params.emergency_wire_bytes,
        np.asarray([params.emergency_times[i] for i in em_sorted], dtype=np.float64),
        np.asarray(em_sorted, dtype=np.int64),
        out["grant"],
        out["ul_start"],
        out["ul_end"],
        out["edge_done"],
        out["dl_done"],
        out["retx"],
        out["delivered"],
        out["em_delivered"],
        log_seq,
        log_start,
        log_end,
    )
    result = {k: v.tolist() for k, v in out.items() if k != "delivered"}
    result["delivered"] = [bool(v) for v in out["delivered"]]
    result["retx"] = [int(v) for v in out["retx"]]
    result["overhead"] = overhead
    result["service_log"] = [
        (int(log_seq[i]), float(log_start[i]), float(log_end[i]), bool(out["delivered"][log_seq[i]]))
        for i in range(n_serviced)
    ]
    return result


def oracle_simulate(
    scenario: ScenarioConfig, step_ms: float = 0.01, *, backend: str | None = None
) -> RunMetrics:
    """Time-stepped cross-check run; small scenarios only.

    Requires step_ms <= 0.01 and at most 100 frames. The scan-ordering
    argument additionally needs every nonzero stage duration to be at least
    one step long, so edge.processing_min_ms and scheduling.min_delay_ms must
    be >= step_ms.
    """
    scenario = validate_scenario(scenario)
    if not 0 < step_ms <= MAX_STEP_MS:
        raise ValueError(f"step_ms must be in (0, {MAX_STEP_MS}]")
    params = derive_run_params(scenario)
    if params.n_frames > MAX_ORACLE_FRAMES:
        raise OracleTooLarge(
            f"{params.n_frames} frames exceed the oracle bound of {MAX_ORACLE_FRAMES}"
        )
    if scenario.edge.processing_min_ms < step_ms:
        raise ValueError("oracle requires edge.processing_min_ms >= step_ms")
    if scenario.scheduling.min_delay_ms < step_ms:
        raise ValueError("oracle requires scheduling.min_delay_ms >= step_ms")

    edge_draws = [edge_uniform(scenario.seed, k) for k in range(params.n_frames)]
    hard_limit = _drain_bound_ms(scenario, params)
    if _backend.resolve(backend) == "compiled":
        arrays = _oracle_step_compiled(scenario, params, step_ms, hard_limit, edge_draws)
    else:
        arrays = _oracle_step_py(scenario, params, step_ms, hard_limit, edge_draws)

    traces = []
    frames_dropped = 0
    ul_delivered = 0
    poses_delivered = 0
    for k in range(params.n_frames):
        ok = arrays["delivered"][k]
        has_dl = not math.isnan(arrays["dl_done"][k])
        serviced = not math.isnan(arrays["ul_end"][k])
        dropped = serviced and not ok
        if dropped:
            frames_dropped += 1
        if ok:
            ul_delivered += params.frame_wire_bytes
        if has_dl:
            poses_delivered += 1
        traces.append(
            FrameTrace(
                seq=k,
                t_capture_start=k * params.period_ms,
                t_capture_done=k * params.period_ms + params.acquisition_ms,
                t_encode_done=k * params.period_ms + params.acquisition_ms + params.encode_latency_ms,
                t_ul_grant=arrays["grant"][k],
                t_ul_done=arrays["ul_end"][k] if ok else None,
                t_edge_done=arrays["edge_done"][k] if ok else None,
                t_dl_done=arrays["dl_done"][k] if has_dl else None,
                retx_count=arrays["retx"][k],
                dropped=dropped,
            )
        )
    em_latencies = [
        arrays["em_delivered"][i] - params.emergency_times[i]
        for i in range(len(params.emergency_times))
    ]
    dl_delivered = (
        poses_delivered * params.pose_wire_bytes
        + len(params.emergency_times) * params.emergency_wire_bytes
    )
    return build_metrics(
        scenario,
        tuple(traces),
        em_latencies,
        ul_delivered,
        int(arrays["overhead"]),
        dl_delivered,
        frames_dropped,
        tuple(arrays["service_log"]),
    )
