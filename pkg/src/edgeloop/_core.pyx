# cython: language_level=3
"""Compiled kernels: the engine's uplink packet walk and the time-stepped
oracle loop. Each kernel mirrors its pure-Python twin operation for operation
(same draw protocol, same arithmetic order); backend selection happens in
edgeloop._backend."""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport fmod, INFINITY
from numpy.random cimport bitgen_t

import numpy as np

from .radio import ZeroCapacity


cdef inline double _sawtooth(double t, double smin, double smax, double period) noexcept nogil:
    cdef double phase = fmod(t, period)
    cdef double wait = fmod(period - phase, period)
    return smin + wait / period * (smax - smin)


cdef bitgen_t *_bitgen_ptr(object bitgen):
    return <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")


def uplink_walk(long long payload_bytes, long long mtu_bytes, long long header_bytes,
                double ul_bps, double per, long long max_retx, double start_ms,
                double sched_min, double sched_max, double sched_period, object bitgen):
    """Engine-route walk; twin of engine._uplink_walk_py."""
    cdef long long mss = mtu_bytes - header_bytes
    cdef long long n_full = payload_bytes // mss
    cdef long long rem = payload_bytes % mss
    cdef long long n_pkts = n_full + (1 if rem else 0)
    cdef double amplitude = sched_max - sched_min
    cdef double t = start_ms
    cdef long long retx = 0
    cdef long long overhead = 0
    cdef long long i, wire, attempt
    cdef double tx_ms, phase
    cdef bitgen_t *bg = NULL
    if bitgen is not None:
        bg = _bitgen_ptr(bitgen)
    for i in range(n_pkts):
        wire = mtu_bytes if i < n_full else rem + header_bytes
        tx_ms = (wire * 8) / ul_bps * 1000.0
        attempt = 0
        while True:
            if attempt > 0:
                phase = fmod(t, sched_period)
                t += sched_min + fmod(sched_period - phase, sched_period) / sched_period * amplitude
                t += tx_ms
                retx += 1
                overhead += wire
            else:
                t += tx_ms
            if per <= 0.0 or bg.next_double(bg.state) >= per:
                break
            attempt += 1
            if attempt > max_retx:
                return t, retx, False, overhead
    return t, retx, True, overhead


cdef int _oracle_walk_c(long long payload, long long mtu, long long header, double ul_bps,
                        double per, long long max_retx, double start,
                        double smin, double smax, double speriod, bitgen_t *bg,
                        double *end_out, long long *retx_out, long long *overhead_out):
    """Oracle-route walk; twin of oracle._oracle_walk. Returns 1 if delivered."""
    cdef long long mss = mtu - header
    cdef long long n_pkts = -((-payload) // mss)
    cdef double t = start
    cdef long long retx = 0, overhead = 0, sent = 0
    cdef long long chunk, wire, attempts
    cdef double tx
    cdef Py_ssize_t i
    for i in range(n_pkts):
        chunk = mss if payload - sent >= mss else payload - sent
        sent += chunk
        wire = chunk + header
        tx = (wire * 8) / ul_bps * 1000.0
        attempts = 0
        while True:
            if attempts:
                t += _sawtooth(t, smin, smax, speriod) + tx
                retx += 1
                overhead += wire
            else:
                t += tx
            if per <= 0.0 or bg.next_double(bg.state) >= per:
                break
            attempts += 1
            if attempts > max_retx:
                end_out[0] = t
                retx_out[0] = retx
                overhead_out[0] = overhead
                return 0
    end_out[0] = t
    retx_out[0] = retx
    overhead_out[0] = overhead
    return 1


# frame stages, shared with oracle._oracle_step_py
cdef enum:
    WAIT = 0
    CAPTURING = 1
    ENCODING = 2
    AWAIT_GRANT = 3
    READY = 4
    TX = 5
    EDGE = 6
    AWAIT_DL = 7
    DONE = 8
    DROPPED = 9


def oracle_run(double step_ms, double hard_limit_ms,
               Py_ssize_t n, double period, double acq, double enc_latency,
               long long payload, long long mtu, long long header,
               double ul_bps, double dl_bps, double per, long long max_retx,
               double smin, double smax, double speriod,
               double edge_min, double edge_max, int edge_midpoint,
               double[:] edge_draws, list bitgens,
               double dl_sched, long long pose_wire, long long emerg_wire,
               double[:] em_times_sorted, long long[:] em_sorted_idx,
               double[:] grant, double[:] ul_start, double[:] ul_end,
               double[:] edge_done, double[:] dl_done,
               long long[:] retx_counts, signed char[:] delivered,
               double[:] em_delivered,
               long long[:] log_seq, double[:] log_start, double[:] log_end):
    """Stepped scan loop; twin of oracle._oracle_step_py."""
    cdef Py_ssize_t m = em_times_sorted.shape[0]
    cdef Py_ssize_t em_issued = 0
    cdef double[:] cap_done = np.empty(max(n, 1), dtype=np.float64)
    cdef double[:] enc_done = np.empty(max(n, 1), dtype=np.float64)
    cdef signed char[:] stage = np.zeros(max(n, 1), dtype=np.int8)
    cdef long long[:] ready = np.empty(max(n, 1), dtype=np.int64)
    cdef long long[:] poses = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t ready_n = 0, poses_n = 0
    cdef Py_ssize_t k, i, best_pos, em_head = 0
    cdef long long j, p_lead
    cdef double t = 0.0
    cdef long long tick = 0
    cdef Py_ssize_t lo = 0, hi = 0
    cdef bint fired, ul_busy = False
    cdef int dl_kind = 0  # 0 idle, 1 pose, 2 emergency
    cdef long long dl_id = -1
    cdef double dl_done_t = 0.0, dl_free = 0.0, ul_free = 0.0
    cdef double e_cand, p_cand, lat, start, end
    cdef long long remaining = n + m
    cdef long long overhead_total = 0, walk_retx = 0, walk_overhead = 0
    cdef Py_ssize_t n_serviced = 0
    cdef int walk_ok
    cdef bitgen_t *bg

    for k in range(n):
        cap_done[k] = k * period + acq
        enc_done[k] = cap_done[k] + enc_latency

    while remaining > 0:
        fired = False
        # emergency issue promotions; queued emergencies are [em_head, em_issued)
        while em_issued < m and em_times_sorted[em_issued] <= t:
            em_issued += 1
            fired = True
        while hi < n and hi * period <= t:
            stage[hi] = CAPTURING
            hi += 1
            fired = True
        for k in range(lo, hi):
            if stage[k] == CAPTURING:
                if cap_done[k] <= t:
                    stage[k] = ENCODING
                    fired = True
            elif stage[k] == ENCODING:
                if enc_done[k] <= t:
                    grant[k] = enc_done[k] + _sawtooth(enc_done[k], smin, smax, speriod)
                    stage[k] = AWAIT_GRANT
                    fired = True
            elif stage[k] == AWAIT_GRANT:
                if grant[k] <= t:
                    stage[k] = READY
                    ready[ready_n] = k
                    ready_n += 1
                    fired = True
            elif stage[k] == TX:
                if ul_end[k] <= t:
                    ul_busy = False
                    ul_free = ul_end[k]
                    if delivered[k]:
                        if edge_midpoint:
                            lat = (edge_min + edge_max) / 2.0
                        else:
                            lat = edge_min + edge_draws[k] * (edge_max - edge_min)
                        edge_done[k] = ul_end[k] + lat
                        stage[k] = EDGE
                    else:
                        stage[k] = DROPPED
                        remaining -= 1
                    fired = True
            elif stage[k] == EDGE:
                if edge_done[k] <= t:
                    stage[k] = AWAIT_DL
                    poses[poses_n] = k
                    poses_n += 1
                    fired = True
        while lo < n and stage[lo] >= DONE:
            lo += 1
        if not ul_busy and ready_n > 0:
            best_pos = 0
            for i in range(1, ready_n):
                if grant[ready[i]] < grant[ready[best_pos]] or (
                    grant[ready[i]] == grant[ready[best_pos]] and ready[i] < ready[best_pos]
                ):
                    best_pos = i
            j = ready[best_pos]
            ready[best_pos] = ready[ready_n - 1]
            ready_n -= 1
            if payload > 0 and ul_bps == 0:
                raise ZeroCapacity("uplink capacity is 0 bit/s but frames are offered")
            start = grant[j] if grant[j] > ul_free else ul_free
            bg = NULL
            if per > 0.0:
                bg = _bitgen_ptr(bitgens[j])
            walk_ok = _oracle_walk_c(payload, mtu, header, ul_bps, per, max_retx,
                                     start, smin, smax, speriod, bg,
                                     &end, &walk_retx, &walk_overhead)
            ul_start[j] = start
            ul_end[j] = end
            retx_counts[j] = walk_retx
            delivered[j] = walk_ok
            overhead_total += walk_overhead
            log_seq[n_serviced] = j
            log_start[n_serviced] = start
            log_end[n_serviced] = end
            n_serviced += 1
            stage[j] = TX
            ul_busy = True
            fired = True
        if dl_kind != 0 and dl_done_t <= t:
            if dl_kind == 1:
                dl_done[dl_id] = dl_done_t
                stage[dl_id] = DONE
            else:
                em_delivered[dl_id] = dl_done_t
            remaining -= 1
            dl_free = dl_done_t
            dl_kind = 0
            fired = True
        if dl_kind == 0 and (em_head < em_issued or poses_n > 0):
            if em_head < em_issued:
                e_cand = em_times_sorted[em_head] if em_times_sorted[em_head] > dl_free else dl_free
            else:
                e_cand = INFINITY
            if poses_n > 0:
                best_pos = 0
                for i in range(1, poses_n):
                    if edge_done[poses[i]] < edge_done[poses[best_pos]] or (
                        edge_done[poses[i]] == edge_done[poses[best_pos]] and poses[i] < poses[best_pos]
                    ):
                        best_pos = i
                p_lead = poses[best_pos]
                p_cand = edge_done[p_lead] if edge_done[p_lead] > dl_free else dl_free
            else:
                p_lead = -1
                p_cand = INFINITY
            if dl_bps == 0:
                raise ZeroCapacity("downlink capacity is 0 bit/s but replies are offered")
            if e_cand <= p_cand and e_cand <= t:
                dl_id = em_sorted_idx[em_head]
                em_head += 1
                dl_kind = 2
                dl_done_t = e_cand + dl_sched + (emerg_wire * 8) / dl_bps * 1000.0
                fired = True
            elif p_cand < e_cand and p_cand <= t:
                poses[best_pos] = poses[poses_n - 1]
                poses_n -= 1
                dl_id = p_lead
                dl_kind = 1
                dl_done_t = p_cand + dl_sched + (pose_wire * 8) / dl_bps * 1000.0
                fired = True
        if not fired:
            tick += 1
            t = tick * step_ms
            if t > hard_limit_ms:
                raise RuntimeError("oracle exceeded its drain-time bound; scenario diverges")

    return n_serviced, overhead_total
