"""NR TDD link model: slot-split capacity, uplink grant sawtooth, packetization,
and frame delivery probability under per-packet loss with retransmissions.

Capacity is linear in slot count: each slot assigned to a direction contributes
a fixed average rate (ideal resource-grid rate scaled by the direction's
calibrated efficiency, see model.py). PRB counts follow 3GPP TS 38.101-1
Table 5.3.2-1; only the carrier configurations the simulator is calibrated for
are embedded, anything else raises rather than extrapolates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .model import RadioConfig, SchedulingModel, TddPattern

# (bandwidth_mhz, scs_khz) -> N_PRB, per 3GPP TS 38.101-1 Table 5.3.2-1
PRB_TABLE: dict[tuple[int, int], int] = {
    (20, 30): 51,
    (100, 30): 273,
}

SUBCARRIERS_PER_PRB = 12
SYMBOLS_PER_SLOT = 14


class Direction(Enum):
    DL = "dl"
    UL = "ul"


class UnsupportedBandwidth(ValueError):
    pass


class ZeroCapacity(ValueError):
    pass


@dataclass(frozen=True)
class LinkCapacity:
    dl_bps: float
    ul_bps: float
    per_slot_dl_bps: float
    per_slot_ul_bps: float


@dataclass(frozen=True)
class PacketizedFrame:
    payload_bytes: int
    packet_count: int
    wire_bytes: int


def prb_count(radio: RadioConfig) -> int:
    key = (radio.bandwidth_mhz, radio.scs_khz)
    if key not in PRB_TABLE:
        supported = ", ".join(f"{b} MHz @ {s} kHz" for b, s in sorted(PRB_TABLE))
        raise UnsupportedBandwidth(
            f"no PRB entry for {radio.bandwidth_mhz} MHz @ {radio.scs_khz} kHz SCS "
            f"(supported: {supported})"
        )
    return PRB_TABLE[key]


def peak_slot_bits(radio: RadioConfig, direction: Direction) -> float:
    """Bits carried by one slot assigned to `direction`."""
    n_prb = prb_count(radio)
    if direction is Direction.DL:
        layers, efficiency = radio.dl_layers, radio.efficiency_dl
    else:
        layers, efficiency = radio.ul_layers, radio.efficiency_ul
    return (
        layers
        * radio.modulation_bits
        * radio.code_rate
        * n_prb
        * SUBCARRIERS_PER_PRB
        * SYMBOLS_PER_SLOT
        * efficiency
    )


def tdd_capacity(radio: RadioConfig, pattern: TddPattern) -> LinkCapacity:
    """Average per-direction capacity for a slot split, linear in slot count."""
    frame_seconds = pattern.slots_per_frame * pattern.slot_ms / 1000.0
    per_slot_dl = peak_slot_bits(radio, Direction.DL) / frame_seconds
    per_slot_ul = peak_slot_bits(radio, Direction.UL) / frame_seconds
    return LinkCapacity(
        dl_bps=per_slot_dl * pattern.dl_slots,
        ul_bps=per_slot_ul * pattern.ul_slots,
        per_slot_dl_bps=per_slot_dl,
        per_slot_ul_bps=per_slot_ul,
    )


def scheduling_delay(arrival_ms: float, sched: SchedulingModel) -> float:
    """Deterministic sawtooth uplink grant wait.

    An arrival that coincides with a grant epoch (arrival mod period == 0)
    sees the minimum delay; arriving just after an epoch waits nearly the
    full period and sees (asymptotically) the maximum. Output is always in
    [min_delay_ms, max_delay_ms].
    """
    period = sched.period_ms
    amplitude = sched.max_delay_ms - sched.min_delay_ms
    phase = math.fmod(arrival_ms, period)
    return sched.min_delay_ms + ((period - phase) % period) / period * amplitude


def packetize(payload_bytes: int, radio: RadioConfig) -> PacketizedFrame:
    """Split a payload into MTU-sized packets, each carrying header overhead."""
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    mss = radio.mtu_bytes - radio.header_bytes
    packet_count = -(-payload_bytes // mss)  # ceil division
    return PacketizedFrame(
        payload_bytes=payload_bytes,
        packet_count=packet_count,
        wire_bytes=payload_bytes + packet_count * radio.header_bytes,
    )


def transfer_duration(frame: PacketizedFrame, capacity_bps: float) -> float:
    """Pure serialization time of a packetized frame in ms (no queueing)."""
    if frame.wire_bytes == 0:
        return 0.0
    if capacity_bps == 0:
        raise ZeroCapacity(f"cannot serialize {frame.wire_bytes} bytes at 0 bit/s")
    return frame.wire_bytes * 8 / capacity_bps * 1000.0


def frame_delivery_prob(p_packet: float, packet_count: int, max_retx: int) -> float:
    """Probability a whole frame is delivered given per-packet loss p_packet.

    Each packet gets max_retx + 1 independent transmission attempts (no
    combining gain); the frame is delivered iff every packet eventually
    succeeds.
    """
    if not 0 <= p_packet <= 1:
        raise ValueError("p_packet must be in [0, 1]")
    if packet_count == 0:
        return 1.0
    residual = p_packet ** (max_retx + 1)
    if residual >= 1.0:
        return 0.0
    return math.exp(packet_count * math.log1p(-residual))
