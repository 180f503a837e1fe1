"""Robot-side data path: frame cadence, the three-mode encoding layer, uplink
demand arithmetic, edge processing latency, and downlink reply messages.

Point clouds, codecs, and pose math never appear here; every stage is reduced
to the sizes and latencies it contributes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .model import EdgeProfile, EdgeSampling, EncodingKind, EncodingMode, SensorProfile


class EmptyTraffic(ValueError):
    pass


class MessageKind(Enum):
    POSE_TRAJECTORY = "pose_trajectory"
    EMERGENCY_STOP = "emergency_stop"


@dataclass(frozen=True)
class EncodedFrame:
    seq: int
    created_ms: float  # acquisition completion time
    payload_bytes: int
    mode: EncodingKind
    encode_done_ms: float


@dataclass(frozen=True)
class DownlinkMessage:
    seq: int
    payload_bytes: int
    kind: MessageKind


def effective_frame_period(sensor: SensorProfile) -> float:
    """Frame period in ms; a non-pipelined capture occupies the sensor, so
    acquisition time caps the achievable rate."""
    requested = 1000.0 / sensor.target_fps
    if sensor.pipelined_acquisition:
        return requested
    return max(requested, sensor.acquisition_ms)


def encode_frame(raw_bytes: int, mode: EncodingMode, created_ms: float, seq: int) -> EncodedFrame:
    return EncodedFrame(
        seq=seq,
        created_ms=created_ms,
        payload_bytes=round(raw_bytes / mode.ratio),
        mode=mode.kind,
        encode_done_ms=created_ms + mode.encode_latency_ms,
    )


def uplink_demand(payload_bytes: int, period_ms: float) -> float:
    """Offered rate in bit/s for one payload per period."""
    if period_ms <= 0:
        raise ValueError("period_ms must be > 0")
    return payload_bytes * 8 * 1000.0 / period_ms


def edge_latency(edge: EdgeProfile, draw: float) -> float:
    """Per-frame edge processing time; `draw` is a caller-supplied uniform in [0, 1)."""
    if edge.sampling is EdgeSampling.MIDPOINT:
        return (edge.processing_min_ms + edge.processing_max_ms) / 2.0
    return edge.processing_min_ms + draw * (edge.processing_max_ms - edge.processing_min_ms)


def traffic_asymmetry(ul_volume_bytes: float, dl_volume_bytes: float) -> float:
    """Uplink share of total traffic volume."""
    total = ul_volume_bytes + dl_volume_bytes
    if total == 0:
        raise EmptyTraffic("no traffic in either direction")
    return ul_volume_bytes / total


def pose_message(seq: int, edge: EdgeProfile) -> DownlinkMessage:
    return DownlinkMessage(seq=seq, payload_bytes=edge.downlink_message_bytes, kind=MessageKind.POSE_TRAJECTORY)


def emergency_message(seq: int, edge: EdgeProfile) -> DownlinkMessage:
    return DownlinkMessage(seq=seq, payload_bytes=edge.emergency_message_bytes, kind=MessageKind.EMERGENCY_STOP)
