"""Domain types, unit conventions, configuration validation, and the deployment
requirement table.

Unit conventions used across the package: decimal byte units (1 MB = 1e6 bytes),
rates in bit/s (1 Gbps = 1e9 bit/s), times in milliseconds. Decimal units keep
the headline traffic arithmetic exact: 30 MB x 5 FPS x 8 = 1.2e9 bit/s.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from enum import Enum

# --- Link calibration -------------------------------------------------------
#
# Per-slot average rates come from a least-squares line through the origin
# fitted to throughput measured on the 20 MHz / 30 kHz SCS reference setup
# (2x2 MIMO downlink, single-layer uplink, 64QAM-class MCS at max CQI):
# DL anchors {3 slots -> 43 Mbps, 8 slots -> 116 Mbps}, UL anchors
# {2 -> 13 Mbps, 6 -> 40 Mbps}. The slot<->rate pairing is inferred from
# ratio consistency (116/8 ~ 43/3 ~ 14.4 Mbps/slot) and is an assumption;
# see README. The efficiency defaults below scale the ideal resource-grid
# rate down to the fitted per-slot rate.

DL_THROUGHPUT_ANCHORS: tuple[tuple[int, float], ...] = ((3, 43e6), (8, 116e6))
UL_THROUGHPUT_ANCHORS: tuple[tuple[int, float], ...] = ((2, 13e6), (6, 40e6))


def fit_per_slot_bps(anchors: tuple[tuple[int, float], ...]) -> float:
    """Least-squares slope of rate vs slot count through the origin."""
    return sum(s * r for s, r in anchors) / sum(s * s for s, _ in anchors)


_TDD_FRAME_SECONDS = 10 * 0.5e-3  # 10 slots of 0.5 ms at 30 kHz SCS
_REFERENCE_RE_PER_SLOT = 51 * 12 * 14  # 51 PRB x 12 subcarriers x 14 symbols
_IDEAL_DL_PER_SLOT_BPS = 2 * 8 * 0.925 * _REFERENCE_RE_PER_SLOT / _TDD_FRAME_SECONDS
_IDEAL_UL_PER_SLOT_BPS = 1 * 8 * 0.925 * _REFERENCE_RE_PER_SLOT / _TDD_FRAME_SECONDS

DEFAULT_EFFICIENCY_DL = fit_per_slot_bps(DL_THROUGHPUT_ANCHORS) / _IDEAL_DL_PER_SLOT_BPS
DEFAULT_EFFICIENCY_UL = fit_per_slot_bps(UL_THROUGHPUT_ANCHORS) / _IDEAL_UL_PER_SLOT_BPS


class EncodingKind(str, Enum):
    RAW = "raw"
    COMPRESSED = "compressed"
    SEMANTIC = "semantic"


class EdgeSampling(str, Enum):
    UNIFORM_RANDOM = "uniform_random"
    MIDPOINT = "midpoint"


class InvalidConfig(ValueError):
    """Raised with the full list of configuration problems, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class SensorProfile:
    frame_bytes: int = 30_000_000  # raw point-cloud frame size, decimal bytes
    target_fps: float = 5.0
    acquisition_ms: float = 200.0  # structured-light capture time per frame
    pipelined_acquisition: bool = False


@dataclass(frozen=True)
class EncodingMode:
    kind: EncodingKind = EncodingKind.RAW
    ratio: float = 1.0  # size reduction factor, >= 1; 1 for raw
    encode_latency_ms: float = 0.0


@dataclass(frozen=True)
class RadioConfig:
    bandwidth_mhz: int = 20
    scs_khz: int = 30
    dl_layers: int = 2
    ul_layers: int = 1
    modulation_bits: int = 8
    code_rate: float = 0.925
    efficiency_dl: float = DEFAULT_EFFICIENCY_DL
    efficiency_ul: float = DEFAULT_EFFICIENCY_UL
    mtu_bytes: int = 1500
    header_bytes: int = 40  # per-packet transport/tunnel overhead
    packet_error_rate: float = 0.0  # max-CQI operating point by default
    max_retransmissions: int = 3
    dl_sched_delay_ms: float = 2.0  # fixed downlink grant wait
    infinite_capacity: bool = False  # bypass the TDD capacity model (ideal link)


@dataclass(frozen=True)
class TddPattern:
    dl_slots: int = 3
    ul_slots: int = 6
    unassigned_slots: int = 1
    slots_per_frame: int = 10
    slot_ms: float = 0.5


@dataclass(frozen=True)
class SchedulingModel:
    """Sawtooth uplink grant-wait model; period defaults to max - min."""

    min_delay_ms: float = 16.0
    max_delay_ms: float = 32.0
    period_ms: float | None = None

    def __post_init__(self):
        if self.period_ms is None:
            object.__setattr__(self, "period_ms", self.max_delay_ms - self.min_delay_ms)


@dataclass(frozen=True)
class EdgeProfile:
    processing_min_ms: float = 30.0
    processing_max_ms: float = 80.0
    downlink_message_bytes: int = 4096  # pose/trajectory reply per frame
    sampling: EdgeSampling = EdgeSampling.UNIFORM_RANDOM
    emergency_message_bytes: int = 64


@dataclass(frozen=True)
class RequirementSet:
    """Machine-readable deployment requirement table for the welding use case."""

    comm_edge_latency_ms: float = 100.0
    emergency_latency_ms: float = 10.0
    reliability_min: float = 0.99999
    asymmetry_min: float = 0.95
    asymmetry_max: float = 0.99
    dl_rate_max_bps: float = 5_000_000.0
    raw_ul_5fps_bps: float = 1.2e9
    raw_ul_10fps_bps: float = 2.4e9
    compressed_ul_min_bps: float = 120e6
    compressed_ul_max_bps: float = 240e6


def default_requirements() -> RequirementSet:
    return RequirementSet()


@dataclass(frozen=True)
class ScenarioConfig:
    sensor: SensorProfile = field(default_factory=SensorProfile)
    encoding: EncodingMode = field(default_factory=EncodingMode)
    radio: RadioConfig = field(default_factory=RadioConfig)
    pattern: TddPattern = field(default_factory=TddPattern)
    scheduling: SchedulingModel = field(default_factory=SchedulingModel)
    edge: EdgeProfile = field(default_factory=EdgeProfile)
    duration_ms: float = 10_000.0
    seed: int = 1
    emergency_times_ms: tuple[float, ...] = ()


# --- Validation --------------------------------------------------------------


def _require(problems: list[str], ok: bool, path: str, message: str) -> None:
    if not ok:
        problems.append(f"{path}: {message}")


def validate_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Check every invariant and return the config unchanged if all hold.

    All violations are collected and reported together in InvalidConfig.
    Validation is idempotent: a validated config revalidates to an equal value.
    """
    problems: list[str] = []
    s, e, r = config.sensor, config.encoding, config.radio
    p, sch, edge = config.pattern, config.scheduling, config.edge

    _require(problems, s.frame_bytes > 0, "sensor.frame_bytes", "must be > 0")
    _require(problems, s.target_fps > 0, "sensor.target_fps", "must be > 0")
    _require(problems, s.acquisition_ms > 0, "sensor.acquisition_ms", "must be > 0")

    _require(problems, e.ratio >= 1.0, "encoding.ratio", "must be >= 1")
    _require(problems, e.encode_latency_ms >= 0, "encoding.encode_latency_ms", "must be >= 0")
    if e.kind is EncodingKind.RAW:
        _require(problems, e.ratio == 1.0, "encoding.ratio", "must be 1 for raw mode")
        _require(
            problems, e.encode_latency_ms == 0.0, "encoding.encode_latency_ms", "must be 0 for raw mode"
        )

    _require(problems, r.bandwidth_mhz > 0, "radio.bandwidth_mhz", "must be > 0")
    _require(problems, r.scs_khz > 0, "radio.scs_khz", "must be > 0")
    _require(problems, r.dl_layers >= 1, "radio.dl_layers", "must be >= 1")
    _require(problems, r.ul_layers >= 1, "radio.ul_layers", "must be >= 1")
    _require(problems, r.modulation_bits >= 1, "radio.modulation_bits", "must be >= 1")
    _require(problems, 0 < r.code_rate <= 1, "radio.code_rate", "must be in (0, 1]")
    _require(problems, 0 < r.efficiency_dl <= 1, "radio.efficiency_dl", "must be in (0, 1]")
    _require(problems, 0 < r.efficiency_ul <= 1, "radio.efficiency_ul", "must be in (0, 1]")
    _require(problems, r.header_bytes >= 0, "radio.header_bytes", "must be >= 0")
    _require(problems, r.mtu_bytes > r.header_bytes, "radio.mtu_bytes", "must exceed header_bytes")
    _require(problems, 0 <= r.packet_error_rate <= 1, "radio.packet_error_rate", "must be in [0, 1]")
    _require(problems, r.max_retransmissions >= 0, "radio.max_retransmissions", "must be >= 0")
    _require(problems, r.dl_sched_delay_ms >= 0, "radio.dl_sched_delay_ms", "must be >= 0")

    _require(problems, p.slots_per_frame == 10, "pattern.slots_per_frame", "is fixed at 10")
    _require(problems, p.dl_slots >= 0, "pattern.dl_slots", "must be >= 0")
    _require(problems, p.ul_slots >= 0, "pattern.ul_slots", "must be >= 0")
    _require(problems, p.unassigned_slots >= 0, "pattern.unassigned_slots", "must be >= 0")
    _require(
        problems,
        p.dl_slots + p.ul_slots + p.unassigned_slots == p.slots_per_frame,
        "pattern",
        f"dl_slots + ul_slots + unassigned_slots must equal {p.slots_per_frame} "
        f"(got {p.dl_slots} + {p.ul_slots} + {p.unassigned_slots})",
    )
    _require(problems, p.slot_ms > 0, "pattern.slot_ms", "must be > 0")

    _require(
        problems,
        0 <= sch.min_delay_ms <= sch.max_delay_ms,
        "scheduling",
        "requires 0 <= min_delay_ms <= max_delay_ms",
    )
    _require(problems, (sch.period_ms or 0) > 0, "scheduling.period_ms", "must be > 0")

    _require(
        problems,
        0 <= edge.processing_min_ms <= edge.processing_max_ms,
        "edge",
        "requires 0 <= processing_min_ms <= processing_max_ms",
    )
    _require(problems, edge.downlink_message_bytes > 0, "edge.downlink_message_bytes", "must be > 0")
    _require(problems, edge.emergency_message_bytes > 0, "edge.emergency_message_bytes", "must be > 0")

    _require(problems, config.duration_ms > 0, "duration_ms", "must be > 0")
    _require(problems, config.seed >= 0, "seed", "must be >= 0")
    for i, t in enumerate(config.emergency_times_ms):
        _require(
            problems,
            0 <= t < config.duration_ms,
            f"emergency_times_ms[{i}]",
            f"must lie in [0, duration_ms) = [0, {config.duration_ms})",
        )

    if problems:
        raise InvalidConfig(problems)
    return config


# --- Serialization (the config-file schema) ----------------------------------


def scenario_to_dict(config: ScenarioConfig) -> dict:
    def convert(value):
        if isinstance(value, Enum):
            return value.value
        if dataclasses.is_dataclass(value):
            return {f.name: convert(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [convert(v) for v in value]
        return value

    return convert(config)


def _coerce(value, target_type, path: str, problems: list[str]):
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{path}: expected an integer")
        elif isinstance(value, float) and not value.is_integer():
            problems.append(f"{path}: expected an integer, got {value}")
        else:
            return int(value)
    elif target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{path}: expected a number")
        else:
            return float(value)
    elif target_type is bool:
        if not isinstance(value, bool):
            problems.append(f"{path}: expected true/false")
        else:
            return value
    elif isinstance(target_type, type) and issubclass(target_type, Enum):
        try:
            return target_type(value)
        except ValueError:
            allowed = ", ".join(m.value for m in target_type)
            problems.append(f"{path}: must be one of {{{allowed}}}")
    else:  # pragma: no cover - schema bug guard
        problems.append(f"{path}: unsupported field type {target_type}")
    return None


def _dataclass_from_dict(cls, data, path: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{path or 'config'}: expected an object")
        return cls()
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(set(data) - known):
        problems.append(f"{(path + '.' if path else '')}{key}: unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub_path = f"{path + '.' if path else ''}{f.name}"
        raw = data[f.name]
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _dataclass_from_dict(hint, raw, sub_path, problems)
        elif hint == tuple[float, ...]:
            if not isinstance(raw, list):
                problems.append(f"{sub_path}: expected a list of numbers")
            else:
                items = []
                for i, v in enumerate(raw):
                    c = _coerce(v, float, f"{sub_path}[{i}]", problems)
                    if c is not None:
                        items.append(c)
                kwargs[f.name] = tuple(items)
        elif hint == (float | None):
            c = _coerce(raw, float, sub_path, problems)
            if c is not None:
                kwargs[f.name] = c
        else:
            c = _coerce(raw, hint, sub_path, problems)
            if c is not None:
                kwargs[f.name] = c
    try:
        return cls(**kwargs)
    except TypeError:  # pragma: no cover - all coercions failed already
        return cls()


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a JSON-compatible tree.

    Every key is optional and defaults apply; unknown keys are errors so that
    typos cannot silently fall back to defaults. The result is validated.
    """
    problems: list[str] = []
    config = _dataclass_from_dict(ScenarioConfig, data, "", problems)
    if problems:
        raise InvalidConfig(problems)
    return validate_scenario(config)


def scenario_from_json(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig([f"config: not valid JSON ({exc})"]) from exc
    return scenario_from_dict(data)


def scenario_to_json(config: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(config), indent=2, sort_keys=False) + "\n"


def scenario_fingerprint(config: ScenarioConfig) -> str:
    """Stable identity of a scenario, used to match metrics back to configs."""
    canonical = json.dumps(scenario_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# --- Reference scenarios ------------------------------------------------------


def default_scenario() -> ScenarioConfig:
    """Raw 30 MB frames at 5 FPS on the 20 MHz reference link."""
    return validate_scenario(ScenarioConfig())


def reference_compressed_scenario(infinite_capacity: bool = False) -> ScenarioConfig:
    """Compressed operating point used for requirement-table checks.

    5:1 geometric compression (6 MB/frame, 240 Mbps at 5 FPS), a 100 MHz
    4-layer-uplink radio so the offered load is sustainable, midpoint edge
    latency, and a 100 kB trajectory reply sized so the downlink stays under
    5 Mbps while keeping the uplink share of traffic inside the 95-99%% band.
    """
    return validate_scenario(
        ScenarioConfig(
            encoding=EncodingMode(kind=EncodingKind.COMPRESSED, ratio=5.0, encode_latency_ms=15.0),
            radio=RadioConfig(bandwidth_mhz=100, ul_layers=4, infinite_capacity=infinite_capacity),
            edge=EdgeProfile(
                downlink_message_bytes=100_000,
                sampling=EdgeSampling.MIDPOINT,
            ),
            duration_ms=6000.0,
            seed=7,
            emergency_times_ms=(2500.0,),
        )
    )
