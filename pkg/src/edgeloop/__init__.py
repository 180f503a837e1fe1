"""edgeloop: deterministic discrete-event simulator of an edge-AI robotic
perception loop over a 5G NR TDD radio link, with requirement-table
compliance checking and TDD slot-split planning."""

from ._backend import backend_name
from .compliance import (
    ComplianceReport,
    MismatchedScenario,
    ReportEntry,
    SweepRow,
    check,
    check_static,
    optimize_tdd,
    sweep_tdd,
)
from .engine import (
    Event,
    EventKind,
    FrameTrace,
    RunMetrics,
    metrics_to_dict,
    simulate,
    write_trace_csv,
)
from .model import (
    EdgeProfile,
    EdgeSampling,
    EncodingKind,
    EncodingMode,
    InvalidConfig,
    RadioConfig,
    RequirementSet,
    ScenarioConfig,
    SchedulingModel,
    SensorProfile,
    TddPattern,
    default_requirements,
    default_scenario,
    reference_compressed_scenario,
    scenario_fingerprint,
    scenario_from_dict,
    scenario_from_json,
    scenario_to_dict,
    scenario_to_json,
    validate_scenario,
)
from .oracle import OracleTooLarge, oracle_simulate
from .pipeline import (
    DownlinkMessage,
    EmptyTraffic,
    EncodedFrame,
    MessageKind,
    edge_latency,
    effective_frame_period,
    encode_frame,
    traffic_asymmetry,
    uplink_demand,
)
from .radio import (
    Direction,
    LinkCapacity,
    PacketizedFrame,
    UnsupportedBandwidth,
    ZeroCapacity,
    frame_delivery_prob,
    packetize,
    peak_slot_bits,
    scheduling_delay,
    tdd_capacity,
    transfer_duration,
)

__version__ = "0.1.0"
