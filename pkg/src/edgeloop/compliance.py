"""Requirement-table compliance: checks simulated metrics and static scenario
arithmetic against the deployment thresholds, sweeps TDD splits, and searches
slot allocations like an offline capacity-planning controller app.

Conventions carried in the entry notes: the 100 ms communication+edge budget
is judged at p95 (it is a design allocation, not a hard per-frame bound), the
emergency bound at the max (safety critical) and as one-way delivery, frame
reliability analytically (empirical runs cannot resolve 1e-5 events), and
traffic volumes at wire level (payload plus packet headers).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .engine import RunMetrics, derive_run_params
from .model import (
    EncodingKind,
    RadioConfig,
    RequirementSet,
    ScenarioConfig,
    TddPattern,
    default_requirements,
    scenario_fingerprint,
    validate_scenario,
)
from .pipeline import traffic_asymmetry, uplink_demand
from .radio import frame_delivery_prob, tdd_capacity


class MismatchedScenario(ValueError):
    pass


@dataclass(frozen=True)
class ReportEntry:
    name: str
    rule: str  # "==", "<", "<=", ">=", or "info"
    required: float
    measured: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class ComplianceReport:
    entries: tuple[ReportEntry, ...]
    overall_pass: bool


@dataclass(frozen=True)
class SweepRow:
    dl_slots: int
    ul_slots: int
    dl_bps: float
    ul_bps: float


def _slot_ms_for(radio: RadioConfig) -> float:
    # 1 ms subframe divided into scs/15 slots
    return 15.0 / radio.scs_khz


def _entry(name, rule, required, measured, passed, note="") -> ReportEntry:
    return ReportEntry(name, rule, float(required), float(measured), bool(passed), note)


def _table_entries(scenario: ScenarioConfig, reqs: RequirementSet) -> list[ReportEntry]:
    """Reference-arithmetic rows shared by static and simulated checks."""
    frame_bytes = scenario.sensor.frame_bytes
    entries = [
        _entry(
            "raw_ul_5fps_bps",
            "==",
            reqs.raw_ul_5fps_bps,
            uplink_demand(frame_bytes, 1000.0 / 5),
            uplink_demand(frame_bytes, 1000.0 / 5) == reqs.raw_ul_5fps_bps,
            "sensor raw output at the 5 FPS reference rate",
        ),
        _entry(
            "raw_ul_10fps_bps",
            "==",
            reqs.raw_ul_10fps_bps,
            uplink_demand(frame_bytes, 1000.0 / 10),
            uplink_demand(frame_bytes, 1000.0 / 10) == reqs.raw_ul_10fps_bps,
            "sensor raw output at the 10 FPS reference rate",
        ),
    ]
    if scenario.encoding.kind is EncodingKind.COMPRESSED:
        payload = round(frame_bytes / scenario.encoding.ratio)
        demand_5fps = uplink_demand(payload, 1000.0 / 5)
        entries.append(
            _entry(
                "compressed_ul_min_bps",
                ">=",
                reqs.compressed_ul_min_bps,
                demand_5fps,
                demand_5fps >= reqs.compressed_ul_min_bps,
                "encoded payload at the 5 FPS reference rate",
            )
        )
        entries.append(
            _entry(
                "compressed_ul_max_bps",
                "<=",
                reqs.compressed_ul_max_bps,
                demand_5fps,
                demand_5fps <= reqs.compressed_ul_max_bps,
                "encoded payload at the 5 FPS reference rate",
            )
        )
    else:
        mode = scenario.encoding.kind.value
        for name in ("compressed_ul_min_bps", "compressed_ul_max_bps"):
            entries.append(
                _entry(
                    name,
                    "info",
                    getattr(reqs, name),
                    math.nan,
                    True,
                    f"not applicable: encoding mode is {mode}",
                )
            )
    return entries


def _stability_entry(scenario: ScenarioConfig, reqs: RequirementSet) -> ReportEntry:
    params = derive_run_params(scenario)
    offered = params.frame_wire_bytes * 8 * 1000.0 / params.period_ms
    return _entry(
        "ul_stability",
        "<=",
        params.ul_bps,
        offered,
        offered <= params.ul_bps,
        "offered UL wire rate vs link capacity; not a table row",
    )


def _reliability_entry(scenario: ScenarioConfig, reqs: RequirementSet, note_extra="") -> ReportEntry:
    params = derive_run_params(scenario)
    prob = frame_delivery_prob(
        scenario.radio.packet_error_rate,
        params.frame_packets,
        scenario.radio.max_retransmissions,
    )
    return _entry(
        "reliability_min",
        ">=",
        reqs.reliability_min,
        prob,
        prob >= reqs.reliability_min,
        ("analytic frame delivery probability" + note_extra),
    )


def check(
    metrics: RunMetrics, scenario: ScenarioConfig, reqs: RequirementSet | None = None
) -> ComplianceReport:
    """Evaluate simulated metrics against every requirement threshold."""
    scenario = validate_scenario(scenario)
    reqs = reqs or default_requirements()
    if metrics.scenario_fingerprint != scenario_fingerprint(scenario):
        raise MismatchedScenario(
            "metrics were produced from a different scenario "
            f"({metrics.scenario_fingerprint} != {scenario_fingerprint(scenario)})"
        )
    entries = _table_entries(scenario, reqs)

    dl_rate = metrics.dl_bytes_delivered * 8 * 1000.0 / metrics.duration_ms
    entries.append(
        _entry(
            "dl_rate_max_bps",
            "<",
            reqs.dl_rate_max_bps,
            dl_rate,
            dl_rate < reqs.dl_rate_max_bps,
            "delivered DL wire rate",
        )
    )

    total_volume = metrics.ul_bytes_delivered + metrics.dl_bytes_delivered
    if total_volume > 0:
        share = traffic_asymmetry(metrics.ul_bytes_delivered, metrics.dl_bytes_delivered)
        entries.append(
            _entry("asymmetry_min", ">=", reqs.asymmetry_min, share, share >= reqs.asymmetry_min,
                   "uplink share of delivered wire volume")
        )
        entries.append(
            _entry("asymmetry_max", "<=", reqs.asymmetry_max, share, share <= reqs.asymmetry_max,
                   "uplink share of delivered wire volume")
        )
    else:
        entries.append(_entry("asymmetry_min", ">=", reqs.asymmetry_min, math.nan, False, "no traffic"))
        entries.append(_entry("asymmetry_max", "<=", reqs.asymmetry_max, math.nan, False, "no traffic"))

    drops = f"; observed drops {metrics.frames_dropped}/{metrics.frames_total}"
    entries.append(_reliability_entry(scenario, reqs, drops))

    delivered = metrics.frames_total - metrics.frames_dropped
    if delivered > 0 and not math.isnan(metrics.comm_edge_p95_ms):
        entries.append(
            _entry(
                "comm_edge_latency_ms",
                "<",
                reqs.comm_edge_latency_ms,
                metrics.comm_edge_p95_ms,
                metrics.comm_edge_p95_ms < reqs.comm_edge_latency_ms,
                "p95 of per-frame encode-done to reply-delivered latency",
            )
        )
    else:
        entries.append(
            _entry("comm_edge_latency_ms", "<", reqs.comm_edge_latency_ms, math.nan, False, "no traffic")
        )

    if metrics.emergency_latencies_ms:
        worst = max(metrics.emergency_latencies_ms)
        entries.append(
            _entry(
                "emergency_latency_ms",
                "<",
                reqs.emergency_latency_ms,
                worst,
                worst < reqs.emergency_latency_ms,
                "max over issued stops; one-way edge-to-robot delivery",
            )
        )
    else:
        entries.append(
            _entry(
                "emergency_latency_ms",
                "<",
                reqs.emergency_latency_ms,
                math.nan,
                True,
                "no emergencies scheduled; bound not exercised",
            )
        )

    entries.append(_stability_entry(scenario, reqs))
    return ComplianceReport(tuple(entries), all(e.passed for e in entries))


def check_static(scenario: ScenarioConfig, reqs: RequirementSet | None = None) -> ComplianceReport:
    """Evaluate a scenario's arithmetic without simulating.

    Latency rows use optimistic closed-form budgets (minimum grant wait, no
    queueing, midpoint edge time); asymmetry uses per-frame wire volumes.
    """
    scenario = validate_scenario(scenario)
    reqs = reqs or default_requirements()
    params = derive_run_params(scenario)
    entries = _table_entries(scenario, reqs)

    dl_rate = params.pose_wire_bytes * 8 * 1000.0 / params.period_ms
    entries.append(
        _entry("dl_rate_max_bps", "<", reqs.dl_rate_max_bps, dl_rate, dl_rate < reqs.dl_rate_max_bps,
               "DL wire rate at the frame cadence (static)")
    )

    share = traffic_asymmetry(params.frame_wire_bytes, params.pose_wire_bytes)
    entries.append(
        _entry("asymmetry_min", ">=", reqs.asymmetry_min, share, share >= reqs.asymmetry_min,
               "per-frame wire volumes; emergencies excluded (static)")
    )
    entries.append(
        _entry("asymmetry_max", "<=", reqs.asymmetry_max, share, share <= reqs.asymmetry_max,
               "per-frame wire volumes; emergencies excluded (static)")
    )

    entries.append(_reliability_entry(scenario, reqs))

    def tx_ms(wire_bytes: int, bps: float) -> float:
        return 0.0 if bps == math.inf else wire_bytes * 8 / bps * 1000.0

    budget = (
        scenario.scheduling.min_delay_ms
        + tx_ms(params.frame_wire_bytes, params.ul_bps)
        + (scenario.edge.processing_min_ms + scenario.edge.processing_max_ms) / 2.0
        + scenario.radio.dl_sched_delay_ms
        + tx_ms(params.pose_wire_bytes, params.dl_bps)
    )
    entries.append(
        _entry("comm_edge_latency_ms", "<", reqs.comm_edge_latency_ms, budget,
               budget < reqs.comm_edge_latency_ms,
               "static best-case budget: min grant wait + serialization + midpoint edge, no queueing")
    )
    emergency_budget = scenario.radio.dl_sched_delay_ms + tx_ms(params.emergency_wire_bytes, params.dl_bps)
    entries.append(
        _entry("emergency_latency_ms", "<", reqs.emergency_latency_ms, emergency_budget,
               emergency_budget < reqs.emergency_latency_ms,
               "static budget, idle downlink; one-way edge-to-robot delivery")
    )

    entries.append(_stability_entry(scenario, reqs))
    return ComplianceReport(tuple(entries), all(e.passed for e in entries))


# --- TDD sweep and slot-split search ------------------------------------------


def sweep_tdd(radio: RadioConfig, unassigned: int) -> list[SweepRow]:
    """Per-direction capacity for every split of the usable slots."""
    if not 0 <= unassigned < 10:
        raise ValueError("unassigned must be in [0, 10)")
    usable = 10 - unassigned
    slot_ms = _slot_ms_for(radio)
    rows = []
    for dl_slots in range(usable + 1):
        pattern = TddPattern(
            dl_slots=dl_slots,
            ul_slots=usable - dl_slots,
            unassigned_slots=unassigned,
            slot_ms=slot_ms,
        )
        capacity = tdd_capacity(radio, pattern)
        rows.append(SweepRow(dl_slots, usable - dl_slots, capacity.dl_bps, capacity.ul_bps))
    return rows


def optimize_tdd(
    radio: RadioConfig, ul_demand_bps: float, dl_demand_bps: float, unassigned: int
) -> TddPattern | None:
    """Exhaustive search for the split that covers both demands with the best
    worst-direction margin; ties break toward more uplink slots. None when no
    split is feasible."""
    if ul_demand_bps < 0 or dl_demand_bps < 0:
        raise ValueError("demands must be >= 0")
    best: TddPattern | None = None
    best_margin = -math.inf
    for row in sweep_tdd(radio, unassigned):
        if row.ul_bps < ul_demand_bps or row.dl_bps < dl_demand_bps:
            continue
        ul_margin = math.inf if ul_demand_bps == 0 else row.ul_bps / ul_demand_bps
        dl_margin = math.inf if dl_demand_bps == 0 else row.dl_bps / dl_demand_bps
        margin = min(ul_margin, dl_margin)
        if margin > best_margin or (margin == best_margin and best is not None and row.ul_slots > best.ul_slots):
            best = TddPattern(
                dl_slots=row.dl_slots,
                ul_slots=row.ul_slots,
                unassigned_slots=unassigned,
                slot_ms=_slot_ms_for(radio),
            )
            best_margin = margin
    return best


# --- Rendering ------------------------------------------------------------------

REPORT_FIELDS = ("name", "rule", "required", "measured", "pass", "note")


def report_to_dict(report: ComplianceReport) -> dict:
    return {
        "entries": [
            {
                "name": e.name,
                "rule": e.rule,
                "required": e.required,
                "measured": None if math.isnan(e.measured) else e.measured,
                "pass": e.passed,
                "note": e.note,
            }
            for e in report.entries
        ],
        "overall_pass": report.overall_pass,
    }


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "-"
    if value == math.inf:
        return "inf"
    if abs(value) >= 1e6:
        return f"{value:.6g}"
    return f"{value:.4f}".rstrip("0").rstrip(".")


def render_report_text(report: ComplianceReport) -> str:
    rows = [
        (e.name, e.rule, _fmt(e.required), _fmt(e.measured), "PASS" if e.passed else "FAIL", e.note)
        for e in report.entries
    ]
    headers = ("requirement", "rule", "required", "measured", "result", "note")
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(6)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(r[i].ljust(widths[i]) for i in range(6)) for r in rows]
    lines.append("")
    lines.append(f"overall: {'PASS' if report.overall_pass else 'FAIL'}")
    return "\n".join(lines) + "\n"


def render_report_csv(report: ComplianceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(REPORT_FIELDS)
    for e in report.entries:
        writer.writerow(
            [e.name, e.rule, repr(e.required), "" if math.isnan(e.measured) else repr(e.measured),
             int(e.passed), e.note]
        )
    writer.writerow(["overall_pass", "", "", "", int(report.overall_pass), ""])
    return buf.getvalue()


SWEEP_CSV_COLUMNS = ("dl_slots", "ul_slots", "dl_bps", "ul_bps")


def sweep_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SWEEP_CSV_COLUMNS)
    for row in rows:
        writer.writerow([row.dl_slots, row.ul_slots, repr(row.dl_bps), repr(row.ul_bps)])
    return buf.getvalue()


def sweep_to_text(rows: list[SweepRow]) -> str:
    lines = [f"{'dl':>3} {'ul':>3} {'dl_mbps':>10} {'ul_mbps':>10}"]
    for row in rows:
        lines.append(
            f"{row.dl_slots:>3} {row.ul_slots:>3} {row.dl_bps / 1e6:>10.2f} {row.ul_bps / 1e6:>10.2f}"
        )
    return "\n".join(lines) + "\n"
