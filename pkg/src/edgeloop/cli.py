"""Command-line front end.

Subcommands: run (simulate + compliance report), sweep (per-split capacity
CSV), optimize (slot-split search for the scenario's offered load),
check-table1 (static requirement arithmetic, no simulation), validate.

Exit codes: 0 success (and, for run/check-table1, all requirements passed);
1 compliance failure; 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import compliance
from ._backend import backend_name
from .engine import metrics_to_dict, simulate, write_trace_csv
from .model import InvalidConfig, scenario_fingerprint, scenario_from_json, validate_scenario
from .oracle import OracleTooLarge
from .radio import UnsupportedBandwidth, ZeroCapacity


class CliError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeloop",
        description="Discrete-event simulator of an edge-AI perception loop over a 5G NR TDD link.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_out: bool) -> None:
        p.add_argument("--config", required=True, help="scenario config file (JSON; {} for defaults)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--format", choices=("csv", "text"), default="text", help="stdout format")
        if with_out:
            p.add_argument(
                "--out",
                default=os.environ.get("EDGELOOP_OUT", "out"),
                help="output directory (default: $EDGELOOP_OUT or ./out)",
            )
            p.add_argument("--force", action="store_true", help="overwrite existing output files")

    add_common(sub.add_parser("run", help="simulate and write traces, metrics, and a report"), True)
    add_common(sub.add_parser("sweep", help="capacity for every TDD split (plot-ready CSV)"), True)
    add_common(sub.add_parser("optimize", help="best TDD split for the scenario's offered load"), False)
    add_common(sub.add_parser("check-table1", help="static requirement arithmetic, no simulation"), False)
    add_common(sub.add_parser("validate", help="validate a config file"), False)
    return parser


def _load_scenario(args):
    path = Path(args.config)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    scenario = scenario_from_json(path.read_text())
    if args.seed is not None:
        if args.seed < 0:
            raise CliError("--seed must be >= 0")
        scenario = validate_scenario(dataclasses.replace(scenario, seed=args.seed))
    return scenario


def _write_text(path: Path, text: str, force: bool) -> None:
    if path.exists() and not force:
        raise CliError(f"refusing to overwrite {path} (pass --force)")
    path.write_text(text)


def _print_report(report, fmt: str) -> None:
    if fmt == "csv":
        sys.stdout.write(compliance.render_report_csv(report))
    else:
        sys.stdout.write(compliance.render_report_text(report))


def _cmd_run(args) -> int:
    scenario = _load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    if trace_path.exists() and not args.force:
        raise CliError(f"refusing to overwrite {trace_path} (pass --force)")
    metrics = simulate(scenario)
    report = compliance.check(metrics, scenario)
    write_trace_csv(metrics, trace_path)
    _write_text(out / "metrics.json", json.dumps(metrics_to_dict(metrics), indent=2, sort_keys=True) + "\n", args.force)
    _write_text(out / "report.json", json.dumps(compliance.report_to_dict(report), indent=2, sort_keys=True) + "\n", args.force)
    _write_text(out / "report.txt", compliance.render_report_text(report), args.force)
    _print_report(report, args.format)
    sys.stdout.write(f"wrote {trace_path}, metrics.json, report.json, report.txt in {out}\n")
    return 0 if report.overall_pass else 1


def _cmd_sweep(args) -> int:
    scenario = _load_scenario(args)
    rows = compliance.sweep_tdd(scenario.radio, scenario.pattern.unassigned_slots)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "sweep.csv", compliance.sweep_to_csv(rows), args.force)
    if args.format == "csv":
        sys.stdout.write(compliance.sweep_to_csv(rows))
    else:
        sys.stdout.write(compliance.sweep_to_text(rows))
    return 0


def _cmd_optimize(args) -> int:
    scenario = _load_scenario(args)
    from .engine import derive_run_params

    params = derive_run_params(scenario)
    ul_demand = params.frame_wire_bytes * 8 * 1000.0 / params.period_ms
    dl_demand = params.pose_wire_bytes * 8 * 1000.0 / params.period_ms
    pattern = compliance.optimize_tdd(
        scenario.radio, ul_demand, dl_demand, scenario.pattern.unassigned_slots
    )
    if pattern is None:
        sys.stdout.write(
            f"infeasible: no split covers ul={ul_demand / 1e6:.2f} Mbps "
            f"dl={dl_demand / 1e6:.2f} Mbps with {10 - scenario.pattern.unassigned_slots} usable slots\n"
        )
    else:
        from .radio import tdd_capacity

        cap = tdd_capacity(scenario.radio, pattern)
        sys.stdout.write(
            f"feasible: dl_slots={pattern.dl_slots} ul_slots={pattern.ul_slots} "
            f"unassigned={pattern.unassigned_slots} "
            f"(dl={cap.dl_bps / 1e6:.2f} Mbps, ul={cap.ul_bps / 1e6:.2f} Mbps; "
            f"demand ul={ul_demand / 1e6:.2f}, dl={dl_demand / 1e6:.2f})\n"
        )
    return 0


def _cmd_check_table1(args) -> int:
    scenario = _load_scenario(args)
    report = compliance.check_static(scenario)
    _print_report(report, args.format)
    return 0 if report.overall_pass else 1


def _cmd_validate(args) -> int:
    scenario = _load_scenario(args)
    sys.stdout.write(f"valid (fingerprint {scenario_fingerprint(scenario)}, backend {backend_name()})\n")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "optimize": _cmd_optimize,
    "check-table1": _cmd_check_table1,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InvalidConfig as exc:
        for problem in exc.problems:
            sys.stderr.write(f"error: {problem}\n")
        return 2
    except (CliError, UnsupportedBandwidth, ZeroCapacity, OracleTooLarge, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
