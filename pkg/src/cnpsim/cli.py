"""Command line front end.

    cnpsim run      one seeded run -> trace file + metrics CSV
    cnpsim compare  variant x dialect matrix -> four traces + comparison CSV
    cnpsim validate replay a trace file against the protocol rules

Exit codes: 0 ok, 1 conformance violations, 2 config or parse error,
3 simulation timeout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, read_config_file
from .conformance import validate_file
from .messaging import DIALECTS, MessagingError, write_trace
from .metrics import compare, report_for, write_comparison_csv, write_reports_csv
from .network import SimulationTimeout
from .protocol import ProtocolVariant
from .pursuit import ScenarioError
from .simulation import RunResult, build_experiment, run_experiment

log = logging.getLogger("cnpsim")

EXIT_OK, EXIT_VIOLATIONS, EXIT_CONFIG, EXIT_TIMEOUT = 0, 1, 2, 3

# flag dest -> config key
_FLAG_KEYS = {
    "variant": "variant",
    "dialect": "dialect",
    "tasks": "tasks",
    "changes": "changes",
    "contractors": "contractors",
    "grid": "grid",
    "seed": "seed",
    "latency": "latency",
    "retry_budget": "retry_budget",
    "report_interval": "report_interval",
    "progress_policy": "progress_policy",
    "bid_window": "bid_window",
    "work_rate": "work_rate",
    "max_ticks": "max_ticks",
}


def _scenario_flags(with_variant: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    if with_variant:
        p.add_argument("--variant", choices=[v.value for v in ProtocolVariant])
        p.add_argument("--dialect", choices=sorted(DIALECTS))
    p.add_argument("--tasks", type=int, metavar="N")
    p.add_argument("--changes", type=int, metavar="N")
    p.add_argument("--contractors", type=int, metavar="N")
    p.add_argument("--grid", metavar="WxH")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--latency", metavar="BASE[:JITTER]")
    p.add_argument("--retry-budget", type=int, metavar="N")
    p.add_argument("--report-interval", type=int, metavar="TICKS")
    p.add_argument("--progress-policy", choices=["reset", "keep"])
    p.add_argument("--bid-window", metavar="TICKS|auto")
    p.add_argument("--work-rate", type=float, metavar="RATE")
    p.add_argument("--max-ticks", type=int, metavar="TICKS")
    p.add_argument("--out", default="out", metavar="DIR", help="output directory (default: out)")
    p.add_argument("--config", metavar="PATH", help="key=value file; flags take precedence")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnpsim",
        description="Contract Net Protocol simulator: conventional vs updated (in-flight task change).",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[_scenario_flags(True)], help="run one seeded experiment")
    sub.add_parser(
        "compare",
        parents=[_scenario_flags(False)],
        help="run the variant x dialect matrix and write paired comparisons",
    )
    v = sub.add_parser("validate", help="check a trace file for protocol violations")
    v.add_argument("trace")
    v.add_argument("--variant", choices=[x.value for x in ProtocolVariant])
    v.add_argument("--dialect", choices=sorted(DIALECTS))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    settings: dict[str, object] = {}
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    settings.update(
        (key, getattr(args, dest))
        for dest, key in _FLAG_KEYS.items()
        if getattr(args, dest, None) is not None
    )
    return RunConfig.from_settings(settings)


def _trace_name(config: RunConfig) -> str:
    return f"trace-{config.variant.value}-{config.dialect}.txt"


def _write_run(result: RunResult, out: Path) -> Path:
    path = out / _trace_name(result.config)
    write_trace(path, result.trace, result.header)
    return path


def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config)
    trace_path = _write_run(result, out)
    report = report_for(result)
    csv_path = out / f"metrics-{config.variant.value}-{config.dialect}.csv"
    write_reports_csv(csv_path, [report])
    print(
        f"{config.variant.value}/{config.dialect}: tasks_updated={report.tasks_updated} "
        f"task_repetitions={report.task_repetitions} messages={report.message_count} "
        f"elapsed_ticks={report.elapsed_ticks}"
    )
    print(f"trace -> {trace_path}\nmetrics -> {csv_path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = build_experiment(base)
    reports = {}
    # dialect-major: all acl-f rows, then all acl-k rows
    for dialect in sorted(DIALECTS):
        for variant in (ProtocolVariant.CONVENTIONAL, ProtocolVariant.UPDATED):
            config = base.with_(variant=variant, dialect=dialect)
            result = run_experiment(config, scenario)
            _write_run(result, out)
            reports[variant, dialect] = report_for(result)
    tables = [
        compare(reports[ProtocolVariant.CONVENTIONAL, d], reports[ProtocolVariant.UPDATED, d])
        for d in sorted(DIALECTS)
    ]
    csv_path = out / "comparison.csv"
    write_comparison_csv(csv_path, reports.values(), tables)
    print(csv_path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        report = validate_file(args.trace, args.variant, args.dialect)
    except (OSError, MessagingError, ValueError) as exc:
        print(f"cnpsim: cannot validate {args.trace}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ScenarioError) as exc:
        print(f"cnpsim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationTimeout as exc:
        print(f"cnpsim: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT


if __name__ == "__main__":
    sys.exit(main())
