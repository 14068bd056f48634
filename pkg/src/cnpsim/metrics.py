"""Per-run metrics (updated tasks, repetitions, overhead) and paired comparisons."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .messaging import Envelope
from .protocol import ChangeOutcome, ContractRecord, ContractState, ProtocolVariant

__all__ = [
    "TaskRow",
    "ExperimentReport",
    "ComparisonTable",
    "MetricsError",
    "CSV_FIELDS",
    "METRICS",
    "COMPARISON_FIELDS",
    "summarize",
    "report_for",
    "compare",
    "write_reports_csv",
    "write_comparison_csv",
]

METRICS = ("tasks_total", "tasks_updated", "task_repetitions", "message_count", "elapsed_ticks")
CSV_FIELDS = ("variant", "dialect") + METRICS
COMPARISON_FIELDS = CSV_FIELDS + tuple(f"{m}_delta" for m in METRICS)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TaskRow:
    task_id: str
    state: str
    awarded_to: Optional[str]
    revision: int
    repetitions: int
    absorbed: int
    messages: int
    completed_at: Optional[int]


@dataclass(frozen=True)
class ExperimentReport:
    variant: ProtocolVariant
    dialect: str
    tasks_total: int
    tasks_updated: int
    task_repetitions: int
    message_count: int
    elapsed_ticks: int
    scenario_hash: str = ""
    per_task: tuple[TaskRow, ...] = field(default=(), compare=False)

    def row(self) -> dict[str, object]:
        out: dict[str, object] = {"variant": self.variant.value, "dialect": self.dialect}
        out.update({m: getattr(self, m) for m in METRICS})
        return out


def summarize(
    trace: Sequence[Envelope],
    contracts: Iterable[ContractRecord],
    final_clock: int,
    *,
    variant: ProtocolVariant,
    dialect: str,
    scenario_hash: str = "",
) -> ExperimentReport:
    contracts = list(contracts)
    per_conv = Counter(e.conversation_id for e in trace)
    rows = []
    for r in contracts:
        absorbed = sum(c.outcome is ChangeOutcome.ABSORBED for c in r.change_log)
        completed = next(
            (t for t, s in reversed(r.history) if s is ContractState.COMPLETED), None
        )
        rows.append(
            TaskRow(
                r.task_id, r.state.value, r.awarded_to, r.task.revision,
                r.repetitions, absorbed, per_conv[r.task_id], completed,
            )
        )
    return ExperimentReport(
        variant=variant,
        dialect=dialect,
        tasks_total=len(contracts),
        tasks_updated=sum(row.absorbed for row in rows),
        task_repetitions=sum(r.repetitions for r in contracts),
        message_count=len(trace),
        elapsed_ticks=final_clock,
        scenario_hash=scenario_hash,
        per_task=tuple(rows),
    )


def report_for(result) -> ExperimentReport:
    """Summarize a :class:`~cnpsim.simulation.RunResult`."""
    return summarize(
        result.trace,
        result.contracts,
        result.final_clock,
        variant=result.config.variant,
        dialect=result.config.dialect,
        scenario_hash=result.config.scenario_hash(),
    )


@dataclass(frozen=True)
class ComparisonTable:
    baseline: ExperimentReport
    candidate: ExperimentReport
    deltas: dict[str, int]
    ratios: dict[str, Optional[float]]

    def row(self) -> dict[str, object]:
        out = self.candidate.row()
        out["variant"] = f"{self.candidate.variant.value}-vs-{self.baseline.variant.value}"
        if self.candidate.dialect != self.baseline.dialect:
            out["dialect"] = f"{self.candidate.dialect}-vs-{self.baseline.dialect}"
        out.update({f"{m}_delta": d for m, d in self.deltas.items()})
        return out


def compare(a: ExperimentReport, b: ExperimentReport) -> ComparisonTable:
    """Deltas ``b - a`` and ratios ``b / a`` per metric (ratio ``None`` when ``a`` is 0)."""
    if a.scenario_hash != b.scenario_hash:
        raise MetricsError(
            f"reports come from different scenarios ({a.scenario_hash} vs {b.scenario_hash})"
        )
    deltas = {m: getattr(b, m) - getattr(a, m) for m in METRICS}
    ratios = {
        m: (getattr(b, m) / getattr(a, m) if getattr(a, m) else None) for m in METRICS
    }
    return ComparisonTable(a, b, deltas, ratios)


def write_reports_csv(path: "str | Path", reports: Iterable[ExperimentReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow(report.row())


def write_comparison_csv(
    path: "str | Path",
    reports: Iterable[ExperimentReport],
    tables: Iterable[ComparisonTable],
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=COMPARISON_FIELDS, restval="", lineterminator="\n"
        )
        writer.writeheader()
        for report in reports:
            writer.writerow(report.row())
        for table in tables:
            writer.writerow(table.row())
