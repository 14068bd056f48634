"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the terminal
summary of every pytest run (see conftest.py) and directly when this file
is executed as a script.
"""

from __future__ import annotations

import hashlib
import sys
import time
from pathlib import Path

import pytest

from cnpsim.config import RunConfig
from cnpsim.conformance import validate_file, validate_trace
from cnpsim.messaging import Performative, dialect_equivalent, encode, write_trace
from cnpsim.metrics import report_for
from cnpsim.protocol import ProtocolVariant
from cnpsim.simulation import Simulation, build_experiment, run_experiment

from conftest import far_scenario

P = Performative
UPD, CONV = ProtocolVariant.UPDATED, ProtocolVariant.CONVENTIONAL
FIXTURES = Path(__file__).parent / "fixtures"

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def trace_text(result) -> str:
    return "\n".join([result.header] + [encode(e) for e in result.trace]) + "\n"


def paired(config: RunConfig):
    scenario = build_experiment(config)
    return {v: run_experiment(config.with_(variant=v), scenario) for v in (CONV, UPD)}


def test_criterion_1_headline_experiment():
    timings, reports = [], {}
    for variant in (UPD, CONV):
        start = time.perf_counter()
        result = run_experiment(RunConfig(variant=variant))
        timings.append(time.perf_counter() - start)
        reports[variant] = report_for(result)
    got = {v: (r.tasks_updated, r.task_repetitions) for v, r in reports.items()}
    ok = got == {UPD: (2, 0), CONV: (0, 2)} and max(timings) < 1.0
    record(1, "5 tasks / 2 changes: updated (2,0), conventional (0,2)", ok,
           f"updated={got[UPD]} conventional={got[CONV]} slowest run {max(timings):.3f}s")


def test_criterion_2_overhead_ordering():
    start = time.perf_counter()
    broken = []
    for seed in range(1, 21):
        for changes in (1, 2, 3):
            runs = paired(RunConfig(seed=seed, changes=changes))
            u, c = report_for(runs[UPD]), report_for(runs[CONV])
            if not (u.message_count < c.message_count and u.elapsed_ticks <= c.elapsed_ticks):
                broken.append((seed, changes, u.message_count, c.message_count,
                               u.elapsed_ticks, c.elapsed_ticks))
    took = time.perf_counter() - start
    record(2, "updated sends fewer messages and never takes longer, seeds 1..20",
           not broken and took < 30, f"60 paired runs, violations={broken}, {took:.1f}s")


def test_criterion_3_zero_change_equivalence():
    differing = []
    for seed in range(1, 11):
        runs = paired(RunConfig(seed=seed, changes=0))
        a = trace_text(runs[CONV]).replace("variant=conventional", "variant=updated", 1)
        if a.encode() != trace_text(runs[UPD]).encode():
            differing.append(seed)
    record(3, "zero changes: traces byte-identical apart from the variant label",
           not differing, f"seeds 1..10, differing={differing}")


# Hand-stepped event sequence for one task and two contractors (latency 1,
# bid window 5, work rate 0.2, reports beyond completion, prey out of reach):
#   t=0 CFP to p1, p2 -> delivered t=1, both propose -> delivered t=2
#   t=5 deadline: p2 is closer (17 vs 18) -> accept p2, reject p1, delivered t=6
#   work ticks t=6..10 (5 x 0.2) -> final report sent t=10, delivered t=11
HAND_STEPPED = [
    ("m0", "p1", P.CALL_FOR_PROPOSALS, 0, 1),
    ("m0", "p2", P.CALL_FOR_PROPOSALS, 0, 1),
    ("p1", "m0", P.PROPOSE, 1, 2),
    ("p2", "m0", P.PROPOSE, 1, 2),
    ("m0", "p2", P.ACCEPT_PROPOSAL, 5, 6),
    ("m0", "p1", P.REJECT_PROPOSAL, 5, 6),
    ("p2", "m0", P.INFORM, 10, 11),
]


def test_criterion_4_message_count_formula():
    config = RunConfig(tasks=1, changes=0, contractors=2, report_interval=100)
    oracle = Simulation(config, far_scenario(2)).run()
    steps = [(e.sender, e.receiver, e.performative, e.sent_at, e.delivered_at) for e in oracle.trace]
    oracle_ok = steps == HAND_STEPPED and oracle.final_clock == 11
    counts = {}
    for n in range(1, 6):
        cfg = RunConfig(tasks=1, changes=0, contractors=n, report_interval=100)
        counts[n] = (run_experiment(cfg).message_count,
                     Simulation(cfg, far_scenario(n)).run().message_count)
    formula_ok = all(a == b == 3 * n + 1 for n, (a, b) in counts.items())
    record(4, "one task, n contractors: 3n + 1 envelopes", oracle_ok and formula_ok,
           f"n=2 oracle match={oracle_ok}, counts={ {n: c[0] for n, c in counts.items()} }")


def test_criterion_5_change_cost_law():
    base = report_for(run_experiment(RunConfig(changes=0))).message_count
    deltas = {k: report_for(run_experiment(RunConfig(changes=k))).message_count - base
              for k in range(4)}
    record(5, "updated: messages(k) - messages(0) = 2k, k=0..3",
           deltas == {k: 2 * k for k in range(4)}, f"deltas={deltas}")


def test_criterion_6_dialect_transparency():
    mismatches = []
    for seed in (1, 7, 42):
        for variant in (UPD, CONV):
            config = RunConfig(seed=seed, variant=variant)
            scenario = build_experiment(config)
            f = run_experiment(config.with_(dialect="acl-f"), scenario)
            k = run_experiment(config.with_(dialect="acl-k"), scenario)
            if not dialect_equivalent(f.trace, k.trace):
                mismatches.append((seed, variant.value))
    record(6, "acl-f and acl-k traces equal once keywords are erased",
           not mismatches, f"6 pairs, mismatches={mismatches}")


def test_criterion_7_conformance():
    failures, checked = [], 0
    for seed in range(1, 6):
        for changes in (0, 2):
            config = RunConfig(seed=seed, changes=changes)
            scenario = build_experiment(config)
            for variant in (UPD, CONV):
                for dialect in ("acl-f", "acl-k"):
                    result = run_experiment(config.with_(variant=variant, dialect=dialect), scenario)
                    checked += 1
                    if not validate_trace(result.trace, variant, dialect).ok:
                        failures.append((seed, changes, variant.value, dialect))
    negatives = sorted(FIXTURES.glob("bad-*.txt"))
    accepted = [p.name for p in negatives if validate_file(p).ok]
    ok = not failures and len(negatives) >= 5 and not accepted
    record(7, "generated traces conform, mutated fixtures rejected", ok,
           f"{checked} traces, {len(failures)} failing; {len(negatives)} fixtures, "
           f"{len(accepted)} wrongly accepted")


def test_criterion_8_determinism(tmp_path):
    digests = set()
    for i in range(10):
        result = run_experiment(RunConfig(seed=42))
        path = tmp_path / f"run{i}.txt"
        write_trace(path, result.trace, result.header)
        digests.add(hashlib.sha256(path.read_bytes()).hexdigest())
    record(8, "10 repeated runs hash to the same trace bytes", len(digests) == 1,
           f"{len(digests)} distinct digest(s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
