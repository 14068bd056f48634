"""Deterministic Contract Net Protocol simulator.

Runs the conventional protocol and the updated variant, which lets a
manager change a task while a contractor is working on it, over a seeded
predator-prey pursuit scenario and two ACL keyword dialects.
"""

from .config import ConfigError, RunConfig
from .conformance import ConformanceReport, validate_file, validate_trace
from .messaging import ACL_F, ACL_K, Envelope, Performative, decode, dialect_equivalent, encode
from .metrics import ExperimentReport, compare, report_for, summarize
from .protocol import (
    Bid,
    BidSpecification,
    ChangeOutcome,
    ContractRecord,
    ContractState,
    ProtocolVariant,
    TaskChange,
    TaskSpec,
    apply_change,
    eligible,
    rank_bids,
    select_award,
    validate_transition,
)
from .simulation import RunResult, Scenario, Simulation, build_experiment, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ACL_F",
    "ACL_K",
    "Bid",
    "BidSpecification",
    "ChangeOutcome",
    "ConfigError",
    "ConformanceReport",
    "ContractRecord",
    "ContractState",
    "Envelope",
    "ExperimentReport",
    "Performative",
    "ProtocolVariant",
    "RunConfig",
    "RunResult",
    "Scenario",
    "Simulation",
    "TaskChange",
    "TaskSpec",
    "apply_change",
    "build_experiment",
    "compare",
    "decode",
    "dialect_equivalent",
    "eligible",
    "encode",
    "rank_bids",
    "report_for",
    "run_experiment",
    "select_award",
    "summarize",
    "validate_file",
    "validate_trace",
    "validate_transition",
]
