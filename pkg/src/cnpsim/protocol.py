"""Task, bid and contract types plus the pure decision rules of the protocol.

Both protocol variants share everything here; they only differ in which
state transitions are legal and in how a mid-contract task change is
handled (:func:`apply_change`).
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

__all__ = [
    "BidSpecification",
    "TaskSpec",
    "Bid",
    "RankedList",
    "ContractState",
    "ContractRecord",
    "InterimReport",
    "FinalReport",
    "TaskChange",
    "ChangeOutcome",
    "ProtocolVariant",
    "ProtocolError",
    "eligible",
    "rank_bids",
    "select_award",
    "validate_transition",
    "apply_change",
]


class ProtocolError(ValueError):
    """Raised when a caller breaks a protocol precondition."""


class ProtocolVariant(enum.Enum):
    CONVENTIONAL = "conventional"
    UPDATED = "updated"

    @classmethod
    def parse(cls, value: "str | ProtocolVariant") -> "ProtocolVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown variant {value!r}; expected one of "
                f"{[v.value for v in cls]}"
            ) from None


class ContractState(enum.Enum):
    ANNOUNCED = "announced"
    BIDDING = "bidding"
    BID_PROCESSING = "bid_processing"
    AWARDED = "awarded"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"

    @property
    def terminal(self) -> bool:
        return self in _TERMINAL


_TERMINAL = frozenset(
    {ContractState.COMPLETED, ContractState.FAILED, ContractState.CANCELLED}
)


class ChangeOutcome(enum.Enum):
    ABSORBED = "absorbed"
    FORCED_RESTART = "forced_restart"
    REJECTED_TOO_LATE = "rejected_too_late"


@dataclass(frozen=True)
class BidSpecification:
    """Eligibility requirements a contractor must meet to bid."""

    required_capabilities: frozenset[str] = frozenset()
    max_cost: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "required_capabilities", frozenset(self.required_capabilities)
        )
        if self.max_cost is not None and self.max_cost < 0:
            raise ValueError("max_cost must be non-negative")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    name: str
    abstraction: str
    bid_spec: BidSpecification
    expiration: int
    target: Any = None
    revision: int = 0

    def announced_at(self, now: int) -> "TaskSpec":
        """Check the expiration invariant against an announcement time."""
        if self.expiration <= now:
            raise ProtocolError(
                f"task {self.task_id}: expiration {self.expiration} must be "
                f"after announcement time {now}"
            )
        return self


@dataclass(frozen=True)
class Bid:
    task_id: str
    contractor_id: str
    cost: float
    submitted_at: int

    def __post_init__(self) -> None:
        if self.cost < 0:
            raise ValueError(f"bid cost must be non-negative, got {self.cost}")


@dataclass(frozen=True)
class RankedList:
    """Bids in award order; rank 1 is the winner."""

    entries: tuple[tuple[Bid, int], ...] = ()
    ordering_key: str = "cost asc, submitted_at asc, contractor_id asc"

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def bids(self) -> list[Bid]:
        return [bid for bid, _ in self.entries]

    @property
    def contractor_ids(self) -> list[str]:
        return [bid.contractor_id for bid, _ in self.entries]


@dataclass(frozen=True)
class InterimReport:
    task_id: str
    contractor_id: str
    progress_fraction: float
    at: int

    def __post_init__(self) -> None:
        if not 0 <= self.progress_fraction < 1:
            raise ValueError("interim progress must lie in [0, 1)")


@dataclass(frozen=True)
class FinalReport:
    task_id: str
    contractor_id: str
    deadline: int
    completed_at: int
    revision_completed: int


@dataclass(frozen=True)
class TaskChange:
    task_id: str
    new_target: Any
    requested_at: int
    new_bid_spec: Optional[BidSpecification] = None
    outcome: Optional[ChangeOutcome] = None


@dataclass
class ContractRecord:
    """Manager-side lifecycle of one task.

    ``history`` keeps ``(time, state)`` pairs for every state entered so the
    run can be audited after the fact.
    """

    task: TaskSpec
    state: ContractState = ContractState.ANNOUNCED
    awarded_to: Optional[str] = None
    bids_received: list[Bid] = field(default_factory=list)
    late_bids: list[Bid] = field(default_factory=list)
    interim_reports: list[InterimReport] = field(default_factory=list)
    final_report: Optional[FinalReport] = None
    change_log: list[TaskChange] = field(default_factory=list)
    repetitions: int = 0
    attempt: int = 1
    retries_used: int = 0
    history: list[tuple[int, ContractState]] = field(default_factory=list)

    @property
    def task_id(self) -> str:
        return self.task.task_id

    def copy(self) -> "ContractRecord":
        return dataclasses.replace(
            self,
            bids_received=list(self.bids_received),
            late_bids=list(self.late_bids),
            interim_reports=list(self.interim_reports),
            change_log=list(self.change_log),
            history=list(self.history),
        )

    def transition(
        self, to: ContractState, variant: ProtocolVariant, now: int
    ) -> None:
        if not validate_transition(self.state, to, variant):
            raise ProtocolError(
                f"task {self.task_id}: illegal transition "
                f"{self.state.value} -> {to.value} under {variant.value}"
            )
        self.state = to
        self.history.append((now, to))
        if to not in _AWARD_HOLDING:
            self.awarded_to = None


_AWARD_HOLDING = frozenset(
    {ContractState.AWARDED, ContractState.IN_PROGRESS, ContractState.COMPLETED}
)


def eligible(
    bid_spec: BidSpecification, capabilities: Iterable[str], cost: float
) -> bool:
    """True iff the capabilities cover the requirements and cost is under the ceiling.

    The ceiling is inclusive.
    """
    if not bid_spec.required_capabilities <= set(capabilities):
        return False
    return bid_spec.max_cost is None or cost <= bid_spec.max_cost


def _bid_key(bid: Bid) -> tuple:
    return (bid.cost, bid.submitted_at, bid.contractor_id)


def rank_bids(bids: Iterable[Bid]) -> RankedList:
    bids = list(bids)
    if not bids:
        return RankedList()
    task_ids = {b.task_id for b in bids}
    if len(task_ids) != 1:
        raise ProtocolError(f"bids span several tasks: {sorted(task_ids)}")
    ordered = sorted(bids, key=_bid_key)
    return RankedList(tuple((bid, rank) for rank, bid in enumerate(ordered, 1)))


def select_award(ranked: RankedList) -> Optional[str]:
    if not ranked.entries:
        return None
    return ranked.entries[0][0].contractor_id


S = ContractState
_COMMON = frozenset(
    {
        (S.ANNOUNCED, S.BIDDING),
        (S.BIDDING, S.BID_PROCESSING),
        (S.BID_PROCESSING, S.AWARDED),
        (S.BID_PROCESSING, S.FAILED),
        # re-announcement after a round with no usable bids
        (S.BID_PROCESSING, S.ANNOUNCED),
        (S.AWARDED, S.IN_PROGRESS),
        (S.IN_PROGRESS, S.COMPLETED),
        (S.IN_PROGRESS, S.CANCELLED),
        # target lost while working (prey reached its goal)
        (S.IN_PROGRESS, S.FAILED),
    }
)
_LEGAL = {
    ProtocolVariant.CONVENTIONAL: _COMMON
    | {(S.IN_PROGRESS, S.ANNOUNCED), (S.AWARDED, S.ANNOUNCED)},
    ProtocolVariant.UPDATED: _COMMON | {(S.IN_PROGRESS, S.IN_PROGRESS)},
}
del S


def validate_transition(
    from_state: ContractState, to_state: ContractState, variant: ProtocolVariant
) -> bool:
    return (from_state, to_state) in _LEGAL[variant]


def apply_change(
    record: ContractRecord,
    change: TaskChange,
    variant: ProtocolVariant,
    now: int,
) -> ContractRecord:
    """Apply a task change to a contract and return the new record.

    The input record is left untouched.
    """
    if change.task_id != record.task_id:
        raise ProtocolError(
            f"change for task {change.task_id} applied to contract "
            f"{record.task_id}"
        )
    if record.state not in _AWARD_HOLDING:
        raise ProtocolError(
            f"task {record.task_id}: cannot apply a change in state "
            f"{record.state.value}"
        )
    out = record.copy()
    if record.state is ContractState.COMPLETED:
        out.change_log.append(
            dataclasses.replace(change, outcome=ChangeOutcome.REJECTED_TOO_LATE)
        )
        return out

    if variant is ProtocolVariant.UPDATED:
        out.task = dataclasses.replace(
            record.task,
            target=change.new_target,
            bid_spec=change.new_bid_spec or record.task.bid_spec,
            revision=record.task.revision + 1,
        )
        if record.state is ContractState.IN_PROGRESS:
            out.history.append((now, ContractState.IN_PROGRESS))
        out.change_log.append(
            dataclasses.replace(change, outcome=ChangeOutcome.ABSORBED)
        )
        return out

    out.task = dataclasses.replace(
        record.task,
        target=change.new_target,
        bid_spec=change.new_bid_spec or record.task.bid_spec,
    )
    out.transition(ContractState.ANNOUNCED, variant, now)
    out.repetitions += 1
    out.bids_received = []
    out.late_bids = []
    out.change_log.append(
        dataclasses.replace(change, outcome=ChangeOutcome.FORCED_RESTART)
    )
    return out
