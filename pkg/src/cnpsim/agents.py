"""Manager and contractor behaviour.

Agents never touch the network themselves: every handler returns the
envelopes it wants sent, and the caller (normally
:class:`cnpsim.simulation.Simulation`) posts them. Everything an agent learns
about another agent arrives in an envelope payload.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional

from .messaging import Envelope, MessageFactory, Performative
from .protocol import (
    Bid,
    BidSpecification,
    ChangeOutcome,
    ContractRecord,
    ContractState,
    FinalReport,
    InterimReport,
    ProtocolError,
    ProtocolVariant,
    TaskChange,
    TaskSpec,
    apply_change,
    eligible,
    rank_bids,
    select_award,
)

__all__ = [
    "ProgressPolicy",
    "ManagerAgent",
    "ContractorAgent",
    "ActiveContract",
    "UnknownTaskError",
    "task_payload",
    "task_from_payload",
]

log = logging.getLogger(__name__)

P = Performative
CostFn = Callable[[str, Any], Optional[float]]


class UnknownTaskError(ProtocolError, KeyError):
    pass


class ProgressPolicy(enum.Enum):
    RESET = "reset"
    KEEP = "keep"


def _caps(text: str) -> frozenset[str]:
    return frozenset(t for t in text.split(";") if t)


def task_payload(task: TaskSpec, attempt: int) -> dict[str, object]:
    return {
        "task": task.task_id,
        "name": task.name,
        "abstraction": task.abstraction,
        "caps": ";".join(sorted(task.bid_spec.required_capabilities)),
        "max_cost": task.bid_spec.max_cost,
        "expiration": task.expiration,
        "target": task.target,
        "revision": task.revision,
        "attempt": attempt,
    }


def task_from_payload(data: dict[str, str]) -> TaskSpec:
    max_cost = data.get("max_cost")
    return TaskSpec(
        task_id=data["task"],
        name=data.get("name", ""),
        abstraction=data.get("abstraction", ""),
        bid_spec=BidSpecification(
            _caps(data.get("caps", "")), float(max_cost) if max_cost else None
        ),
        expiration=int(data["expiration"]),
        target=data.get("target"),
        revision=int(data.get("revision", 0)),
    )


class ManagerAgent:
    """Announces tasks, awards them to the cheapest bidder and steers contracts.

    ``retry_budget`` is how many times a task with no usable bid is
    re-announced before it fails; ``None`` means forever.
    """

    def __init__(
        self,
        agent_id: str,
        contractors: Iterable[str],
        variant: ProtocolVariant,
        factory: MessageFactory,
        retry_budget: Optional[int] = 2,
        bid_window: int = 5,
    ):
        if bid_window < 1:
            raise ValueError("bid_window must be at least 1 tick")
        self.agent_id = agent_id
        self.contractors = list(contractors)
        self.variant = variant
        self.factory = factory
        self.retry_budget = retry_budget
        self.bid_window = bid_window
        self.contracts: dict[str, ContractRecord] = {}
        # (due_time, task_id, attempt) timers the driver must fire
        self.deadlines: list[tuple[int, str, int]] = []
        self.ignored: list[Envelope] = []
        self._pending: dict[str, list[TaskChange]] = {}

    @property
    def open_contracts(self) -> dict[str, ContractRecord]:
        return {k: r for k, r in self.contracts.items() if not r.state.terminal}

    def _record(self, task_id: str) -> ContractRecord:
        try:
            return self.contracts[task_id]
        except KeyError:
            raise UnknownTaskError(f"no contract for task {task_id!r}") from None

    def _send(self, receiver: str, perf: P, task_id: str, payload: dict, now: int) -> Envelope:
        return self.factory.make(self.agent_id, receiver, perf, task_id, payload, now)

    def _move(self, record: ContractRecord, to: ContractState, now: int) -> None:
        record.transition(to, self.variant, now)

    # announcement ---------------------------------------------------------

    def announce(self, task: TaskSpec, now: int) -> list[Envelope]:
        if task.task_id in self.contracts:
            raise ProtocolError(f"task {task.task_id} is already open")
        record = ContractRecord(task=task.announced_at(now), history=[(now, ContractState.ANNOUNCED)])
        self.contracts[task.task_id] = record
        return self._broadcast(record, now)

    def _broadcast(self, record: ContractRecord, now: int) -> list[Envelope]:
        self._move(record, ContractState.BIDDING, now)
        if not self.contractors:
            return self._no_bids(record, now)
        self.deadlines.append((record.task.expiration, record.task_id, record.attempt))
        payload = task_payload(record.task, record.attempt)
        return [
            self._send(c, P.CALL_FOR_PROPOSALS, record.task_id, payload, now)
            for c in self.contractors
        ]

    def _reannounce(self, record: ContractRecord, now: int) -> list[Envelope]:
        record.attempt += 1
        record.task = dataclasses.replace(record.task, expiration=now + self.bid_window)
        return self._broadcast(record, now)

    def _no_bids(self, record: ContractRecord, now: int) -> list[Envelope]:
        if record.state is ContractState.BIDDING:
            self._move(record, ContractState.BID_PROCESSING, now)
        if self.retry_budget is None or record.retries_used < self.retry_budget:
            record.retries_used += 1
            self._move(record, ContractState.ANNOUNCED, now)
            return self._reannounce(record, now)
        self._move(record, ContractState.FAILED, now)
        return []

    # bid processing -------------------------------------------------------

    def on_deadline(self, task_id: str, attempt: int, now: int) -> list[Envelope]:
        record = self._record(task_id)
        if record.state is not ContractState.BIDDING or record.attempt != attempt:
            return []
        if now < record.task.expiration:
            raise ProtocolError(f"deadline for {task_id} fired early at {now}")
        self._move(record, ContractState.BID_PROCESSING, now)
        ranked = rank_bids(record.bids_received)
        winner = select_award(ranked)
        if winner is None:
            return self._no_bids(record, now)
        self._move(record, ContractState.AWARDED, now)
        record.awarded_to = winner
        out = []
        for bid, rank in ranked:
            if rank == 1:
                out.append(self._send(
                    bid.contractor_id, P.ACCEPT_PROPOSAL, task_id,
                    {"task": task_id, "attempt": attempt, "cost": bid.cost, "revision": record.task.revision},
                    now,
                ))
            else:
                out.append(self._send(
                    bid.contractor_id, P.REJECT_PROPOSAL, task_id,
                    {"task": task_id, "attempt": attempt}, now,
                ))
        return out

    def contract_started(self, task_id: str, attempt: int, now: int) -> None:
        record = self._record(task_id)
        if record.state is ContractState.AWARDED and record.attempt == attempt:
            self._move(record, ContractState.IN_PROGRESS, now)

    # incoming messages ----------------------------------------------------

    def on_message(self, env: Envelope, now: int) -> list[Envelope]:
        record = self.contracts.get(env.conversation_id)
        if record is None:
            self.ignored.append(env)
            return []
        data = env.data
        perf = env.performative
        if perf in (P.PROPOSE, P.REFUSE):
            if int(data.get("attempt", 0)) != record.attempt or record.state is not ContractState.BIDDING:
                self.ignored.append(env)
                return []
            if perf is P.PROPOSE:
                bid = Bid(record.task_id, env.sender, float(data["cost"]), int(data["submitted_at"]))
                if now > record.task.expiration:
                    record.late_bids.append(bid)
                else:
                    record.bids_received.append(bid)
            return []

        if env.sender != record.awarded_to or record.state is not ContractState.IN_PROGRESS:
            self.ignored.append(env)
            return []
        if perf is P.INFORM and data.get("kind") == "interim":
            record.interim_reports.append(
                InterimReport(record.task_id, env.sender, float(data["progress"]), now)
            )
        elif perf is P.INFORM:
            record.final_report = FinalReport(
                record.task_id,
                env.sender,
                int(data["deadline"]),
                int(data["completed_at"]),
                int(data["revision"]),
            )
            self._move(record, ContractState.COMPLETED, now)
            self._reject_pending(record, now)
        elif perf is P.CONFIRM_CHANGE:
            pending = self._pending.get(record.task_id)
            if not pending:
                self.ignored.append(env)
                return []
            change = pending.pop(0)
            self.contracts[record.task_id] = apply_change(record, change, self.variant, now)
        elif perf is P.FAILURE:
            self._move(record, ContractState.FAILED, now)
            self._reject_pending(record, now)
        else:
            self.ignored.append(env)
        return []

    def _reject_pending(self, record: ContractRecord, now: int) -> None:
        for change in self._pending.pop(record.task_id, []):
            record.change_log.append(
                TaskChange(
                    change.task_id, change.new_target, change.requested_at,
                    change.new_bid_spec, ChangeOutcome.REJECTED_TOO_LATE,
                )
            )

    # task modification ----------------------------------------------------

    def request_change(self, change: TaskChange, now: int) -> list[Envelope]:
        """Ask for an in-flight task change.

        Under the updated variant the working contractor is told to switch
        and must confirm. Under the conventional variant the only option is
        to cancel the contract and run the whole auction again.
        """
        record = self._record(change.task_id)
        if record.state.terminal:
            if record.state is ContractState.COMPLETED:
                self.contracts[record.task_id] = apply_change(record, change, self.variant, now)
            else:
                self._reject_pending(record, now)
                record.change_log.append(
                    TaskChange(change.task_id, change.new_target, change.requested_at,
                               change.new_bid_spec, ChangeOutcome.REJECTED_TOO_LATE)
                )
            return []
        if record.state not in (ContractState.AWARDED, ContractState.IN_PROGRESS):
            raise ProtocolError(
                f"task {record.task_id}: change requested before award "
                f"(state {record.state.value})"
            )
        contractor = record.awarded_to
        assert contractor is not None
        if self.variant is ProtocolVariant.UPDATED:
            pending = self._pending.setdefault(record.task_id, [])
            pending.append(change)
            bid_spec = change.new_bid_spec
            payload = {
                "task": record.task_id,
                "revision": record.task.revision + len(pending),
                "target": change.new_target,
                "caps": None if bid_spec is None else ";".join(sorted(bid_spec.required_capabilities)),
            }
            return [self._send(contractor, P.REQUEST_CHANGE, record.task_id, payload, now)]

        old_attempt = record.attempt
        record = apply_change(record, change, self.variant, now)
        self.contracts[record.task_id] = record
        cancel = self._send(
            contractor, P.CANCEL, record.task_id,
            {"task": record.task_id, "attempt": old_attempt, "reason": "restart"}, now,
        )
        return [cancel] + self._reannounce(record, now)

    def cancel(self, task_id: str, now: int) -> list[Envelope]:
        """Terminate a running contract for good."""
        record = self._record(task_id)
        if record.state is not ContractState.IN_PROGRESS:
            raise ProtocolError(f"task {task_id}: only running contracts can be cancelled")
        contractor = record.awarded_to
        self._move(record, ContractState.CANCELLED, now)
        self._reject_pending(record, now)
        return [self._send(
            contractor, P.CANCEL, task_id,  # type: ignore[arg-type]
            {"task": task_id, "attempt": record.attempt, "reason": "terminated"}, now,
        )]

    def stuck(self) -> list[str]:
        return [f"{tid}:{r.state.value}" for tid, r in sorted(self.open_contracts.items())]


@dataclass
class ActiveContract:
    task_id: str
    manager_id: str
    target: Any
    revision: int
    attempt: int
    deadline: int
    started_at: int
    progress: Fraction = Fraction(0)
    ticks_since_report: int = 0
    captured: bool = False


@dataclass
class ContractorAgent:
    """Bids on announcements it qualifies for and works awarded contracts.

    ``cost_fn(agent_id, target)`` prices a task's target for this agent and
    returns ``None`` when the target no longer exists.
    """

    agent_id: str
    factory: MessageFactory
    capabilities: frozenset[str] = frozenset({"chase"})
    work_rate: float = 0.2
    report_interval: int = 5
    progress_policy: ProgressPolicy = ProgressPolicy.RESET
    cost_fn: CostFn = lambda agent_id, target: 0.0
    active_contracts: dict[str, ActiveContract] = field(default_factory=dict)
    # task_id -> (attempt, announced task) for outstanding proposals
    proposals: dict[str, tuple[int, TaskSpec]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 < self.work_rate <= 1:
            raise ValueError("work_rate must lie in (0, 1]")
        if self.report_interval < 1:
            raise ValueError("report_interval must be at least 1")
        self.capabilities = frozenset(self.capabilities)
        self._rate = Fraction(str(self.work_rate))

    def _send(self, receiver: str, perf: P, task_id: str, payload: dict, now: int) -> Envelope:
        return self.factory.make(self.agent_id, receiver, perf, task_id, payload, now)

    def on_cfp(self, env: Envelope, now: int) -> Envelope:
        data = env.data
        task = task_from_payload(data)
        attempt = int(data.get("attempt", 1))
        reason = None
        cost = self.cost_fn(self.agent_id, task.target)
        if now > task.expiration:
            reason = "expired"
        elif cost is None:
            reason = "no-target"
        elif not eligible(task.bid_spec, self.capabilities, cost):
            reason = "ineligible"
        if reason is not None:
            return self._send(env.sender, P.REFUSE, task.task_id,
                              {"task": task.task_id, "attempt": attempt, "reason": reason}, now)
        self.proposals[task.task_id] = (attempt, task)
        return self._send(env.sender, P.PROPOSE, task.task_id,
                          {"task": task.task_id, "attempt": attempt, "cost": float(cost), "submitted_at": now}, now)

    def on_message(self, env: Envelope, now: int) -> list[Envelope]:
        perf = env.performative
        if perf is P.CALL_FOR_PROPOSALS:
            return [self.on_cfp(env, now)]
        data = env.data
        task_id = env.conversation_id
        if perf is P.ACCEPT_PROPOSAL:
            attempt = int(data["attempt"])
            proposed = self.proposals.pop(task_id, None)
            if proposed is None or proposed[0] != attempt:
                log.warning("%s: accept for %s without a matching proposal", self.agent_id, task_id)
                return []
            task = proposed[1]
            self.active_contracts[task_id] = ActiveContract(
                task_id=task_id,
                manager_id=env.sender,
                target=task.target,
                revision=task.revision,
                attempt=attempt,
                deadline=task.expiration,
                started_at=now,
            )
        elif perf is P.REJECT_PROPOSAL:
            self.proposals.pop(task_id, None)
        elif perf is P.REQUEST_CHANGE:
            contract = self.active_contracts.get(task_id)
            if contract is None:
                return []
            contract.revision = int(data["revision"])
            contract.target = data.get("target", contract.target)
            if self.progress_policy is ProgressPolicy.RESET:
                contract.progress = Fraction(0)
                contract.ticks_since_report = 0
            contract.captured = False
            return [self._send(env.sender, P.CONFIRM_CHANGE, task_id,
                               {"task": task_id, "revision": contract.revision}, now)]
        elif perf is P.CANCEL:
            self.active_contracts.pop(task_id, None)
        return []

    def execute_tick(self, task_id: str, now: int) -> Optional[Envelope]:
        """One tick of work on a contract; returns a report when one is due."""
        contract = self.active_contracts[task_id]
        if contract.captured:
            contract.progress = Fraction(1)
        else:
            contract.progress = min(Fraction(1), contract.progress + self._rate)
        contract.ticks_since_report += 1
        if contract.progress >= 1:
            del self.active_contracts[task_id]
            return self._send(contract.manager_id, P.INFORM, task_id, {
                "kind": "final",
                "task": task_id,
                "deadline": contract.deadline,
                "completed_at": now,
                "revision": contract.revision,
            }, now)
        if contract.ticks_since_report >= self.report_interval:
            contract.ticks_since_report = 0
            return self._send(contract.manager_id, P.INFORM, task_id, {
                "kind": "interim",
                "task": task_id,
                "progress": float(contract.progress),
                "revision": contract.revision,
            }, now)
        return None

    def target_lost(self, task_id: str, now: int, reason: str = "escaped") -> Envelope:
        contract = self.active_contracts.pop(task_id)
        return self._send(contract.manager_id, P.FAILURE, task_id,
                          {"task": task_id, "reason": reason, "revision": contract.revision}, now)
