"""Replay a trace and report every message that breaks the protocol.

Each conversation's contract state is rebuilt from the messages alone and
every implied state change is checked with
:func:`cnpsim.protocol.validate_transition`. On top of that come role rules
(who may send which performative to whom) and ordering rules (a reply needs
the message it answers).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .messaging import Dialect, Envelope, Performative, get_dialect, read_trace
from .protocol import ContractState, ProtocolVariant, validate_transition

__all__ = ["Violation", "ConformanceReport", "validate_trace", "validate_file"]

P = Performative
S = ContractState

MANAGER_ACTS = frozenset(
    {P.CALL_FOR_PROPOSALS, P.ACCEPT_PROPOSAL, P.REJECT_PROPOSAL, P.REQUEST_CHANGE, P.CANCEL}
)


@dataclass(frozen=True)
class Violation:
    line: int
    conversation: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: [{self.conversation}] {self.message}"


@dataclass
class ConformanceReport:
    variant: ProtocolVariant
    dialect: str
    messages_checked: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        head = (
            f"{self.messages_checked} messages checked under "
            f"{self.variant.value}/{self.dialect}: {len(self.violations)} violation(s)"
        )
        return "\n".join([head] + [str(v) for v in self.violations])


@dataclass
class _Conversation:
    manager: str
    state: Optional[ContractState] = None
    attempt: int = 0
    invited: set[str] = field(default_factory=set)
    answered: set[str] = field(default_factory=set)
    proposers: set[str] = field(default_factory=set)
    awarded: Optional[str] = None
    award_attempt: int = 0
    pending_changes: int = 0
    restart_pending: bool = False
    last_line: int = 0


class _Checker:
    def __init__(self, variant: ProtocolVariant, dialect: Dialect):
        self.variant = variant
        self.dialect = dialect
        self.convs: dict[str, _Conversation] = {}
        self.violations: list[Violation] = []
        self.seen_ids: set[int] = set()
        self.last_delivery = 0
        self._line = 0
        self._conv = ""

    def flag(self, message: str) -> None:
        self.violations.append(Violation(self._line, self._conv, message))

    def move(self, conv: _Conversation, *steps: ContractState) -> bool:
        state = conv.state
        for to in steps:
            if state is not None and not validate_transition(state, to, self.variant):
                self.flag(
                    f"illegal transition {state.value} -> {to.value} under {self.variant.value}"
                )
                return False
            state = to
        conv.state = state
        return True

    def attempt_of(self, env: Envelope) -> Optional[int]:
        raw = env.get("attempt")
        if raw is None or not raw.isdigit():
            self.flag(f"{env.performative.value} carries no attempt number")
            return None
        return int(raw)

    def check(self, line: int, env: Envelope) -> None:
        self._line, self._conv = line, env.conversation_id
        if env.msg_id in self.seen_ids:
            self.flag(f"duplicate msg_id {env.msg_id}")
        self.seen_ids.add(env.msg_id)
        if env.dialect_keyword not in self.dialect:
            self.flag(f"keyword {env.dialect_keyword!r} is not part of dialect {self.dialect.name}")
        delivered = env.delivered_at if env.delivered_at is not None else env.sent_at
        if delivered < self.last_delivery:
            self.flag(f"delivered at {delivered}, before an earlier line ({self.last_delivery})")
        self.last_delivery = max(self.last_delivery, delivered)

        conv = self.convs.get(env.conversation_id)
        if conv is None:
            if env.performative is not P.CALL_FOR_PROPOSALS:
                self.flag(f"conversation opens with {env.performative.value}, not CallForProposals")
                return
            conv = self.convs[env.conversation_id] = _Conversation(manager=env.sender)
        conv.last_line = line

        from_manager = env.sender == conv.manager
        if (env.performative in MANAGER_ACTS) != from_manager:
            role = "manager" if from_manager else "contractor"
            self.flag(f"{env.performative.value} may not be sent by the {role} ({env.sender})")
            return
        if not from_manager and env.receiver != conv.manager:
            self.flag(f"contractor reply addressed to {env.receiver}, not the manager")
            return
        getattr(self, "on_" + env.performative.name.lower())(conv, env)

    # manager acts ---------------------------------------------------------

    def on_call_for_proposals(self, conv: _Conversation, env: Envelope) -> None:
        attempt = self.attempt_of(env)
        if attempt is None:
            return
        if conv.state is None:
            self.move(conv, S.ANNOUNCED, S.BIDDING)
        elif attempt == conv.attempt and conv.state is S.BIDDING:
            if env.receiver in conv.invited:
                self.flag(f"second CallForProposals to {env.receiver} in attempt {attempt}")
            conv.invited.add(env.receiver)
            return
        elif attempt > conv.attempt:
            if conv.state is S.BIDDING:
                ok = self.move(conv, S.BID_PROCESSING, S.ANNOUNCED, S.BIDDING)
            elif conv.state is S.CANCELLED and conv.restart_pending:
                conv.state = S.IN_PROGRESS
                ok = self.move(conv, S.ANNOUNCED, S.BIDDING)
                if not ok:
                    conv.state = S.CANCELLED
            elif conv.state in (S.AWARDED, S.IN_PROGRESS):
                self.flag("task re-announced while a contractor still holds it (no Cancel)")
                return
            else:
                self.flag(f"CallForProposals after the conversation ended ({conv.state.value})")
                return
            if not ok:
                return
            conv.awarded = None
            conv.pending_changes = 0
            conv.restart_pending = False
        else:
            self.flag(f"CallForProposals for stale attempt {attempt} (current {conv.attempt})")
            return
        conv.attempt = attempt
        conv.invited = {env.receiver}
        conv.answered = set()
        conv.proposers = set()

    def on_accept_proposal(self, conv: _Conversation, env: Envelope) -> None:
        attempt = self.attempt_of(env)
        if attempt is None:
            return
        if conv.state is not S.BIDDING or attempt != conv.attempt:
            self.flag(f"AcceptProposal outside the bidding round (state {_name(conv.state)})")
            return
        if env.receiver not in conv.proposers:
            self.flag(f"AcceptProposal to {env.receiver}, who made no proposal")
            return
        if self.move(conv, S.BID_PROCESSING, S.AWARDED, S.IN_PROGRESS):
            conv.awarded = env.receiver
            conv.award_attempt = attempt

    def on_reject_proposal(self, conv: _Conversation, env: Envelope) -> None:
        attempt = self.attempt_of(env)
        if attempt is None:
            return
        if attempt != conv.attempt or env.receiver not in conv.proposers:
            self.flag(f"RejectProposal to {env.receiver} without a matching proposal")
        elif env.receiver == conv.awarded and conv.award_attempt == attempt:
            self.flag(f"RejectProposal to the awarded contractor {env.receiver}")

    def on_request_change(self, conv: _Conversation, env: Envelope) -> None:
        if self.variant is not ProtocolVariant.UPDATED:
            self.flag(f"RequestChange is not part of the {self.variant.value} protocol")
            return
        if conv.state is not S.IN_PROGRESS or env.receiver != conv.awarded:
            self.flag(f"RequestChange to {env.receiver} without a running contract")
            return
        if self.move(conv, S.IN_PROGRESS):
            conv.pending_changes += 1

    def on_cancel(self, conv: _Conversation, env: Envelope) -> None:
        if conv.state not in (S.AWARDED, S.IN_PROGRESS) or env.receiver != conv.awarded:
            self.flag(f"Cancel to {env.receiver} without a running contract")
            return
        if self.move(conv, S.CANCELLED):
            conv.restart_pending = True

    # contractor acts ------------------------------------------------------

    def _bid_reply(self, conv: _Conversation, env: Envelope) -> bool:
        attempt = self.attempt_of(env)
        if attempt is None:
            return False
        if conv.state is not S.BIDDING or attempt != conv.attempt or env.sender not in conv.invited:
            self.flag(f"{env.performative.value} from {env.sender} without an open CallForProposals")
            return False
        if env.sender in conv.answered:
            self.flag(f"{env.sender} answered attempt {attempt} twice")
            return False
        conv.answered.add(env.sender)
        return True

    def on_propose(self, conv: _Conversation, env: Envelope) -> None:
        if self._bid_reply(conv, env):
            conv.proposers.add(env.sender)

    def on_refuse(self, conv: _Conversation, env: Envelope) -> None:
        self._bid_reply(conv, env)

    def _holder(self, conv: _Conversation, env: Envelope) -> bool:
        if conv.state is not S.IN_PROGRESS or env.sender != conv.awarded:
            self.flag(
                f"{env.performative.value} from {env.sender}, who holds no running contract "
                f"(state {_name(conv.state)})"
            )
            return False
        return True

    def on_inform(self, conv: _Conversation, env: Envelope) -> None:
        kind = env.get("kind")
        if kind not in ("interim", "final"):
            self.flag(f"Inform with unknown report kind {kind!r}")
            return
        if self._holder(conv, env) and kind == "final":
            self.move(conv, S.COMPLETED)

    def on_confirm_change(self, conv: _Conversation, env: Envelope) -> None:
        if not self._holder(conv, env):
            return
        if conv.pending_changes <= 0:
            self.flag("ConfirmChange without an outstanding RequestChange")
            return
        conv.pending_changes -= 1

    def on_failure(self, conv: _Conversation, env: Envelope) -> None:
        if self._holder(conv, env):
            self.move(conv, S.FAILED)

    def finish(self) -> None:
        for cid, conv in sorted(self.convs.items()):
            self._line, self._conv = conv.last_line, cid
            if conv.state in (S.COMPLETED, S.FAILED, S.CANCELLED):
                continue
            # a final round in which every invitee refused ends the task silently
            if conv.state is S.BIDDING and not conv.proposers and conv.answered >= conv.invited:
                continue
            self.flag(f"conversation left open in state {_name(conv.state)}")


def _name(state: Optional[ContractState]) -> str:
    return "none" if state is None else state.value


def validate_trace(
    entries: Iterable["tuple[int, Envelope] | Envelope"],
    variant: "ProtocolVariant | str",
    dialect: "Dialect | str",
) -> ConformanceReport:
    """Check a trace given as envelopes or ``(line_number, envelope)`` pairs."""
    variant = ProtocolVariant.parse(variant)
    dialect = get_dialect(dialect)
    checker = _Checker(variant, dialect)
    count = 0
    for index, entry in enumerate(entries, 1):
        line, env = entry if isinstance(entry, tuple) else (index, entry)
        checker.check(line, env)
        count += 1
    checker.finish()
    return ConformanceReport(variant, dialect.name, count, checker.violations)


def validate_file(
    path: "str | Path",
    variant: "ProtocolVariant | str | None" = None,
    dialect: "Dialect | str | None" = None,
) -> ConformanceReport:
    """Validate a trace file; variant and dialect default to its header."""
    header, entries = read_trace(path)
    variant = variant or header.get("variant")
    dialect = dialect or header.get("dialect")
    if variant is None or dialect is None:
        raise ValueError(f"{path}: no variant/dialect given and none in the trace header")
    return validate_trace(entries, variant, dialect)
