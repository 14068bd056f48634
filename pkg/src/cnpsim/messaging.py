"""Performative-tagged envelopes, ACL dialect tables and the trace wire format.

A trace line is::

    msg_id|conversation_id|sender|receiver|keyword|sent_at|delivered_at|payload

with the payload written as comma-separated ``key=value`` pairs whose keys
and values are percent-escaped.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence
from urllib.parse import quote, unquote

__all__ = [
    "Performative",
    "Dialect",
    "ACL_F",
    "ACL_K",
    "DIALECTS",
    "get_dialect",
    "Envelope",
    "MessageFactory",
    "MessagingError",
    "EncodingError",
    "TraceParseError",
    "DialectError",
    "encode",
    "decode",
    "dialect_equivalent",
    "write_trace",
    "read_trace",
    "format_header",
    "parse_header",
    "DEFAULT_PAYLOAD_LIMIT",
]

DEFAULT_PAYLOAD_LIMIT = 4096
FIELDS = (
    "msg_id",
    "conversation_id",
    "sender",
    "receiver",
    "keyword",
    "sent_at",
    "delivered_at",
    "payload",
)


class MessagingError(ValueError):
    pass


class EncodingError(MessagingError):
    pass


class TraceParseError(MessagingError):
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DialectError(MessagingError):
    pass


class Performative(enum.Enum):
    CALL_FOR_PROPOSALS = "CallForProposals"
    PROPOSE = "Propose"
    REFUSE = "Refuse"
    ACCEPT_PROPOSAL = "AcceptProposal"
    REJECT_PROPOSAL = "RejectProposal"
    INFORM = "Inform"
    REQUEST_CHANGE = "RequestChange"
    CANCEL = "Cancel"
    FAILURE = "Failure"
    CONFIRM_CHANGE = "ConfirmChange"


@dataclass(frozen=True)
class Dialect:
    name: str
    mapping: Mapping[Performative, str]

    def __post_init__(self) -> None:
        missing = set(Performative) - set(self.mapping)
        if missing:
            raise DialectError(
                f"dialect {self.name} lacks {sorted(p.value for p in missing)}"
            )
        if len(set(self.mapping.values())) != len(self.mapping):
            raise DialectError(f"dialect {self.name} maps two performatives to one keyword")
        object.__setattr__(self, "_reverse", {v: k for k, v in self.mapping.items()})

    def keyword(self, performative: Performative) -> str:
        return self.mapping[performative]

    def performative(self, keyword: str) -> Performative:
        try:
            return self._reverse[keyword]  # type: ignore[attr-defined]
        except KeyError:
            raise DialectError(
                f"keyword {keyword!r} is not part of dialect {self.name}"
            ) from None

    def __contains__(self, keyword: str) -> bool:
        return keyword in self._reverse  # type: ignore[attr-defined]


P = Performative
ACL_F = Dialect(
    "acl-f",
    {
        P.CALL_FOR_PROPOSALS: "cfp",
        P.PROPOSE: "propose",
        P.REFUSE: "refuse",
        P.ACCEPT_PROPOSAL: "accept-proposal",
        P.REJECT_PROPOSAL: "reject-proposal",
        P.INFORM: "inform",
        P.REQUEST_CHANGE: "request",
        P.CANCEL: "cancel",
        P.FAILURE: "failure",
        P.CONFIRM_CHANGE: "confirm",
    },
)
ACL_K = Dialect(
    "acl-k",
    {
        P.CALL_FOR_PROPOSALS: "achieve",
        P.PROPOSE: "tell",
        P.REFUSE: "sorry",
        P.ACCEPT_PROPOSAL: "accept",
        P.REJECT_PROPOSAL: "decline",
        P.INFORM: "reply",
        P.REQUEST_CHANGE: "ask-one",
        P.CANCEL: "untell",
        P.FAILURE: "error",
        P.CONFIRM_CHANGE: "acknowledge",
    },
)
del P
DIALECTS = {d.name: d for d in (ACL_F, ACL_K)}

# The two keyword sets are disjoint, so a bare keyword identifies its dialect.
_KEYWORDS = {kw: (d, p) for d in DIALECTS.values() for p, kw in d.mapping.items()}
assert len(_KEYWORDS) == sum(len(d.mapping) for d in DIALECTS.values())


def get_dialect(name: "str | Dialect") -> Dialect:
    if isinstance(name, Dialect):
        return name
    try:
        return DIALECTS[str(name).strip().lower()]
    except KeyError:
        raise DialectError(
            f"unknown dialect {name!r}; expected one of {sorted(DIALECTS)}"
        ) from None


Payload = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Envelope:
    msg_id: int
    conversation_id: str
    sender: str
    receiver: str
    performative: Performative
    dialect_keyword: str
    payload: Payload
    sent_at: int
    delivered_at: Optional[int] = None

    def __post_init__(self) -> None:
        if self.delivered_at is not None and self.delivered_at < self.sent_at:
            raise MessagingError(
                f"message {self.msg_id}: delivered_at {self.delivered_at} "
                f"before sent_at {self.sent_at}"
            )

    @property
    def data(self) -> dict[str, str]:
        return dict(self.payload)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.payload:
            if k == key:
                return v
        return default

    def erase_keyword(self) -> "Envelope":
        return dataclasses.replace(self, dialect_keyword="")


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(round(value, 9))
    return str(value)


class MessageFactory:
    """Builds envelopes for one run: sequential ids and the active dialect."""

    def __init__(self, dialect: "str | Dialect" = ACL_F, start: int = 1):
        self.dialect = get_dialect(dialect)
        self._ids = itertools.count(start)

    def make(
        self,
        sender: str,
        receiver: str,
        performative: Performative,
        conversation_id: str,
        payload: "Mapping[str, object] | Iterable[tuple[str, object]]",
        sent_at: int,
    ) -> Envelope:
        pairs = payload.items() if isinstance(payload, Mapping) else payload
        return Envelope(
            msg_id=next(self._ids),
            conversation_id=conversation_id,
            sender=sender,
            receiver=receiver,
            performative=performative,
            dialect_keyword=self.dialect.keyword(performative),
            payload=tuple((str(k), _fmt(v)) for k, v in pairs if v is not None),
            sent_at=sent_at,
        )


def _check_token(name: str, value: str) -> str:
    if not value or "|" in value or "\n" in value or "\r" in value:
        raise EncodingError(f"{name} {value!r} cannot be written to a trace line")
    return value


def _encode_payload(payload: Payload) -> str:
    return ",".join(f"{quote(k, safe='')}={quote(v, safe='')}" for k, v in payload)


def encode(
    envelope: Envelope,
    dialect: "str | Dialect | None" = None,
    *,
    max_payload: int = DEFAULT_PAYLOAD_LIMIT,
) -> str:
    """Render one envelope as a trace line (no trailing newline).

    With ``dialect`` given, the keyword is taken from that dialect's table
    rather than from the envelope.
    """
    if envelope.delivered_at is None:
        raise EncodingError(f"message {envelope.msg_id} has not been delivered")
    keyword = (
        get_dialect(dialect).keyword(envelope.performative)
        if dialect is not None
        else envelope.dialect_keyword
    )
    if _KEYWORDS.get(keyword, (None, None))[1] is not envelope.performative:
        raise EncodingError(
            f"keyword {keyword!r} does not denote {envelope.performative.value}"
        )
    payload = _encode_payload(envelope.payload)
    if len(payload.encode("utf-8")) > max_payload:
        raise EncodingError(
            f"message {envelope.msg_id}: payload of {len(payload)} bytes "
            f"exceeds the {max_payload}-byte limit"
        )
    parts = [
        str(envelope.msg_id),
        _check_token("conversation_id", envelope.conversation_id),
        _check_token("sender", envelope.sender),
        _check_token("receiver", envelope.receiver),
        keyword,
        str(envelope.sent_at),
        str(envelope.delivered_at),
        payload,
    ]
    return "|".join(parts)


def _parse_time(field: str, text: str) -> int:
    if not text.isdigit():
        raise TraceParseError(f"{field}: expected unsigned integer, got {text!r}", field)
    return int(text)


def decode(line: str) -> Envelope:
    line = line.rstrip("\r\n")
    parts = line.split("|")
    if len(parts) != len(FIELDS):
        missing = FIELDS[len(parts)] if len(parts) < len(FIELDS) else "payload"
        raise TraceParseError(
            f"expected {len(FIELDS)} fields, got {len(parts)} "
            f"(problem at field {missing!r})",
            missing,
        )
    msg_id, conv, sender, receiver, keyword, sent, delivered, payload = parts
    for name, value in (("conversation_id", conv), ("sender", sender), ("receiver", receiver)):
        if not value:
            raise TraceParseError(f"{name} is empty", name)
    try:
        _, performative = _KEYWORDS[keyword]
    except KeyError:
        raise DialectError(f"unknown performative keyword {keyword!r}") from None
    pairs = []
    if payload:
        for item in payload.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise TraceParseError(f"payload item {item!r} lacks '='", "payload")
            pairs.append((unquote(key), unquote(value)))
    sent_at = _parse_time("sent_at", sent)
    delivered_at = _parse_time("delivered_at", delivered)
    if delivered_at < sent_at:
        raise TraceParseError("delivered_at precedes sent_at", "delivered_at")
    return Envelope(
        msg_id=_parse_time("msg_id", msg_id),
        conversation_id=conv,
        sender=sender,
        receiver=receiver,
        performative=performative,
        dialect_keyword=keyword,
        payload=tuple(pairs),
        sent_at=sent_at,
        delivered_at=delivered_at,
    )


def dialect_equivalent(trace_f: Sequence[Envelope], trace_k: Sequence[Envelope]) -> bool:
    if len(trace_f) != len(trace_k):
        return False
    return all(a.erase_keyword() == b.erase_keyword() for a, b in zip(trace_f, trace_k))


def format_header(settings: Iterable[tuple[str, object]]) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in settings)


def parse_header(line: str) -> dict[str, str]:
    body = line.lstrip("#").strip()
    out = {}
    for token in body.split():
        key, sep, value = token.partition("=")
        if sep:
            out[key] = value
    return out


def write_trace(
    path: "str | Path",
    envelopes: Iterable[Envelope],
    header: Optional[str] = None,
) -> None:
    lines = [] if header is None else [header]
    lines.extend(encode(e) for e in envelopes)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path: "str | Path") -> tuple[dict[str, str], list[tuple[int, Envelope]]]:
    """Return the header settings and ``(line_number, envelope)`` pairs."""
    header: dict[str, str] = {}
    envelopes = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if not envelopes and not header:
                header = parse_header(line)
            continue
        try:
            envelopes.append((lineno, decode(line)))
        except TraceParseError as exc:
            raise TraceParseError(f"line {lineno}: {exc}", exc.field) from exc
        except MessagingError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from exc
    return header, envelopes
