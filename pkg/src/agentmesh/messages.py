"""Message vocabulary and wire format shared by every part of the runtime.

Everything here is a plain value: messages can be handed between agents,
written to trace logs, and compared byte-for-byte. The wire format is one
newline-terminated JSON record per message with a fixed top-level key order,
so trace files diff cleanly.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class Performative(Enum):
    """Closed set of message kinds understood by the runtime."""

    REGISTER = "REGISTER"
    ADVERTISE = "ADVERTISE"
    UNADVERTISE = "UNADVERTISE"
    IS_THIS_YOURS = "IS_THIS_YOURS"
    IT_IS_MINE = "IT_IS_MINE"
    NOT_MINE = "NOT_MINE"
    MAYBE_MINE = "MAYBE_MINE"
    THIS_IS_YOURS = "THIS_IS_YOURS"
    RESOLVE = "RESOLVE"
    REWARD = "REWARD"
    USER_QUERY = "USER_QUERY"
    USER_ANSWER = "USER_ANSWER"
    OUTPUT = "OUTPUT"


#: Replies an agent may send back for one IS_THIS_YOURS query.
QUERY_REPLIES = frozenset(
    {Performative.IT_IS_MINE, Performative.NOT_MINE, Performative.MAYBE_MINE}
)

_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")

#: Pseudo-user stamped on control-plane traffic (REGISTER/ADVERTISE/...).
SYSTEM_USER = "system"


class MessageError(ValueError):
    """A message violates its construction invariants."""


class DecodeError(ValueError):
    """A wire record could not be decoded; `field` names the offender."""

    def __init__(self, field_name: str, detail: str = ""):
        self.field = field_name
        super().__init__(f"bad wire record field {field_name!r}" + (f": {detail}" if detail else ""))


class ProtocolVersionError(DecodeError):
    """The record names a performative this runtime does not know."""

    def __init__(self, kind: str):
        self.kind = kind
        ValueError.__init__(self, f"unknown performative {kind!r}")
        self.field = "performative"


def valid_name(name: str) -> bool:
    """Agent/community names: non-empty lowercase alphanumerics and hyphens."""
    return bool(_NAME_RE.match(name))


@dataclass(frozen=True, order=True)
class RequestId:
    """Identity of one user request: originating input agent plus a counter.

    The pair is globally unique for a session; keeping the origin name in the
    id makes traces deterministic and lets any agent route user-facing
    questions back to the input channel that started the request.
    """

    origin: str
    number: int

    def __str__(self) -> str:
        return f"{self.origin}:{self.number}"

    @classmethod
    def parse(cls, text: str) -> "RequestId":
        origin, colon, number = text.rpartition(":")
        if not colon or not origin:
            raise DecodeError("request", f"expected origin:number, got {text!r}")
        try:
            return cls(origin, int(number))
        except ValueError:
            raise DecodeError("request", f"non-integer counter in {text!r}") from None


#: Request id used for control-plane traffic that belongs to no user request.
SYSTEM_REQUEST = RequestId(SYSTEM_USER, 0)


class RequestIdCounter:
    """Issues strictly increasing request ids for one input agent."""

    def __init__(self, origin: str):
        if not valid_name(origin):
            raise MessageError(f"invalid origin name {origin!r}")
        self.origin = origin
        self._next = 1

    def next(self) -> RequestId:
        rid = RequestId(self.origin, self._next)
        self._next += 1
        return rid


@dataclass(frozen=True)
class Message:
    """One performative-tagged communication item.

    `content` is a small JSON-compatible dict whose keys depend on the
    performative (request text, community name, reward value, confidence,
    question options...). It is treated as immutable by convention.
    """

    performative: Performative
    sender: str
    recipients: tuple[str, ...]
    user: str
    request: RequestId
    seq: int
    content: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.performative, Performative):
            raise MessageError(f"performative must be a Performative, got {self.performative!r}")
        if not valid_name(self.sender):
            raise MessageError(f"invalid sender name {self.sender!r}")
        if not self.recipients:
            raise MessageError("recipients must be non-empty")
        object.__setattr__(self, "recipients", tuple(self.recipients))
        for r in self.recipients:
            if not valid_name(r):
                raise MessageError(f"invalid recipient name {r!r}")
        if not self.user:
            raise MessageError("user must be non-empty")
        if self.seq < 0:
            raise MessageError("seq must be >= 0")
        if self.performative is Performative.REWARD:
            value = self.content.get("value")
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise MessageError("REWARD content requires a finite numeric 'value'")

    def for_recipient(self, recipient: str) -> "Message":
        """Per-delivery copy: same message narrowed to one recipient."""
        if self.recipients == (recipient,):
            return self
        return Message(
            self.performative, self.sender, (recipient,), self.user, self.request, self.seq, self.content
        )


def encode_message(m: Message) -> bytes:
    """Encode to one newline-terminated UTF-8 JSON record with fixed key order."""
    record = {
        "performative": m.performative.value,
        "sender": m.sender,
        "recipients": list(m.recipients),
        "user": m.user,
        "request": str(m.request),
        "seq": m.seq,
        "content": {k: m.content[k] for k in sorted(m.content)},
    }
    return (json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")


_FIELDS = ("performative", "sender", "recipients", "user", "request", "seq", "content")


def decode_message(data: bytes | str) -> Message:
    """Inverse of :func:`encode_message` on its image."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError("record", str(exc)) from None
    if not isinstance(raw, dict):
        raise DecodeError("record", "not an object")
    for name in _FIELDS:
        if name not in raw:
            raise DecodeError(name, "missing")
    kind = raw["performative"]
    try:
        performative = Performative(kind)
    except ValueError:
        raise ProtocolVersionError(str(kind)) from None
    if not isinstance(raw["recipients"], list):
        raise DecodeError("recipients", "not a list")
    if not isinstance(raw["seq"], int):
        raise DecodeError("seq", "not an integer")
    if not isinstance(raw["content"], dict):
        raise DecodeError("content", "not an object")
    if not isinstance(raw["request"], str):
        raise DecodeError("request", "not a string")
    try:
        return Message(
            performative=performative,
            sender=raw["sender"],
            recipients=tuple(raw["recipients"]),
            user=raw["user"],
            request=RequestId.parse(raw["request"]),
            seq=raw["seq"],
            content=raw["content"],
        )
    except MessageError as exc:
        raise DecodeError("record", str(exc)) from None
