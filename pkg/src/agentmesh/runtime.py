"""Deterministic in-process message bus, name server, and trace log.

Agents are isolated state machines registered under unique names; the bus
delivers one message at a time. In deterministic mode delivery order is
global FIFO with multicast fan-out ordered by recipient name, which makes
whole-session traces byte-identical across runs. A seeded-random mode
relaxes global order (for property tests) while preserving per-pair FIFO.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

from .messages import Message, Performative, RequestId, encode_message

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10_000

#: Performatives whose undeliverable copies are answered with a synthesized
#: NOT_MINE so the sender's aggregation can terminate. Replies and one-way
#: notifications are just dead-lettered (synthesizing replies to replies
#: could ping-pong between two dead names).
_SYNTHESIZE_FOR = frozenset(
    {Performative.IS_THIS_YOURS, Performative.THIS_IS_YOURS, Performative.RESOLVE}
)


class RuntimeError_(Exception):
    pass


class SpawnError(RuntimeError_):
    pass


class UnknownAgentError(RuntimeError_):
    pass


class LivelockError(RuntimeError_):
    """Step budget exceeded; carries the trace delivered so far."""

    def __init__(self, max_steps: int, trace: list["TraceEvent"]):
        self.trace = trace
        super().__init__(f"no quiescence within {max_steps} steps")


@dataclass(frozen=True)
class AgentId:
    name: str
    address: str


@dataclass(frozen=True)
class TraceEvent:
    """One delivery (or dead-letter) in global order; steps are dense from 1."""

    step: int
    message: Message
    dead_letter: bool = False

    def line(self) -> str:
        return f"{self.step}\t" + encode_message(self.message).decode("utf-8")


class Behavior(Protocol):
    """What the bus needs from an agent implementation."""

    def on_message(self, msg: Message, ctx: "Context") -> None: ...


@dataclass
class AgentSpec:
    """Spawn-time description of an agent: stable name, behavior, priority."""

    name: str
    behavior: Any
    priority: int = 0

    def __post_init__(self):
        if self.priority < 0:
            raise SpawnError("priority must be >= 0")


class Context:
    """Per-agent handle into the runtime, passed to behavior callbacks."""

    def __init__(self, runtime: "Runtime", name: str):
        self._runtime = runtime
        self.name = name

    def send(
        self,
        performative: Performative,
        recipients: list[str] | tuple[str, ...],
        user: str,
        request: RequestId,
        content: dict[str, Any] | None = None,
    ) -> Message:
        msg = self._runtime._make_message(
            performative, self.name, tuple(recipients), user, request, content or {}
        )
        self._runtime.send(msg)
        return msg


@dataclass
class _Registration:
    spec: AgentSpec
    agent_id: AgentId
    ctx: Context


class Runtime:
    """The bus. `seed=None` selects deterministic mode."""

    def __init__(self, seed: int | None = None, max_steps: int = DEFAULT_MAX_STEPS):
        self.max_steps = max_steps
        self._agents: dict[str, _Registration] = {}
        self._seq: dict[str, int] = {}  # per-name, survives retire/respawn
        self._addr_counter = 0
        self._send_serial = 0
        self.trace: list[TraceEvent] = []
        self._rng = random.Random(seed) if seed is not None else None
        # deterministic mode: one global FIFO; random mode: per-pair FIFOs
        self._queue: deque[tuple[int, str, Message]] = deque()
        self._pair_queues: dict[tuple[str, str], deque[Message]] = {}

    # -- lifecycle ---------------------------------------------------------

    def spawn_agent(self, spec: AgentSpec) -> AgentId:
        if spec.name in self._agents:
            raise SpawnError(f"agent name {spec.name!r} already live")
        self._addr_counter += 1
        agent_id = AgentId(spec.name, f"addr-{self._addr_counter}")
        self._agents[spec.name] = _Registration(spec, agent_id, Context(self, spec.name))
        self._seq.setdefault(spec.name, 0)
        return agent_id

    def retire_agent(self, name: str) -> None:
        """Drain in-flight traffic, then remove the agent and settle its debts.

        Queries the agent had received but not yet answered are settled with
        synthesized NOT_MINE replies so no querier waits forever.
        """
        if name not in self._agents:
            raise UnknownAgentError(name)
        self.run_until_quiescent()
        reg = self._agents.pop(name)
        obligations = getattr(reg.spec.behavior, "pending_obligations", None)
        if obligations is not None:
            for requester, user, request in obligations():
                self.send(
                    self._make_message(
                        Performative.NOT_MINE, name, (requester,), user, request, {"synthesized": True}
                    )
                )

    def is_live(self, name: str) -> bool:
        return name in self._agents

    def agent_id(self, name: str) -> AgentId:
        if name not in self._agents:
            raise UnknownAgentError(name)
        return self._agents[name].agent_id

    def behavior(self, name: str) -> Any:
        if name not in self._agents:
            raise UnknownAgentError(name)
        return self._agents[name].spec.behavior

    def context(self, name: str) -> Context:
        """The agent's own send handle; used when wiring topologies."""
        if name not in self._agents:
            raise UnknownAgentError(name)
        return self._agents[name].ctx

    def priority(self, name: str) -> int:
        if name not in self._agents:
            return 0
        return self._agents[name].spec.priority

    def live_agents(self) -> list[str]:
        return sorted(self._agents)

    # -- sending and delivery ----------------------------------------------

    def _make_message(
        self,
        performative: Performative,
        sender: str,
        recipients: tuple[str, ...],
        user: str,
        request: RequestId,
        content: dict[str, Any],
    ) -> Message:
        self._seq[sender] = self._seq.get(sender, 0) + 1
        return Message(performative, sender, recipients, user, request, self._seq[sender], content)

    def send(self, m: Message) -> None:
        """Enqueue one copy per recipient; unresolvable ones dead-letter at delivery."""
        self._send_serial += 1
        for recipient in sorted(set(m.recipients)):
            copy = m.for_recipient(recipient)
            if self._rng is None:
                self._queue.append((self._send_serial, recipient, copy))
            else:
                self._pair_queues.setdefault((m.sender, recipient), deque()).append(copy)

    def inject(self, name: str, payload: Any) -> Any:
        """Hand an external event to an agent's behavior (not a bus message)."""
        if name not in self._agents:
            raise UnknownAgentError(name)
        reg = self._agents[name]
        return reg.spec.behavior.on_inject(payload, reg.ctx)

    def _record(self, copy: Message, dead_letter: bool = False) -> TraceEvent:
        event = TraceEvent(len(self.trace) + 1, copy, dead_letter)
        self.trace.append(event)
        return event

    def _pop_next(self) -> tuple[str, Message] | None:
        if self._rng is None:
            if not self._queue:
                return None
            _, recipient, copy = self._queue.popleft()
            return recipient, copy
        ready = sorted(k for k, q in self._pair_queues.items() if q)
        if not ready:
            return None
        pair = self._rng.choice(ready)
        return pair[1], self._pair_queues[pair].popleft()

    def _pending(self) -> bool:
        if self._rng is None:
            return bool(self._queue)
        return any(q for q in self._pair_queues.values())

    def run_until_quiescent(self, max_steps: int | None = None) -> list[TraceEvent]:
        """Deliver until nothing is in flight; returns this call's trace slice.

        Delivery order is the deterministic contract: global FIFO, multicast
        ties broken by recipient name. Exceeding the step budget raises
        :class:`LivelockError` carrying the partial trace.
        """
        budget = self.max_steps if max_steps is None else max_steps
        start = len(self.trace)
        steps = 0
        while True:
            item = self._pop_next()
            if item is None:
                return self.trace[start:]
            steps += 1
            if steps > budget:
                raise LivelockError(budget, self.trace[start:])
            recipient, copy = item
            if recipient not in self._agents:
                # unknown or retired between enqueue and delivery
                self._record(copy, dead_letter=True)
                if copy.performative in _SYNTHESIZE_FOR and copy.sender in self._agents:
                    self.send(
                        self._make_message(
                            Performative.NOT_MINE,
                            recipient,
                            (copy.sender,),
                            copy.user,
                            copy.request,
                            {"synthesized": True},
                        )
                    )
                continue
            self._record(copy)
            reg = self._agents[recipient]
            reg.spec.behavior.on_message(copy, reg.ctx)

    # -- trace I/O -----------------------------------------------------------

    def write_trace(self, path: str | Path, events: list[TraceEvent] | None = None) -> None:
        events = self.trace if events is None else events
        Path(path).write_text("".join(e.line() for e in events), encoding="utf-8")


def trace_triples(events: list[TraceEvent]) -> list[tuple[str, str, str]]:
    """(performative, sender, recipient) per delivery; scan-friendly."""
    return [
        (e.message.performative.value, e.message.sender, e.message.recipients[0])
        for e in events
        if not e.dead_letter
    ]


def contains_in_order(events: list[TraceEvent], expected: list[tuple[str, str, str]]) -> bool:
    """True when `expected` is a subsequence of the delivered triples."""
    it = iter(trace_triples(events))
    return all(any(t == want for t in it) for want in expected)
