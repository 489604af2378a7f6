"""The per-agent communications unit: one state machine per agent.

An agent interprets each incoming request against its policy, then either
runs its own process hook, hands the request to a community member, or
queries its communities and aggregates the replies. Contradictions (zero or
multiple claims) resolve by priority where possible and by asking the user
otherwise, with the answer memorized per user. Rewards walk back along the
recorded requester chain.

Request records are retained after dispatch so later rewards always find
their request.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from .learning import (
    SELF,
    PolicyEntry,
    PolicyStore,
    Resolution,
    phrase_question,
    resolve_by_priority,
    tokenize,
)
from .messages import (
    Message,
    Performative,
    QUERY_REPLIES,
    RequestId,
    RequestIdCounter,
    SYSTEM_REQUEST,
    SYSTEM_USER,
)
from .rewards import AddressConfidence, RewardConfig, split_reward
from .runtime import Context

log = logging.getLogger(__name__)

EXTERNAL = "external"


@dataclass(frozen=True)
class ProcessRequest:
    """What a black-box process hook receives."""

    text: str
    pointer: tuple[int, int] | None
    user: str
    request: RequestId


@dataclass(frozen=True)
class ProcessResult:
    payload: str
    confidence: float | None = None


# hook: ProcessRequest -> ProcessResult | str | None (None = no output)
ProcessHook = Callable[[ProcessRequest], "ProcessResult | str | None"]


@dataclass(frozen=True)
class InterpretationOutcome:
    """Mine(confidence) | Route(communities with match weights) | Unknown."""

    kind: str  # "mine" | "route" | "unknown"
    confidence: float = 1.0
    communities: tuple[str, ...] = ()
    weights: dict[str, float] = field(default_factory=dict)


def interpret(text: str, view: list[PolicyEntry], has_hook: bool = True) -> InterpretationOutcome:
    """Match `text` against a policy view (already ordered best-first)."""
    tokens = tokenize(text)
    matched = [e for e in view if e.matches(tokens)]
    for e in matched:
        if e.target == SELF:
            if has_hook:
                return InterpretationOutcome("mine", confidence=e.weight)
            break  # self-rules are meaningless without a process unit
    communities: list[str] = []
    weights: dict[str, float] = {}
    for e in matched:
        if e.target == SELF:
            continue
        if e.target not in weights:
            communities.append(e.target)
            weights[e.target] = e.weight
    if communities:
        return InterpretationOutcome("route", communities=tuple(communities), weights=weights)
    return InterpretationOutcome("unknown")


class AddressBook:
    """Known peers plus community membership, with routing confidence."""

    def __init__(self):
        self.peers: set[str] = set()
        self.communities: dict[str, set[str]] = {}
        self.member_priority: dict[str, int] = {}
        self.confidence = AddressConfidence()

    def add_member(self, community: str, member: str, priority: int = 0) -> None:
        self.communities.setdefault(community, set()).add(member)
        self.member_priority[member] = priority

    def remove_member(self, community: str, member: str) -> bool:
        members = self.communities.get(community)
        if members is None or member not in members:
            return False
        members.discard(member)
        if not members:
            del self.communities[community]
        return True

    def members(self, community: str) -> set[str]:
        return self.communities.get(community, set())

    def known_communities(self) -> list[str]:
        return sorted(c for c, members in self.communities.items() if members)

    def choose_member(self, community: str) -> str | None:
        """Highest priority, then routing confidence, then name."""
        members = self.members(community)
        if not members:
            return None
        return min(
            members,
            key=lambda m: (-self.member_priority.get(m, 0), -self.confidence.get(m), m),
        )


@dataclass
class Claim:
    community: str
    claimant: str
    confidence: float
    priority: int
    tentative: bool = False


@dataclass
class RequestRecord:
    """Bookkeeping for one request passing through this agent."""

    request: RequestId
    user: str
    text: str
    pointer: tuple[int, int] | None
    requester: str  # agent name, or EXTERNAL
    origin: str  # "external" | "transferred" | "queried"
    phase: str = "interpreting"
    outstanding: dict[str, set[str]] = field(default_factory=dict)
    claims: list[Claim] = field(default_factory=list)
    denials: set[str] = field(default_factory=set)
    chosen_community: str | None = None
    chosen_member: str | None = None
    confidence: float = 1.0
    offer: Claim | None = None
    reasked: bool = False
    options: dict[str, Claim] = field(default_factory=dict)

    @property
    def owned(self) -> bool:
        return self.origin in (EXTERNAL, "transferred")

    def payload_content(self) -> dict[str, Any]:
        content: dict[str, Any] = {"text": self.text}
        if self.pointer is not None:
            content["pointer"] = [self.pointer[0], self.pointer[1]]
        return content


@dataclass
class WhiteBoxConfig:
    """Everything fixed about an agent at spawn time."""

    name: str
    store: PolicyStore
    priority: int = 1
    process_hook: ProcessHook | None = None
    presets: list[PolicyEntry] = field(default_factory=list)
    initial_address_book: list[tuple[str, str, int]] = field(default_factory=list)  # (community, member, prio)
    input_sources: set[str] = field(default_factory=set)
    output_to: str | None = None
    feedback_to: str | None = None
    reward_config: RewardConfig = field(default_factory=RewardConfig)


class WhiteBoxAgent:
    """Behavior implementing the standard communications unit."""

    def __init__(self, config: WhiteBoxConfig):
        self.config = config
        self.name = config.name
        self.store = config.store
        self.book = AddressBook()
        for community, member, priority in config.initial_address_book:
            self.book.add_member(community, member, priority)
        if config.presets:
            self.store.register_presets(self.name, config.presets)
        self.records: dict[RequestId, RequestRecord] = {}
        self.pending_queries: dict[RequestId, str] = {}  # rid -> asker (input-channel duty)
        self.applied_rewards: list[tuple[RequestId, float]] = []
        self._counter = RequestIdCounter(self.name)

    # -- bootstrap helpers (used while wiring a topology) -------------------

    def register_with(self, ctx: Context, peer: str) -> None:
        self.book.peers.add(peer)
        ctx.send(Performative.REGISTER, [peer], SYSTEM_USER, SYSTEM_REQUEST, {})

    def advertise(self, ctx: Context, community: str, to: str) -> None:
        ctx.send(
            Performative.ADVERTISE,
            [to],
            SYSTEM_USER,
            SYSTEM_REQUEST,
            {"community": community, "priority": self.config.priority},
        )

    def unadvertise(self, ctx: Context, community: str, to: str) -> None:
        ctx.send(Performative.UNADVERTISE, [to], SYSTEM_USER, SYSTEM_REQUEST, {"community": community})

    # -- external injection --------------------------------------------------

    def on_inject(self, payload: dict[str, Any], ctx: Context) -> None:
        """Driver-side events: a user request, or an answer to a pending query."""
        if "answer" in payload:
            self._relay_answer(payload["answer"], ctx)
            return
        rid = self._counter.next()
        pointer = tuple(payload["pointer"]) if payload.get("pointer") else None
        record = RequestRecord(
            request=rid,
            user=payload.get("user", SYSTEM_USER),
            text=payload.get("text", ""),
            pointer=pointer,
            requester=EXTERNAL,
            origin=EXTERNAL,
        )
        self.records[rid] = record
        self._start(record, ctx)

    def _relay_answer(self, answer: str, ctx: Context) -> None:
        if not self.pending_queries:
            log.warning("%s: answer with no pending query", self.name)
            return
        rid = max(self.pending_queries)  # newest pending question
        asker = self.pending_queries.pop(rid)
        record = self.records.get(rid)
        user = record.user if record else SYSTEM_USER
        if asker == self.name and record is not None:
            self._handle_answer(record, answer, ctx)
            return
        ctx.send(Performative.USER_ANSWER, [asker], user, rid, {"option": answer})

    # -- message handling ------------------------------------------------------

    def on_message(self, msg: Message, ctx: Context) -> None:
        p = msg.performative
        if p is Performative.REGISTER:
            if msg.sender not in self.book.peers:
                self.book.peers.add(msg.sender)
                ctx.send(Performative.REGISTER, [msg.sender], SYSTEM_USER, SYSTEM_REQUEST, {})
        elif p is Performative.ADVERTISE or p is Performative.UNADVERTISE:
            self.handle_advert(msg)
        elif p is Performative.IS_THIS_YOURS:
            self._on_query(msg, ctx)
        elif p is Performative.THIS_IS_YOURS:
            self._on_transfer(msg, ctx)
        elif p in QUERY_REPLIES:
            self._on_reply(msg, ctx)
        elif p is Performative.RESOLVE:
            self._on_resolve(msg, ctx)
        elif p is Performative.USER_QUERY:
            self.pending_queries[msg.request] = msg.sender
        elif p is Performative.USER_ANSWER:
            self._on_answer(msg, ctx)
        elif p is Performative.REWARD:
            self.receive_reward(msg, ctx)
        else:
            log.debug("%s: ignoring %s from %s", self.name, p.value, msg.sender)

    def handle_advert(self, msg: Message) -> None:
        community = msg.content.get("community", "")
        if not community:
            log.warning("%s: advert without community from %s", self.name, msg.sender)
            return
        if msg.performative is Performative.ADVERTISE:
            self.book.add_member(community, msg.sender, int(msg.content.get("priority", 0)))
        else:
            if not self.book.remove_member(community, msg.sender):
                log.info("%s: UNADVERTISE from non-member %s of %r", self.name, msg.sender, community)

    def pending_obligations(self) -> list[tuple[str, str, RequestId]]:
        """Queries received and not yet answered; settled at retirement."""
        return [
            (r.requester, r.user, r.request)
            for r in self.records.values()
            if r.origin == "queried" and r.phase == "querying"
        ]

    # -- request intake ---------------------------------------------------------

    def _on_query(self, msg: Message, ctx: Context) -> None:
        if msg.sender in self.config.input_sources:
            record = self._open(msg, EXTERNAL)
            self._start(record, ctx)
            return
        if msg.request in self.records:
            # already engaged with this request (cycle or duplicate query)
            self._reply(ctx, msg, Performative.NOT_MINE, {})
            return
        record = self._open(msg, "queried")
        self._start(record, ctx)

    def _on_transfer(self, msg: Message, ctx: Context) -> None:
        record = self.records.get(msg.request)
        if record is None:
            record = self._open(msg, "transferred")
            self._start(record, ctx)
            return
        if record.phase == "offered" and msg.sender == record.requester:
            record.origin = "transferred"
            self._dispatch_offer(record, ctx)
        elif record.phase == "awaiting-resolution" and msg.sender == record.requester:
            record.origin = "transferred"
            self._resolve_or_dispatch(record, ctx)
        else:
            self._reply(ctx, msg, Performative.NOT_MINE, {})

    def _open(self, msg: Message, origin: str) -> RequestRecord:
        pointer = msg.content.get("pointer")
        record = RequestRecord(
            request=msg.request,
            user=msg.user,
            text=msg.content.get("text", ""),
            pointer=tuple(pointer) if pointer else None,
            requester=EXTERNAL if origin == EXTERNAL else msg.sender,
            origin=origin,
        )
        self.records[msg.request] = record
        return record

    def _start(self, record: RequestRecord, ctx: Context) -> None:
        """Interpret a fresh request and take the resulting action."""
        outcome = interpret(
            record.text,
            self.store.view(self.name, record.user),
            has_hook=self.config.process_hook is not None,
        )
        if outcome.kind == "mine":
            record.confidence = outcome.confidence
            if record.origin == "queried":
                record.offer = Claim(SELF, self.name, outcome.confidence, self.config.priority)
                record.phase = "offered"
                self._reply_to(
                    ctx,
                    record,
                    Performative.IT_IS_MINE,
                    {"confidence": outcome.confidence, "priority": self.config.priority},
                )
            else:
                self._run_hook(record, ctx)
            return
        if outcome.kind == "route":
            routable = [c for c in outcome.communities if self.book.members(c)]
            if len(routable) == 1:
                c = routable[0]
                if record.origin == "queried":
                    member = self.book.choose_member(c)
                    record.offer = Claim(c, member or "", outcome.weights[c], self.config.priority)
                    record.phase = "offered"
                    self._reply_to(
                        ctx,
                        record,
                        Performative.IT_IS_MINE,
                        {"confidence": outcome.weights[c], "priority": self.config.priority},
                    )
                else:
                    self._transfer(record, c, ctx, confidence=outcome.weights[c])
                return
            if len(routable) > 1:
                self._query_communities(record, routable, ctx)
                return
        # unknown (or routes to empty communities)
        known = self.book.known_communities()
        if known:
            self._query_communities(record, known, ctx)
        else:
            self._nobody_claims(record, ctx)

    def _transfer(self, record: RequestRecord, community: str, ctx: Context, confidence: float = 1.0) -> None:
        member = self.book.choose_member(community)
        record.chosen_community = community
        record.chosen_member = member
        record.confidence = confidence
        record.phase = "dispatched"
        ctx.send(Performative.THIS_IS_YOURS, [member], record.user, record.request, record.payload_content())

    def _query_communities(self, record: RequestRecord, communities: list[str], ctx: Context) -> None:
        record.outstanding = {c: set(self.book.members(c)) for c in communities if self.book.members(c)}
        recipients = sorted(set().union(*record.outstanding.values()))
        record.phase = "querying"
        ctx.send(Performative.IS_THIS_YOURS, recipients, record.user, record.request, record.payload_content())

    def _nobody_claims(self, record: RequestRecord, ctx: Context) -> None:
        """Contradiction with zero claims: report upward, or to the user at top."""
        record.phase = "closed"
        if record.origin == EXTERNAL:
            channel = self.config.feedback_to or record.request.origin
            ctx.send(
                Performative.OUTPUT,
                [channel],
                record.user,
                record.request,
                {"payload": f"I cannot interpret this: {record.text}", "confidence": 0.0},
            )
        else:
            self._reply_to(ctx, record, Performative.NOT_MINE, {})

    # -- query replies and aggregation -------------------------------------------

    def _on_reply(self, msg: Message, ctx: Context) -> None:
        record = self.records.get(msg.request)
        if record is None:
            log.warning("%s: reply %s for unknown request %s", self.name, msg.performative.value, msg.request)
            return
        pending = {m for ms in record.outstanding.values() for m in ms}
        if msg.sender not in pending:
            if (
                record.phase == "dispatched"
                and msg.performative is Performative.NOT_MINE
                and msg.sender == record.chosen_member
            ):
                self._dispatch_failed(record, ctx)
            else:
                log.info("%s: stray %s from %s for %s", self.name, msg.performative.value, msg.sender, msg.request)
            return
        answered = [c for c, members in record.outstanding.items() if msg.sender in members]
        for community in answered:
            record.outstanding[community].discard(msg.sender)
            if msg.performative is Performative.IT_IS_MINE:
                record.claims.append(
                    Claim(
                        community,
                        msg.sender,
                        float(msg.content.get("confidence", 1.0)),
                        int(msg.content.get("priority", 0)),
                    )
                )
            elif msg.performative is Performative.MAYBE_MINE:
                record.claims.append(
                    Claim(
                        community,
                        msg.sender,
                        float(msg.content.get("confidence", 1.0)),
                        int(msg.content.get("priority", 0)),
                        tentative=True,
                    )
                )
            if not record.outstanding[community]:
                del record.outstanding[community]
                if not any(c.community == community for c in record.claims):
                    record.denials.add(community)
        if not record.outstanding:
            self._aggregate(record, ctx)

    def _aggregate(self, record: RequestRecord, ctx: Context) -> None:
        """All queried communities have answered; commit to one of the outcomes."""
        firm = [c for c in record.claims if not c.tentative]
        tentative = [c for c in record.claims if c.tentative]
        if not record.claims:
            self._nobody_claims(record, ctx)
            return
        if record.origin == "queried":
            if len(firm) == 1 and not tentative:
                claim = firm[0]
                record.offer = claim
                record.phase = "offered"
                self._reply_to(
                    ctx,
                    record,
                    Performative.IT_IS_MINE,
                    {"confidence": claim.confidence, "priority": claim.priority},
                )
            else:
                record.phase = "awaiting-resolution"
                self._reply_to(
                    ctx,
                    record,
                    Performative.MAYBE_MINE,
                    {
                        "confidence": max(c.confidence for c in record.claims),
                        "priority": max(c.priority for c in record.claims),
                    },
                )
            return
        if len(firm) == 1 and not tentative:
            self._dispatch_claim(record, firm[0], ctx)
            return
        self._resolve_or_dispatch(record, ctx)

    def _dispatch_claim(self, record: RequestRecord, claim: Claim, ctx: Context) -> None:
        record.chosen_community = claim.community
        record.chosen_member = claim.claimant
        record.confidence = claim.confidence
        record.phase = "dispatched"
        ctx.send(
            Performative.THIS_IS_YOURS, [claim.claimant], record.user, record.request, record.payload_content()
        )

    def _delegate_resolution(self, record: RequestRecord, claim: Claim, ctx: Context) -> None:
        record.chosen_community = claim.community
        record.chosen_member = claim.claimant
        record.phase = "dispatched"
        ctx.send(Performative.RESOLVE, [claim.claimant], record.user, record.request, {})

    def _resolve_or_dispatch(self, record: RequestRecord, ctx: Context) -> None:
        """Owner-side contradiction resolution over the collected claims."""
        firm = [c for c in record.claims if not c.tentative]
        tentative = [c for c in record.claims if c.tentative]
        if not record.claims:
            self._nobody_claims(record, ctx)
            return
        if tentative and not firm:
            best = min(tentative, key=lambda c: (-c.priority, c.claimant))
            self._delegate_resolution(record, best, ctx)
            return
        resolution = resolve_by_priority([(c.claimant, c.priority) for c in record.claims])
        if resolution.kind == "dispatch":
            winner = next(c for c in record.claims if c.claimant == resolution.claimant)
            if winner.tentative:
                self._delegate_resolution(record, winner, ctx)
            else:
                self._dispatch_claim(record, winner, ctx)
            return
        self._ask_user(record, resolution, ctx)

    def _ask_user(self, record: RequestRecord, resolution: Resolution, ctx: Context) -> None:
        record.options = {c.claimant: c for c in record.claims}
        record.phase = "awaiting-user"
        channel = record.request.origin
        ctx.send(
            Performative.USER_QUERY,
            [channel],
            record.user,
            record.request,
            {"question": resolution.question, "options": resolution.options},
        )

    def _on_resolve(self, msg: Message, ctx: Context) -> None:
        record = self.records.get(msg.request)
        if record is None or record.phase != "awaiting-resolution":
            log.warning("%s: RESOLVE without a pending contradiction for %s", self.name, msg.request)
            return
        record.origin = "transferred"
        self._resolve_or_dispatch(record, ctx)

    # -- user answers ----------------------------------------------------------------

    def _on_answer(self, msg: Message, ctx: Context) -> None:
        record = self.records.get(msg.request)
        if record is None or record.phase != "awaiting-user":
            log.warning("%s: USER_ANSWER without a pending question for %s", self.name, msg.request)
            return
        self._handle_answer(record, str(msg.content.get("option", "")), ctx)

    def _handle_answer(self, record: RequestRecord, answer: str, ctx: Context) -> None:
        normalized = answer.strip().lower()
        chosen = next((c for name, c in record.options.items() if name.lower() == normalized), None)
        if chosen is None:
            if not record.reasked:
                record.reasked = True
                options = sorted(record.options)
                record.phase = "awaiting-user"
                ctx.send(
                    Performative.USER_QUERY,
                    [record.request.origin],
                    record.user,
                    record.request,
                    {"question": phrase_question(options), "options": options},
                )
                return
            self._abort(record, ctx)
            return
        if chosen.community != SELF:
            known = set(self.book.communities) | {c.community for c in record.claims}
            self.store.learn_mapping(self.name, record.user, record.text, chosen.community, known)
        if chosen.tentative:
            self._dispatch_claim(record, chosen, ctx)  # owner transfer; they resolve deeper
        elif chosen.claimant == self.name:
            self._run_hook(record, ctx)
        else:
            self._dispatch_claim(record, chosen, ctx)

    def _abort(self, record: RequestRecord, ctx: Context) -> None:
        """Second bad answer: give up on the record."""
        record.phase = "closed"
        if record.origin == EXTERNAL:
            channel = self.config.feedback_to or record.request.origin
            ctx.send(
                Performative.OUTPUT,
                [channel],
                record.user,
                record.request,
                {"payload": f"I cannot interpret this: {record.text}", "confidence": 0.0},
            )
        else:
            self._reply_to(ctx, record, Performative.NOT_MINE, {})

    def _dispatch_failed(self, record: RequestRecord, ctx: Context) -> None:
        """NOT_MINE after dispatch (dead or refusing delegate): unwind."""
        if record.origin == EXTERNAL:
            record.phase = "closed"
            channel = self.config.feedback_to or record.request.origin
            ctx.send(
                Performative.OUTPUT,
                [channel],
                record.user,
                record.request,
                {"payload": f"I cannot interpret this: {record.text}", "confidence": 0.0},
            )
        elif record.origin == "transferred":
            record.phase = "closed"
            self._reply_to(ctx, record, Performative.NOT_MINE, {})
        else:
            record.phase = "closed"
            log.info("%s: dispatched request %s failed downstream", self.name, record.request)

    # -- process unit and output -------------------------------------------------------

    def _dispatch_offer(self, record: RequestRecord, ctx: Context) -> None:
        offer = record.offer
        if offer is None or offer.community == SELF:
            self._run_hook(record, ctx)
            return
        member = self.book.choose_member(offer.community)
        if member is None:
            self._dispatch_failed(record, ctx)
            return
        record.confidence = offer.confidence
        self._transfer(record, offer.community, ctx, confidence=offer.confidence)

    def _run_hook(self, record: RequestRecord, ctx: Context) -> None:
        record.chosen_community = SELF
        record.chosen_member = self.name
        record.phase = "dispatched"
        hook = self.config.process_hook
        if hook is None:
            log.warning("%s: no process hook for owned request %s", self.name, record.request)
            return
        result = hook(ProcessRequest(record.text, record.pointer, record.user, record.request))
        if result is None:
            return
        if isinstance(result, str):
            result = ProcessResult(result)
        confidence = result.confidence if result.confidence is not None else record.confidence
        self.emit_output(record, result.payload, confidence, ctx)

    def emit_output(self, record: RequestRecord, payload: str, confidence: float, ctx: Context) -> None:
        recipients = []
        if self.config.output_to:
            recipients.append(self.config.output_to)
        if self.config.feedback_to and self.config.feedback_to not in recipients:
            recipients.append(self.config.feedback_to)
        if not recipients:
            recipients = [record.request.origin]
        ctx.send(
            Performative.OUTPUT,
            recipients,
            record.user,
            record.request,
            {"payload": payload, "confidence": confidence},
        )

    # -- rewards --------------------------------------------------------------------------

    def receive_reward(self, msg: Message, ctx: Context) -> None:
        record = self.records.get(msg.request)
        if record is None:
            log.warning("%s: reward for unknown request %s dropped", self.name, msg.request)
            return
        value = float(msg.content["value"])
        keep, forward = split_reward(value, self.config.reward_config.keep_share)
        self.store.apply_feedback_conflict(self.name, record.user, record.text, keep)
        if record.chosen_community and record.chosen_community != SELF:
            self.update_address_confidence(record.chosen_community, keep)
        self.applied_rewards.append((msg.request, keep))
        if record.requester != EXTERNAL:
            ctx.send(Performative.REWARD, [record.requester], record.user, record.request, {"value": forward})
        record.phase = "closed"

    def update_address_confidence(self, community: str, delta: float) -> None:
        if community not in self.book.communities:
            return
        self.book.confidence.update(community, delta)

    # -- replies -----------------------------------------------------------------------------

    def _reply_to(self, ctx: Context, record: RequestRecord, performative: Performative, content: dict) -> None:
        if record.requester == EXTERNAL:
            return
        ctx.send(performative, [record.requester], record.user, record.request, content)

    def _reply(self, ctx: Context, msg: Message, performative: Performative, content: dict) -> None:
        ctx.send(performative, [msg.sender], msg.user, msg.request, content)
