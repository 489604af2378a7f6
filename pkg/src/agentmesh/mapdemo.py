"""The multimodal map application: topology, black boxes, and fixtures.

A fixed cast of agents handles view-port commands (magnification, shifting)
and place information (hotels, restaurants, general information) over a
small grid world. Text and pointer events funnel through input agents; a
feedback agent turns observed user behavior into rewards.

Keyword tables and the places dataset are data files so tests can vary them.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .learning import GLOBAL_USER, PolicyEntry, PolicyStore
from .messages import Message, Performative, RequestId, RequestIdCounter, SYSTEM_REQUEST, SYSTEM_USER
from .rewards import RewardConfig, UserEvent, interpret_feedback
from .runtime import AgentSpec, Context, Runtime
from .whitebox import ProcessRequest, ProcessResult, WhiteBoxAgent, WhiteBoxConfig

log = logging.getLogger(__name__)

WORLD_WIDTH = 32
WORLD_HEIGHT = 32
MIN_ZOOM = 1
MAX_ZOOM = 8

#: Tokens that point at something on the map; a request ending in one waits
#: briefly for a pointer event before it is considered complete.
DEICTIC_TOKENS = frozenset({"this", "here", "there", "that"})

SENTINEL_PUNCTUATION = (".", "!", "?")


# -- world model ---------------------------------------------------------------


@dataclass(frozen=True)
class MapState:
    center: tuple[int, int] = (16, 16)
    zoom: int = 1

    def __post_init__(self):
        x, y = self.center
        if not (0 <= x < WORLD_WIDTH and 0 <= y < WORLD_HEIGHT):
            raise ValueError(f"center {self.center} outside world bounds")
        if not MIN_ZOOM <= self.zoom <= MAX_ZOOM:
            raise ValueError(f"zoom {self.zoom} outside [{MIN_ZOOM}, {MAX_ZOOM}]")


_SHIFT_STEPS = {"right": (1, 0), "left": (-1, 0), "up": (0, -1), "down": (0, 1)}


def apply_viewport_command(state: MapState, command: str) -> MapState:
    """Apply "zoom in", "zoom out", or "shift <dir>"; everything clamps."""
    parts = command.strip().lower().split()
    if parts[:2] == ["zoom", "in"]:
        return replace(state, zoom=min(MAX_ZOOM, state.zoom + 1))
    if parts[:2] == ["zoom", "out"]:
        return replace(state, zoom=max(MIN_ZOOM, state.zoom - 1))
    if parts and parts[0] == "shift" and len(parts) > 1 and parts[1] in _SHIFT_STEPS:
        dx, dy = _SHIFT_STEPS[parts[1]]
        x = min(WORLD_WIDTH - 1, max(0, state.center[0] + dx))
        y = min(WORLD_HEIGHT - 1, max(0, state.center[1] + dy))
        return replace(state, center=(x, y))
    log.warning("unrecognized viewport command %r", command)
    return state


@dataclass(frozen=True)
class Place:
    name: str
    kind: str  # "hotel" | "restaurant" | "generic"
    position: tuple[int, int]
    blurb: str

    def __post_init__(self):
        x, y = self.position
        if not (0 <= x < WORLD_WIDTH and 0 <= y < WORLD_HEIGHT):
            raise ValueError(f"{self.name}: position {self.position} outside world bounds")


def load_places(path: str | Path | None = None) -> list[Place]:
    if path is None:
        text = resources.files("agentmesh.data").joinpath("places.jsonl").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    places = []
    for line in text.splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        places.append(Place(raw["name"], raw["kind"], tuple(raw["position"]), raw["blurb"]))
    return places


NO_INFORMATION = "no information found"


def info_query(
    text: str,
    pointer: tuple[int, int] | None,
    places: list[Place],
    kinds: set[str] | None = None,
    radius: float = 2.0,
) -> str:
    """Answer a place-information request.

    A pointer wins: the nearest matching place within `radius` cells. Without
    one, a by-name mention (all name tokens present) answers; otherwise there
    is nothing to say.
    """
    candidates = [p for p in places if kinds is None or p.kind in kinds]
    if pointer is not None:
        best = None
        best_d = math.inf
        for p in candidates:
            d = math.dist(pointer, p.position)
            if d <= radius and d < best_d:
                best, best_d = p, d
        return best.blurb if best else NO_INFORMATION
    tokens = set(text.lower().split())
    for p in candidates:
        name_tokens = set(p.name.lower().split())
        if name_tokens <= tokens:
            return p.blurb
    return NO_INFORMATION


# -- keyword tables -------------------------------------------------------------


def keyword_tables(path: str | Path | None = None) -> dict[str, list[PolicyEntry]]:
    """Preset policy entries per agent, loaded from the keyword data file."""
    if path is None:
        text = resources.files("agentmesh.data").joinpath("presets.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    raw = json.loads(text)
    tables: dict[str, list[PolicyEntry]] = {}
    for agent, rules in raw.items():
        tables[agent] = [
            PolicyEntry(pattern=(keyword,), target=target, provenance="preset", user=GLOBAL_USER)
            for keyword, target in rules.items()
        ]
    return tables


# -- input handling ---------------------------------------------------------------


@dataclass(frozen=True)
class InputEvent:
    kind: str  # "text" | "pointer"
    at: float
    user: str
    text: str = ""
    point: tuple[int, int] | None = None


@dataclass(frozen=True)
class UnifiedRequest:
    text: str
    pointer: tuple[int, int] | None
    user: str
    request: RequestId | None = None


def unify_inputs(
    text_event: InputEvent | None,
    pointer_event: InputEvent | None,
    window: float = 3.0,
) -> list[UnifiedRequest]:
    """Pair a text event with a pointer event when they fall in one window."""
    if text_event is not None and pointer_event is not None:
        if abs(pointer_event.at - text_event.at) <= window:
            return [UnifiedRequest(text_event.text, pointer_event.point, text_event.user)]
        return [
            UnifiedRequest(text_event.text, None, text_event.user),
            UnifiedRequest("", pointer_event.point, pointer_event.user),
        ]
    if text_event is not None:
        return [UnifiedRequest(text_event.text, None, text_event.user)]
    if pointer_event is not None:
        return [UnifiedRequest("", pointer_event.point, pointer_event.user)]
    return []


def _holds_for_pointer(text: str) -> bool:
    stripped = text.strip()
    if stripped.endswith(SENTINEL_PUNCTUATION):
        return False
    tokens = stripped.lower().split()
    return bool(tokens) and bool(DEICTIC_TOKENS & set(tokens))


class InputFunnel:
    """Driver-side front end: unifies events and injects them as requests.

    Time is virtual; only explicit pauses advance it. Text that points at
    something ("information on this") is held up to `window` seconds for a
    pointer click; anything else closes the request stream immediately.
    """

    def __init__(
        self,
        runtime: Runtime,
        user: str,
        text_agent: str = "text-input",
        pointer_agent: str = "pointer-input",
        feedback_agent: str | None = "feedback",
        window: float = 3.0,
    ):
        self.runtime = runtime
        self.user = user
        self.text_agent = text_agent
        self.pointer_agent = pointer_agent
        self.feedback_agent = feedback_agent
        self.window = window
        self.clock = 0.0
        self._pending: InputEvent | None = None
        self._last_text: str | None = None
        self._last_request: RequestId | None = None

    def _inject_request(self, req: UnifiedRequest) -> RequestId | None:
        agent = self.text_agent if req.text else self.pointer_agent
        payload: dict[str, Any] = {"text": req.text, "user": req.user}
        if req.pointer is not None:
            payload["pointer"] = list(req.pointer)
        rid = self.runtime.inject(agent, payload)
        if req.text:
            if self._last_text is not None and req.text.strip().lower() == self._last_text:
                self._notify_feedback({"kind": "repeat-of-command", "request": self._last_request})
            self._last_text = req.text.strip().lower()
            self._last_request = rid
        return rid

    def _notify_feedback(self, payload: dict[str, Any]) -> None:
        if self.feedback_agent and self.runtime.is_live(self.feedback_agent):
            payload.setdefault("user", self.user)
            self.runtime.inject(self.feedback_agent, payload)

    def flush(self) -> None:
        if self._pending is not None:
            event, self._pending = self._pending, None
            for req in unify_inputs(event, None, self.window):
                self._inject_request(req)

    def say(self, text: str) -> None:
        self.flush()
        event = InputEvent("text", self.clock, self.user, text=text)
        if _holds_for_pointer(text):
            self._pending = event
        else:
            for req in unify_inputs(event, None, self.window):
                self._inject_request(req)

    def click(self, x: int, y: int) -> None:
        pointer = InputEvent("pointer", self.clock, self.user, point=(x, y))
        if self._pending is not None:
            text_event, self._pending = self._pending, None
            for req in unify_inputs(text_event, pointer, self.window):
                self._inject_request(req)
        else:
            for req in unify_inputs(None, pointer, self.window):
                self._inject_request(req)

    def advance(self, seconds: float) -> None:
        self.clock += seconds
        if self._pending is not None and self.clock - self._pending.at > self.window:
            self.flush()
        self._notify_feedback({"kind": "pause", "seconds": seconds})

    def answer(self, option: str) -> None:
        self.flush()
        self.runtime.inject(self.text_agent, {"answer": option, "user": self.user})

    def remark(self, text: str) -> None:
        self.flush()
        self._notify_feedback({"kind": "remark", "text": text})


# -- special-purpose agents ----------------------------------------------------------


class InputAgent:
    """Forwards unified requests to the regulator; bridges user questions back."""

    def __init__(self, name: str, regulator: str = "input-regulator"):
        self.name = name
        self.regulator = regulator
        self._counter = RequestIdCounter(name)
        self.pending_queries: dict[RequestId, str] = {}

    def on_inject(self, payload: dict[str, Any], ctx: Context) -> RequestId | None:
        if "answer" in payload:
            if not self.pending_queries:
                log.warning("%s: answer with no pending query", self.name)
                return None
            rid = max(self.pending_queries)
            asker = self.pending_queries.pop(rid)
            ctx.send(Performative.USER_ANSWER, [asker], payload.get("user", "anonymous"), rid,
                     {"option": payload["answer"]})
            return rid
        rid = self._counter.next()
        content: dict[str, Any] = {"text": payload.get("text", "")}
        if payload.get("pointer"):
            content["pointer"] = list(payload["pointer"])
        ctx.send(Performative.IS_THIS_YOURS, [self.regulator], payload.get("user", "anonymous"), rid, content)
        return rid

    def on_message(self, msg: Message, ctx: Context) -> None:
        if msg.performative is Performative.USER_QUERY:
            self.pending_queries[msg.request] = msg.sender
        elif msg.performative is Performative.REGISTER:
            pass
        else:
            log.debug("%s: ignoring %s", self.name, msg.performative.value)


class FeedbackAgent:
    """Watches outputs and turns observed user behavior into rewards."""

    def __init__(self, name: str = "feedback", config: RewardConfig | None = None):
        self.name = name
        self.config = config or RewardConfig()
        self.executors: dict[RequestId, str] = {}
        self.last_output: RequestId | None = None
        self.sent: list[tuple[RequestId, float]] = []

    def on_inject(self, payload: dict[str, Any], ctx: Context) -> None:
        request = payload.get("request")
        if request is None and payload.get("kind") != "repeat-of-command":
            request = self.last_output
        event = UserEvent(
            kind=payload.get("kind", "other"),
            text=payload.get("text", ""),
            seconds=float(payload.get("seconds", 0.0)),
            request=request,
            user=payload.get("user", "anonymous"),
        )
        reward = interpret_feedback(event, self.config)
        if reward is None:
            return
        executor = self.executors.get(reward.request)
        if executor is None:
            log.info("%s: no executor recorded for %s; reward dropped", self.name, reward.request)
            return
        self.sent.append((reward.request, reward.value))
        ctx.send(Performative.REWARD, [executor], reward.user, reward.request, {"value": reward.value})

    def on_message(self, msg: Message, ctx: Context) -> None:
        if msg.performative is Performative.OUTPUT:
            self.executors[msg.request] = msg.sender
            self.last_output = msg.request


class ViewportOutputAgent:
    """Owns the map state; applies the best-confidence command per request."""

    def __init__(self, name: str = "view-port-output"):
        self.name = name
        self.state = MapState()
        self.applied: dict[RequestId, float] = {}

    def on_message(self, msg: Message, ctx: Context) -> None:
        if msg.performative is not Performative.OUTPUT:
            return
        confidence = float(msg.content.get("confidence", 1.0))
        previous = self.applied.get(msg.request)
        if previous is not None and confidence <= previous:
            return
        self.applied[msg.request] = confidence
        self.state = apply_viewport_command(self.state, str(msg.content.get("payload", "")))


class InformationOutputAgent:
    """Collects information answers; the highest-confidence one wins per request."""

    def __init__(self, name: str = "information-output"):
        self.name = name
        self.answers: dict[RequestId, tuple[str, float]] = {}
        self.last_answer: str = ""

    def on_message(self, msg: Message, ctx: Context) -> None:
        if msg.performative is not Performative.OUTPUT:
            return
        confidence = float(msg.content.get("confidence", 1.0))
        payload = str(msg.content.get("payload", ""))
        previous = self.answers.get(msg.request)
        if previous is not None and confidence <= previous[1]:
            return
        self.answers[msg.request] = (payload, confidence)
        self.last_answer = payload


# -- process hooks ----------------------------------------------------------------------


def magnification_hook(req: ProcessRequest) -> ProcessResult:
    command = "zoom out" if "out" in req.text.lower().split() else "zoom in"
    return ProcessResult(command)


def shifting_hook(req: ProcessRequest) -> ProcessResult:
    tokens = req.text.lower().split()
    direction = next((d for d in ("right", "left", "up", "down") if d in tokens), "right")
    return ProcessResult(f"shift {direction}")


def make_info_hook(places: list[Place], kinds: set[str] | None):
    def hook(req: ProcessRequest) -> ProcessResult:
        return ProcessResult(info_query(req.text, req.pointer, places, kinds))

    return hook


# -- topology ---------------------------------------------------------------------------


#: (member, community it advertises, parent) for every routing edge.
TOPOLOGY_EDGES: list[tuple[str, str, str]] = [
    ("information", "information", "input-regulator"),
    ("map-view-port", "map-view-port", "input-regulator"),
    ("locations", "locations", "information"),
    ("general-information", "general-information", "information"),
    ("hotels", "hotels", "locations"),
    ("restaurants", "restaurants", "locations"),
    ("magnification", "magnification", "map-view-port"),
    ("shifting", "shifting", "map-view-port"),
]

#: Fixed per-agent priorities; the locations subtree outranks view-port leaves.
PRIORITIES: dict[str, int] = {
    "input-regulator": 1,
    "map-view-port": 1,
    "information": 1,
    "locations": 2,
    "hotels": 1,
    "restaurants": 1,
    "general-information": 1,
    "magnification": 1,
    "shifting": 1,
}

_REGISTER_LINKS: list[tuple[str, str]] = [
    ("text-input", "input-regulator"),
    ("pointer-input", "input-regulator"),
    ("magnification", "view-port-output"),
    ("shifting", "view-port-output"),
    ("hotels", "information-output"),
    ("restaurants", "information-output"),
    ("general-information", "information-output"),
    ("input-regulator", "feedback"),
    ("magnification", "feedback"),
    ("shifting", "feedback"),
    ("hotels", "feedback"),
    ("restaurants", "feedback"),
    ("general-information", "feedback"),
]


@dataclass
class Demo:
    """A built demo topology plus handles the drivers need."""

    runtime: Runtime
    store: PolicyStore
    places: list[Place]
    reward_config: RewardConfig
    setup_trace_length: int = 0

    def funnel(self, user: str, window: float = 3.0) -> InputFunnel:
        return InputFunnel(self.runtime, user, window=window)

    def map_state(self) -> MapState:
        return self.runtime.behavior("view-port-output").state

    def info_answer(self) -> str:
        return self.runtime.behavior("information-output").last_answer


def build_demo_topology(
    store: PolicyStore | None = None,
    seed: int | None = None,
    reward_config: RewardConfig | None = None,
    presets_path: str | Path | None = None,
    places_path: str | Path | None = None,
) -> Demo:
    """Spawn the full cast, run the REGISTER/ADVERTISE handshakes, and drain."""
    store = store if store is not None else PolicyStore()
    reward_config = reward_config or RewardConfig()
    runtime = Runtime(seed=seed)
    tables = keyword_tables(presets_path)
    places = load_places(places_path)

    def whitebox(name: str, **kwargs) -> WhiteBoxAgent:
        config = WhiteBoxConfig(
            name=name,
            store=store,
            priority=PRIORITIES.get(name, 1),
            presets=tables.get(name, []),
            feedback_to="feedback",
            reward_config=reward_config,
            **kwargs,
        )
        return WhiteBoxAgent(config)

    agents: dict[str, Any] = {
        "text-input": InputAgent("text-input"),
        "pointer-input": InputAgent("pointer-input"),
        "input-regulator": whitebox("input-regulator", input_sources={"text-input", "pointer-input"}),
        "map-view-port": whitebox("map-view-port"),
        "magnification": whitebox("magnification", process_hook=magnification_hook, output_to="view-port-output"),
        "shifting": whitebox("shifting", process_hook=shifting_hook, output_to="view-port-output"),
        "information": whitebox("information"),
        "locations": whitebox("locations"),
        "hotels": whitebox(
            "hotels", process_hook=make_info_hook(places, {"hotel"}), output_to="information-output"
        ),
        "restaurants": whitebox(
            "restaurants", process_hook=make_info_hook(places, {"restaurant"}), output_to="information-output"
        ),
        "general-information": whitebox(
            "general-information", process_hook=make_info_hook(places, None), output_to="information-output"
        ),
        "view-port-output": ViewportOutputAgent(),
        "information-output": InformationOutputAgent(),
        "feedback": FeedbackAgent(config=reward_config),
    }
    for name, behavior in agents.items():
        runtime.spawn_agent(AgentSpec(name, behavior, priority=PRIORITIES.get(name, 0)))

    for initiator, target in _REGISTER_LINKS:
        behavior = agents[initiator]
        if isinstance(behavior, WhiteBoxAgent):
            behavior.register_with(runtime.context(initiator), target)
        else:
            runtime.context(initiator).send(
                Performative.REGISTER, [target], SYSTEM_USER, SYSTEM_REQUEST, {}
            )
    for member, community, parent in TOPOLOGY_EDGES:
        agent = agents[member]
        agent.register_with(runtime.context(member), parent)
        agent.advertise(runtime.context(member), community, parent)
    runtime.run_until_quiescent()
    return Demo(
        runtime=runtime,
        store=store,
        places=places,
        reward_config=reward_config,
        setup_trace_length=len(runtime.trace),
    )
