"""Session service: live demo sessions over HTTP + one bidirectional socket.

Each session owns a fresh topology and a per-user knowledge base. Clients
create a session over HTTP, then attach a WebSocket to send inputs and
receive frames. Frames wrap the core wire format in an envelope
`{"type": ..., "payload": ...}`:

server -> client:
    trace-event  payload = encoded message record (plus "step")
    output       payload = encoded OUTPUT record
    user-query   payload = encoded USER_QUERY record
    map-state    payload = {"center", "zoom", "places"}
    ack / error  payload = detail object

client -> server:
    say {text} | click {x, y} | answer {option} |
    feedback-remark {text} | pause {seconds}

The gateway adds no semantics: inputs go through the same funnel the
scripted harness uses, so a script driven here and there yields identical
traces.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from .learning import KbFormatError, PolicyStore
from .mapdemo import Demo, InputFunnel, build_demo_topology
from .messages import Performative, encode_message
from .runtime import TraceEvent

log = logging.getLogger(__name__)


def _record(event: TraceEvent) -> str:
    return encode_message(event.message).decode("utf-8").rstrip("\n")


@dataclass
class Session:
    session_id: str
    user: str
    demo: Demo
    funnel: InputFunnel
    subscribers: list[asyncio.Queue] = field(default_factory=list)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    pending_query: dict[str, Any] | None = None
    frames_seen: int = 0

    def map_state_frame(self) -> dict[str, Any]:
        state = self.demo.map_state()
        span = max(1, 32 // state.zoom)
        half = span // 2
        cx, cy = state.center
        visible = [
            {"name": p.name, "kind": p.kind, "position": list(p.position)}
            for p in self.demo.places
            if abs(p.position[0] - cx) <= half and abs(p.position[1] - cy) <= half
        ]
        return {
            "type": "map-state",
            "payload": {"center": [cx, cy], "zoom": state.zoom, "places": visible},
        }

    def apply_input(self, kind: str, payload: dict[str, Any]) -> list[dict[str, Any]]:
        """Inject one input, drain, and return the frames it produced."""
        runtime = self.demo.runtime
        mark = len(runtime.trace)
        if kind == "say":
            self.funnel.say(str(payload.get("text", "")))
        elif kind == "click":
            self.funnel.click(int(payload["x"]), int(payload["y"]))
        elif kind == "answer":
            if self.pending_query is None:
                raise PendingQueryError("no pending query to answer")
            self.pending_query = None
            self.funnel.answer(str(payload.get("option", "")))
        elif kind == "feedback-remark":
            self.funnel.remark(str(payload.get("text", "")))
        elif kind == "pause":
            self.funnel.advance(float(payload.get("seconds", 0.0)))
        else:
            raise ValueError(f"unknown input type {kind!r}")
        runtime.run_until_quiescent()
        frames: list[dict[str, Any]] = []
        for event in runtime.trace[mark:]:
            frames.append({"type": "trace-event", "step": event.step, "payload": _record(event)})
            if event.dead_letter:
                continue
            if event.message.performative is Performative.OUTPUT:
                frames.append({"type": "output", "payload": _record(event)})
            elif event.message.performative is Performative.USER_QUERY:
                frames.append({"type": "user-query", "payload": _record(event)})
                self.pending_query = {
                    "question": event.message.content.get("question"),
                    "options": event.message.content.get("options", []),
                }
        frames.append(self.map_state_frame())
        return frames

    async def broadcast(self, frames: list[dict[str, Any]]) -> None:
        for frame in frames:
            for queue in list(self.subscribers):
                await queue.put(frame)


class PendingQueryError(RuntimeError):
    pass


def create_app(kb_root: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="agentmesh gateway")
    sessions: dict[str, Session] = {}
    counter = {"n": 0}
    kb_dir = Path(kb_root) if kb_root else None

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    @app.post("/sessions")
    async def create_session(body: dict[str, Any]) -> dict[str, str]:
        user = str(body.get("user", "")).strip()
        if not user:
            raise HTTPException(status_code=422, detail="user required")
        store = PolicyStore()
        if kb_dir is not None:
            kb_file = kb_dir / f"{user}.kb"
            if kb_file.exists():
                store.load_kb(kb_file)
        demo = build_demo_topology(store=store)
        counter["n"] += 1
        session_id = f"s{counter['n']}"
        sessions[session_id] = Session(
            session_id=session_id, user=user, demo=demo, funnel=demo.funnel(user)
        )
        return {"session_id": session_id, "user": user}

    @app.post("/sessions/{session_id}/reset")
    async def reset_session(session_id: str, body: dict[str, Any]) -> dict[str, str]:
        session = get_session(session_id)
        scope = body.get("scope", "system")
        async with session.lock:
            if scope == "system":
                session.demo.store.reset("system")
            elif scope == "user":
                session.demo.store.reset("user", str(body.get("user", session.user)))
            else:
                raise HTTPException(status_code=422, detail=f"unknown scope {scope!r}")
        return {"status": "reset", "scope": scope}

    @app.get("/sessions/{session_id}/kb", response_class=PlainTextResponse)
    async def kb_export(session_id: str) -> str:
        return get_session(session_id).demo.store.dumps_kb()

    @app.put("/sessions/{session_id}/kb")
    async def kb_import(session_id: str, body: dict[str, Any]) -> dict[str, str]:
        session = get_session(session_id)
        try:
            session.demo.store.loads_kb(str(body.get("kb", "")))
        except KbFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"status": "imported"}

    @app.websocket("/sessions/{session_id}/ws")
    async def socket(websocket: WebSocket, session_id: str) -> None:
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue: asyncio.Queue = asyncio.Queue()
        session.subscribers.append(queue)
        await queue.put(session.map_state_frame())

        async def pump() -> None:
            while True:
                frame = await queue.get()
                await websocket.send_json(frame)

        pump_task = asyncio.create_task(pump())
        try:
            while True:
                incoming = await websocket.receive_json()
                kind = incoming.get("type", "")
                payload = incoming.get("payload", {})
                try:
                    async with session.lock:
                        frames = session.apply_input(kind, payload)
                except PendingQueryError as exc:
                    await queue.put({"type": "error", "payload": {"code": "conflict", "detail": str(exc)}})
                    continue
                except (ValueError, KeyError) as exc:
                    await queue.put({"type": "error", "payload": {"code": "bad-input", "detail": str(exc)}})
                    continue
                await session.broadcast(frames)
                await queue.put({"type": "ack", "payload": {"type": kind}})
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            if queue in session.subscribers:
                session.subscribers.remove(queue)

    return app


def main() -> None:  # pragma: no cover - manual entry point
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Serve the agentmesh gateway")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--kb-root", default=None)
    args = parser.parse_args()
    uvicorn.run(create_app(args.kb_root), host=args.host, port=args.port)


if __name__ == "__main__":  # pragma: no cover
    main()
