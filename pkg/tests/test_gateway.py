import pytest
from fastapi.testclient import TestClient

from agentmesh.gateway import create_app
from agentmesh.mapdemo import build_demo_topology
from agentmesh.messages import decode_message


@pytest.fixture
def client(tmp_path):
    return TestClient(create_app(kb_root=tmp_path))


def create_session(client, user="u1"):
    response = client.post("/sessions", json={"user": user})
    assert response.status_code == 200
    return response.json()["session_id"]


def collect_until(ws, frame_type, limit=400):
    """Read frames until one of `frame_type` arrives; returns all read."""
    frames = []
    for _ in range(limit):
        frame = ws.receive_json()
        frames.append(frame)
        if frame["type"] == frame_type:
            return frames
    raise AssertionError(f"no {frame_type!r} frame within {limit} frames")


def say(ws, text):
    ws.send_json({"type": "say", "payload": {"text": text}})


def test_create_session_returns_usable_id(client):
    sid = create_session(client)
    assert client.get(f"/sessions/{sid}/kb").status_code == 200


def test_two_sessions_are_isolated(client):
    a = create_session(client, "u1")
    b = create_session(client, "u2")
    assert a != b
    with client.websocket_connect(f"/sessions/{a}/ws") as wa:
        wa.receive_json()  # initial map state
        say(wa, "map to the right")
        frames_a = collect_until(wa, "ack")
    with client.websocket_connect(f"/sessions/{b}/ws") as wb:
        first = wb.receive_json()
        assert first["type"] == "map-state"
        assert first["payload"]["center"] == [16, 16]  # b's map never moved
    moved = [f for f in frames_a if f["type"] == "map-state"][-1]
    assert moved["payload"]["center"] == [17, 16]


def test_unknown_session_is_404(client):
    assert client.post("/sessions/nope/reset", json={"scope": "system"}).status_code == 404
    assert client.get("/sessions/nope/kb").status_code == 404


def test_say_pushes_user_query_frame(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        frames = collect_until(ws, "ack")
    queries = [f for f in frames if f["type"] == "user-query"]
    assert len(queries) == 1
    record = decode_message(queries[0]["payload"] + "\n")
    assert record.content["question"] == "Do you mean magnification or shifting?"


def test_answer_applies_zoom_and_pushes_output(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        collect_until(ws, "ack")
        ws.send_json({"type": "answer", "payload": {"option": "Magnification"}})
        frames = collect_until(ws, "ack")
    outputs = [f for f in frames if f["type"] == "output"]
    assert any(decode_message(f["payload"] + "\n").content["payload"] == "zoom in" for f in outputs)
    states = [f for f in frames if f["type"] == "map-state"]
    assert states[-1]["payload"]["zoom"] == 2


def test_answer_without_pending_query_is_conflict(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        ws.send_json({"type": "answer", "payload": {"option": "Magnification"}})
        frame = ws.receive_json()
    assert frame["type"] == "error"
    assert frame["payload"]["code"] == "conflict"


def test_frames_arrive_in_trace_order(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "map to the right")
        frames = collect_until(ws, "ack")
    steps = [f["step"] for f in frames if f["type"] == "trace-event"]
    assert steps == sorted(steps)
    assert steps  # something was delivered


def test_two_subscribers_see_identical_frame_sequences(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as first, client.websocket_connect(
        f"/sessions/{sid}/ws"
    ) as second:
        first.receive_json()
        second.receive_json()
        say(first, "map to the right")
        frames_first = [f for f in collect_until(first, "map-state") if f["type"] == "trace-event"]
        frames_second = [f for f in collect_until(second, "map-state") if f["type"] == "trace-event"]
    assert frames_first == frames_second


def test_gateway_adds_no_semantics_versus_harness(client):
    """The same user actions yield byte-identical message records either way."""
    sid = create_session(client)
    gateway_records = []
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        gateway_records += collect_until(ws, "ack")
        ws.send_json({"type": "answer", "payload": {"option": "Magnification"}})
        gateway_records += collect_until(ws, "ack")
        ws.send_json({"type": "feedback-remark", "payload": {"text": "thanks"}})
        gateway_records += collect_until(ws, "ack")
    gateway_records = [f["payload"] for f in gateway_records if f["type"] == "trace-event"]

    demo = build_demo_topology()
    funnel = demo.funnel("u1")
    funnel.say("move it closer")
    demo.runtime.run_until_quiescent()
    funnel.answer("Magnification")
    demo.runtime.run_until_quiescent()
    funnel.remark("thanks")
    demo.runtime.run_until_quiescent()
    harness_records = [
        e.line().split("\t", 1)[1].rstrip("\n")
        for e in demo.runtime.trace[demo.setup_trace_length :]
    ]
    assert gateway_records == harness_records


def test_kb_export_import_round_trip(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        collect_until(ws, "ack")
        ws.send_json({"type": "answer", "payload": {"option": "Magnification"}})
        collect_until(ws, "ack")
    kb_text = client.get(f"/sessions/{sid}/kb").text
    assert "move" in kb_text

    other = create_session(client, "u1")
    response = client.put(f"/sessions/{other}/kb", json={"kb": kb_text})
    assert response.status_code == 200
    with client.websocket_connect(f"/sessions/{other}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        frames = collect_until(ws, "ack")
    assert not [f for f in frames if f["type"] == "user-query"]
    assert [f for f in frames if f["type"] == "map-state"][-1]["payload"]["zoom"] == 2


def test_kb_import_rejects_malformed(client):
    sid = create_session(client)
    response = client.put(f"/sessions/{sid}/kb", json={"kb": "not json\n"})
    assert response.status_code == 422


def test_reset_brings_the_question_back(client):
    sid = create_session(client)
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        collect_until(ws, "ack")
        ws.send_json({"type": "answer", "payload": {"option": "Magnification"}})
        collect_until(ws, "ack")
    assert client.post(f"/sessions/{sid}/reset", json={"scope": "system"}).status_code == 200
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        frames = collect_until(ws, "ack")
    assert [f for f in frames if f["type"] == "user-query"]


def test_session_with_persisted_kb_loads_prior_routing(tmp_path):
    client = TestClient(create_app(kb_root=tmp_path))
    sid = create_session(client, "veteran")
    with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        collect_until(ws, "ack")
        ws.send_json({"type": "answer", "payload": {"option": "Magnification"}})
        collect_until(ws, "ack")
    kb_text = client.get(f"/sessions/{sid}/kb").text
    (tmp_path / "veteran.kb").write_text(kb_text, encoding="utf-8")

    fresh = create_session(client, "veteran")
    with client.websocket_connect(f"/sessions/{fresh}/ws") as ws:
        ws.receive_json()
        say(ws, "move it closer")
        frames = collect_until(ws, "ack")
    assert not [f for f in frames if f["type"] == "user-query"]


def test_create_session_requires_user(client):
    assert client.post("/sessions", json={}).status_code == 422
