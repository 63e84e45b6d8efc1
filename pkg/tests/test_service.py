"""Operator service: snapshots, control intents, telemetry fanout."""

import json

import pytest
from fastapi.testclient import TestClient

from handtwin import actuation, kinematics, model, service
from handtwin.teleop import Mapping, frame_from_state

QUANTUM = 360.0 / 4096


@pytest.fixture()
def client(desc):
    app = service.create_app(desc)
    with TestClient(app) as c:
        yield c


def send_intent(ws, msg: dict) -> dict:
    """Send one intent and return its (non-telemetry) reply."""
    ws.send_text(json.dumps(msg))
    while True:
        reply = json.loads(ws.receive_text())
        if reply.get("type") != "telemetry":
            return reply


def next_telemetry(ws) -> dict:
    while True:
        msg = json.loads(ws.receive_text())
        if msg.get("type") == "telemetry":
            return msg


def wait_measured(ws, joint: str, value_deg: float, tol_deg: float,
                  frames: int = 300) -> dict:
    last = None
    for _ in range(frames):
        frame = next_telemetry(ws)
        last = frame["measured"][joint]
        if abs(last - value_deg) <= tol_deg:
            return frame
    raise AssertionError(f"{joint} never reached {value_deg}, last {last}")


# -- snapshots ---------------------------------------------------------------


def test_healthz(client) -> None:
    body = client.get("/healthz").json()
    assert body["status"] == "ok"
    assert body["time_s"] >= 0.0


def test_state_snapshot_shape(client, desc) -> None:
    snap = client.get("/state").json()
    assert set(snap["limits"]) == set(model.COMMANDED_VALUES)
    assert len(snap["limits"]) == 18
    for lo, hi in snap["limits"].values():
        assert lo < hi
    assert set(snap["targets"]) == set(model.COMMANDED_VALUES)
    assert set(snap["measured"]) == set(model.COMMANDED_VALUES)
    assert set(snap["skeleton"]["digits"]) == set(model.DIGITS)
    assert len(snap["skeleton"]["palm_outline"]) >= 3
    assert set(snap["tip_gaps_mm"]) == {"D2", "D3", "D4", "D5"}

    margins = snap["self_lock_margin_deg"]
    assert len(margins) == 15
    assert all(v > 0 for v in margins.values())
    cmc = desc.digits["D1"].joints[0]
    assert margins["d1.cmc"] == round(actuation.self_lock_margin_deg(
        cmc.worm.lead_mm, cmc.worm.pitch_diameter_mm, cmc.worm.friction), 3)
    mcp = desc.digits["D2"].joints[1]
    assert margins["d2.mcp"] == round(actuation.self_lock_margin_deg(
        mcp.screw.lead_mm, mcp.screw.mean_diameter_mm, mcp.screw.friction), 3)

    assert snap["settled"] is True
    assert snap["replay"] == {"trace": "", "frame": 0, "frames": 0,
                              "playing": False}


# -- slider intents ----------------------------------------------------------


def test_slider_ack_and_convergence(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "slider", "id": "s1",
                                 "joint": "d2.mcp", "value_deg": 45.0})
        assert reply == {"type": "ack", "intent": "slider", "id": "s1",
                         "joint": "d2.mcp", "applied_deg": 45.0,
                         "clamped": False}
        frame = wait_measured(ws, "d2.mcp", 45.0, QUANTUM + 1e-9)
        assert frame["targets"]["d2.mcp"] == 45.0


def test_slider_clamps_to_limits(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "slider", "joint": "d2.mcp",
                                 "value_deg": 500.0})
        assert reply["clamped"] is True
        assert reply["applied_deg"] == 103.13


def test_duplicate_intent_id_is_noop(client) -> None:
    with client.websocket_connect("/control") as ws:
        first = send_intent(ws, {"intent": "slider", "id": "dup-1",
                                 "joint": "d3.mcp", "value_deg": 30.0})
        assert first["applied_deg"] == 30.0
        # same id, different value: cached reply, no new command
        second = send_intent(ws, {"intent": "slider", "id": "dup-1",
                                  "joint": "d3.mcp", "value_deg": 80.0})
        assert second == first
    snap = client.get("/state").json()
    assert snap["targets"]["d3.mcp"] == 30.0


# -- error handling ----------------------------------------------------------


def test_malformed_message_keeps_connection(client) -> None:
    with client.websocket_connect("/control") as ws:
        ws.send_text("{not json")
        while True:
            reply = json.loads(ws.receive_text())
            if reply.get("type") != "telemetry":
                break
        assert reply["type"] == "error"
        assert "malformed message" in reply["error"]

        ws.send_text("[1, 2, 3]")
        while True:
            reply = json.loads(ws.receive_text())
            if reply.get("type") != "telemetry":
                break
        assert "JSON object" in reply["error"]

        ok = send_intent(ws, {"intent": "slider", "joint": "d2.pip",
                              "value_deg": 10.0})
        assert ok["type"] == "ack"


def test_unknown_intent_and_joint(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "dance", "id": "x1"})
        assert reply["type"] == "error"
        assert "unknown intent" in reply["error"]
        assert reply["id"] == "x1"

        reply = send_intent(ws, {"intent": "slider", "joint": "d9.mcp",
                                 "value_deg": 5.0})
        assert reply["type"] == "error"
        assert "unknown joint" in reply["error"]

        reply = send_intent(ws, {"intent": "slider", "joint": "d2.mcp",
                                 "value_deg": float("nan")})
        assert reply["type"] == "error"

        reply = send_intent(ws, {"intent": "slider", "id": 42,
                                 "joint": "d2.mcp", "value_deg": 5.0})
        assert reply["type"] == "error"
        assert "intent id" in reply["error"]


# -- drag intents ------------------------------------------------------------


def test_drag_reachable_point(client, desc) -> None:
    pose = desc.zero_state().with_values(
        {"d2.mcp": 40.0, "d2.pip": 30.0, "d2.dip": 20.0})
    tip = kinematics.fingertips(desc, pose)["D2"]
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "drag", "digit": "D2",
                                 "point_mm": [float(c) for c in tip]})
    assert reply["type"] == "ik"
    assert reply["reachable"] is True
    assert reply["residual_mm"] <= 0.5
    assert any(name.startswith("d2.") for name in reply["applied"])
    solved = model.HandState.from_dict(reply["state"])
    tip_after = kinematics.fingertips(desc, solved)["D2"]
    assert float(((tip_after - tip) ** 2).sum()) ** 0.5 <= 0.6


def test_drag_unreachable_point(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "drag", "digit": "D2",
                                 "point_mm": [500.0, 500.0, 500.0]})
        assert reply["reachable"] is False
        assert reply["residual_mm"] > 2.0
        assert reply["applied"] == []

        reply = send_intent(ws, {"intent": "drag", "digit": "D2",
                                 "point_mm": [1.0, 2.0]})
        assert reply["type"] == "error"


# -- wrist intents -----------------------------------------------------------


def test_wrist_clamping(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "wrist", "fe_deg": 500.0,
                                 "rud_deg": -500.0})
        assert reply["clamped"] is True
        assert reply["applied_deg"] == {"wrist.fe": 52.0, "wrist.rud": -18.0}

        reply = send_intent(ws, {"intent": "wrist", "fe_deg": 10.0,
                                 "rud_deg": "five"})
        assert reply["type"] == "error"


# -- frame intents -----------------------------------------------------------


def test_frame_intent_retargets(client, desc) -> None:
    pose = desc.zero_state().with_values({"d2.mcp": 20.0, "d3.pip": 30.0})
    record = frame_from_state(desc, pose, 0, Mapping())
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "frame", "record": record})
    assert reply["type"] == "retarget"
    assert reply["accepted"] is True
    assert reply["residual_mm"] <= 2.0
    solved = model.HandState.from_dict(reply["state"])
    tips_want = kinematics.fingertips(desc, pose)
    tips_got = kinematics.fingertips(desc, solved)
    for digit in model.DIGITS:
        gap = float(((tips_got[digit] - tips_want[digit]) ** 2).sum()) ** 0.5
        assert gap <= 2.0


def test_frame_intent_requires_record(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "frame", "record": "nope"})
        assert reply["type"] == "error"

        reply = send_intent(ws, {"intent": "frame",
                                 "record": {"t_ms": 0, "fingers": {}}})
        assert reply["type"] == "error"


# -- replay intents ----------------------------------------------------------


def test_replay_controls(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "replay", "action": "load",
                                 "trace": "sweep"})
        assert reply["trace"] == "sweep"
        assert reply["frames"] == 600
        assert reply["frame"] == 0
        assert reply["playing"] is False

        reply = send_intent(ws, {"intent": "replay", "action": "seek",
                                 "frame": 10})
        assert reply["frame"] == 10

        reply = send_intent(ws, {"intent": "replay", "action": "play"})
        assert reply["playing"] is True
        reply = send_intent(ws, {"intent": "replay", "action": "pause"})
        assert reply["playing"] is False
        assert reply["frame"] >= 10

        reply = send_intent(ws, {"intent": "replay", "action": "seek",
                                 "frame": 9000})
        assert reply["type"] == "error"

        reply = send_intent(ws, {"intent": "replay", "action": "load",
                                 "trace": "walk"})
        assert reply["type"] == "error"
        assert "unknown bundled trace" in reply["error"]

        reply = send_intent(ws, {"intent": "replay", "action": "rewind"})
        assert reply["type"] == "error"


def test_replay_play_requires_trace(client) -> None:
    with client.websocket_connect("/control") as ws:
        reply = send_intent(ws, {"intent": "replay", "action": "play"})
        assert reply["type"] == "error"
        assert "no trace loaded" in reply["error"]


# -- telemetry fanout --------------------------------------------------------


def test_two_clients_see_identical_telemetry(client) -> None:
    with client.websocket_connect("/control") as ws1, \
            client.websocket_connect("/control") as ws2:
        seen1 = {f["seq"]: f for f in (next_telemetry(ws1) for _ in range(6))}
        seen2 = {f["seq"]: f for f in (next_telemetry(ws2) for _ in range(6))}
    common = set(seen1) & set(seen2)
    assert common
    for seq in common:
        assert seen1[seq] == seen2[seq]


def test_telemetry_shape(client) -> None:
    with client.websocket_connect("/control") as ws:
        frame = next_telemetry(ws)
    assert set(frame) == {"type", "seq", "time_s", "targets", "measured",
                          "skeleton", "tip_gaps_mm", "settled", "replay"}
    assert set(frame["measured"]) == set(model.COMMANDED_VALUES)


def test_host_rejects_bad_rate(desc) -> None:
    with pytest.raises(ValueError):
        service.SimulatorHost(desc, telemetry_hz=0.0)
