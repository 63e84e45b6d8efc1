"""Simulator service: state snapshots, control socket and telemetry.

One simulator instance runs behind the app.  All mutations (slider
moves, tip drags, wrist pad, live retarget frames, replay control) are
serialized through a single lock, so clients interleave but never race
the tick task.  Telemetry is published at a fixed rate, decimated from
the bus tick rate, and every connected client receives the identical
sequence.  Intents carry client-chosen ids; re-delivery of an already
applied id returns the cached reply without applying anything again.
"""

from __future__ import annotations

import asyncio
import json
import math
from collections import OrderedDict
from contextlib import asynccontextmanager
from typing import Any

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import actuation, bus, kinematics, model, teleop

TELEMETRY_HZ = 30.0
SEEN_INTENT_CAP = 1024


def _round3(value: float) -> float:
    return round(float(value), 3)


def _state_dict(state: model.HandState) -> dict[str, float]:
    return {k: _round3(v) for k, v in state.to_dict().items()}


def _skeleton_dict(desc: model.HandDescription,
                   state: model.HandState) -> dict:
    skel = kinematics.hand_skeleton(desc, state)
    return {
        "digits": {d: [[_round3(c) for c in p] for p in pts]
                   for d, pts in skel["digits"].items()},
        "palm_outline": [[_round3(c) for c in p]
                         for p in skel["palm_outline"]],
    }


def _self_lock_margins(desc: model.HandDescription) -> dict[str, float]:
    """Static locking margin (friction angle minus lead angle) per channel."""
    out: dict[str, float] = {}
    for digit in desc.digits.values():
        prefix = digit.name.lower()
        for joint in digit.joints:
            if joint.kind == "leadscrew":
                margin = actuation.self_lock_margin_deg(
                    joint.screw.lead_mm, joint.screw.mean_diameter_mm,
                    joint.screw.friction)
            else:
                margin = actuation.self_lock_margin_deg(
                    joint.worm.lead_mm, joint.worm.pitch_diameter_mm,
                    joint.worm.friction)
            out[f"{prefix}.{joint.name}"] = _round3(margin)
    return out


class SimulatorHost:
    """Owns the bus network, the replay player and the broadcast fanout."""

    def __init__(self, desc: model.HandDescription,
                 telemetry_hz: float = TELEMETRY_HZ) -> None:
        if telemetry_hz <= 0:
            raise ValueError("telemetry rate must be positive")
        self.desc = desc
        self.telemetry_hz = telemetry_hz
        self.net = bus.BusNetwork(desc)
        self.lock = asyncio.Lock()
        self.clients: list[WebSocket] = []
        self.seq = 0
        self.quantum_deg = 360.0 / desc.bus.encoder_counts_per_rev
        self.self_lock = _self_lock_margins(desc)
        self.seen: OrderedDict[str, dict] = OrderedDict()
        self.mapping = teleop.Mapping()
        self.ik_state = desc.zero_state()
        self.replay_trace: list[teleop.RetargetFrame] = []
        self.replay_name = ""
        self.replay_index = 0
        self.replay_playing = False
        self._ticker: asyncio.Task | None = None

    # -- lifecycle -------------------------------------------------------

    async def start(self) -> None:
        self._ticker = asyncio.create_task(self._tick_loop())

    async def stop(self) -> None:
        if self._ticker is not None:
            self._ticker.cancel()
            try:
                await self._ticker
            except asyncio.CancelledError:
                pass
        self.net.close()

    # -- tick / telemetry ------------------------------------------------

    def _ticks_for_frame(self, frame: int) -> int:
        ratio = self.net.tick_hz / self.telemetry_hz
        return round(frame * ratio) - round((frame - 1) * ratio)

    async def _tick_loop(self) -> None:
        period = 1.0 / self.telemetry_hz
        frame = 0
        while True:
            await asyncio.sleep(period)
            frame += 1
            async with self.lock:
                self._advance_replay()
                for _ in range(self._ticks_for_frame(frame)):
                    self.net.tick()
                payload = self._telemetry()
            await self._broadcast(payload)

    def _advance_replay(self) -> None:
        if not self.replay_playing or not self.replay_trace:
            return
        # one trace frame per telemetry frame; traces are 60 Hz, so
        # playback runs at half speed, which keeps every frame visible
        frame = self.replay_trace[self.replay_index]
        self._apply_retarget(frame)
        self.replay_index += 1
        if self.replay_index >= len(self.replay_trace):
            self.replay_index = len(self.replay_trace) - 1
            self.replay_playing = False

    def _apply_retarget(self, frame: teleop.RetargetFrame) -> teleop.FrameResult:
        result = teleop.retarget_frame(frame, self.mapping, self.desc,
                                       self.ik_state)
        if result.accepted:
            self._apply_state(result.state)
            self.ik_state = result.state
        return result

    def _apply_state(self, state: model.HandState) -> list[str]:
        """Issue SetTargets for every joint that moved at least a quantum."""
        targets = self.net.targets()
        changed = []
        for name, value in state.to_dict().items():
            if abs(value - targets.get(name)) > self.quantum_deg:
                self.net.set_target(name, value)
                changed.append(name)
        return changed

    def _tip_gaps(self, state: model.HandState) -> dict[str, float]:
        tips = kinematics.fingertips(self.desc, state)
        return {d: _round3(np.linalg.norm(tips["D1"] - tips[d]))
                for d in ("D2", "D3", "D4", "D5")}

    def _telemetry(self) -> dict:
        self.seq += 1
        measured = self.net.snapshot()
        return {
            "type": "telemetry",
            "seq": self.seq,
            "time_s": _round3(self.net.time_s),
            "targets": _state_dict(self.net.targets()),
            "measured": _state_dict(measured),
            "skeleton": _skeleton_dict(self.desc, measured),
            "tip_gaps_mm": self._tip_gaps(measured),
            "settled": self.net.settled(),
            "replay": self.replay_status(),
        }

    def replay_status(self) -> dict:
        return {
            "trace": self.replay_name,
            "frame": self.replay_index,
            "frames": len(self.replay_trace),
            "playing": self.replay_playing,
        }

    async def _broadcast(self, payload: dict) -> None:
        if not self.clients:
            return
        text = json.dumps(payload, sort_keys=True)
        dead = []
        for ws in list(self.clients):
            try:
                await ws.send_text(text)
            except Exception:
                dead.append(ws)
        for ws in dead:
            if ws in self.clients:
                self.clients.remove(ws)

    # -- snapshots ---------------------------------------------------------

    def state_snapshot(self) -> dict:
        measured = self.net.snapshot()
        limits = {name: [lim.min_deg, lim.max_deg]
                  for name, lim in self.desc.commanded_limits().items()}
        return {
            "seq": self.seq,
            "time_s": _round3(self.net.time_s),
            "targets": _state_dict(self.net.targets()),
            "measured": _state_dict(measured),
            "limits": limits,
            "skeleton": _skeleton_dict(self.desc, measured),
            "tip_gaps_mm": self._tip_gaps(measured),
            "self_lock_margin_deg": self.self_lock,
            "settled": self.net.settled(),
            "replay": self.replay_status(),
        }

    # -- intents -----------------------------------------------------------

    def _remember(self, intent_id: str | None, reply: dict) -> dict:
        if intent_id is not None:
            self.seen[intent_id] = reply
            while len(self.seen) > SEEN_INTENT_CAP:
                self.seen.popitem(last=False)
        return reply

    def handle_intent(self, msg: dict) -> dict:
        intent = msg.get("intent")
        intent_id = msg.get("id")
        if intent_id is not None and not isinstance(intent_id, str):
            return _error_reply(None, "intent id must be a string")
        if intent_id is not None and intent_id in self.seen:
            return self.seen[intent_id]   # duplicate delivery: no-op

        handlers = {
            "slider": self._intent_slider,
            "drag": self._intent_drag,
            "wrist": self._intent_wrist,
            "frame": self._intent_frame,
            "replay": self._intent_replay,
        }
        handler = handlers.get(intent)
        if handler is None:
            return _error_reply(intent_id, f"unknown intent {intent!r}")
        try:
            reply = handler(msg)
        except (model.ConfigError, kinematics.KinematicsError,
                teleop.TraceError, bus.BusError, ValueError, KeyError,
                TypeError) as exc:
            return _error_reply(intent_id, str(exc))
        reply["id"] = intent_id
        return self._remember(intent_id, reply)

    def _intent_slider(self, msg: dict) -> dict:
        joint = msg.get("joint")
        value = msg.get("value_deg")
        if joint not in model.COMMANDED_VALUES:
            raise ValueError(f"unknown joint {joint!r}")
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValueError("value_deg must be a finite number")
        ack = self.net.set_target(joint, float(value))
        self.ik_state = self.ik_state.with_value(joint, ack.value_deg)
        return {"type": "ack", "intent": "slider", "joint": joint,
                "applied_deg": _round3(ack.value_deg),
                "clamped": ack.clamped}

    def _intent_drag(self, msg: dict) -> dict:
        digit = msg.get("digit")
        point = msg.get("point_mm")
        if digit not in model.DIGITS:
            raise ValueError(f"unknown digit {digit!r}")
        if (not isinstance(point, list) or len(point) != 3
                or not all(isinstance(v, (int, float)) and math.isfinite(v)
                           for v in point)):
            raise ValueError("point_mm must be a finite [x, y, z]")
        target = kinematics.PointTarget(digit=digit,
                                        point_mm=np.array(point, dtype=float))
        sol = kinematics.solve_ik(self.desc, [target], start=self.ik_state,
                                  use_wrist=False,
                                  frozen={"wrist.fe", "wrist.rud"})
        reachable = sol.converged
        changed: list[str] = []
        if reachable:
            self.ik_state = sol.state
            changed = self._apply_state(sol.state)
        return {"type": "ik", "intent": "drag", "digit": digit,
                "reachable": reachable,
                "residual_mm": _round3(sol.error_mm),
                "iterations": sol.iterations,
                "applied": changed,
                "state": _state_dict(sol.state)}

    def _intent_wrist(self, msg: dict) -> dict:
        fe = msg.get("fe_deg")
        rud = msg.get("rud_deg")
        for label, value in (("fe_deg", fe), ("rud_deg", rud)):
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{label} must be a finite number")
        ack_fe = self.net.set_target("wrist.fe", float(fe))
        ack_rud = self.net.set_target("wrist.rud", float(rud))
        self.ik_state = self.ik_state.with_values(
            {"wrist.fe": ack_fe.value_deg, "wrist.rud": ack_rud.value_deg})
        return {"type": "ack", "intent": "wrist",
                "applied_deg": {"wrist.fe": _round3(ack_fe.value_deg),
                                "wrist.rud": _round3(ack_rud.value_deg)},
                "clamped": ack_fe.clamped or ack_rud.clamped}

    def _intent_frame(self, msg: dict) -> dict:
        record = msg.get("record")
        if not isinstance(record, dict):
            raise ValueError("record must be a trace record object")
        frames = teleop.parse_trace([json.dumps(record)])
        result = self._apply_retarget(frames[0])
        return {"type": "retarget", "intent": "frame",
                "accepted": result.accepted,
                "residual_mm": _round3(result.residual_mm),
                "state": _state_dict(result.state)}

    def _intent_replay(self, msg: dict) -> dict:
        action = msg.get("action")
        if action == "load":
            name = msg.get("trace")
            if name not in ("sweep", "opposition"):
                raise ValueError(f"unknown bundled trace {name!r}")
            from importlib import resources

            text = resources.files("handtwin.data") \
                .joinpath(f"{name}_trace.jsonl").read_text()
            self.replay_trace = teleop.parse_trace(text)
            self.replay_name = name
            self.replay_index = 0
            self.replay_playing = False
        elif action == "play":
            if not self.replay_trace:
                raise ValueError("no trace loaded")
            self.replay_playing = True
        elif action == "pause":
            self.replay_playing = False
        elif action == "seek":
            frame = msg.get("frame")
            if not isinstance(frame, int) or not self.replay_trace \
                    or not (0 <= frame < len(self.replay_trace)):
                raise ValueError("seek frame out of range")
            self.replay_index = frame
            self._apply_retarget(self.replay_trace[frame])
        else:
            raise ValueError(f"unknown replay action {action!r}")
        return {"type": "ack", "intent": "replay"} | self.replay_status()


def _error_reply(intent_id: Any, message: str) -> dict:
    return {"type": "error", "id": intent_id, "error": message}


def create_app(desc: model.HandDescription | None = None,
               telemetry_hz: float = TELEMETRY_HZ) -> FastAPI:
    if desc is None:
        desc = model.default_hand()
    host = SimulatorHost(desc, telemetry_hz=telemetry_hz)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        await host.start()
        yield
        await host.stop()

    app = FastAPI(title="handtwin", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    app.state.host = host

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"status": "ok", "time_s": _round3(host.net.time_s)}

    @app.get("/state")
    async def state() -> dict:
        async with host.lock:
            return host.state_snapshot()

    @app.websocket("/control")
    async def control(ws: WebSocket) -> None:
        await ws.accept()
        host.clients.append(ws)
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("message must be a JSON object")
                except ValueError as exc:
                    await ws.send_text(json.dumps(
                        _error_reply(None, f"malformed message: {exc}"),
                        sort_keys=True))
                    continue
                async with host.lock:
                    reply = host.handle_intent(msg)
                await ws.send_text(json.dumps(reply, sort_keys=True))
        except WebSocketDisconnect:
            pass
        finally:
            if ws in host.clients:
                host.clients.remove(ws)

    return app
