"""Simulated control network: master, joint controllers, servo and wrist.

Seven logical nodes stand in for the electrical stack: one master (the
sole initiator), four dual-channel joint controllers covering the
fourteen finger screws plus the thumb base, one abduction-servo node and
one wrist node.  Frames are 8 bytes, little-endian, XOR checksummed;
motor channels are rate-limited proportional position loops with
quantized encoder readback.  Everything is advanced explicitly through
tick() and is deterministic for a given command schedule and seed.

Self-locking channels hold position exactly when the drive is disabled;
injected external torque moves only non-locking channels, and only while
their drive is off (the position loop otherwise rejects it).
"""

from __future__ import annotations

import json
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path

from .model import COMMANDED_VALUES, HandDescription, HandState, JointLimits

CMD_SET_TARGET = 0x01
CMD_READ_ENCODER = 0x02
COMMAND_NAMES = {CMD_SET_TARGET: "set_target", CMD_READ_ENCODER: "read_encoder"}

FRAME_SIZE = 8
MICRODEG = 1_000_000


class BusError(Exception):
    pass


class FrameError(BusError):
    """Malformed frame: wrong size, bad checksum, field out of range."""


def _checksum(raw: bytes) -> int:
    out = 0
    for b in raw:
        out ^= b
    return out


@dataclass(frozen=True)
class BusFrame:
    """8-byte command frame.

    Layout: address (1), command (1), joint index (1), payload (4,
    signed little-endian micro-degrees), checksum (1, XOR of the first
    seven bytes).
    """

    address: int
    command: int
    joint_index: int
    payload: int

    def __post_init__(self) -> None:
        if not 0 <= self.address <= 0x7F:
            raise FrameError(f"address {self.address:#x} outside 7-bit range")
        if not 0 <= self.command <= 0xFF:
            raise FrameError(f"command {self.command:#x} outside byte range")
        if not 0 <= self.joint_index < len(COMMANDED_VALUES):
            raise FrameError(f"joint index {self.joint_index} out of range")
        if not -(2 ** 31) <= self.payload < 2 ** 31:
            raise FrameError(f"payload {self.payload} outside int32 range")

    def encode(self) -> bytes:
        body = struct.pack("<BBBi", self.address, self.command,
                           self.joint_index, self.payload)
        return body + bytes([_checksum(body)])

    @classmethod
    def decode(cls, raw: bytes) -> "BusFrame":
        if len(raw) != FRAME_SIZE:
            raise FrameError(f"frame must be {FRAME_SIZE} bytes, got {len(raw)}")
        if _checksum(raw[:-1]) != raw[-1]:
            raise FrameError("checksum mismatch")
        address, command, joint_index, payload = struct.unpack("<BBBi", raw[:-1])
        return cls(address=address, command=command,
                   joint_index=joint_index, payload=payload)


def set_target_frame(desc: HandDescription, joint: str, angle_deg: float) -> BusFrame:
    """SetTarget frame for a commanded joint, addressed to its node."""
    node_role = desc.bus.channel_nodes[joint]
    return BusFrame(address=desc.bus.nodes[node_role], command=CMD_SET_TARGET,
                    joint_index=COMMANDED_VALUES.index(joint),
                    payload=round(angle_deg * MICRODEG))


def read_encoder_frame(desc: HandDescription, joint: str) -> BusFrame:
    node_role = desc.bus.channel_nodes[joint]
    return BusFrame(address=desc.bus.nodes[node_role], command=CMD_READ_ENCODER,
                    joint_index=COMMANDED_VALUES.index(joint), payload=0)


@dataclass(frozen=True)
class Ack:
    """Node reply: success with optional clamp note, or a named fault."""

    ok: bool
    command: str
    joint: str | None = None
    clamped: bool = False
    value_deg: float | None = None
    fault: str | None = None
    attempts: int = 1


@dataclass
class MotorChannel:
    """One position-controlled joint channel."""

    name: str
    limits: JointLimits
    max_speed_dps: float
    gain_hz: float
    counts_per_rev: int
    self_lock: bool
    target_deg: float = 0.0
    angle_deg: float = 0.0          # true (unquantized) plant angle
    drive_enabled: bool = True
    external_torque_nmm: float = 0.0
    clamped: bool = False           # last SetTarget was clamped

    @property
    def quantum_deg(self) -> float:
        return 360.0 / self.counts_per_rev

    @property
    def measured_deg(self) -> float:
        """Encoder readback, quantized to whole counts."""
        return round(self.angle_deg / self.quantum_deg) * self.quantum_deg

    def set_target(self, angle_deg: float) -> bool:
        """Returns True when the request had to be clamped to limits."""
        clamped = not self.limits.contains(angle_deg)
        self.target_deg = self.limits.clamp(angle_deg)
        self.clamped = clamped
        return clamped

    def step(self, dt: float) -> None:
        if dt == 0.0:
            return
        if self.drive_enabled:
            err = self.target_deg - self.angle_deg
            if err == 0.0:
                return
            # proportional step, capped by the speed limit and never
            # past the target
            step = self.gain_hz * dt * err
            cap = self.max_speed_dps * dt
            if step > cap:
                step = cap
            elif step < -cap:
                step = -cap
            if abs(step) > abs(err):
                step = err
            self.angle_deg += step
        elif not self.self_lock and self.external_torque_nmm != 0.0:
            # crude fault-injection path: an unlocked, undriven joint
            # drifts with the external torque at the speed cap
            drift = math.copysign(self.max_speed_dps * dt,
                                  self.external_torque_nmm)
            self.angle_deg = self.limits.clamp(self.angle_deg + drift)


def _self_locking(desc: HandDescription, joint: str) -> bool:
    """Screw and worm transmissions hold without power; the abduction
    servo and the wrist actuators rely on active control."""
    from . import actuation

    if joint in ("abduction", "wrist.fe", "wrist.rud"):
        return False
    digit = joint.split(".", 1)[0].upper()
    spec = desc.digits[digit].joint(joint.split(".", 1)[1])
    if spec.kind == "worm":
        return actuation.is_self_locking(spec.worm.lead_mm,
                                         spec.worm.pitch_diameter_mm,
                                         spec.worm.friction)
    return actuation.is_self_locking(spec.screw.lead_mm,
                                     spec.screw.mean_diameter_mm,
                                     spec.screw.friction)


class BusNetwork:
    """The whole network as one explicit state machine.

    Not thread-safe: callers serialize access (the service layer funnels
    every mutation through a single queue).  Lossy mode drops frames and
    acknowledgements with a seeded probability; the master retransmits
    idempotent commands until acknowledged or retries run out.
    """

    def __init__(self, desc: HandDescription, tick_hz: float = 1000.0,
                 drop_rate: float = 0.0, seed: int = 0,
                 telemetry_path: str | Path | None = None):
        if tick_hz <= 0:
            raise BusError("tick rate must be positive")
        if not 0.0 <= drop_rate < 1.0:
            raise BusError("drop rate must be in [0, 1)")
        self.desc = desc
        self.tick_hz = tick_hz
        self.drop_rate = drop_rate
        self._rng = random.Random(seed)
        self._telemetry_file = open(telemetry_path, "w") if telemetry_path else None
        self.tick_count = 0
        self.retransmits = 0
        self.faults = 0
        lims = desc.commanded_limits()
        self.channels: dict[str, MotorChannel] = {}
        for name in COMMANDED_VALUES:
            self.channels[name] = MotorChannel(
                name=name,
                limits=lims[name],
                max_speed_dps=desc.bus.channel_speed_dps(name),
                gain_hz=desc.bus.position_gain_hz,
                counts_per_rev=desc.bus.encoder_counts_per_rev,
                self_lock=_self_locking(desc, name))
        self._node_joints: dict[int, set[int]] = {}
        for name, role in desc.bus.channel_nodes.items():
            addr = desc.bus.nodes[role]
            self._node_joints.setdefault(addr, set()).add(
                COMMANDED_VALUES.index(name))
        self._last_emitted: dict[str, tuple[float, float]] = {}

    # -- wire ------------------------------------------------------------

    @property
    def time_s(self) -> float:
        return self.tick_count / self.tick_hz

    def _wire_ok(self) -> bool:
        if self.drop_rate == 0.0:
            return True
        return self._rng.random() >= self.drop_rate

    def _dispatch(self, frame: BusFrame) -> Ack:
        if frame.address not in self._node_joints:
            return Ack(ok=False, command=COMMAND_NAMES.get(frame.command, "?"),
                       fault="unknown-address")
        if frame.command not in COMMAND_NAMES:
            return Ack(ok=False, command=f"{frame.command:#04x}",
                       fault="unknown-command")
        if frame.joint_index not in self._node_joints[frame.address]:
            return Ack(ok=False, command=COMMAND_NAMES[frame.command],
                       fault="joint-not-on-node")
        joint = COMMANDED_VALUES[frame.joint_index]
        channel = self.channels[joint]
        if frame.command == CMD_SET_TARGET:
            clamped = channel.set_target(frame.payload / MICRODEG)
            return Ack(ok=True, command="set_target", joint=joint,
                       clamped=clamped, value_deg=channel.target_deg)
        return Ack(ok=True, command="read_encoder", joint=joint,
                   value_deg=channel.measured_deg)

    def send(self, frame: BusFrame | bytes) -> Ack:
        """Deliver one frame; in lossy mode, retransmit until acked.

        Both the command leg and the acknowledgement leg can drop.  The
        published commands are idempotent, so at-least-once delivery is
        safe; a command whose ack was lost may have been applied.
        """
        if isinstance(frame, (bytes, bytearray)):
            try:
                frame = BusFrame.decode(bytes(frame))
            except FrameError as exc:
                self.faults += 1
                return Ack(ok=False, command="?", fault=f"frame: {exc}")
        attempts = 0
        max_attempts = 1 + self.desc.bus.max_retries
        while attempts < max_attempts:
            attempts += 1
            if attempts > 1:
                self.retransmits += 1
            if not self._wire_ok():        # command leg lost
                continue
            ack = self._dispatch(frame)
            if not self._wire_ok():        # ack leg lost
                continue
            if not ack.ok:
                self.faults += 1
            return Ack(ok=ack.ok, command=ack.command, joint=ack.joint,
                       clamped=ack.clamped, value_deg=ack.value_deg,
                       fault=ack.fault, attempts=attempts)
        self.faults += 1
        return Ack(ok=False, command=COMMAND_NAMES.get(frame.command, "?"),
                   fault="timeout", attempts=attempts)

    def set_target(self, joint: str, angle_deg: float) -> Ack:
        return self.send(set_target_frame(self.desc, joint, angle_deg))

    def read_encoder(self, joint: str) -> Ack:
        return self.send(read_encoder_frame(self.desc, joint))

    # -- simulation -------------------------------------------------------

    def inject_torque(self, joint: str, torque_nmm: float) -> None:
        self.channels[joint].external_torque_nmm = torque_nmm

    def set_drive_enabled(self, joint: str, enabled: bool) -> None:
        self.channels[joint].drive_enabled = enabled

    def tick(self, dt_s: float | None = None) -> list[dict]:
        """Advance one step (default 1/tick_hz) and emit telemetry."""
        dt = 1.0 / self.tick_hz if dt_s is None else dt_s
        if dt < 0:
            raise BusError("dt must be non-negative")
        for channel in self.channels.values():
            channel.step(dt)
        self.tick_count += 1
        records = []
        t = self.time_s
        for name in COMMANDED_VALUES:
            channel = self.channels[name]
            now = (channel.target_deg, channel.measured_deg)
            if self._last_emitted.get(name) == now:
                continue
            self._last_emitted[name] = now
            flags = []
            if channel.clamped:
                flags.append("clamped")
            if not channel.drive_enabled:
                flags.append("hold")
            records.append({
                "t": t,
                "joint": name,
                "target_deg": channel.target_deg,
                "measured_deg": channel.measured_deg,
                "flags": flags,
            })
        if self._telemetry_file is not None:
            for record in records:
                self._telemetry_file.write(
                    json.dumps(record, sort_keys=True) + "\n")
        return records

    def run(self, seconds: float) -> list[dict]:
        """Tick for a duration at the configured rate; returns telemetry."""
        n = int(round(seconds * self.tick_hz))
        out: list[dict] = []
        for _ in range(n):
            out.extend(self.tick())
        return out

    def snapshot(self) -> HandState:
        """Measured angles of all channels as one consistent state."""
        return HandState.from_dict(
            {n: self.channels[n].measured_deg for n in COMMANDED_VALUES})

    def targets(self) -> HandState:
        return HandState.from_dict(
            {n: self.channels[n].target_deg for n in COMMANDED_VALUES})

    def settled(self, tolerance_deg: float | None = None) -> bool:
        """True when every channel is within tolerance of its target
        (default: one encoder quantum)."""
        for channel in self.channels.values():
            tol = channel.quantum_deg if tolerance_deg is None else tolerance_deg
            if abs(channel.measured_deg - channel.target_deg) > tol:
                return False
        return True

    def close(self) -> None:
        if self._telemetry_file is not None:
            self._telemetry_file.close()
            self._telemetry_file = None

    def __enter__(self) -> "BusNetwork":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def reference_response(start_deg: float, target_deg: float, gain_hz: float,
                       max_speed_dps: float, dt_s: float, ticks: int) -> float:
    """Closed-form angle after `ticks` steps of the rate-limited loop.

    The discrete loop moves at the speed cap while gain*|err| exceeds the
    cap, then decays geometrically: err *= (1 - gain*dt).  Used as the
    independent oracle for the tick simulation.
    """
    err = target_deg - start_deg
    if err == 0.0 or ticks <= 0:
        return target_deg - err
    sign = 1.0 if err > 0 else -1.0
    err = abs(err)
    cap = max_speed_dps * dt_s
    knee = max_speed_dps / gain_hz   # error below which the cap stops binding
    linear_ticks = 0
    if err > knee:
        linear_ticks = int(math.ceil((err - knee) / cap - 1e-12))
        linear_ticks = min(linear_ticks, ticks)
        err -= linear_ticks * cap
    remaining = ticks - linear_ticks
    if remaining > 0:
        decay = 1.0 - gain_hz * dt_s
        err *= decay ** remaining
    return target_deg - sign * err


def load_telemetry(path: str | Path) -> list[dict]:
    """Parse a telemetry JSONL file back into records."""
    records = []
    for idx, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise BusError(f"line {idx}: bad telemetry record: {exc}") from exc
    return records
