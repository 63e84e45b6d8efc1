"""Teleoperation retargeting: glove-frame point streams to bus commands.

A trace is JSON Lines, one record per frame:

    {"t_ms": 0,
     "fingers": {"D1": {"dip": [x, y, z], "tip": [x, y, z]}, ... "D5": ...},
     "wrist": {"fe_deg": 0.0, "rud_deg": 0.0}}

with millimetre glove-frame positions and an optional wrist hint.  The
mapping applies a rigid transform plus uniform scale, IK solves for the
commanded state warm-started from the previous frame, and the pipeline
feeds targets to the simulated bus at the trace's own timestamps.

Wrist angles come from the hints when present and otherwise stay at the
seed state; fingertip data is never used to estimate the wrist.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .bus import BusNetwork
from .kinematics import PointTarget, fk_digit, solve_ik, _chain_angles
from .model import DIGITS, HandDescription, HandState, default_teleop_scale

DEFAULT_SCALE = default_teleop_scale()
STALE_GAP_MS = 250.0


class TraceError(ValueError):
    """Malformed or mis-ordered trace input; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class RetargetFrame:
    """One glove capture: DIP and tip per digit, optional wrist hint."""

    t_ms: int
    dips: dict[str, np.ndarray]
    tips: dict[str, np.ndarray]
    wrist_fe_deg: float | None = None
    wrist_rud_deg: float | None = None


def _point(value, line: int, what: str) -> np.ndarray:
    if (not isinstance(value, list) or len(value) != 3
            or not all(isinstance(v, (int, float)) for v in value)):
        raise TraceError(f"{what} must be a 3-element number list", line)
    arr = np.array(value, dtype=float)
    if not np.isfinite(arr).all():
        raise TraceError(f"{what} has non-finite values", line)
    return arr


def _parse_record(record: dict, line: int) -> RetargetFrame:
    if not isinstance(record, dict):
        raise TraceError("record must be a JSON object", line)
    if not isinstance(record.get("t_ms"), int) or record["t_ms"] < 0:
        raise TraceError("t_ms must be a non-negative integer", line)
    fingers = record.get("fingers")
    if not isinstance(fingers, dict) or set(fingers) != set(DIGITS):
        raise TraceError("fingers must map exactly D1..D5", line)
    dips, tips = {}, {}
    for digit in DIGITS:
        entry = fingers[digit]
        if not isinstance(entry, dict) or set(entry) != {"dip", "tip"}:
            raise TraceError(f"{digit} must carry dip and tip", line)
        dips[digit] = _point(entry["dip"], line, f"{digit}.dip")
        tips[digit] = _point(entry["tip"], line, f"{digit}.tip")
    fe = rud = None
    if "wrist" in record:
        wrist = record["wrist"]
        if (not isinstance(wrist, dict)
                or set(wrist) != {"fe_deg", "rud_deg"}
                or not all(isinstance(wrist[k], (int, float))
                           and math.isfinite(wrist[k]) for k in wrist)):
            raise TraceError("wrist hint must carry finite fe_deg and rud_deg",
                             line)
        fe, rud = float(wrist["fe_deg"]), float(wrist["rud_deg"])
    extra = set(record) - {"t_ms", "fingers", "wrist"}
    if extra:
        raise TraceError(f"unknown fields {sorted(extra)}", line)
    return RetargetFrame(t_ms=record["t_ms"], dips=dips, tips=tips,
                         wrist_fe_deg=fe, wrist_rud_deg=rud)


def parse_trace(source: str | Path | Iterable[str]) -> list[RetargetFrame]:
    """Parse and validate a JSON Lines trace.

    Accepts a path, the raw text, or an iterable of lines.  Every error
    names the offending 1-based line.
    """
    if isinstance(source, Path):
        lines: Iterable[str] = source.read_text().splitlines()
    elif isinstance(source, str):
        if "\n" in source or source.lstrip().startswith("{") or not source:
            lines = source.splitlines()
        else:
            lines = Path(source).read_text().splitlines()
    else:
        lines = source

    frames: list[RetargetFrame] = []
    last_t = None
    for idx, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceError(f"invalid JSON: {exc.msg}", idx) from exc
        frame = _parse_record(record, idx)
        if last_t is not None and frame.t_ms < last_t:
            raise TraceError(
                f"timestamp regression: {frame.t_ms} after {last_t}", idx)
        last_t = frame.t_ms
        frames.append(frame)
    return frames


@dataclass(frozen=True)
class Mapping:
    """Glove-to-hand transform: p_hand = rotation @ (scale * p_glove) + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation_mm: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = DEFAULT_SCALE
    fingers: tuple[str, ...] = DIGITS
    smoothing_frames: int = 1       # 1 = off

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation_mm",
                           np.asarray(self.translation_mm, dtype=float).reshape(3))
        if self.scale <= 0:
            raise TraceError(f"scale must be positive, got {self.scale}")
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-9:
            raise TraceError("rotation must be orthonormal")
        if self.smoothing_frames < 1:
            raise TraceError("smoothing window must be >= 1 frame")
        bad = [f for f in self.fingers if f not in DIGITS]
        if bad or not self.fingers:
            raise TraceError(f"finger mask invalid: {self.fingers}")

    def apply(self, p_glove: np.ndarray) -> np.ndarray:
        return self.rotation @ (self.scale * np.asarray(p_glove, float)) \
            + self.translation_mm


@dataclass(frozen=True)
class FrameResult:
    """Outcome of retargeting one frame."""

    state: HandState
    accepted: bool
    residual_mm: float                       # worst target error
    residuals_mm: dict[str, float]           # per "D2:tip"-style key
    wrist_from_hint: bool
    iterations: int


def _frame_targets(frame: RetargetFrame, mapping: Mapping) -> list[PointTarget]:
    """Tip (weight 2) and DIP (weight 1) targets for the enabled fingers."""
    targets = []
    for digit in mapping.fingers:
        targets.append(PointTarget(digit=digit,
                                   point_mm=mapping.apply(frame.tips[digit]),
                                   site="tip", weight=2.0))
        targets.append(PointTarget(digit=digit,
                                   point_mm=mapping.apply(frame.dips[digit]),
                                   site="last", weight=1.0))
    return targets


def retarget_frame(frame: RetargetFrame, mapping: Mapping,
                   desc: HandDescription, seed_state: HandState, *,
                   accept_mm: float = 2.0, tol_mm: float = 1e-3,
                   max_iters: int = 120) -> FrameResult:
    """Solve one frame into a commanded state, warm-started from the seed.

    The wrist is taken from the frame's hint (clamped to limits) or held
    at the seed's values; IK runs over the finger joints only.  A frame
    whose best residual exceeds accept_mm is rejected and the seed state
    is returned unchanged (hold-last semantics).
    """
    wrist_from_hint = frame.wrist_fe_deg is not None
    seed = seed_state
    if wrist_from_hint:
        seed = seed.with_values({
            "wrist.fe": desc.wrist_limits["fe"].clamp(frame.wrist_fe_deg),
            "wrist.rud": desc.wrist_limits["rud"].clamp(frame.wrist_rud_deg),
        })
    targets = _frame_targets(frame, mapping)
    result = solve_ik(desc, targets, seed, use_wrist=False,
                      tol_mm=tol_mm, max_iters=max_iters)
    keys = [f"{t.digit}:{'tip' if t.site == 'tip' else 'dip'}" for t in targets]
    residuals = dict(zip(keys, result.target_errors_mm))
    accepted = result.error_mm <= accept_mm
    return FrameResult(state=result.state if accepted else seed_state,
                       accepted=accepted, residual_mm=result.error_mm,
                       residuals_mm=residuals, wrist_from_hint=wrist_from_hint,
                       iterations=result.iterations)


@dataclass(frozen=True)
class FrameLog:
    t_ms: int
    accepted: bool
    stale_gap: bool
    residual_mm: float
    commands: dict[str, float]       # joints commanded this frame
    tracking_error_deg: float        # worst |command - measured| pre-frame


@dataclass(frozen=True)
class PipelineReport:
    frames: int
    accepted: int
    skipped: int
    commands_issued: int
    log: tuple[FrameLog, ...]
    max_tracking_error_deg: dict[str, float]    # per joint, over the trace
    contact_gap_mm: dict[str, float]            # min thumb-tip distance per finger


def _tips_from_state(desc: HandDescription, state: HandState) -> dict[str, np.ndarray]:
    wrist = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]])
    return {d: fk_digit(desc, d, _chain_angles(desc, d, state), wrist).tip[0]
            for d in DIGITS}


def run_pipeline(trace, mapping: Mapping, desc: HandDescription,
                 net: BusNetwork, *, accept_mm: float = 2.0,
                 tol_mm: float = 1e-3, stale_ms: float = STALE_GAP_MS,
                 settle_tail_s: float = 0.0) -> PipelineReport:
    """Replay a trace against the simulated bus.

    Frames apply at their own timestamps: the bus is advanced to each
    frame's time, the frame is retargeted, and SetTarget goes out for
    every joint whose command moved by more than one encoder quantum.
    Rejected frames hold the previous command.  The report carries the
    per-joint worst tracking error and, for opposition-style traces, the
    minimum simulated thumb-to-fingertip gap per finger.
    """
    if not isinstance(trace, (list, tuple)):
        trace = parse_trace(trace)
    smooth: dict[str, deque] = {}
    if mapping.smoothing_frames > 1:
        smooth = {key: deque(maxlen=mapping.smoothing_frames)
                  for d in mapping.fingers for key in (f"{d}:dip", f"{d}:tip")}

    quantum = 360.0 / desc.bus.encoder_counts_per_rev
    command = net.targets()                    # IK state, warm start
    on_bus = command.to_dict()                 # targets actually issued
    log: list[FrameLog] = []
    max_err = {name: 0.0 for name in on_bus}
    contact = {d: math.inf for d in ("D2", "D3", "D4", "D5")}
    issued = accepted = 0
    t0 = None
    ticks_done = 0
    prev_t = None

    def catch_up(t_ms: int) -> None:
        nonlocal ticks_done
        want = int(round((t_ms - t0) / 1000.0 * net.tick_hz))
        for _ in range(want - ticks_done):
            net.tick()
        ticks_done = want

    def observe() -> float:
        nonlocal contact
        snap = net.snapshot()
        worst = 0.0
        for name, target in on_bus.items():
            err = abs(target - snap.get(name))
            max_err[name] = max(max_err[name], err)
            worst = max(worst, err)
        tips = _tips_from_state(desc, snap)
        for digit in contact:
            gap = float(np.linalg.norm(tips["D1"] - tips[digit]))
            contact[digit] = min(contact[digit], gap)
        return worst

    for frame in trace:
        if t0 is None:
            t0 = frame.t_ms
        catch_up(frame.t_ms)
        tracking = observe()
        stale = prev_t is not None and (frame.t_ms - prev_t) > stale_ms

        work = frame
        if smooth:
            for digit in mapping.fingers:
                smooth[f"{digit}:dip"].append(frame.dips[digit])
                smooth[f"{digit}:tip"].append(frame.tips[digit])
            work = RetargetFrame(
                t_ms=frame.t_ms,
                dips={d: np.mean(smooth[f"{d}:dip"], axis=0) for d in DIGITS
                      if f"{d}:dip" in smooth} | {
                    d: frame.dips[d] for d in DIGITS if f"{d}:dip" not in smooth},
                tips={d: np.mean(smooth[f"{d}:tip"], axis=0) for d in DIGITS
                      if f"{d}:tip" in smooth} | {
                    d: frame.tips[d] for d in DIGITS if f"{d}:tip" not in smooth},
                wrist_fe_deg=frame.wrist_fe_deg,
                wrist_rud_deg=frame.wrist_rud_deg)

        result = retarget_frame(work, mapping, desc, command,
                                accept_mm=accept_mm, tol_mm=tol_mm)
        commands: dict[str, float] = {}
        if result.accepted:
            accepted += 1
            # threshold against what the bus last received, so slow joints
            # cannot silently drift out from under their stale target
            for name, value in result.state.to_dict().items():
                if abs(value - on_bus[name]) > quantum:
                    ack = net.set_target(name, value)
                    if ack.ok:
                        on_bus[name] = ack.value_deg
                        commands[name] = value
                        issued += 1
            command = result.state
        log.append(FrameLog(t_ms=frame.t_ms, accepted=result.accepted,
                            stale_gap=stale, residual_mm=result.residual_mm,
                            commands=commands, tracking_error_deg=tracking))
        prev_t = frame.t_ms

    if trace:
        # let the last command play out for one frame interval (or more)
        tail_ms = settle_tail_s * 1000.0
        if len(trace) >= 2:
            tail_ms = max(tail_ms, trace[-1].t_ms - trace[-2].t_ms)
        catch_up(trace[-1].t_ms + int(round(tail_ms)))
        observe()

    return PipelineReport(
        frames=len(trace), accepted=accepted, skipped=len(trace) - accepted,
        commands_issued=issued, log=tuple(log),
        max_tracking_error_deg=max_err, contact_gap_mm=dict(contact))


# -- Fixture synthesis ---------------------------------------------------------


def frame_from_state(desc: HandDescription, state: HandState, t_ms: int,
                     mapping: Mapping, include_wrist_hint: bool = True,
                     decimals: int = 4) -> dict:
    """Trace record whose mapped targets reproduce the given state's FK.

    Positions are written in glove coordinates (the mapping inverted),
    so replaying through the same mapping recovers the state.
    """
    inv_rot = mapping.rotation.T
    fingers = {}
    wrist = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]])
    for digit in DIGITS:
        fk = fk_digit(desc, digit, _chain_angles(desc, digit, state), wrist)
        glove = {}
        for key, point in (("dip", fk.joints[0, -1]), ("tip", fk.tip[0])):
            p = inv_rot @ (point - mapping.translation_mm) / mapping.scale
            glove[key] = [round(float(v), decimals) for v in p]
        fingers[digit] = glove
    record = {"t_ms": t_ms, "fingers": fingers}
    if include_wrist_hint:
        record["wrist"] = {"fe_deg": round(state.get("wrist.fe"), decimals),
                           "rud_deg": round(state.get("wrist.rud"), decimals)}
    return record


def write_trace(path: str | Path, records: list[dict]) -> None:
    text = "\n".join(json.dumps(r, sort_keys=True) for r in records)
    Path(path).write_text(text + "\n" if text else "")
