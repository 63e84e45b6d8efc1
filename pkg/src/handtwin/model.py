"""Hand description: geometry, joint limits, transmissions, serialization.

The description is the single source of truth the rest of the package
works from.  Canonical units are millimetres and degrees at every config
and report surface; trigonometry happens in radians inside the math
modules.

Frame convention (shared with kinematics and wrist): origin at the wrist
universal joint, +z distal, +x palmar, +y radial (thumb side).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import actuation
from .actuation import (
    AbductionTrain,
    FlexChain,
    RockerGeometry,
    ScrewParams,
    WormBranch,
    WormParams,
    calibrate_rocker,
    calibrate_wheel_radii,
)
from .wrist import WristGeometry, WristPose, wrist_ik

DIGITS = ("D1", "D2", "D3", "D4", "D5")

# Commanded values, canonical order.  Three flexion angles per digit, one
# shared abduction servo, two wrist angles: 18 in total.
COMMANDED_VALUES = (
    "d1.cmc", "d1.mcp", "d1.ip",
    "d2.mcp", "d2.pip", "d2.dip",
    "d3.mcp", "d3.pip", "d3.dip",
    "d4.mcp", "d4.pip", "d4.dip",
    "d5.mcp", "d5.pip", "d5.dip",
    "abduction",
    "wrist.fe", "wrist.rud",
)

# Physical joints, canonical order.  The three coupled abduction joints
# follow the shared servo, so there are 20 joints for 18 commanded values.
JOINT_NAMES = (
    "d1.cmc", "d1.mcp", "d1.ip",
    "d2.abd", "d2.mcp", "d2.pip", "d2.dip",
    "d3.mcp", "d3.pip", "d3.dip",
    "d4.abd", "d4.mcp", "d4.pip", "d4.dip",
    "d5.abd", "d5.mcp", "d5.pip", "d5.dip",
    "wrist.fe", "wrist.rud",
)

# -- Default joint spans and overall dimensions -----------------------------

# Per-joint range-of-motion totals (degrees).
DEFAULT_ROM_DEG = {
    "D1": {"cmc": 106.24, "mcp": 52.72, "ip": 45.02},
    "D2": {"mcp": 103.13, "pip": 75.07, "dip": 68.09, "abd": 26.73},
    "D3": {"mcp": 101.92, "pip": 73.46, "dip": 73.04},
    "D4": {"mcp": 100.56, "pip": 72.93, "dip": 73.57, "abd": 26.73},
    "D5": {"mcp": 98.93, "pip": 72.03, "dip": 72.05, "abd": 39.37},
    "wrist": {"flexion": 52.0, "extension": 18.0, "radial": 18.0, "ulnar": 18.0},
}

# Human reference spans (degrees), used by the range-of-motion report.
HUMAN_ROM_DEG = {
    "D1": {"cmc": 55.00, "mcp": 57.27, "ip": 65.00},
    "D2": {"mcp": 49.20, "pip": 86.60, "dip": 57.95, "abd": 19.19},
    "D3": {"mcp": 66.33, "pip": 85.08, "dip": 55.62},
    "D4": {"mcp": 65.30, "pip": 93.67, "dip": 58.43, "abd": 17.29},
    "D5": {"mcp": 52.76, "pip": 91.81, "dip": 56.71, "abd": 45.01},
    "wrist": {"flexion": 60.0, "extension": 60.0, "radial": 20.0, "ulnar": 30.0},
}

# Overall dimensions (mm): this hand and the human reference it is sized
# against.  Lengths: palm is wrist crease to middle MCP; digit lengths are
# base joint to fingertip; the wrist stage adds its own length.
DEFAULT_DIMENSIONS_MM = {
    "palm_length": 129.0, "palm_width": 92.0,
    "wrist_length": 33.0, "wrist_width": 57.9,
    "digit_length": {"D1": 122.3, "D2": 130.1, "D3": 102.5,
                     "D4": 130.9, "D5": 122.0},
    "digit_width": {"D1": 25.9, "D2": 19.0, "D3": 19.0, "D4": 19.0, "D5": 19.0},
}
HUMAN_DIMENSIONS_MM = {
    "palm_length": 110.7, "palm_width": 95.3,
    "wrist_length": 0.0, "wrist_width": 65.8,
    "digit_length": {"D1": 123.4, "D2": 108.3, "D3": 83.8,
                     "D4": 106.9, "D5": 86.0},
    "digit_width": {"D1": 24.0, "D2": 23.0, "D3": 22.5, "D4": 21.4, "D5": 19.2},
}

# Proximal/middle/distal share of each digit's length.
PHALANX_FRACTIONS = (0.45, 0.30, 0.25)

# Finger base positions across the palm (mm, radial positive), MCP row.
FINGER_MOUNT_Y = {"D2": 34.5, "D3": 11.5, "D4": -11.5, "D5": -34.5}

# Thumb column: base position on the radial palm edge and rest direction.
THUMB_MOUNT_POS = (8.0, 42.0, 55.0)
THUMB_REST_DIRECTION = (0.20, 0.90, 0.39)

# Leadscrew defaults: distal/middle screws use a 16 mm stroke, MCP 20 mm.
SCREW_LEAD_MM = 0.35
SCREW_DIAMETER_MM = 2.50
SCREW_FRICTION = 0.42
STROKE_DISTAL_MM = 16.0
STROKE_MCP_MM = 20.0

# Thumb CMC worm drive.
CMC_WORM = WormParams(lead_mm=2.5, pitch_diameter_mm=9.49, friction=0.46)

# Abduction train: worm lead and thread handedness per coupled finger.
ABDUCTION_LEADS_MM = {"D2": 2.0, "D4": 2.0, "D5": 2.63}
ABDUCTION_HANDS = {"D2": "left", "D4": "right", "D5": "right"}

# Wrist anchor placement, frozen from the one-time calibration search that
# reproduces the 52/18/18/18 envelope under the published stroke, swivel
# limit and 30 degree rod-end axis tilt.
WRIST_GEOMETRY = WristGeometry(
    lower_radius_mm=60.45525168682528,
    upper_radius_mm=23.354061565924347,
    lower_z_mm=-6.667295407604307,
    upper_z_mm=14.753086695953328,
    min_length_mm=37.90755019086596,
    stroke_mm=26.92,
    swivel_limit_deg=40.0,
)

# Motor torque at the screw (N.mm), sized so every digit presses at least
# 10 N at mid flexion with margin; the index finger governs (36.5 N.mm
# would be the bare minimum, see tools/calibrate_torque.py).
NOMINAL_TORQUE_NMM = 45.0

SCHEMA_RESOURCE = "hand.schema.json"
DEFAULT_CONFIG_RESOURCE = "default_hand.json"
CONFIG_ENV_VAR = "HAND_TWIN_CONFIG"


class ConfigError(ValueError):
    """Config rejected: schema violation or unbuildable values."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class InvariantError(ConfigError):
    """Description violates a structural invariant (counts, topology)."""


# -- Description dataclasses -------------------------------------------------


@dataclass(frozen=True)
class JointLimits:
    """Inclusive joint angle interval in degrees."""

    min_deg: float
    max_deg: float

    def __post_init__(self) -> None:
        if not self.min_deg < self.max_deg:
            raise ConfigError(
                f"limits must satisfy min < max, got [{self.min_deg}, {self.max_deg}]")

    @property
    def span_deg(self) -> float:
        return self.max_deg - self.min_deg

    @property
    def mid_deg(self) -> float:
        return 0.5 * (self.min_deg + self.max_deg)

    def contains(self, angle_deg: float, slack: float = 0.0) -> bool:
        return self.min_deg - slack <= angle_deg <= self.max_deg + slack

    def clamp(self, angle_deg: float) -> float:
        return min(max(angle_deg, self.min_deg), self.max_deg)


@dataclass(frozen=True, eq=False)
class JointSpec:
    """One digit joint and its drive."""

    name: str                       # cmc / mcp / pip / dip / ip
    kind: str                       # "leadscrew" or "worm"
    limits: JointLimits
    screw: ScrewParams | None = None
    rocker: RockerGeometry | None = None
    worm: WormParams | None = None

    def __post_init__(self) -> None:
        if self.kind == "leadscrew":
            if self.screw is None or self.rocker is None:
                raise ConfigError(f"{self.name}: leadscrew joint needs screw and rocker")
        elif self.kind == "worm":
            if self.worm is None:
                raise ConfigError(f"{self.name}: worm joint needs worm parameters")
        else:
            raise ConfigError(f"{self.name}: unknown joint kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class AbductionJoint:
    """Coupled abduction joint of one finger (driven by the shared servo)."""

    limits: JointLimits


@dataclass(frozen=True, eq=False)
class DigitModel:
    """One digit: mount pose, links and joint chain."""

    name: str
    mount_position_mm: np.ndarray   # (3,) in the palm frame
    mount_frame: np.ndarray         # (3,3), columns are local x/y/z axes
    link_lengths_mm: tuple[float, float, float]
    width_mm: float
    joints: tuple[JointSpec, ...]
    abduction: AbductionJoint | None = None

    def __post_init__(self) -> None:
        self.mount_position_mm.setflags(write=False)
        self.mount_frame.setflags(write=False)

    @property
    def reach_mm(self) -> float:
        return float(sum(self.link_lengths_mm))

    def joint(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(f"{self.name} has no joint {name!r}")

    def flex_chain(self) -> FlexChain:
        """Leadscrew joints as a planar chain for the static force balance."""
        lead = [j for j in self.joints if j.kind == "leadscrew"]
        links = self.link_lengths_mm[-len(lead):]
        return FlexChain(link_lengths_mm=tuple(links),
                         rockers=tuple(j.rocker for j in lead),
                         screws=tuple(j.screw for j in lead))


@dataclass(frozen=True, eq=False)
class BusParams:
    """Control-bus layout and channel dynamics."""

    encoder_counts_per_rev: int = 4096
    finger_speed_dps: float = 91.5
    servo_speed_dps: float = 120.0
    wrist_speed_dps: float = 45.0
    position_gain_hz: float = 60.0     # proportional gain of the position loop
    nominal_torque_nmm: float = NOMINAL_TORQUE_NMM
    retry_timeout_ticks: int = 5
    max_retries: int = 8
    nodes: dict[str, int] = field(default_factory=lambda: {
        "master": 0x10,
        "joint-ctl-1": 0x20, "joint-ctl-2": 0x21,
        "joint-ctl-3": 0x22, "joint-ctl-4": 0x23,
        "servo": 0x30, "wrist": 0x40,
    })
    channel_nodes: dict[str, str] = field(default_factory=lambda: {
        "d2.mcp": "joint-ctl-1", "d2.pip": "joint-ctl-1",
        "d2.dip": "joint-ctl-1", "d3.mcp": "joint-ctl-1",
        "d3.pip": "joint-ctl-2", "d3.dip": "joint-ctl-2",
        "d4.mcp": "joint-ctl-2", "d4.pip": "joint-ctl-2",
        "d4.dip": "joint-ctl-3", "d5.mcp": "joint-ctl-3",
        "d5.pip": "joint-ctl-3", "d5.dip": "joint-ctl-3",
        "d1.cmc": "joint-ctl-4", "d1.mcp": "joint-ctl-4", "d1.ip": "joint-ctl-4",
        "abduction": "servo",
        "wrist.fe": "wrist", "wrist.rud": "wrist",
    })

    @property
    def encoder_quantum_deg(self) -> float:
        return 360.0 / self.encoder_counts_per_rev

    def channel_speed_dps(self, name: str) -> float:
        node = self.channel_nodes[name]
        if node == "servo":
            return self.servo_speed_dps
        if node == "wrist":
            return self.wrist_speed_dps
        return self.finger_speed_dps


@dataclass(frozen=True, eq=False)
class HandDescription:
    """Complete twin description: palm, digits, wrist stage and bus."""

    palm_length_mm: float
    palm_width_mm: float
    wrist_length_mm: float
    wrist_width_mm: float
    digits: dict[str, DigitModel]
    abduction_train: AbductionTrain
    wrist_geometry: WristGeometry
    wrist_limits: dict[str, JointLimits]
    bus: BusParams
    # rated linear-actuator force, carried for reference only (statics and
    # the bus model do not consume it)
    wrist_actuator_force_limit_n: float = 100.0

    def __post_init__(self) -> None:
        _check_invariants(self)

    # -- derived layout ------------------------------------------------

    @property
    def mcp_row_z_mm(self) -> float:
        """Distal coordinate of the finger base row."""
        return self.wrist_length_mm + self.palm_length_mm

    def commanded_limits(self) -> dict[str, JointLimits]:
        out: dict[str, JointLimits] = {}
        for digit in DIGITS:
            for joint in self.digits[digit].joints:
                out[f"{digit.lower()}.{joint.name}"] = joint.limits
        out["abduction"] = JointLimits(self.abduction_train.servo_min_deg,
                                       self.abduction_train.servo_max_deg)
        out["wrist.fe"] = self.wrist_limits["fe"]
        out["wrist.rud"] = self.wrist_limits["rud"]
        return out

    def limits_for(self, commanded: str) -> JointLimits:
        return self.commanded_limits()[commanded]

    # -- state helpers ---------------------------------------------------

    def zero_state(self) -> "HandState":
        return HandState(values=np.zeros(len(COMMANDED_VALUES)))

    def mid_state(self) -> "HandState":
        lims = self.commanded_limits()
        return HandState(values=np.array(
            [lims[n].mid_deg for n in COMMANDED_VALUES]))

    def check_state(self, state: "HandState",
                    slack_deg: float = 1e-9) -> list[str]:
        """Limit violations as human-readable strings (empty when valid)."""
        lims = self.commanded_limits()
        out = []
        for name in COMMANDED_VALUES:
            v = state.get(name)
            lim = lims[name]
            if not lim.contains(v, slack=slack_deg):
                out.append(f"{name}={v:.4f} deg outside "
                           f"[{lim.min_deg:.4f}, {lim.max_deg:.4f}] deg")
        return out

    def clamp_state(self, state: "HandState") -> "HandState":
        lims = self.commanded_limits()
        vals = np.array([lims[n].clamp(state.get(n)) for n in COMMANDED_VALUES])
        return HandState(values=vals)

    def abduction_angles(self, state: "HandState") -> dict[str, float]:
        """Per-finger abduction joint angles for the current servo angle."""
        servo = state.get("abduction")
        mapped = actuation.abduction_map(self.abduction_train, servo)
        return {f"{digit.lower()}.abd": angle for digit, angle in mapped.items()}

    def joint_angles(self, state: "HandState") -> dict[str, float]:
        """All 20 physical joint angles in degrees."""
        out: dict[str, float] = {}
        abd = self.abduction_angles(state)
        for name in JOINT_NAMES:
            if name in abd:
                out[name] = abd[name]
            else:
                out[name] = state.get(name)
        return out

    def nut_travels_mm(self, state: "HandState") -> dict[str, float]:
        """Nut travel of each leadscrew joint at the commanded angles."""
        out: dict[str, float] = {}
        for digit in DIGITS:
            for joint in self.digits[digit].joints:
                if joint.kind != "leadscrew":
                    continue
                key = f"{digit.lower()}.{joint.name}"
                out[key] = actuation.joint_angle_to_nut_travel(
                    joint.rocker, state.get(key),
                    limits_deg=(joint.limits.min_deg, joint.limits.max_deg))
        return out

    def wrist_lengths_mm(self, state: "HandState") -> tuple[float, float]:
        sol = wrist_ik(self.wrist_geometry,
                       WristPose(state.get("wrist.fe"), state.get("wrist.rud")))
        return sol.lengths_mm

    # -- reports ----------------------------------------------------------

    def dimensions_report(self) -> dict:
        """Overall dimensions next to the human reference, with deltas."""
        report_rows = [{
            "part": "palm",
            "length_mm": self.palm_length_mm,
            "width_mm": self.palm_width_mm,
        }]
        for digit in ("D2", "D3", "D4", "D5", "D1"):
            report_rows.append({
                "part": digit,
                "length_mm": self.digits[digit].reach_mm,
                "width_mm": self.digits[digit].width_mm,
            })
        report_rows.append({
            "part": "wrist",
            "length_mm": self.wrist_length_mm,
            "width_mm": self.wrist_width_mm,
        })
        human_lengths = ([HUMAN_DIMENSIONS_MM["palm_length"]]
                         + [HUMAN_DIMENSIONS_MM["digit_length"][d]
                            for d in ("D2", "D3", "D4", "D5", "D1")]
                         + [HUMAN_DIMENSIONS_MM["wrist_length"]])
        human_widths = ([HUMAN_DIMENSIONS_MM["palm_width"]]
                        + [HUMAN_DIMENSIONS_MM["digit_width"][d]
                           for d in ("D2", "D3", "D4", "D5", "D1")]
                        + [HUMAN_DIMENSIONS_MM["wrist_width"]])
        for row, hl, hw in zip(report_rows, human_lengths, human_widths):
            row["human_length_mm"] = hl
            row["human_width_mm"] = hw
        total_len = sum(r["length_mm"] for r in report_rows)
        total_hlen = sum(human_lengths)
        total_wid = sum(r["width_mm"] for r in report_rows)
        total_hwid = sum(human_widths)
        return {
            "rows": report_rows,
            "length_change_pct": 100.0 * (total_len - total_hlen) / total_hlen,
            "width_change_pct": 100.0 * (total_wid - total_hwid) / total_hwid,
        }


def _check_invariants(desc: HandDescription) -> None:
    expected = {
        "D1": ("cmc", "mcp", "ip"),
        "D2": ("mcp", "pip", "dip"),
        "D3": ("mcp", "pip", "dip"),
        "D4": ("mcp", "pip", "dip"),
        "D5": ("mcp", "pip", "dip"),
    }
    abducted = {"D2", "D4", "D5"}
    if set(desc.digits) != set(DIGITS):
        raise InvariantError(f"description must carry digits D1..D5, got "
                             f"{sorted(desc.digits)}")
    joint_count = 2  # wrist fe + rud
    commanded = 2
    for digit in DIGITS:
        model = desc.digits[digit]
        names = tuple(j.name for j in model.joints)
        if names != expected[digit]:
            raise InvariantError(
                f"{digit}: joint chain must be {expected[digit]}, got {names}")
        joint_count += len(names)
        commanded += len(names)
        if digit in abducted:
            if model.abduction is None:
                raise InvariantError(f"{digit}: coupled abduction joint missing")
            joint_count += 1
        elif model.abduction is not None:
            raise InvariantError(f"{digit}: unexpected abduction joint")
        if len(model.link_lengths_mm) != 3:
            raise InvariantError(f"{digit}: needs exactly 3 links")
        if any(l <= 0 for l in model.link_lengths_mm):
            raise InvariantError(f"{digit}: link lengths must be positive")
    commanded += 1  # shared abduction servo
    if joint_count != 20:
        raise InvariantError(f"joint count must be 20, got {joint_count}")
    if commanded != 18:
        raise InvariantError(f"commanded value count must be 18, got {commanded}")
    if set(desc.abduction_train.branches) != abducted:
        raise InvariantError(
            f"abduction train must drive D2, D4, D5, got "
            f"{sorted(desc.abduction_train.branches)}")
    if set(desc.wrist_limits) != {"fe", "rud"}:
        raise InvariantError("wrist limits must cover fe and rud")
    missing = [n for n in COMMANDED_VALUES if n not in desc.bus.channel_nodes]
    if missing:
        raise InvariantError(f"bus channel map missing {missing}")


# -- Hand state ----------------------------------------------------------------


@dataclass(frozen=True)
class HandState:
    """The 18 commanded values, degrees, in canonical order."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (len(COMMANDED_VALUES),):
            raise ValueError(
                f"state needs {len(COMMANDED_VALUES)} values, got {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def zero(cls) -> "HandState":
        return cls(values=np.zeros(len(COMMANDED_VALUES)))

    @classmethod
    def from_dict(cls, mapping: dict[str, float]) -> "HandState":
        vals = np.zeros(len(COMMANDED_VALUES))
        for key, value in mapping.items():
            if key not in COMMANDED_VALUES:
                raise KeyError(f"unknown commanded value {key!r}")
            vals[COMMANDED_VALUES.index(key)] = float(value)
        return cls(values=vals)

    def get(self, name: str) -> float:
        return float(self.values[COMMANDED_VALUES.index(name)])

    def with_value(self, name: str, value_deg: float) -> "HandState":
        vals = self.values.copy()
        vals[COMMANDED_VALUES.index(name)] = float(value_deg)
        return HandState(values=vals)

    def with_values(self, mapping: dict[str, float]) -> "HandState":
        vals = self.values.copy()
        for key, value in mapping.items():
            vals[COMMANDED_VALUES.index(key)] = float(value)
        return HandState(values=vals)

    def to_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(COMMANDED_VALUES, self.values)}


# -- Default hand -----------------------------------------------------------


def _thumb_mount_frame(rest_direction) -> np.ndarray:
    """Orthonormal thumb frame: local z along the rest direction, local x
    as close to palmar as the chain allows."""
    z = np.asarray(rest_direction, dtype=float)
    z = z / np.linalg.norm(z)
    palmar = np.array([1.0, 0.0, 0.0])
    x = palmar - (palmar @ z) * z
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def _rocker_anchor_mm(lower_link_mm: float, stroke_mm: float,
                      span_deg: float) -> float:
    """Anchor offset: phalanx fraction, pushed out when the span needs it."""
    feasible_min = stroke_mm / (2.0 * math.sin(math.radians(span_deg) / 2.0))
    return max(0.45 * lower_link_mm, 1.1 * feasible_min)


def _leadscrew_joint(name: str, span_deg: float, stroke_mm: float,
                     lower_link_mm: float) -> JointSpec:
    screw = ScrewParams(lead_mm=SCREW_LEAD_MM, mean_diameter_mm=SCREW_DIAMETER_MM,
                        friction=SCREW_FRICTION, stroke_mm=stroke_mm)
    a = _rocker_anchor_mm(lower_link_mm, stroke_mm, span_deg)
    rocker = calibrate_rocker(stroke_mm, 0.0, span_deg, a)
    return JointSpec(name=name, kind="leadscrew",
                     limits=JointLimits(0.0, span_deg), screw=screw, rocker=rocker)


def _default_digit(digit: str) -> DigitModel:
    total = DEFAULT_DIMENSIONS_MM["digit_length"][digit]
    links = tuple(round(f * total, 6) for f in PHALANX_FRACTIONS)
    rom = DEFAULT_ROM_DEG[digit]
    if digit == "D1":
        joints = (
            JointSpec(name="cmc", kind="worm",
                      limits=JointLimits(0.0, rom["cmc"]), worm=CMC_WORM),
            _leadscrew_joint("mcp", rom["mcp"], STROKE_MCP_MM, links[0]),
            _leadscrew_joint("ip", rom["ip"], STROKE_DISTAL_MM, links[1]),
        )
        return DigitModel(
            name=digit,
            mount_position_mm=np.array(THUMB_MOUNT_POS, dtype=float),
            mount_frame=_thumb_mount_frame(THUMB_REST_DIRECTION),
            link_lengths_mm=links,
            width_mm=DEFAULT_DIMENSIONS_MM["digit_width"][digit],
            joints=joints)
    joints = (
        _leadscrew_joint("mcp", rom["mcp"], STROKE_MCP_MM,
                         DEFAULT_DIMENSIONS_MM["palm_length"]),
        _leadscrew_joint("pip", rom["pip"], STROKE_DISTAL_MM, links[0]),
        _leadscrew_joint("dip", rom["dip"], STROKE_DISTAL_MM, links[1]),
    )
    abduction = None
    if "abd" in rom:
        half = rom["abd"] / 2.0
        abduction = AbductionJoint(limits=JointLimits(-half, half))
    mount = np.array([0.0, FINGER_MOUNT_Y[digit],
                      DEFAULT_DIMENSIONS_MM["wrist_length"]
                      + DEFAULT_DIMENSIONS_MM["palm_length"]])
    return DigitModel(name=digit, mount_position_mm=mount,
                      mount_frame=np.eye(3), link_lengths_mm=links,
                      width_mm=DEFAULT_DIMENSIONS_MM["digit_width"][digit],
                      joints=joints, abduction=abduction)


def default_hand() -> HandDescription:
    """The stock description with all calibrations applied."""
    digits = {d: _default_digit(d) for d in DIGITS}
    train = calibrate_wheel_radii(
        spans_deg={d: DEFAULT_ROM_DEG[d]["abd"] for d in ("D2", "D4", "D5")},
        leads_mm=ABDUCTION_LEADS_MM, hands=ABDUCTION_HANDS)
    wrist_rom = DEFAULT_ROM_DEG["wrist"]
    return HandDescription(
        palm_length_mm=DEFAULT_DIMENSIONS_MM["palm_length"],
        palm_width_mm=DEFAULT_DIMENSIONS_MM["palm_width"],
        wrist_length_mm=DEFAULT_DIMENSIONS_MM["wrist_length"],
        wrist_width_mm=DEFAULT_DIMENSIONS_MM["wrist_width"],
        digits=digits,
        abduction_train=train,
        wrist_geometry=WRIST_GEOMETRY,
        wrist_limits={
            "fe": JointLimits(-wrist_rom["extension"], wrist_rom["flexion"]),
            "rud": JointLimits(-wrist_rom["ulnar"], wrist_rom["radial"]),
        },
        bus=BusParams())


# -- Serialization ------------------------------------------------------------


def _limits_list(lim: JointLimits) -> list[float]:
    return [lim.min_deg, lim.max_deg]


def to_config(desc: HandDescription) -> dict:
    """Description as a JSON-serializable config dict (mm / deg)."""
    digits = {}
    for name in DIGITS:
        d = desc.digits[name]
        entry: dict = {
            "mount": {
                "position_mm": [float(v) for v in d.mount_position_mm],
                "frame": [[float(v) for v in row] for row in d.mount_frame],
            },
            "links": {
                "lengths_mm": [float(v) for v in d.link_lengths_mm],
                "width_mm": d.width_mm,
            },
            "joints": [],
        }
        for j in d.joints:
            joint: dict = {"name": j.name, "kind": j.kind,
                           "limits_deg": _limits_list(j.limits)}
            if j.kind == "leadscrew":
                joint["screw"] = {
                    "lead_mm": j.screw.lead_mm,
                    "mean_diameter_mm": j.screw.mean_diameter_mm,
                    "friction": j.screw.friction,
                    "stroke_mm": j.screw.stroke_mm,
                }
                joint["rocker"] = {
                    "a_mm": j.rocker.a_mm, "b_mm": j.rocker.b_mm,
                    "theta0_rad": j.rocker.theta0_rad, "sign": j.rocker.sign,
                }
            else:
                joint["worm"] = {
                    "lead_mm": j.worm.lead_mm,
                    "pitch_diameter_mm": j.worm.pitch_diameter_mm,
                    "friction": j.worm.friction,
                }
            entry["joints"].append(joint)
        if d.abduction is not None:
            branch = desc.abduction_train.branches[name]
            entry["abduction"] = {
                "limits_deg": _limits_list(d.abduction.limits),
                "lead_mm": branch.lead_mm,
                "thread_hand": branch.thread_hand,
                "wheel_radius_mm": branch.wheel_radius_mm,
            }
        digits[name] = entry

    g = desc.wrist_geometry
    return {
        "units": {"length": "mm", "angle": "deg"},
        "palm": {
            "length_mm": desc.palm_length_mm,
            "width_mm": desc.palm_width_mm,
            "wrist_length_mm": desc.wrist_length_mm,
            "wrist_width_mm": desc.wrist_width_mm,
        },
        "digits": digits,
        "abduction_servo": {
            "pinion_teeth": desc.abduction_train.pinion_teeth,
            "bevel_teeth": desc.abduction_train.bevel_teeth,
            "limits_deg": [desc.abduction_train.servo_min_deg,
                           desc.abduction_train.servo_max_deg],
        },
        "wrist": {
            "geometry": {
                "lower_radius_mm": g.lower_radius_mm,
                "upper_radius_mm": g.upper_radius_mm,
                "lower_z_mm": g.lower_z_mm,
                "upper_z_mm": g.upper_z_mm,
                "min_length_mm": g.min_length_mm,
                "stroke_mm": g.stroke_mm,
                "swivel_limit_deg": g.swivel_limit_deg,
                "azimuth1_deg": g.azimuth1_deg,
                "azimuth2_deg": g.azimuth2_deg,
            },
            "limits_deg": {
                "fe": _limits_list(desc.wrist_limits["fe"]),
                "rud": _limits_list(desc.wrist_limits["rud"]),
            },
            "actuator_force_limit_n": desc.wrist_actuator_force_limit_n,
        },
        "bus": {
            "encoder_counts_per_rev": desc.bus.encoder_counts_per_rev,
            "finger_speed_dps": desc.bus.finger_speed_dps,
            "servo_speed_dps": desc.bus.servo_speed_dps,
            "wrist_speed_dps": desc.bus.wrist_speed_dps,
            "position_gain_hz": desc.bus.position_gain_hz,
            "nominal_torque_nmm": desc.bus.nominal_torque_nmm,
            "retry_timeout_ticks": desc.bus.retry_timeout_ticks,
            "max_retries": desc.bus.max_retries,
            "nodes": dict(desc.bus.nodes),
            "channel_nodes": dict(desc.bus.channel_nodes),
        },
    }


def serialize(desc: HandDescription, indent: int = 2) -> str:
    return json.dumps(to_config(desc), indent=indent, sort_keys=True) + "\n"


def _schema() -> dict:
    text = resources.files("handtwin.data").joinpath(SCHEMA_RESOURCE).read_text()
    return json.loads(text)


def _scale_lengths(config: dict, factor: float) -> None:
    """Multiply every length-bearing field in a config dict, in place."""

    def walk(node) -> None:
        if isinstance(node, dict):
            for key, value in node.items():
                if isinstance(value, (dict, list)):
                    walk(value)
                elif isinstance(value, (int, float)) and (
                        key.endswith("_mm") or key == "lengths_mm"):
                    node[key] = value * factor
            for key in ("position_mm", "lengths_mm"):
                if key in node and isinstance(node[key], list):
                    node[key] = [v * factor for v in node[key]]
        elif isinstance(node, list):
            for item in node:
                walk(item)

    walk(config)


def load_config(source) -> HandDescription:
    """Build a description from a config path, JSON text or dict.

    Validation reports the JSON path of the first schema violation;
    structural invariants (joint counts, topology) are checked after the
    build with named errors.
    """
    import jsonschema

    if isinstance(source, Path):
        config = json.loads(source.read_text())
    elif isinstance(source, str):
        if source.lstrip().startswith("{"):
            config = json.loads(source)
        else:
            config = json.loads(Path(source).read_text())
    elif isinstance(source, dict):
        config = json.loads(json.dumps(source))  # private copy
    else:
        raise ConfigError(f"unsupported config source {type(source).__name__}")

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "(root)"
        raise ConfigError(err.message, path=path)

    units = config["units"]
    if units["length"] == "cm":
        _scale_lengths(config, 10.0)
    elif units["length"] != "mm":
        raise ConfigError(f"unsupported length unit {units['length']!r}", "units/length")
    if units["angle"] != "deg":
        raise ConfigError(f"unsupported angle unit {units['angle']!r}", "units/angle")

    try:
        return _build_description(config)
    except (actuation.TransmissionError,) as exc:
        raise ConfigError(str(exc)) from exc


def _build_description(config: dict) -> HandDescription:
    digits: dict[str, DigitModel] = {}
    branches: dict[str, WormBranch] = {}
    for name, entry in config["digits"].items():
        joints = []
        for j in entry["joints"]:
            limits = JointLimits(*j["limits_deg"])
            if j["kind"] == "leadscrew":
                joints.append(JointSpec(
                    name=j["name"], kind="leadscrew", limits=limits,
                    screw=ScrewParams(**j["screw"]),
                    rocker=RockerGeometry(**j["rocker"])))
            else:
                joints.append(JointSpec(
                    name=j["name"], kind="worm", limits=limits,
                    worm=WormParams(**j["worm"])))
        abduction = None
        if "abduction" in entry:
            ab = entry["abduction"]
            abduction = AbductionJoint(limits=JointLimits(*ab["limits_deg"]))
            branches[name] = WormBranch(lead_mm=ab["lead_mm"],
                                        thread_hand=ab["thread_hand"],
                                        wheel_radius_mm=ab["wheel_radius_mm"])
        digits[name] = DigitModel(
            name=name,
            mount_position_mm=np.array(entry["mount"]["position_mm"], dtype=float),
            mount_frame=np.array(entry["mount"]["frame"], dtype=float),
            link_lengths_mm=tuple(entry["links"]["lengths_mm"]),
            width_mm=entry["links"]["width_mm"],
            joints=tuple(joints),
            abduction=abduction)

    servo = config["abduction_servo"]
    train = AbductionTrain(branches=branches,
                           pinion_teeth=servo["pinion_teeth"],
                           bevel_teeth=servo["bevel_teeth"],
                           servo_min_deg=servo["limits_deg"][0],
                           servo_max_deg=servo["limits_deg"][1])

    wr = config["wrist"]
    geometry = WristGeometry(**wr["geometry"])
    wrist_limits = {
        "fe": JointLimits(*wr["limits_deg"]["fe"]),
        "rud": JointLimits(*wr["limits_deg"]["rud"]),
    }
    bus_cfg = config["bus"]
    bus = BusParams(
        encoder_counts_per_rev=bus_cfg["encoder_counts_per_rev"],
        finger_speed_dps=bus_cfg["finger_speed_dps"],
        servo_speed_dps=bus_cfg["servo_speed_dps"],
        wrist_speed_dps=bus_cfg["wrist_speed_dps"],
        position_gain_hz=bus_cfg["position_gain_hz"],
        nominal_torque_nmm=bus_cfg["nominal_torque_nmm"],
        retry_timeout_ticks=bus_cfg["retry_timeout_ticks"],
        max_retries=bus_cfg["max_retries"],
        nodes=dict(bus_cfg["nodes"]),
        channel_nodes=dict(bus_cfg["channel_nodes"]))

    palm = config["palm"]
    return HandDescription(
        palm_length_mm=palm["length_mm"], palm_width_mm=palm["width_mm"],
        wrist_length_mm=palm["wrist_length_mm"],
        wrist_width_mm=palm["wrist_width_mm"],
        digits=digits, abduction_train=train, wrist_geometry=geometry,
        wrist_limits=wrist_limits, bus=bus,
        wrist_actuator_force_limit_n=wr.get("actuator_force_limit_n", 100.0))


def bundled_default_config() -> dict:
    text = resources.files("handtwin.data").joinpath(
        DEFAULT_CONFIG_RESOURCE).read_text()
    return json.loads(text)


def resolve_config(path: str | None = None) -> HandDescription:
    """Description from an explicit path, HAND_TWIN_CONFIG, or the default."""
    if path:
        return load_config(path)
    env = os.environ.get(CONFIG_ENV_VAR)
    if env:
        return load_config(env)
    return load_config(bundled_default_config())


def scale_hand(desc: HandDescription, factor: float) -> HandDescription:
    """Uniformly scale every length; angles and limits are untouched."""
    if factor <= 0:
        raise ConfigError(f"scale factor must be positive, got {factor}")
    config = to_config(desc)
    _scale_lengths(config, factor)
    return _build_description(config)


def default_teleop_scale() -> float:
    """Length ratio of this hand to the human reference (sum over parts)."""
    own = (DEFAULT_DIMENSIONS_MM["palm_length"]
           + DEFAULT_DIMENSIONS_MM["wrist_length"]
           + sum(DEFAULT_DIMENSIONS_MM["digit_length"].values()))
    human = (HUMAN_DIMENSIONS_MM["palm_length"]
             + HUMAN_DIMENSIONS_MM["wrist_length"]
             + sum(HUMAN_DIMENSIONS_MM["digit_length"].values()))
    return own / human
