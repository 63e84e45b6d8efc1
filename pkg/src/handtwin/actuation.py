"""Transmission math for the hand's three drive families.

Covers the leadscrew-plus-rocker flexion drives, the self-locking worm
drive on the thumb CMC joint, and the single-servo gear train that
couples index, ring and pinky abduction.

Public surfaces use degrees for angles, millimetres for lengths and
newton-millimetres for torques.  Internal trigonometry is in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


# -- Errors ---------------------------------------------------------------


class TransmissionError(ValueError):
    """Base class for transmission geometry and range violations."""


class TravelRangeError(TransmissionError):
    """Nut travel outside the triangle-feasible interval of the rocker."""


class StrokeRangeError(TransmissionError):
    """Nut travel geometrically feasible but beyond the screw stroke."""


class JointRangeError(TransmissionError):
    """Joint angle outside the joint's limit interval."""


class DegenerateGeometryError(TransmissionError):
    """Rocker folded flat: the screw line passes through the joint axis."""


class CalibrationError(TransmissionError):
    """No rocker geometry satisfies the requested endpoint constraints."""


# -- Screw and worm parameters --------------------------------------------


@dataclass(frozen=True)
class ScrewParams:
    """Leadscrew thread parameters for one flexion drive."""

    lead_mm: float = 0.35          # axial advance per revolution
    mean_diameter_mm: float = 2.50
    friction: float = 0.42         # nut/thread friction coefficient
    stroke_mm: float = 16.0        # usable nut travel


@dataclass(frozen=True)
class WormParams:
    """Worm thread parameters for the thumb CMC drive."""

    lead_mm: float = 2.5
    pitch_diameter_mm: float = 9.49
    friction: float = 0.46


def lead_angle_deg(lead_mm: float, mean_diameter_mm: float) -> float:
    """Helix lead angle of a screw thread, in degrees.

    >>> round(lead_angle_deg(0.35, 2.50), 2)
    2.55
    """
    if lead_mm <= 0 or mean_diameter_mm <= 0:
        raise TransmissionError("lead and mean diameter must be positive")
    return math.degrees(math.atan(lead_mm / (math.pi * mean_diameter_mm)))


def friction_angle_deg(friction: float) -> float:
    """Friction angle arctan(mu) of a screw interface, in degrees.

    >>> round(friction_angle_deg(0.46), 2)
    24.7
    """
    if friction < 0:
        raise TransmissionError("friction coefficient must be non-negative")
    return math.degrees(math.atan(friction))


def self_lock_margin_deg(lead_mm: float, mean_diameter_mm: float,
                         friction: float) -> float:
    """Friction angle minus lead angle; positive means self-locking."""
    return friction_angle_deg(friction) - lead_angle_deg(lead_mm, mean_diameter_mm)


def is_self_locking(lead_mm: float, mean_diameter_mm: float,
                    friction: float) -> bool:
    """True iff the thread cannot be back-driven (strict inequality)."""
    return self_lock_margin_deg(lead_mm, mean_diameter_mm, friction) > 0.0


def axial_force_n(torque_nmm: float, screw: ScrewParams) -> float:
    """Axial nut force produced by a driving torque on the screw.

    Inverse of the raising-torque relation for a square-thread power
    screw: W = 2*T*(pi*d - mu*l) / (d*(l + pi*mu*d)).
    """
    d = screw.mean_diameter_mm
    l = screw.lead_mm
    mu = screw.friction
    return 2.0 * torque_nmm * (math.pi * d - mu * l) / (d * (l + math.pi * mu * d))


# -- Rocker geometry -------------------------------------------------------
#
# Each flexion joint is driven by a two-link rocker: the screw is anchored
# on the lower link at distance `a` from the joint axis, and the nut is
# pinned to the upper link at distance `b`.  The anchor-to-pivot span is
# the variable side of a triangle with fixed sides a and b.  Nut travel s
# is measured from the collinear closure of that triangle, so the span is
# d(s) = |a - b| + s and s = 0 is the fully folded boundary.


@dataclass(frozen=True)
class RockerGeometry:
    """Two-link rocker converting nut travel to joint rotation."""

    a_mm: float          # joint axis to screw anchor, on the lower link
    b_mm: float          # joint axis to nut pivot, on the upper link
    theta0_rad: float    # interior-angle offset at zero joint angle
    sign: int = 1        # +1: joint angle grows as the nut travels outward

    def __post_init__(self) -> None:
        if self.a_mm <= 0 or self.b_mm <= 0:
            raise TransmissionError("rocker link offsets must be positive")
        if self.sign not in (-1, 1):
            raise TransmissionError("rocker sign must be +1 or -1")

    @property
    def max_travel_mm(self) -> float:
        """Travel at which the rocker unfolds flat (triangle degenerates)."""
        return 2.0 * min(self.a_mm, self.b_mm)

    def span_mm(self, travel_mm: float) -> float:
        """Anchor-to-pivot distance at a given nut travel."""
        return abs(self.a_mm - self.b_mm) + travel_mm


def _interior_angle_rad(rocker: RockerGeometry, travel_mm: float) -> float:
    a, b = rocker.a_mm, rocker.b_mm
    d = rocker.span_mm(travel_mm)
    # Half-angle form of the law of cosines: acos of the raw cosine ratio
    # loses half the working precision near the folded boundary (cos -> 1),
    # while these factored products stay exact at both boundaries because
    # d - |a - b| == travel and a + b - d == max_travel - travel identically.
    folded = travel_mm * (d + abs(a - b))
    flat = (rocker.max_travel_mm - travel_mm) * (a + b + d)
    return 2.0 * math.atan2(math.sqrt(max(0.0, folded)),
                            math.sqrt(max(0.0, flat)))


def nut_travel_to_joint_angle(rocker: RockerGeometry, travel_mm: float,
                              stroke_mm: float | None = None) -> float:
    """Joint angle (degrees) at a given nut travel.

    The interior angle follows the law of cosines on the rocker triangle;
    both degenerate boundaries (folded, travel 0, and flat,
    travel 2*min(a, b)) are reported exactly at the boundary.
    """
    if travel_mm < 0.0 or travel_mm > rocker.max_travel_mm:
        raise TravelRangeError(
            f"travel {travel_mm:.6g} mm outside feasible [0, "
            f"{rocker.max_travel_mm:.6g}] mm")
    if stroke_mm is not None and travel_mm > stroke_mm:
        raise StrokeRangeError(
            f"travel {travel_mm:.6g} mm beyond stroke {stroke_mm:.6g} mm")
    psi = _interior_angle_rad(rocker, travel_mm)
    return math.degrees(rocker.sign * (psi - rocker.theta0_rad))


def joint_angle_to_nut_travel(rocker: RockerGeometry, angle_deg: float,
                              limits_deg: tuple[float, float] | None = None,
                              ) -> float:
    """Nut travel (mm) that produces a given joint angle."""
    if limits_deg is not None:
        lo, hi = limits_deg
        if angle_deg < lo or angle_deg > hi:
            raise JointRangeError(
                f"angle {angle_deg:.6g} deg outside limits "
                f"[{lo:.6g}, {hi:.6g}] deg")
    psi = rocker.theta0_rad + rocker.sign * math.radians(angle_deg)
    if psi < 0.0 or psi > math.pi:
        raise JointRangeError(
            f"angle {angle_deg:.6g} deg maps outside the rocker's fold range")
    a, b = rocker.a_mm, rocker.b_mm
    d = math.sqrt(max(0.0, a * a + b * b - 2.0 * a * b * math.cos(psi)))
    return d - abs(a - b)


def moment_arm_mm(rocker: RockerGeometry, angle_deg: float) -> float:
    """Perpendicular distance from the joint axis to the screw's line of action."""
    psi = rocker.theta0_rad + rocker.sign * math.radians(angle_deg)
    if psi <= 0.0 or psi >= math.pi:
        raise DegenerateGeometryError(
            f"rocker is collinear at {angle_deg:.6g} deg; no moment arm")
    a, b = rocker.a_mm, rocker.b_mm
    d = math.sqrt(a * a + b * b - 2.0 * a * b * math.cos(psi))
    return a * b * math.sin(psi) / d


def calibrate_rocker(stroke_mm: float, angle_min_deg: float,
                     angle_max_deg: float, a_mm: float) -> RockerGeometry:
    """Solve (b, theta0) so travel 0 hits angle_min and full stroke hits angle_max.

    The folded boundary pins theta0 directly; the stroke endpoint is linear
    in b on each fold branch, so both candidate geometries are closed-form.
    The branch with the nut pivot farther out (b >= a) is preferred when
    both are feasible.
    """
    if stroke_mm <= 0 or a_mm <= 0:
        raise CalibrationError("stroke and anchor offset must be positive")
    total_rad = math.radians(angle_max_deg - angle_min_deg)
    if not 0.0 < total_rad < math.pi:
        raise CalibrationError(
            f"endpoint span {angle_max_deg - angle_min_deg:.6g} deg not in (0, 180)")
    theta0 = -math.radians(angle_min_deg)
    k = 1.0 - math.cos(total_rad)

    candidates = []
    denom_high = 2.0 * (stroke_mm - a_mm * k)
    if denom_high > 0.0:
        b = stroke_mm * (2.0 * a_mm - stroke_mm) / denom_high
        if b >= a_mm and stroke_mm < 2.0 * a_mm:
            candidates.append(b)
    b = stroke_mm * (2.0 * a_mm + stroke_mm) / (2.0 * (a_mm * k + stroke_mm))
    if b <= a_mm and stroke_mm < 2.0 * b:
        candidates.append(b)
    if not candidates:
        raise CalibrationError(
            f"no rocker with anchor {a_mm:.6g} mm spans "
            f"{math.degrees(total_rad):.6g} deg over a {stroke_mm:.6g} mm stroke")
    return RockerGeometry(a_mm=a_mm, b_mm=candidates[0], theta0_rad=theta0, sign=1)


# -- Coupled abduction train ------------------------------------------------


@dataclass(frozen=True)
class WormBranch:
    """One finger's worm-and-wheel branch on the shared abduction shaft."""

    lead_mm: float
    thread_hand: str        # "left" or "right"
    wheel_radius_mm: float

    def __post_init__(self) -> None:
        if self.thread_hand not in ("left", "right"):
            raise TransmissionError(
                f"thread hand must be 'left' or 'right', got {self.thread_hand!r}")
        if self.lead_mm <= 0 or self.wheel_radius_mm <= 0:
            raise TransmissionError("worm lead and wheel radius must be positive")

    @property
    def sign(self) -> int:
        """Rotation sense of the wheel for positive shaft rotation."""
        return 1 if self.thread_hand == "left" else -1


@dataclass(frozen=True)
class AbductionTrain:
    """Servo -> bevel pair -> per-finger worm branches.

    Positive servo rotation spreads the fingers: the left-hand thread on
    the index wheel turns it opposite to the right-hand ring and pinky
    wheels, so index swings radially while ring and pinky swing ulnarly.
    """

    branches: dict[str, WormBranch]
    pinion_teeth: int = 12
    bevel_teeth: int = 24
    servo_min_deg: float = -90.0
    servo_max_deg: float = 90.0

    def ratio(self, digit: str) -> float:
        """Signed finger-degrees per servo-degree for one branch."""
        br = self.branches[digit]
        reduction = (self.pinion_teeth / self.bevel_teeth) \
            * br.lead_mm / (2.0 * math.pi * br.wheel_radius_mm)
        return br.sign * reduction


def abduction_map(train: AbductionTrain, servo_deg: float) -> dict[str, float]:
    """Per-finger abduction angles (degrees) for a servo angle."""
    if servo_deg < train.servo_min_deg or servo_deg > train.servo_max_deg:
        raise JointRangeError(
            f"servo angle {servo_deg:.6g} deg outside "
            f"[{train.servo_min_deg:.6g}, {train.servo_max_deg:.6g}] deg")
    return {digit: train.ratio(digit) * servo_deg for digit in train.branches}


def calibrate_wheel_radii(spans_deg: dict[str, float],
                          leads_mm: dict[str, float],
                          hands: dict[str, str],
                          pinion_teeth: int = 12,
                          bevel_teeth: int = 24,
                          servo_min_deg: float = -90.0,
                          servo_max_deg: float = 90.0) -> AbductionTrain:
    """Size each wheel so the full servo sweep spans each finger's total."""
    servo_span = servo_max_deg - servo_min_deg
    if servo_span <= 0:
        raise CalibrationError("servo span must be positive")
    branches = {}
    for digit, span in spans_deg.items():
        if span <= 0:
            raise CalibrationError(f"{digit}: abduction span must be positive")
        radius = (pinion_teeth / bevel_teeth) * leads_mm[digit] \
            * servo_span / (2.0 * math.pi * span)
        branches[digit] = WormBranch(lead_mm=leads_mm[digit],
                                     thread_hand=hands[digit],
                                     wheel_radius_mm=radius)
    return AbductionTrain(branches=branches, pinion_teeth=pinion_teeth,
                          bevel_teeth=bevel_teeth,
                          servo_min_deg=servo_min_deg,
                          servo_max_deg=servo_max_deg)


# -- Static force balance ----------------------------------------------------


@dataclass(frozen=True)
class FlexChain:
    """Planar flexion chain of one digit: links plus per-joint drives."""

    link_lengths_mm: tuple[float, ...]
    rockers: tuple[RockerGeometry, ...]
    screws: tuple[ScrewParams, ...]

    def __post_init__(self) -> None:
        n = len(self.link_lengths_mm)
        if not (len(self.rockers) == len(self.screws) == n) or n == 0:
            raise TransmissionError("chain needs one link, rocker and screw per joint")


@dataclass(frozen=True)
class ForceBalance:
    """Weakest-link fingertip force and its per-joint breakdown."""

    force_n: float
    limiting_joint: int
    joint_torques_nmm: tuple[float, ...]
    levers_mm: tuple[float, ...]


def _planar_joints(chain: FlexChain, angles_deg: list[float] | tuple[float, ...],
                   contact_mm: float | None):
    """Joint positions, contact point and distal axis in the flexion plane."""
    if len(angles_deg) != len(chain.link_lengths_mm):
        raise TransmissionError("one angle per joint required")
    if contact_mm is None:
        contact_mm = chain.link_lengths_mm[-1]
    joints = []
    x = y = 0.0
    heading = 0.0
    for angle_deg, link in zip(angles_deg, chain.link_lengths_mm):
        joints.append((x, y))
        heading += math.radians(angle_deg)
        x += link * math.sin(heading)
        y += link * math.cos(heading)
    tangent = (math.sin(heading), math.cos(heading))
    base = joints[-1]
    contact = (base[0] + contact_mm * tangent[0],
               base[1] + contact_mm * tangent[1])
    return joints, contact, tangent


def static_fingertip_force(chain: FlexChain,
                           angles_deg: list[float] | tuple[float, ...],
                           torques_nmm: list[float] | tuple[float, ...],
                           contact_mm: float | None = None) -> ForceBalance:
    """Largest normal force the chain can exert at the contact point.

    Each motor torque becomes an axial nut force, then a joint torque
    through the rocker's moment arm.  The fingertip force is capped by
    whichever joint saturates first: min over joints of torque divided by
    that joint's perpendicular lever to the contact force line.
    """
    if len(torques_nmm) != len(chain.link_lengths_mm):
        raise TransmissionError("one motor torque per joint required")
    joints, contact, tangent = _planar_joints(chain, angles_deg, contact_mm)
    torques = []
    levers = []
    best = math.inf
    limiting = 0
    for i, (rocker, screw) in enumerate(zip(chain.rockers, chain.screws)):
        w = axial_force_n(torques_nmm[i], screw)
        tau = w * moment_arm_mm(rocker, angles_deg[i])
        # Contact force acts normal to the distal link, so the lever about
        # joint i is the projection of (contact - joint) on the link axis.
        lever = abs((contact[0] - joints[i][0]) * tangent[0]
                    + (contact[1] - joints[i][1]) * tangent[1])
        torques.append(tau)
        levers.append(lever)
        cap = tau / lever if lever > 0.0 else math.inf
        if cap < best:
            best = cap
            limiting = i
    return ForceBalance(force_n=best, limiting_joint=limiting,
                        joint_torques_nmm=tuple(torques),
                        levers_mm=tuple(levers))


def back_drive_travel(chain: FlexChain,
                      angles_deg: list[float] | tuple[float, ...],
                      tip_load_n: float,
                      contact_mm: float | None = None) -> tuple[float, ...]:
    """Nut travel produced by an external fingertip load with motors idle.

    Self-locking screws hold position regardless of the load, so their
    back-driven travel is exactly zero.  A non-locking screw offers no
    holding torque at all; its travel is reported as unbounded (inf).
    """
    if len(angles_deg) != len(chain.link_lengths_mm):
        raise TransmissionError("one angle per joint required")
    if tip_load_n < 0.0:
        raise TransmissionError("external load must be non-negative")
    moved = []
    for screw in chain.screws:
        locking = is_self_locking(screw.lead_mm, screw.mean_diameter_mm,
                                  screw.friction)
        moved.append(0.0 if locking else math.inf)
    return tuple(moved)
