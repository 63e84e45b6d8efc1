"""Two-DoF parallel wrist: a universal joint steered by two linear actuators.

The hand frame has +z distal, +x palmar and +y radial, with the universal
joint at the origin.  Flexion-extension (fe) rotates about the fixed
transverse axis y, then radial-ulnar deviation (rud) rotates about the
carried sagittal axis, so the platform rotation is R = Ry(fe) * Rx(-rud)
with positive fe flexing palmarly and positive rud deviating radially.

Both actuators sit on the dorsal side, 90 degrees apart in azimuth, with
spherical rod ends whose axes match the rod direction at the neutral pose
(a rise of `axis_tilt_deg` above the platform plane).  A pose is reachable
when both rod lengths stay inside the actuator stroke window and no rod
end swivels past its limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class WristError(ValueError):
    """Base class for wrist geometry and range violations."""


class EnvelopeError(WristError):
    """Requested pose is outside the reachable envelope."""

    def __init__(self, message: str, binding: str):
        super().__init__(message)
        self.binding = binding  # which constraint rejected the pose


class ActuatorRangeError(WristError):
    """Actuator length outside the stroke window."""


class FkConvergenceError(WristError):
    """Forward kinematics found no pose for the given lengths."""


class FkAmbiguityError(WristError):
    """Forward kinematics found more than one pose for the given lengths."""

    def __init__(self, message: str, candidates: list[tuple[float, float]]):
        super().__init__(message)
        self.candidates = candidates


@dataclass(frozen=True)
class WristPose:
    """Commanded wrist orientation in degrees."""

    fe_deg: float = 0.0   # + palmar flexion, - extension
    rud_deg: float = 0.0  # + radial deviation, - ulnar


@dataclass(frozen=True)
class WristIkSolution:
    """Actuator state realizing a pose."""

    lengths_mm: tuple[float, float]
    swivels_deg: tuple[float, float]   # worst rod-end deflection per actuator


@dataclass(frozen=True)
class WristGeometry:
    """Anchor layout and actuator limits of the wrist stage."""

    lower_radius_mm: float       # lower anchors, fixed platform, z = lower_z
    upper_radius_mm: float       # upper anchors, moving platform, z = upper_z
    lower_z_mm: float
    upper_z_mm: float
    min_length_mm: float         # fully retracted actuator length
    stroke_mm: float = 26.92
    swivel_limit_deg: float = 40.0
    azimuth1_deg: float = 135.0  # measured from +x (palmar); dorsal is 180
    azimuth2_deg: float = 225.0

    def __post_init__(self) -> None:
        if self.lower_radius_mm <= 0 or self.upper_radius_mm <= 0:
            raise WristError("anchor radii must be positive")
        if self.min_length_mm <= 0 or self.stroke_mm <= 0:
            raise WristError("actuator lengths must be positive")
        if not 0 < self.swivel_limit_deg < 90:
            raise WristError("swivel limit must be in (0, 90) deg")

    @property
    def max_length_mm(self) -> float:
        return self.min_length_mm + self.stroke_mm

    @property
    def axis_tilt_deg(self) -> float:
        """Rise of the rod (and rod-end axes) above horizontal at neutral."""
        planar = abs(self.lower_radius_mm - self.upper_radius_mm)
        return math.degrees(math.atan2(self.upper_z_mm - self.lower_z_mm, planar))

    @property
    def neutral_length_mm(self) -> float:
        lower, upper = _anchor_points(self)
        return float(np.linalg.norm(upper[0] - lower[0]))


def _anchor_points(geom: WristGeometry):
    """Lower anchors (world) and upper anchors (platform body frame)."""
    lower = np.empty((2, 3))
    upper = np.empty((2, 3))
    for i, az_deg in enumerate((geom.azimuth1_deg, geom.azimuth2_deg)):
        az = math.radians(az_deg)
        lower[i] = (geom.lower_radius_mm * math.cos(az),
                    geom.lower_radius_mm * math.sin(az), geom.lower_z_mm)
        upper[i] = (geom.upper_radius_mm * math.cos(az),
                    geom.upper_radius_mm * math.sin(az), geom.upper_z_mm)
    return lower, upper


def platform_rotation(fe_deg: float, rud_deg: float) -> np.ndarray:
    """Rotation of the moving platform: fe about y, then rud about carried x."""
    fe = math.radians(fe_deg)
    rud = math.radians(rud_deg)
    ry = np.array([[math.cos(fe), 0.0, math.sin(fe)],
                   [0.0, 1.0, 0.0],
                   [-math.sin(fe), 0.0, math.cos(fe)]])
    rx = np.array([[1.0, 0.0, 0.0],
                   [0.0, math.cos(rud), math.sin(rud)],
                   [0.0, -math.sin(rud), math.cos(rud)]])
    return ry @ rx


def _solve_rods(geom: WristGeometry, fe_deg: float, rud_deg: float):
    """Rod lengths and worst-end swivel angles for a pose, unchecked."""
    lower, upper = _anchor_points(geom)
    rot = platform_rotation(fe_deg, rud_deg)
    axes = (upper - lower)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)  # rod dirs at neutral

    moved = upper @ rot.T
    rods = moved - lower
    lengths = np.linalg.norm(rods, axis=1)
    units = rods / lengths[:, None]

    upper_axes = axes @ rot.T          # rod-end axes carried by the platform
    cos_up = np.clip(np.sum(units * upper_axes, axis=1), -1.0, 1.0)
    cos_lo = np.clip(np.sum(units * axes, axis=1), -1.0, 1.0)
    swivels = np.degrees(np.maximum(np.arccos(cos_up), np.arccos(cos_lo)))
    return lengths, swivels


def wrist_ik(geom: WristGeometry, pose: WristPose) -> WristIkSolution:
    """Actuator lengths and swivel angles realizing a wrist pose.

    Raises EnvelopeError naming the binding constraint when the pose is
    unreachable.
    """
    lengths, swivels = _solve_rods(geom, pose.fe_deg, pose.rud_deg)
    for i in range(2):
        if lengths[i] < geom.min_length_mm - 1e-9:
            raise EnvelopeError(
                f"pose ({pose.fe_deg:.3f}, {pose.rud_deg:.3f}) deg needs actuator "
                f"{i + 1} at {lengths[i]:.3f} mm, below retracted "
                f"{geom.min_length_mm:.3f} mm", binding=f"len{i + 1}:min")
        if lengths[i] > geom.max_length_mm + 1e-9:
            raise EnvelopeError(
                f"pose ({pose.fe_deg:.3f}, {pose.rud_deg:.3f}) deg needs actuator "
                f"{i + 1} at {lengths[i]:.3f} mm, beyond extended "
                f"{geom.max_length_mm:.3f} mm", binding=f"len{i + 1}:max")
        if swivels[i] > geom.swivel_limit_deg + 1e-9:
            raise EnvelopeError(
                f"pose ({pose.fe_deg:.3f}, {pose.rud_deg:.3f}) deg swivels rod "
                f"{i + 1} to {swivels[i]:.3f} deg, past "
                f"{geom.swivel_limit_deg:.3f} deg", binding=f"swivel{i + 1}")
    return WristIkSolution(lengths_mm=(float(lengths[0]), float(lengths[1])),
                           swivels_deg=(float(swivels[0]), float(swivels[1])))


def _length_jacobian(geom: WristGeometry, fe_deg: float, rud_deg: float):
    """d(lengths)/d(fe, rud) in mm per radian, analytic."""
    lower, upper = _anchor_points(geom)
    rot = platform_rotation(fe_deg, rud_deg)
    moved = upper @ rot.T
    rods = moved - lower
    lengths = np.linalg.norm(rods, axis=1)
    units = rods / lengths[:, None]

    y_axis = np.array([0.0, 1.0, 0.0])
    fe = math.radians(fe_deg)
    ry_x = np.array([math.cos(fe), 0.0, -math.sin(fe)])  # Ry(fe) @ x_hat
    jac = np.empty((2, 2))
    for i in range(2):
        jac[i, 0] = units[i] @ np.cross(y_axis, moved[i])
        jac[i, 1] = units[i] @ (-np.cross(ry_x, moved[i]))
    return lengths, jac


def wrist_fk(geom: WristGeometry, lengths_mm: tuple[float, float],
             tol_mm: float = 1e-9) -> WristPose:
    """Pose realized by a pair of actuator lengths.

    Newton iterations from a spread of seeds; all distinct converged poses
    inside the search box are collected so an ambiguous length pair is
    reported rather than silently resolved.
    """
    target = np.asarray(lengths_mm, dtype=float)
    for i in range(2):
        if not geom.min_length_mm - 1e-9 <= target[i] <= geom.max_length_mm + 1e-9:
            raise ActuatorRangeError(
                f"length {target[i]:.3f} mm outside stroke window "
                f"[{geom.min_length_mm:.3f}, {geom.max_length_mm:.3f}] mm")

    solutions: list[tuple[float, float]] = []
    seeds = [(fe, rud) for fe in (-60.0, -20.0, 0.0, 20.0, 60.0)
             for rud in (-30.0, 0.0, 30.0)]
    for seed in seeds:
        pose = np.array(seed)
        converged = False
        for _ in range(60):
            lengths, jac = _length_jacobian(geom, pose[0], pose[1])
            residual = lengths - target
            if np.max(np.abs(residual)) < tol_mm:
                converged = True
                break
            try:
                step = np.linalg.solve(jac, -residual)
            except np.linalg.LinAlgError:
                break
            step_deg = np.degrees(step)
            scale = min(1.0, 20.0 / max(1e-12, np.max(np.abs(step_deg))))
            pose = pose + step_deg * scale
        if not converged or not (abs(pose[0]) <= 95 and abs(pose[1]) <= 95):
            continue
        # a candidate whose rod-end swivel exceeds the limit is not a pose
        # the hardware can hold, so it cannot disambiguate real lengths
        _, swivels = _solve_rods(geom, pose[0], pose[1])
        if np.max(swivels) > geom.swivel_limit_deg + 1e-9:
            continue
        if not any(abs(pose[0] - s[0]) < 1e-5 and abs(pose[1] - s[1]) < 1e-5
                   for s in solutions):
            solutions.append((float(pose[0]), float(pose[1])))

    if not solutions:
        raise FkConvergenceError(
            f"no pose found for lengths ({target[0]:.3f}, {target[1]:.3f}) mm")
    if len(solutions) > 1:
        raise FkAmbiguityError(
            f"lengths ({target[0]:.3f}, {target[1]:.3f}) mm admit "
            f"{len(solutions)} poses: {solutions}", candidates=solutions)
    return WristPose(fe_deg=solutions[0][0], rud_deg=solutions[0][1])


# -- Envelope scan ----------------------------------------------------------


@dataclass(frozen=True)
class WristEnvelope:
    """Feasibility scan of the pose plane on a regular grid."""

    grid_deg: float
    fe_deg: np.ndarray        # 1-D grid coordinates
    rud_deg: np.ndarray
    feasible: np.ndarray      # bool, shape (len(fe), len(rud))
    lengths_mm: np.ndarray    # shape (len(fe), len(rud), 2), required lengths
    swivels_deg: np.ndarray   # shape (len(fe), len(rud), 2)
    extremes_deg: dict[str, float]  # flexion/extension/radial/ulnar reach


def _vector_solve(geom: WristGeometry, fe_grid: np.ndarray, rud_grid: np.ndarray):
    """Vectorized rod lengths/swivels over a pose grid."""
    lower, upper = _anchor_points(geom)
    axes = upper - lower
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)

    fe = np.radians(fe_grid)[:, None]
    rud = np.radians(rud_grid)[None, :]
    cf, sf = np.cos(fe), np.sin(fe)
    cr, sr = np.cos(rud), np.sin(rud)
    # Rows of R = Ry(fe) @ Rx(-rud), broadcast over the grid.
    r00, r01, r02 = cf + 0 * cr, -sf * sr, sf * cr
    r10, r11, r12 = 0 * cf + 0 * cr, cr + 0 * cf, sr + 0 * cf
    r20, r21, r22 = -sf + 0 * cr, -cf * sr, cf * cr

    nfe, nrud = r00.shape
    lengths = np.empty((nfe, nrud, 2))
    swivels = np.empty((nfe, nrud, 2))
    for i in range(2):
        ux, uy, uz = upper[i]
        px = r00 * ux + r01 * uy + r02 * uz
        py = r10 * ux + r11 * uy + r12 * uz
        pz = r20 * ux + r21 * uy + r22 * uz
        rx_, ry_, rz_ = px - lower[i][0], py - lower[i][1], pz - lower[i][2]
        ln = np.sqrt(rx_ ** 2 + ry_ ** 2 + rz_ ** 2)
        lengths[:, :, i] = ln

        ax, ay, az = axes[i]
        # Upper rod-end axis carried by the platform rotation.
        uax = r00 * ax + r01 * ay + r02 * az
        uay = r10 * ax + r11 * ay + r12 * az
        uaz = r20 * ax + r21 * ay + r22 * az
        cos_up = np.clip((rx_ * uax + ry_ * uay + rz_ * uaz) / ln, -1.0, 1.0)
        cos_lo = np.clip((rx_ * ax + ry_ * ay + rz_ * az) / ln, -1.0, 1.0)
        swivels[:, :, i] = np.degrees(
            np.maximum(np.arccos(cos_up), np.arccos(cos_lo)))
    return lengths, swivels


def _axis_reach(values_ok: np.ndarray, center: int, step: int) -> int:
    """Steps of contiguous feasibility from the center along one direction."""
    reach = 0
    idx = center
    while True:
        idx += step
        if idx < 0 or idx >= len(values_ok) or not values_ok[idx]:
            return reach
        reach += 1


def wrist_envelope(geom: WristGeometry, grid_deg: float = 0.5,
                   fe_range_deg: tuple[float, float] = (-90.0, 90.0),
                   rud_range_deg: tuple[float, float] = (-90.0, 90.0),
                   ) -> WristEnvelope:
    """Scan the pose plane and report reach along the four principal axes.

    Reach is the contiguous feasible extent from neutral, in grid steps,
    so disconnected feasible islands do not inflate the envelope.
    """
    if grid_deg <= 0:
        raise WristError("grid step must be positive")
    n_neg = int(round(-fe_range_deg[0] / grid_deg))
    n_pos = int(round(fe_range_deg[1] / grid_deg))
    fe_grid = np.arange(-n_neg, n_pos + 1) * grid_deg
    m_neg = int(round(-rud_range_deg[0] / grid_deg))
    m_pos = int(round(rud_range_deg[1] / grid_deg))
    rud_grid = np.arange(-m_neg, m_pos + 1) * grid_deg

    lengths, swivels = _vector_solve(geom, fe_grid, rud_grid)
    ok = ((lengths >= geom.min_length_mm - 1e-9)
          & (lengths <= geom.max_length_mm + 1e-9)
          & (swivels <= geom.swivel_limit_deg + 1e-9)).all(axis=2)

    ife = n_neg   # index of fe = 0
    irud = m_neg  # index of rud = 0
    if not ok[ife, irud]:
        raise EnvelopeError("neutral pose is not feasible", binding="neutral")
    extremes = {
        "flexion_deg": _axis_reach(ok[:, irud], ife, +1) * grid_deg,
        "extension_deg": _axis_reach(ok[:, irud], ife, -1) * grid_deg,
        "radial_deg": _axis_reach(ok[ife, :], irud, +1) * grid_deg,
        "ulnar_deg": _axis_reach(ok[ife, :], irud, -1) * grid_deg,
    }
    return WristEnvelope(grid_deg=grid_deg, fe_deg=fe_grid, rud_deg=rud_grid,
                         feasible=ok, lengths_mm=lengths, swivels_deg=swivels,
                         extremes_deg=extremes)


def envelope_to_csv(env: WristEnvelope) -> str:
    """Envelope grid as CSV text (one row per scanned pose)."""
    lines = ["fe_deg,rud_deg,feasible,len1_mm,len2_mm,swivel1_deg,swivel2_deg"]
    for i, fe in enumerate(env.fe_deg):
        for j, rud in enumerate(env.rud_deg):
            lines.append(
                f"{fe:.3f},{rud:.3f},{int(env.feasible[i, j])},"
                f"{env.lengths_mm[i, j, 0]:.6f},{env.lengths_mm[i, j, 1]:.6f},"
                f"{env.swivels_deg[i, j, 0]:.6f},{env.swivels_deg[i, j, 1]:.6f}")
    return "\n".join(lines) + "\n"


def parse_envelope_csv(text: str) -> list[dict]:
    """Parse rows produced by envelope_to_csv."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    expected = ["fe_deg", "rud_deg", "feasible", "len1_mm", "len2_mm",
                "swivel1_deg", "swivel2_deg"]
    if header != expected:
        raise WristError(f"unexpected envelope CSV header: {header}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append({
            "fe_deg": float(parts[0]), "rud_deg": float(parts[1]),
            "feasible": bool(int(parts[2])),
            "len1_mm": float(parts[3]), "len2_mm": float(parts[4]),
            "swivel1_deg": float(parts[5]), "swivel2_deg": float(parts[6]),
        })
    return rows


# -- One-time anchor calibration ---------------------------------------------


def constraint_margins(geom: WristGeometry, fe_deg: float,
                       rud_deg: float) -> dict[str, float]:
    """Slack of every rod constraint at a pose (mm for lengths, deg for
    swivels).  Negative slack means the constraint is violated."""
    lengths, swivels = _solve_rods(geom, fe_deg, rud_deg)
    out: dict[str, float] = {}
    for i in range(2):
        out[f"len{i + 1}:min"] = float(lengths[i] - geom.min_length_mm)
        out[f"len{i + 1}:max"] = float(geom.max_length_mm - lengths[i])
        out[f"swivel{i + 1}"] = float(geom.swivel_limit_deg - swivels[i])
    return out


def binding_constraints(geom: WristGeometry, fe_deg: float, rud_deg: float,
                        tol: float = 0.05) -> tuple[str, ...]:
    """Names of the constraints active (slack below tol) at a pose."""
    margins = constraint_margins(geom, fe_deg, rud_deg)
    return tuple(sorted(name for name, slack in margins.items() if slack <= tol))


def _continuous_reach(geom: WristGeometry, direction: tuple[float, float],
                      limit_deg: float = 90.0) -> float:
    """Feasible extent (deg) from neutral along one pose-plane direction."""

    def margin(t: float) -> float:
        lengths, swivels = _solve_rods(geom, direction[0] * t, direction[1] * t)
        return min(float(np.min(lengths) - geom.min_length_mm),
                   float(geom.max_length_mm - np.max(lengths)),
                   float(geom.swivel_limit_deg - np.max(swivels)))

    if margin(0.0) < 0:
        return 0.0
    if margin(limit_deg) >= 0:
        return limit_deg
    lo, hi = 0.0, limit_deg
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def calibrate_wrist_geometry(flexion_deg: float = 52.0,
                             extension_deg: float = 18.0,
                             deviation_deg: float = 18.0,
                             stroke_mm: float = 26.92,
                             swivel_limit_deg: float = 40.0,
                             axis_tilt_deg: float = 30.0) -> WristGeometry:
    """Search anchor placement so axis reach matches the targets.

    The rod rise at neutral is pinned to the rod-end axis tilt, leaving
    the upper anchor radius, the planar anchor offset, the lower anchor
    drop and the retracted length to the search.
    """
    from scipy import optimize

    tilt = math.radians(axis_tilt_deg)

    def build(params: np.ndarray) -> WristGeometry:
        # The rod rises at the axis tilt at neutral, so the neutral length
        # is planar / cos(tilt); `frac` places the stroke window so that
        # `frac * stroke` of travel remains below neutral (for extension).
        upper_r, planar, lower_z, frac = params
        upper_z = lower_z + planar * math.tan(tilt)
        neutral = planar / math.cos(tilt)
        return WristGeometry(
            lower_radius_mm=upper_r + planar, upper_radius_mm=upper_r,
            lower_z_mm=lower_z, upper_z_mm=upper_z,
            min_length_mm=neutral - frac * stroke_mm, stroke_mm=stroke_mm,
            swivel_limit_deg=swivel_limit_deg)

    def cost(params: np.ndarray) -> float:
        upper_r, planar, lower_z, frac = params
        if not (5.0 <= upper_r <= 90.0 and 3.0 <= planar <= 70.0
                and -60.0 <= lower_z <= 0.0 and 0.05 <= frac <= 0.95):
            return 1e6
        if planar / math.cos(tilt) - frac * stroke_mm <= 1.0:
            return 1e6
        geom = build(params)
        flex = _continuous_reach(geom, (1.0, 0.0))
        ext = _continuous_reach(geom, (-1.0, 0.0))
        rad = _continuous_reach(geom, (0.0, 1.0))
        uln = _continuous_reach(geom, (0.0, -1.0))
        return ((flex - flexion_deg) ** 2 + (ext - extension_deg) ** 2
                + (rad - deviation_deg) ** 2 + (uln - deviation_deg) ** 2)

    best = None
    for start in ((30.0, 25.0, -10.0, 0.30), (45.0, 30.0, -5.0, 0.25),
                  (25.0, 15.0, -15.0, 0.40), (35.0, 20.0, 0.0, 0.35)):
        res = optimize.minimize(cost, np.array(start), method="Nelder-Mead",
                                options={"xatol": 1e-7, "fatol": 1e-12,
                                         "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun > 0.25:
        raise WristError(
            f"anchor calibration did not reach the envelope targets "
            f"(residual {best.fun if best else float('nan'):.4f})")
    return build(best.x)
