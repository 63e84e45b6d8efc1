"""Forward and inverse kinematics of the full hand.

Frames: the palm frame sits at the wrist universal joint with +z distal,
+x palmar, +y radial.  Digit chains are described in the palm frame; the
base frame is the palm frame rotated by the wrist pose, so at a neutral
wrist the two coincide.

Digit chains rotate about local axes: flexion joints about local +y,
finger abduction about local -x (positive abduction swings radially),
and the thumb base sweep about local +x (positive sweep carries the
thumb across the palm toward opposition).  Links run along local +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    COMMANDED_VALUES,
    DIGITS,
    HUMAN_ROM_DEG,
    JOINT_NAMES,
    HandDescription,
    HandState,
)

AXIS_FLEX = np.array([0.0, 1.0, 0.0])
AXIS_SWEEP = np.array([1.0, 0.0, 0.0])
AXIS_ABDUCT = np.array([-1.0, 0.0, 0.0])


class KinematicsError(ValueError):
    pass


@dataclass(frozen=True)
class ChainStep:
    """One digit joint: rotation about a local axis, then a link along +z."""

    joint: str            # physical joint name, e.g. "d2.mcp" or "d2.abd"
    axis: np.ndarray      # unit axis in the local frame before the joint
    link_mm: float        # translation after the joint (0 for coincident joints)


def digit_chain(desc: HandDescription, digit: str) -> tuple[ChainStep, ...]:
    model = desc.digits[digit]
    prefix = digit.lower()
    links = model.link_lengths_mm
    if digit == "D1":
        return (
            ChainStep(f"{prefix}.cmc", AXIS_SWEEP, links[0]),
            ChainStep(f"{prefix}.mcp", AXIS_FLEX, links[1]),
            ChainStep(f"{prefix}.ip", AXIS_FLEX, links[2]),
        )
    steps = []
    if model.abduction is not None:
        steps.append(ChainStep(f"{prefix}.abd", AXIS_ABDUCT, 0.0))
    steps.append(ChainStep(f"{prefix}.mcp", AXIS_FLEX, links[0]))
    steps.append(ChainStep(f"{prefix}.pip", AXIS_FLEX, links[1]))
    steps.append(ChainStep(f"{prefix}.dip", AXIS_FLEX, links[2]))
    return tuple(steps)


def _rodrigues(axis: np.ndarray, theta_rad: np.ndarray) -> np.ndarray:
    """Rotation matrices about per-row unit axes.  axis (N,3) -> (N,3,3)."""
    n = axis.shape[0]
    c = np.cos(theta_rad)
    s = np.sin(theta_rad)
    ax = axis[:, 0], axis[:, 1], axis[:, 2]
    zero = np.zeros(n)
    cross = np.stack([
        np.stack([zero, -ax[2], ax[1]], axis=-1),
        np.stack([ax[2], zero, -ax[0]], axis=-1),
        np.stack([-ax[1], ax[0], zero], axis=-1),
    ], axis=1)
    outer = axis[:, :, None] * axis[:, None, :]
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    return c[:, None, None] * eye + s[:, None, None] * cross \
        + (1.0 - c[:, None, None]) * outer


def _wrist_rotations(wrist_deg: np.ndarray) -> np.ndarray:
    """Platform rotations for (N,2) wrist poses (fe, rud) in degrees."""
    fe = np.radians(wrist_deg[:, 0])
    rud = np.radians(wrist_deg[:, 1])
    cf, sf = np.cos(fe), np.sin(fe)
    cr, sr = np.cos(rud), np.sin(rud)
    n = wrist_deg.shape[0]
    rot = np.empty((n, 3, 3))
    rot[:, 0, 0] = cf
    rot[:, 0, 1] = -sf * sr
    rot[:, 0, 2] = sf * cr
    rot[:, 1, 0] = 0.0
    rot[:, 1, 1] = cr
    rot[:, 1, 2] = sr
    rot[:, 2, 0] = -sf
    rot[:, 2, 1] = -cf * sr
    rot[:, 2, 2] = cf * cr
    return rot


@dataclass(frozen=True)
class DigitFk:
    """Batched digit FK: joint origins, joint axes and the tip, base frame."""

    joints: np.ndarray      # (N, k, 3) joint origins
    axes: np.ndarray        # (N, k, 3) world rotation axes
    tip: np.ndarray         # (N, 3)
    names: tuple[str, ...]  # chain joint names, length k


def fk_digit(desc: HandDescription, digit: str, angles_deg: np.ndarray,
             wrist_deg: np.ndarray | None = None) -> DigitFk:
    """Chain FK for one digit over a batch of joint angle rows.

    angles_deg has one column per chain joint (abduction included for
    coupled fingers).  wrist_deg is an optional (N, 2) block of
    flexion-extension and radial-ulnar angles; omitted means neutral.
    """
    steps = digit_chain(desc, digit)
    angles = np.atleast_2d(np.asarray(angles_deg, dtype=float))
    n, k = angles.shape
    if k != len(steps):
        raise KinematicsError(
            f"{digit} chain expects {len(steps)} angles per row, got {k}")
    model = desc.digits[digit]
    if wrist_deg is None:
        base = np.broadcast_to(np.eye(3), (n, 3, 3))
    else:
        wrist = np.atleast_2d(np.asarray(wrist_deg, dtype=float))
        if wrist.shape != (n, 2):
            raise KinematicsError(f"wrist block must be ({n}, 2), got {wrist.shape}")
        base = _wrist_rotations(wrist)

    orient = base @ model.mount_frame
    pos = np.einsum("nij,j->ni", base, model.mount_position_mm)
    joints = np.empty((n, k, 3))
    axes = np.empty((n, k, 3))
    for idx, step in enumerate(steps):
        axis_world = np.einsum("nij,j->ni", orient, step.axis)
        joints[:, idx] = pos
        axes[:, idx] = axis_world
        rot = _rodrigues(axis_world, np.radians(angles[:, idx]))
        orient = rot @ orient
        if step.link_mm != 0.0:
            pos = pos + step.link_mm * orient[:, :, 2]
    return DigitFk(joints=joints, axes=axes, tip=pos,
                   names=tuple(s.joint for s in steps))


def _chain_angles(desc: HandDescription, digit: str,
                  state: HandState) -> np.ndarray:
    """Chain joint angles (one row) for a commanded state."""
    all_joints = desc.joint_angles(state)
    return np.array([[all_joints[s.joint] for s in digit_chain(desc, digit)]])


def fingertips(desc: HandDescription, state: HandState,
               apply_wrist: bool = True) -> dict[str, np.ndarray]:
    """Fingertip positions (mm) of all five digits for a commanded state."""
    wrist = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]]) \
        if apply_wrist else None
    out = {}
    for digit in DIGITS:
        fk = fk_digit(desc, digit, _chain_angles(desc, digit, state), wrist)
        out[digit] = fk.tip[0]
    return out


def digit_polyline(desc: HandDescription, digit: str, state: HandState,
                   apply_wrist: bool = True) -> np.ndarray:
    """Joint origins plus tip, for drawing the digit as a polyline."""
    wrist = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]]) \
        if apply_wrist else None
    fk = fk_digit(desc, digit, _chain_angles(desc, digit, state), wrist)
    pts = [fk.joints[0, i] for i in range(fk.joints.shape[1])]
    pts.append(fk.tip[0])
    return np.array(pts)


def hand_skeleton(desc: HandDescription, state: HandState) -> dict:
    """Skeleton for visualization: per-digit polylines plus palm outline."""
    wrist_pose = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]])
    rot = _wrist_rotations(wrist_pose)[0]
    outline_palm = np.array([
        [0.0, desc.palm_width_mm / 2, desc.wrist_length_mm],
        [0.0, desc.palm_width_mm / 2, desc.mcp_row_z_mm],
        [0.0, -desc.palm_width_mm / 2, desc.mcp_row_z_mm],
        [0.0, -desc.palm_width_mm / 2, desc.wrist_length_mm],
    ])
    return {
        "digits": {d: digit_polyline(desc, d, state) for d in DIGITS},
        "palm_outline": outline_palm @ rot.T,
        "wrist_rotation": rot,
    }


# -- Jacobian and inverse kinematics -----------------------------------------


@dataclass(frozen=True)
class PointTarget:
    """Cartesian target for one point on a digit."""

    digit: str
    point_mm: np.ndarray
    site: str = "tip"       # "tip" or "last" (origin of the last chain joint)
    weight: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "point_mm",
                           np.asarray(self.point_mm, dtype=float).reshape(3))
        if self.site not in ("tip", "last"):
            raise KinematicsError(f"unknown target site {self.site!r}")
        if self.weight <= 0:
            raise KinematicsError("target weight must be positive")


def _site_position(fk: DigitFk, site: str) -> np.ndarray:
    return fk.tip[0] if site == "tip" else fk.joints[0, -1]


def _stacked_jacobian(desc: HandDescription, state: HandState,
                      targets: list[PointTarget],
                      columns: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Weighted residual vector and Jacobian (mm per degree) at a state."""
    deg = math.pi / 180.0
    wrist = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]])
    col_index = {name: i for i, name in enumerate(columns)}
    jac = np.zeros((3 * len(targets), len(columns)))
    res = np.zeros(3 * len(targets))
    ratios = {f"{d.lower()}.abd": desc.abduction_train.ratio(d)
              for d in desc.abduction_train.branches}
    fe = math.radians(state.get("wrist.fe"))
    y_axis = np.array([0.0, 1.0, 0.0])
    rud_axis = -np.array([math.cos(fe), 0.0, -math.sin(fe)])  # -(Ry @ x)

    fks = {digit: fk_digit(desc, digit,
                           _chain_angles(desc, digit, state), wrist)
           for digit in {t.digit for t in targets}}
    for t_idx, target in enumerate(targets):
        fk = fks[target.digit]
        p_site = _site_position(fk, target.site)
        rows = slice(3 * t_idx, 3 * t_idx + 3)
        res[rows] = target.weight * (target.point_mm - p_site)
        for j, name in enumerate(fk.names):
            lever = np.cross(fk.axes[0, j], p_site - fk.joints[0, j]) * deg
            if name in ratios:
                if "abduction" in col_index:
                    jac[rows, col_index["abduction"]] += \
                        target.weight * ratios[name] * lever
            elif name in col_index:
                jac[rows, col_index[name]] = target.weight * lever
        if "wrist.fe" in col_index:
            jac[rows, col_index["wrist.fe"]] = \
                target.weight * np.cross(y_axis, p_site) * deg
        if "wrist.rud" in col_index:
            jac[rows, col_index["wrist.rud"]] = \
                target.weight * np.cross(rud_axis, p_site) * deg
    return res, jac


def _target_errors(desc: HandDescription, state: HandState,
                   targets: list[PointTarget]) -> np.ndarray:
    wrist = np.array([[state.get("wrist.fe"), state.get("wrist.rud")]])
    fks = {digit: fk_digit(desc, digit,
                           _chain_angles(desc, digit, state), wrist)
           for digit in {t.digit for t in targets}}
    errs = np.empty(len(targets))
    for i, target in enumerate(targets):
        errs[i] = float(np.linalg.norm(
            target.point_mm - _site_position(fks[target.digit], target.site)))
    return errs


@dataclass(frozen=True)
class IkResult:
    state: HandState
    converged: bool
    iterations: int
    error_mm: float                 # worst per-target distance
    target_errors_mm: tuple[float, ...] = field(default_factory=tuple)


def _ik_columns(desc: HandDescription, targets: list[PointTarget],
                use_wrist: bool, frozen: set[str]) -> list[str]:
    wanted: set[str] = set()
    coupled = {d for d in desc.abduction_train.branches}
    for target in targets:
        prefix = target.digit.lower()
        for joint in desc.digits[target.digit].joints:
            wanted.add(f"{prefix}.{joint.name}")
        if target.digit in coupled:
            wanted.add("abduction")
    if use_wrist:
        wanted.update(("wrist.fe", "wrist.rud"))
    return [n for n in COMMANDED_VALUES if n in wanted and n not in frozen]


def _descend(desc: HandDescription, targets: list[PointTarget],
             columns: list[str], state: HandState, tol_mm: float,
             max_iters: int, damping: float,
             step_limit_deg: float) -> IkResult:
    """One damped-least-squares descent from a given start state."""
    lims = desc.commanded_limits()

    def weighted_norm(st: HandState) -> float:
        res, _ = _stacked_jacobian(desc, st, targets, columns)
        return float(np.linalg.norm(res))

    best_norm = weighted_norm(state)
    iters = 0
    # gain-ratio damping schedule: the factor relaxes only as fast as the
    # local linear model earns it, so the rough far-from-goal phase stays
    # conservative while the endgame approaches an undamped Gauss-Newton
    # step instead of creeping at a fixed damping floor
    lam = damping
    lam_floor = damping * 1e-6
    lam_ceil = damping * 1e8
    for iters in range(1, max_iters + 1):
        errs = _target_errors(desc, state, targets)
        if errs.max() <= tol_mm:
            return IkResult(state=state, converged=True, iterations=iters - 1,
                            error_mm=float(errs.max()),
                            target_errors_mm=tuple(errs))
        res, jac = _stacked_jacobian(desc, state, targets, columns)
        scale = np.linalg.norm(jac) / math.sqrt(jac.shape[1])
        if scale <= 0 or not np.isfinite(scale):
            break
        grad = jac.T @ res
        improved = False
        for _ in range(8):
            mu = (lam * scale) ** 2
            lhs = jac.T @ jac + mu * np.eye(jac.shape[1])
            try:
                delta = np.linalg.solve(lhs, grad)
            except np.linalg.LinAlgError:
                break
            peak = np.abs(delta).max()
            if peak > step_limit_deg:
                delta *= step_limit_deg / peak
            for alpha in (1.0, 0.5, 0.25, 0.125, 0.0625):
                trial = dict(zip(columns, alpha * delta))
                cand = state.with_values(
                    {c: lims[c].clamp(state.get(c) + trial[c]) for c in columns})
                norm = weighted_norm(cand)
                # relative improvement test keeps the solve scale-invariant
                if norm < best_norm * (1.0 - 1e-12):
                    step = np.array([cand.get(c) - state.get(c)
                                     for c in columns])
                    predicted = float(step @ (mu * step + grad))
                    # ratio > 1 and ratio = 1 relax equally, so clamping
                    # keeps the cube below from overflowing when the
                    # clamped step makes the prediction collapse
                    ratio = (best_norm ** 2 - norm ** 2) \
                        / max(predicted, 1e-300)
                    ratio = min(max(ratio, 0.0), 1.0)
                    state, best_norm, improved = cand, norm, True
                    break
            if improved:
                break
            lam = min(lam * 10.0, lam_ceil)
        if not improved:
            break
        lam = max(lam * max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3),
                  lam_floor)

    errs = _target_errors(desc, state, targets)
    return IkResult(state=state, converged=bool(errs.max() <= tol_mm),
                    iterations=iters, error_mm=float(errs.max()),
                    target_errors_mm=tuple(errs))


def _block_refine(desc: HandDescription, targets: list[PointTarget],
                  columns: list[str], state: HandState, tol_mm: float,
                  damping: float, step_limit_deg: float) -> HandState:
    """Short per-digit descents that pick each finger's branch.

    Multi-digit solves stall when single fingers settle into the wrong
    near-fit configuration; solving each digit alone over its own columns
    (shared servo and wrist held) is nearly unimodal and leaves the joint
    descent a basin-selection problem it can actually finish.
    """
    for digit in DIGITS:
        sub = [t for t in targets if t.digit == digit]
        cols = [c for c in columns if c.startswith(digit.lower() + ".")]
        if sub and cols:
            state = _descend(desc, sub, cols, state, tol_mm, 60, damping,
                             step_limit_deg).state
    return state


def solve_ik(desc: HandDescription,
             targets: list[PointTarget] | dict[str, np.ndarray],
             start: HandState | None = None, *,
             use_wrist: bool = True,
             frozen: set[str] | None = None,
             tol_mm: float = 0.5,
             max_iters: int = 200,
             damping: float = 0.05,
             step_limit_deg: float = math.degrees(0.1),
             restarts: int = 3) -> IkResult:
    """Damped least-squares IK over the commanded values.

    targets may be a {digit: tip position} dict or a list of PointTarget.
    The solver stays inside joint limits (projection after every step),
    damps around the scaled Jacobian so behavior is size-invariant, and
    only accepts steps that reduce the weighted error (with backtracking
    and damping escalation when a step fails to improve).  A descent that
    bottoms out away from the targets is retried from up to `restarts`
    alternative seeds, each with its own max_iters budget: the caller's
    start refined per digit, the mid-range pose refined per digit, a
    coarse wrist grid ranked by per-digit fit, and random jitter beyond
    that.  The whole schedule is deterministic, seeds live in angle
    space, and candidates are ranked by distances that scale uniformly,
    so retries preserve the uniform-scaling invariance.
    """
    if isinstance(targets, dict):
        targets = [PointTarget(digit=d, point_mm=p) for d, p in targets.items()]
    if not targets:
        raise KinematicsError("need at least one target")
    for t in targets:
        if t.digit not in DIGITS:
            raise KinematicsError(f"unknown digit {t.digit!r}")
    frozen = frozen or set()
    columns = _ik_columns(desc, targets, use_wrist, frozen)
    if not columns:
        raise KinematicsError("no free columns to solve over")

    # default start is the straight hand: flexion chains converge far more
    # reliably curling inward from straight than unwinding from mid-flexion
    first = desc.clamp_state(start if start is not None else desc.zero_state())
    lims = desc.commanded_limits()
    mid = first.with_values({n: lims[n].mid_deg for n in columns})
    rng = np.random.default_rng(2718)

    def full(seed: HandState) -> IkResult:
        return _descend(desc, targets, columns, seed, tol_mm, max_iters,
                        damping, step_limit_deg)

    def refined(seed: HandState) -> IkResult:
        return full(_block_refine(desc, targets, columns, seed, tol_mm,
                                  damping, step_limit_deg))

    def wrist_grid() -> IkResult | None:
        """Block-refine over a coarse wrist grid, descend from the best fits.

        The wrist columns move every target at once, so a start on the
        wrong side of the wrist box commits all fingers to wrong branches
        that the joint descent cannot unwind.  The grid finds the right
        neighborhood cheaply; refinement residuals rank the candidates.
        """
        if "wrist.fe" not in columns or "wrist.rud" not in columns:
            return None
        fe, rud = lims["wrist.fe"], lims["wrist.rud"]
        scored = []
        for f_frac in (0.1, 0.5, 0.9):
            for r_frac in (0.1, 0.5, 0.9):
                seed = mid.with_values({
                    "wrist.fe": fe.min_deg + f_frac * fe.span_deg,
                    "wrist.rud": rud.min_deg + r_frac * rud.span_deg})
                cand = _block_refine(desc, targets, columns, seed, tol_mm,
                                     damping, step_limit_deg)
                scored.append(
                    (float(_target_errors(desc, cand, targets).max()), cand))
        scored.sort(key=lambda item: item[0])
        out: IkResult | None = None
        for _, cand in scored[:3]:
            result = full(cand)
            if out is None or result.error_mm < out.error_mm:
                out = result
            if result.converged:
                break
        return out

    def jitter() -> IkResult:
        vals = {n: rng.uniform(lims[n].min_deg, lims[n].max_deg)
                for n in columns}
        return full(first.with_values(vals))

    schedule = [lambda: full(first),
                lambda: refined(first),
                lambda: refined(mid),
                wrist_grid]
    best: IkResult | None = None
    for attempt in range(restarts + 1):
        strategy = schedule[attempt] if attempt < len(schedule) else jitter
        result = strategy()
        if result is None:          # strategy not applicable for this solve
            result = jitter()
        if result.converged:
            return result
        if best is None or result.error_mm < best.error_mm:
            best = result
    return best


# -- Workspace sampling -------------------------------------------------------


def sample_workspace(desc: HandDescription, digit: str, n: int = 50000,
                     seed: int = 0, include_wrist: bool = False) -> np.ndarray:
    """Seeded uniform sample of one digit's reachable tip cloud (mm).

    Chain angles are drawn uniformly inside their limits; with
    include_wrist the wrist pose is sampled inside its box as well.
    Same seed, same cloud, bit for bit.
    """
    if digit not in DIGITS:
        raise KinematicsError(f"unknown digit {digit!r}")
    if n <= 0:
        raise KinematicsError("sample count must be positive")
    rng = np.random.default_rng(seed)
    steps = digit_chain(desc, digit)
    model = desc.digits[digit]
    lows, highs = [], []
    for step in steps:
        name = step.joint.split(".", 1)[1]
        if name == "abd":
            lim = model.abduction.limits
        else:
            lim = model.joint(name).limits
        lows.append(lim.min_deg)
        highs.append(lim.max_deg)
    angles = rng.uniform(lows, highs, size=(n, len(steps)))
    wrist = None
    if include_wrist:
        fe = desc.wrist_limits["fe"]
        rud = desc.wrist_limits["rud"]
        wrist = rng.uniform([fe.min_deg, rud.min_deg],
                            [fe.max_deg, rud.max_deg], size=(n, 2))
    return fk_digit(desc, digit, angles, wrist).tip


def save_cloud(path, points: np.ndarray) -> None:
    """Write a point cloud to .npy (exact) or .csv (17 significant digits)."""
    from pathlib import Path

    p = Path(path)
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise KinematicsError(f"cloud must be (n, 3), got {pts.shape}")
    if p.suffix == ".npy":
        np.save(p, pts)
    elif p.suffix == ".csv":
        np.savetxt(p, pts, fmt="%.17g", delimiter=",",
                   header="x_mm,y_mm,z_mm", comments="")
    else:
        raise KinematicsError(f"unsupported cloud format {p.suffix!r}")


def load_cloud(path) -> np.ndarray:
    from pathlib import Path

    p = Path(path)
    if p.suffix == ".npy":
        return np.load(p)
    if p.suffix == ".csv":
        return np.loadtxt(p, delimiter=",", skiprows=1).reshape(-1, 3)
    raise KinematicsError(f"unsupported cloud format {p.suffix!r}")


# -- Opposition ----------------------------------------------------------------


@dataclass(frozen=True)
class OppositionResult:
    digit: str
    gap_mm: float
    opposable: bool
    thumb_point_mm: np.ndarray
    finger_point_mm: np.ndarray


def opposition_check(desc: HandDescription, threshold_mm: float = 5.0,
                     n: int = 20000, seed: int = 7) -> dict[str, OppositionResult]:
    """Min tip-to-tip gap between the thumb cloud and each finger cloud.

    Clouds are sampled at a neutral wrist, so the result reflects hand
    geometry alone.  A finger counts as opposable when the thumb tip can
    come within threshold_mm of its tip.
    """
    from scipy.spatial import cKDTree

    thumb = sample_workspace(desc, "D1", n=n, seed=seed)
    tree = cKDTree(thumb)
    out = {}
    for idx, digit in enumerate(("D2", "D3", "D4", "D5")):
        cloud = sample_workspace(desc, digit, n=n, seed=seed + idx + 1)
        dist, which = tree.query(cloud)
        best = int(np.argmin(dist))
        gap = float(dist[best])
        out[digit] = OppositionResult(
            digit=digit, gap_mm=gap, opposable=bool(gap <= threshold_mm),
            thumb_point_mm=thumb[which[best]], finger_point_mm=cloud[best])
    return out


# -- Range of motion report ----------------------------------------------------


def _human_span(joint: str) -> float:
    digit, name = joint.split(".", 1)
    if digit == "wrist":
        rom = HUMAN_ROM_DEG["wrist"]
        if name == "fe":
            return rom["flexion"] + rom["extension"]
        return rom["radial"] + rom["ulnar"]
    return HUMAN_ROM_DEG[digit.upper()][name]


def rom_report(desc: HandDescription) -> dict:
    """Per-joint spans against the human reference, plus aggregates.

    Aggregate change is the ratio of summed spans (all 20 joints), and a
    second figure excludes the two wrist axes.
    """
    lims = desc.commanded_limits()
    rows = []
    for joint in JOINT_NAMES:
        if joint.endswith(".abd"):
            digit = joint.split(".", 1)[0].upper()
            span = desc.digits[digit].abduction.limits.span_deg
            lo = desc.digits[digit].abduction.limits.min_deg
            hi = desc.digits[digit].abduction.limits.max_deg
        else:
            lim = lims[joint]
            span, lo, hi = lim.span_deg, lim.min_deg, lim.max_deg
        human = _human_span(joint)
        rows.append({
            "joint": joint,
            "min_deg": lo,
            "max_deg": hi,
            "span_deg": span,
            "human_span_deg": human,
            "ratio": span / human,
        })
    total = sum(r["span_deg"] for r in rows)
    human_total = sum(r["human_span_deg"] for r in rows)
    finger_rows = [r for r in rows if not r["joint"].startswith("wrist.")]
    finger_total = sum(r["span_deg"] for r in finger_rows)
    finger_human = sum(r["human_span_deg"] for r in finger_rows)
    return {
        "rows": rows,
        "span_change_pct": 100.0 * (total - human_total) / human_total,
        "span_change_excl_wrist_pct":
            100.0 * (finger_total - finger_human) / finger_human,
    }
