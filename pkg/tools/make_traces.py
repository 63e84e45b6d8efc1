"""Generate the bundled teleop traces (sweep and sequential opposition).

Both are synthesized through forward kinematics so every frame is
exactly reachable: the sweep drives all joints through smooth cycles,
and the opposition trace brings the thumb tip to each fingertip in turn
with hold segments at every contact.
"""

import math
from pathlib import Path

import numpy as np

from handtwin import kinematics, model, teleop

DATA = Path(__file__).resolve().parents[1] / "src/handtwin/data"
RATE_HZ = 60
DURATION_S = 10.0


def sweep_state(desc: model.HandDescription, t: float) -> model.HandState:
    lims = desc.commanded_limits()
    phase = (1.0 - math.cos(2.0 * math.pi * t / DURATION_S)) / 2.0
    values = {}
    for name in model.COMMANDED_VALUES:
        if name.startswith("wrist") or name == "abduction":
            continue
        lim = lims[name]
        values[name] = lim.min_deg + 0.6 * phase * lim.span_deg
    values["abduction"] = 30.0 * math.sin(2.0 * math.pi * t / DURATION_S)
    values["wrist.fe"] = 20.0 * math.sin(2.0 * math.pi * t / DURATION_S)
    values["wrist.rud"] = 10.0 * math.sin(4.0 * math.pi * t / DURATION_S)
    return model.HandState.zero().with_values(values)


def make_sweep(desc: model.HandDescription, mapping: teleop.Mapping) -> list[dict]:
    records = []
    for i in range(int(RATE_HZ * DURATION_S)):
        t = i / RATE_HZ
        state = sweep_state(desc, t)
        records.append(teleop.frame_from_state(
            desc, state, t_ms=round(t * 1000), mapping=mapping))
    return records


def opposition_states(desc: model.HandDescription) -> dict[str, model.HandState]:
    """Contact pose per finger: thumb tip meets that fingertip."""
    meets = kinematics.opposition_check(desc, n=20000, seed=7)
    out = {}
    for digit, res in meets.items():
        meet = 0.5 * (res.thumb_point_mm + res.finger_point_mm)
        targets = [kinematics.PointTarget("D1", meet),
                   kinematics.PointTarget(digit, meet)]
        sol = kinematics.solve_ik(desc, targets, use_wrist=False,
                                  tol_mm=1e-3, max_iters=400)
        tips = kinematics.fingertips(desc, sol.state, apply_wrist=False)
        gap = float(np.linalg.norm(tips["D1"] - tips[digit]))
        assert gap < 0.5, (digit, gap)
        out[digit] = sol.state
        print(f"{digit}: contact tip-to-tip gap {gap:.4f} mm")
    return out


def interp(a: model.HandState, b: model.HandState, u: float) -> model.HandState:
    return model.HandState(values=(1.0 - u) * a.values + u * b.values)


def approach_time(desc: model.HandDescription, a: model.HandState,
                  b: model.HandState) -> float:
    """Slowest-joint travel time between two poses, with margin.

    The ramp must stay within every channel's speed cap or the motors
    fall behind and the hold segment inherits the backlog.
    """
    worst = 0.0
    for name in model.COMMANDED_VALUES:
        delta = abs(b.get(name) - a.get(name))
        worst = max(worst, delta / desc.bus.channel_speed_dps(name))
    frames = math.ceil((worst * 1.4 + 0.2) * RATE_HZ)
    return frames / RATE_HZ


def make_opposition(desc: model.HandDescription,
                    mapping: teleop.Mapping) -> list[dict]:
    contact = opposition_states(desc)
    open_state = model.HandState.zero()
    # open hold, then per finger: paced approach + hold at contact
    segments: list[tuple[model.HandState, model.HandState, float]] = []
    segments.append((open_state, open_state, 0.4))
    prev = open_state
    for digit in ("D2", "D3", "D4", "D5"):
        pose = contact[digit]
        segments.append((prev, pose, approach_time(desc, prev, pose)))
        segments.append((pose, pose, 0.9))     # hold at contact
        prev = pose
    segments.append((prev, open_state, approach_time(desc, prev, open_state)))
    segments.append((open_state, open_state, 0.8))
    total = sum(s[2] for s in segments)
    print(f"opposition schedule: {total:.2f} s, "
          + ", ".join(f"{d:.2f}" for _, _, d in segments))

    records = []
    frame = 0
    elapsed = 0.0
    for a, b, dur in segments:
        n = round(dur * RATE_HZ)
        for k in range(n):
            u = k / n if n > 1 else 0.0
            state = interp(a, b, u)
            t = elapsed + k / RATE_HZ
            records.append(teleop.frame_from_state(
                desc, state, t_ms=round(t * 1000), mapping=mapping))
            frame += 1
        elapsed += dur
    return records


def main() -> None:
    desc = model.default_hand()
    mapping = teleop.Mapping()
    sweep = make_sweep(desc, mapping)
    teleop.write_trace(DATA / "sweep_trace.jsonl", sweep)
    print(f"sweep: {len(sweep)} frames")
    opp = make_opposition(desc, mapping)
    teleop.write_trace(DATA / "opposition_trace.jsonl", opp)
    print(f"opposition: {len(opp)} frames")


if __name__ == "__main__":
    main()
