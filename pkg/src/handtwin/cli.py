"""Command-line surface: analysis subcommands plus the service host.

Every subcommand takes ``--config PATH`` (falling back to the
``HAND_TWIN_CONFIG`` environment variable, then the bundled default) and
is deterministic given its flags, config and seed.  Exit codes: 0 on
success, 1 on a runtime failure, 2 on a usage error (argparse prints the
synopsis to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import actuation, bus, kinematics, model, teleop, wrist

_RUNTIME_ERRORS = (
    model.ConfigError,
    model.InvariantError,
    actuation.TransmissionError,
    wrist.WristError,
    kinematics.KinematicsError,
    bus.BusError,
    teleop.TraceError,
    OSError,
    ValueError,
)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _bundled_trace(name: str) -> str:
    fname = {"sweep": "sweep_trace.jsonl",
             "opposition": "opposition_trace.jsonl"}[name]
    return resources.files("handtwin.data").joinpath(fname).read_text()


# -- selflock ------------------------------------------------------------------


def _cmd_selflock(args: argparse.Namespace) -> int:
    alpha = actuation.lead_angle_deg(args.lead, args.dia)
    phi = actuation.friction_angle_deg(args.mu)
    locking = actuation.is_self_locking(args.lead, args.dia, args.mu)
    print(f"lead angle alpha = {alpha:.2f} deg")
    print(f"friction angle phi_s = {phi:.2f} deg")
    print(f"self-lock margin = {phi - alpha:.2f} deg")
    print(f"verdict: {'LOCKING' if locking else 'NOT LOCKING'}")
    return 0


# -- rom -----------------------------------------------------------------------


def _rom_csv(report: dict) -> str:
    lines = ["joint,min_deg,max_deg,span_deg,human_span_deg,ratio"]
    total = human = 0.0
    for row in report["rows"]:
        total += row["span_deg"]
        human += row["human_span_deg"]
        lines.append(f"{row['joint']},{row['min_deg']:.4f},{row['max_deg']:.4f},"
                     f"{row['span_deg']:.4f},{row['human_span_deg']:.4f},"
                     f"{row['ratio']:.6f}")
    lines.append(f"all,,,{total:.4f},{human:.4f},{total / human:.6f}")
    return "\n".join(lines) + "\n"


def _rom_text(report: dict) -> str:
    lines = [f"{'joint':<12}{'min':>9}{'max':>9}{'span':>9}{'human':>9}{'ratio':>8}"]
    for row in report["rows"]:
        lines.append(f"{row['joint']:<12}{row['min_deg']:>9.2f}"
                     f"{row['max_deg']:>9.2f}{row['span_deg']:>9.2f}"
                     f"{row['human_span_deg']:>9.2f}{row['ratio']:>8.3f}")
    lines.append(f"span change vs human reference: "
                 f"{report['span_change_pct']:+.2f}% "
                 f"({report['span_change_excl_wrist_pct']:+.2f}% excluding wrist)")
    return "\n".join(lines) + "\n"


def _cmd_rom(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    report = kinematics.rom_report(desc)
    if args.format == "json":
        _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    elif args.format == "csv":
        _emit(_rom_csv(report), args.out)
    else:
        _emit(_rom_text(report), args.out)
    return 0


# -- workspace -----------------------------------------------------------------


def _cmd_workspace(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    cloud = kinematics.sample_workspace(desc, args.digit, n=args.samples,
                                        seed=args.seed,
                                        include_wrist=args.include_wrist)
    kinematics.save_cloud(args.out, cloud)
    lo = cloud.min(axis=0)
    hi = cloud.max(axis=0)
    print(f"{args.digit}: {len(cloud)} samples -> {args.out}")
    print(f"bounds mm: x [{lo[0]:.1f}, {hi[0]:.1f}], "
          f"y [{lo[1]:.1f}, {hi[1]:.1f}], z [{lo[2]:.1f}, {hi[2]:.1f}]")
    return 0


# -- envelope ------------------------------------------------------------------


def _cmd_envelope(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    geom = desc.wrist_geometry
    env = wrist.wrist_envelope(geom, grid_deg=args.grid)
    if args.out is not None:
        Path(args.out).write_text(wrist.envelope_to_csv(env))
        print(f"grid -> {args.out}")
    ext = env.extremes_deg
    print(f"flexion   {ext['flexion_deg']:6.1f} deg  "
          f"binding: {', '.join(wrist.binding_constraints(geom, ext['flexion_deg'], 0.0))}")
    print(f"extension {ext['extension_deg']:6.1f} deg  "
          f"binding: {', '.join(wrist.binding_constraints(geom, -ext['extension_deg'], 0.0))}")
    print(f"radial    {ext['radial_deg']:6.1f} deg  "
          f"binding: {', '.join(wrist.binding_constraints(geom, 0.0, ext['radial_deg']))}")
    print(f"ulnar     {ext['ulnar_deg']:6.1f} deg  "
          f"binding: {', '.join(wrist.binding_constraints(geom, 0.0, -ext['ulnar_deg']))}")
    return 0


# -- calibrate -----------------------------------------------------------------


def _cmd_calibrate(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    cfg = model.to_config(desc)

    # rockers: re-solve (b, theta0) from each joint's stroke and limits
    for digit_name, digit in desc.digits.items():
        entry = cfg["digits"][digit_name]
        for spec, joint_cfg in zip(digit.joints, entry["joints"]):
            if spec.kind != "leadscrew":
                continue
            rocker = actuation.calibrate_rocker(
                spec.screw.stroke_mm, spec.limits.min_deg,
                spec.limits.max_deg, spec.rocker.a_mm)
            joint_cfg["rocker"]["b_mm"] = rocker.b_mm
            joint_cfg["rocker"]["theta0_rad"] = rocker.theta0_rad
            print(f"{digit_name}.{spec.name}: a {rocker.a_mm:.4f} mm, "
                  f"b {rocker.b_mm:.6f} mm, theta0 {rocker.theta0_rad:.8f} rad")

    # abduction wheels: size radii so the servo sweep covers each span
    train = desc.abduction_train
    spans = {d: desc.digits[d].abduction.limits.span_deg for d in train.branches}
    leads = {d: br.lead_mm for d, br in train.branches.items()}
    hands = {d: br.thread_hand for d, br in train.branches.items()}
    solved = actuation.calibrate_wheel_radii(
        spans, leads, hands, pinion_teeth=train.pinion_teeth,
        bevel_teeth=train.bevel_teeth, servo_min_deg=train.servo_min_deg,
        servo_max_deg=train.servo_max_deg)
    for d, br in solved.branches.items():
        cfg["digits"][d]["abduction"]["wheel_radius_mm"] = br.wheel_radius_mm
        print(f"{d} wheel radius: {br.wheel_radius_mm:.6f} mm")

    if args.wrist:
        # slow anchor search; off by default
        geom = wrist.calibrate_wrist_geometry(
            flexion_deg=args.flexion, extension_deg=args.extension,
            deviation_deg=args.deviation,
            stroke_mm=desc.wrist_geometry.stroke_mm,
            swivel_limit_deg=desc.wrist_geometry.swivel_limit_deg)
        wcfg = cfg["wrist"]["geometry"]
        wcfg.update({
            "lower_radius_mm": geom.lower_radius_mm,
            "upper_radius_mm": geom.upper_radius_mm,
            "lower_z_mm": geom.lower_z_mm,
            "upper_z_mm": geom.upper_z_mm,
            "min_length_mm": geom.min_length_mm,
        })
        print(f"wrist anchors: lower r {geom.lower_radius_mm:.4f} mm, "
              f"upper r {geom.upper_radius_mm:.4f} mm, "
              f"min length {geom.min_length_mm:.4f} mm")

    calibrated = model.load_config(cfg)   # validates before writing
    text = model.serialize(calibrated)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"config -> {args.out}")
    return 0


# -- ik ------------------------------------------------------------------------


def _parse_target(spec: str, parser: argparse.ArgumentParser) -> kinematics.PointTarget:
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        parser.error(f"bad target {spec!r}, expected DIGIT:x,y,z[:site]")
    digit = parts[0].upper()
    if digit not in model.DIGITS:
        parser.error(f"bad target digit {parts[0]!r}")
    try:
        xyz = [float(v) for v in parts[1].split(",")]
    except ValueError:
        parser.error(f"bad target point {parts[1]!r}")
    if len(xyz) != 3:
        parser.error(f"target point needs 3 coordinates, got {len(xyz)}")
    site = parts[2] if len(parts) == 3 else "tip"
    if site not in ("tip", "last"):
        parser.error(f"bad target site {site!r}")
    return kinematics.PointTarget(digit=digit, point_mm=np.array(xyz), site=site)


def _cmd_ik(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    targets = [_parse_target(spec, args.parser) for spec in args.target]
    sol = kinematics.solve_ik(desc, targets, use_wrist=not args.no_wrist,
                              tol_mm=args.tol, max_iters=args.max_iters)
    payload = {
        "converged": sol.converged,
        "iterations": sol.iterations,
        "error_mm": sol.error_mm,
        "target_errors_mm": list(sol.target_errors_mm),
        "state": sol.state.to_dict(),
    }
    _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return 0 if sol.converged else 1


# -- opposition ----------------------------------------------------------------


def _cmd_opposition(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    results = kinematics.opposition_check(desc, threshold_mm=args.threshold,
                                          n=args.samples, seed=args.seed)
    if args.format == "json":
        payload = {d: {"gap_mm": r.gap_mm, "opposable": r.opposable}
                   for d, r in results.items()}
        _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    else:
        for d, r in results.items():
            print(f"{d}: min tip gap {r.gap_mm:.3f} mm -> "
                  f"{'opposable' if r.opposable else 'NOT OPPOSABLE'}")
    return 0 if all(r.opposable for r in results.values()) else 1


# -- force ---------------------------------------------------------------------


def _flexion_angles(desc: model.HandDescription, digit: str,
                    pose: str) -> list[float]:
    d = desc.digits[digit]
    lead = [j for j in d.joints if j.kind == "leadscrew"]
    if pose == "zero":
        return [0.0 for _ in lead]
    return [j.limits.mid_deg for j in lead]


def _cmd_force(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    digit = args.digit.upper()
    if digit not in model.DIGITS:
        args.parser.error(f"unknown digit {args.digit!r}")
    chain = desc.digits[digit].flex_chain()
    torque = args.torque if args.torque is not None else desc.bus.nominal_torque_nmm
    angles = _flexion_angles(desc, digit, args.pose)
    balance = actuation.static_fingertip_force(
        chain, angles, [torque] * len(angles), contact_mm=args.contact)
    names = [j.name for j in desc.digits[digit].joints if j.kind == "leadscrew"]
    print(f"{digit} at {args.pose} flexion, {torque:.1f} N.mm per motor:")
    for i, name in enumerate(names):
        mark = "  <- limiting" if i == balance.limiting_joint else ""
        print(f"  {name}: joint torque {balance.joint_torques_nmm[i]:.1f} N.mm, "
              f"lever {balance.levers_mm[i]:.1f} mm{mark}")
    print(f"fingertip force: {balance.force_n:.2f} N")
    if args.load is not None:
        moved = actuation.back_drive_travel(chain, angles, args.load)
        worst = max(moved)
        print(f"back-drive under {args.load:.1f} N external load: "
              f"{'held (0 mm)' if worst == 0.0 else 'DRIVEN'}")
    return 0


# -- simulate ------------------------------------------------------------------


def _parse_set(spec: str, desc: model.HandDescription,
               parser: argparse.ArgumentParser) -> tuple[str, float]:
    name, _, value = spec.partition("=")
    if name not in model.COMMANDED_VALUES:
        parser.error(f"unknown joint {name!r}")
    try:
        return name, float(value)
    except ValueError:
        parser.error(f"bad target value {value!r} for {name}")
    raise AssertionError("unreachable")


def _cmd_simulate(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    targets = [_parse_set(spec, desc, args.parser) for spec in args.set]
    with bus.BusNetwork(desc, drop_rate=args.drop_rate, seed=args.seed,
                        telemetry_path=args.telemetry) as net:
        clamped = []
        for name, value in targets:
            ack = net.set_target(name, value)
            if ack.clamped:
                clamped.append((name, value, ack.value_deg))
        net.run(args.seconds)
        snap = net.snapshot()
        quantum = 360.0 / desc.bus.encoder_counts_per_rev
        settled = net.settled()
        for name, value in targets:
            print(f"{name}: target {net.targets().get(name):.3f} deg, "
                  f"measured {snap.get(name):.3f} deg")
        for name, asked, got in clamped:
            print(f"note: {name} clamped from {asked:.3f} to {got:.3f} deg")
        print(f"t = {net.time_s:.3f} s, retransmits {net.retransmits}, "
              f"faults {net.faults}")
        print(f"settled within {quantum:.4f} deg: {'yes' if settled else 'NO'}")
    return 0 if settled else 1


# -- replay --------------------------------------------------------------------


def _cmd_replay(args: argparse.Namespace) -> int:
    desc = model.resolve_config(args.config)
    if args.trace in ("sweep", "opposition"):
        text = _bundled_trace(args.trace)
    else:
        text = Path(args.trace).read_text()
    trace = teleop.parse_trace(text)
    mapping = teleop.Mapping(scale=args.scale)
    with bus.BusNetwork(desc, drop_rate=args.drop_rate, seed=args.seed,
                        telemetry_path=args.telemetry) as net:
        report = teleop.run_pipeline(trace, mapping, desc, net,
                                     accept_mm=args.accept_mm,
                                     settle_tail_s=args.settle_tail)
    worst = max(report.max_tracking_error_deg.values())
    if args.format == "json":
        payload = {
            "frames": report.frames,
            "accepted": report.accepted,
            "skipped": report.skipped,
            "commands_issued": report.commands_issued,
            "max_tracking_error_deg": report.max_tracking_error_deg,
            "contact_gap_mm": report.contact_gap_mm,
        }
        _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    else:
        print(f"frames {report.frames}, accepted {report.accepted}, "
              f"skipped {report.skipped}, commands {report.commands_issued}")
        print(f"worst tracking error {worst:.3f} deg")
        gaps = ", ".join(f"{d} {g:.2f}" for d, g in
                         sorted(report.contact_gap_mm.items()))
        print(f"min thumb-to-tip gaps mm: {gaps}")
    return 0 if report.accepted > 0 else 1


# -- serve ---------------------------------------------------------------------


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from . import service

    desc = model.resolve_config(args.config)
    app = service.create_app(desc, telemetry_hz=args.telemetry_hz)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handtwin",
        description="Digital twin of a leadscrew-driven anthropomorphic hand.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="hand config JSON (default: $HAND_TWIN_CONFIG "
                             "or the bundled hand)")

    p = sub.add_parser("selflock", parents=[common],
                       help="screw/worm self-locking analysis")
    p.add_argument("--lead", type=float, default=0.35, help="thread lead, mm")
    p.add_argument("--dia", type=float, default=2.50,
                   help="mean (pitch) diameter, mm")
    p.add_argument("--mu", type=float, default=0.42, help="friction coefficient")
    p.set_defaults(func=_cmd_selflock)

    p = sub.add_parser("rom", parents=[common],
                       help="per-joint range-of-motion report")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out", default=None, help="write instead of printing")
    p.set_defaults(func=_cmd_rom)

    p = sub.add_parser("workspace", parents=[common],
                       help="sample one digit's reachable tip cloud")
    p.add_argument("--digit", required=True, choices=model.DIGITS)
    p.add_argument("--samples", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--include-wrist", action="store_true")
    p.add_argument("--out", required=True, help="output .npy or .csv path")
    p.set_defaults(func=_cmd_workspace)

    p = sub.add_parser("envelope", parents=[common],
                       help="scan the wrist feasibility envelope")
    p.add_argument("--grid", type=float, default=0.5, help="grid step, deg")
    p.add_argument("--out", default=None, help="write the CSV grid here")
    p.set_defaults(func=_cmd_envelope)

    p = sub.add_parser("calibrate", parents=[common],
                       help="re-derive rocker/wheel/wrist geometry, write config")
    p.add_argument("--out", default=None, help="config path (default: stdout)")
    p.add_argument("--wrist", action="store_true",
                   help="also re-search the wrist anchors (slow)")
    p.add_argument("--flexion", type=float, default=52.0)
    p.add_argument("--extension", type=float, default=18.0)
    p.add_argument("--deviation", type=float, default=18.0)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("ik", parents=[common], help="one-shot inverse kinematics")
    p.add_argument("--target", action="append", required=True,
                   metavar="DIGIT:x,y,z[:site]",
                   help="fingertip target in palm mm (repeatable)")
    p.add_argument("--no-wrist", action="store_true",
                   help="keep the wrist at neutral")
    p.add_argument("--tol", type=float, default=0.5, help="tolerance, mm")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ik)

    p = sub.add_parser("opposition", parents=[common],
                       help="thumb-to-finger opposability check")
    p.add_argument("--threshold", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_opposition)

    p = sub.add_parser("force", parents=[common],
                       help="static fingertip force and back-drive check")
    p.add_argument("--digit", required=True)
    p.add_argument("--torque", type=float, default=None,
                   help="per-motor torque, N.mm (default: nominal)")
    p.add_argument("--pose", choices=("mid", "zero"), default="mid")
    p.add_argument("--contact", type=float, default=None,
                   help="contact point along the distal link, mm")
    p.add_argument("--load", type=float, default=None,
                   help="also check holding against this external load, N")
    p.set_defaults(func=_cmd_force)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a bus scenario to settle")
    p.add_argument("--set", action="append", default=[], metavar="JOINT=DEG",
                   help="target command (repeatable)")
    p.add_argument("--seconds", type=float, default=1.5)
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--telemetry", default=None, help="JSONL telemetry path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", parents=[common],
                       help="feed a teleop trace through the full pipeline")
    p.add_argument("--trace", default="sweep",
                   help="trace path, or bundled 'sweep' / 'opposition'")
    p.add_argument("--scale", type=float, default=teleop.DEFAULT_SCALE)
    p.add_argument("--accept-mm", type=float, default=2.0)
    p.add_argument("--settle-tail", type=float, default=1.0 / 60.0,
                   help="extra bus time after the last frame, s")
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--telemetry", default=None)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", parents=[common],
                       help="host the simulator service for the console")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--telemetry-hz", type=float, default=30.0)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:   # argparse already printed the synopsis
        return int(exc.code or 0)
    args.parser = parser
    try:
        return args.func(args)
    except SystemExit as exc:   # late usage errors (parser.error in handlers)
        return int(exc.code or 0)
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
