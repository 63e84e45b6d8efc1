"""Command-line interface: outputs, exit codes, config resolution."""

import json

import numpy as np
import pytest

from handtwin import kinematics, model, teleop
from handtwin.cli import main
from handtwin.teleop import Mapping, frame_from_state


def run(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# -- selflock ------------------------------------------------------------------


def test_selflock_defaults(capsys) -> None:
    code, out, _ = run(capsys, "selflock")
    assert code == 0
    assert "lead angle alpha = 2.55 deg" in out
    assert "friction angle phi_s = 22.78 deg" in out
    assert "verdict: LOCKING" in out


def test_selflock_worm_pair(capsys) -> None:
    code, out, _ = run(capsys, "selflock", "--lead", "2.5", "--dia", "9.49",
                       "--mu", "0.46")
    assert code == 0
    assert "lead angle alpha = 4.79 deg" in out
    assert "friction angle phi_s = 24.70 deg" in out
    assert "verdict: LOCKING" in out


def test_selflock_non_locking(capsys) -> None:
    code, out, _ = run(capsys, "selflock", "--lead", "2.5", "--dia", "2.5",
                       "--mu", "0.1")
    assert code == 0
    assert "verdict: NOT LOCKING" in out


# -- usage errors ----------------------------------------------------------------


def test_unknown_flag_is_usage_error(capsys) -> None:
    code, _, err = run(capsys, "selflock", "--bogus")
    assert code == 2
    assert "usage" in err


def test_missing_subcommand(capsys) -> None:
    code, _, err = run(capsys)
    assert code == 2
    assert "usage" in err


def test_ik_requires_target(capsys) -> None:
    code, _, err = run(capsys, "ik")
    assert code == 2
    assert "--target" in err


# -- rom -------------------------------------------------------------------------


def test_rom_csv(capsys) -> None:
    code, out, _ = run(capsys, "rom", "--format", "csv")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "joint,min_deg,max_deg,span_deg,human_span_deg,ratio"
    assert len(lines) == 22
    assert lines[-1] == "all,,,1387.5900,1248.2200,1.111655"


def test_rom_text(capsys) -> None:
    code, out, _ = run(capsys, "rom")
    assert code == 0
    assert "+11.17%" in out
    assert "+18.86% excluding wrist" in out


def test_rom_json_to_file(capsys, tmp_path) -> None:
    path = tmp_path / "rom.json"
    code, _, _ = run(capsys, "rom", "--format", "json", "--out", str(path))
    assert code == 0
    report = json.loads(path.read_text())
    assert abs(report["span_change_pct"] - 11.1655) < 1e-3
    assert len(report["rows"]) == 20


# -- workspace -------------------------------------------------------------------


def test_workspace_cloud_matches_library(capsys, tmp_path, desc) -> None:
    path = tmp_path / "d2.npy"
    code, out, _ = run(capsys, "workspace", "--digit", "D2", "--samples",
                       "400", "--seed", "5", "--out", str(path))
    assert code == 0
    assert "400 samples" in out
    assert "bounds mm" in out
    cloud = kinematics.load_cloud(path)
    assert np.array_equal(
        cloud, kinematics.sample_workspace(desc, "D2", n=400, seed=5))


# -- envelope --------------------------------------------------------------------


def test_envelope_extremes_and_bindings(capsys, tmp_path) -> None:
    path = tmp_path / "envelope.csv"
    code, out, _ = run(capsys, "envelope", "--grid", "2.0", "--out", str(path))
    assert code == 0
    assert "flexion     52.0 deg" in out
    assert "extension   18.0 deg" in out
    assert "radial      18.0 deg" in out
    assert "ulnar       18.0 deg" in out
    assert "swivel1, swivel2" in out
    assert "len1:min" in out
    from handtwin import wrist as wrist_mod

    rows = wrist_mod.parse_envelope_csv(path.read_text())
    flexion = max(r["fe_deg"] for r in rows
                  if r["feasible"] and r["rud_deg"] == 0.0)
    assert flexion == 52.0


# -- ik --------------------------------------------------------------------------


def test_ik_reachable_target(capsys, desc) -> None:
    tip = kinematics.fingertips(desc, desc.zero_state())["D2"]
    spec = f"D2:{tip[0]:.3f},{tip[1]:.3f},{tip[2]:.3f}"
    code, out, _ = run(capsys, "ik", "--target", spec, "--no-wrist")
    assert code == 0
    payload = json.loads(out)
    assert payload["converged"] is True
    assert payload["error_mm"] <= 0.5
    assert set(payload["state"]) == set(model.COMMANDED_VALUES)


def test_ik_unreachable_target(capsys) -> None:
    code, out, _ = run(capsys, "ik", "--target", "D2:500,500,500",
                       "--max-iters", "40")
    assert code == 1
    assert json.loads(out)["converged"] is False


def test_ik_bad_target_spec(capsys) -> None:
    for spec in ("D2", "D9:1,2,3", "D2:1,2", "D2:a,b,c", "D2:1,2,3:palm"):
        code, _, err = run(capsys, "ik", "--target", spec)
        assert code == 2, spec
        assert "usage" in err


# -- opposition ------------------------------------------------------------------


def test_opposition_all_fingers(capsys) -> None:
    code, out, _ = run(capsys, "opposition", "--samples", "4000")
    assert code == 0
    for digit in ("D2", "D3", "D4", "D5"):
        assert f"{digit}: min tip gap" in out
    assert "NOT OPPOSABLE" not in out


def test_opposition_json(capsys) -> None:
    code, out, _ = run(capsys, "opposition", "--samples", "2000",
                       "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"D2", "D3", "D4", "D5"}
    assert all(entry["opposable"] for entry in payload.values())


# -- force -----------------------------------------------------------------------


def test_force_report(capsys) -> None:
    code, out, _ = run(capsys, "force", "--digit", "D2")
    assert code == 0
    assert "<- limiting" in out
    force = float(out.split("fingertip force:")[1].split("N")[0])
    assert force >= 10.0


def test_force_holds_external_load(capsys) -> None:
    code, out, _ = run(capsys, "force", "--digit", "D3", "--load", "44.5")
    assert code == 0
    assert "held (0 mm)" in out


def test_force_unknown_digit(capsys) -> None:
    code, _, err = run(capsys, "force", "--digit", "D9")
    assert code == 2
    assert "unknown digit" in err


# -- simulate --------------------------------------------------------------------


def test_simulate_settles(capsys) -> None:
    code, out, _ = run(capsys, "simulate", "--set", "d2.mcp=45",
                       "--set", "wrist.fe=10", "--seconds", "1.5")
    assert code == 0
    assert "settled within 0.0879 deg: yes" in out
    assert "faults 0" in out


def test_simulate_reports_clamp(capsys) -> None:
    code, out, _ = run(capsys, "simulate", "--set", "d2.mcp=200",
                       "--seconds", "2.5")
    assert code == 0
    assert "clamped from 200.000 to 103.130" in out


def test_simulate_not_settled_is_failure(capsys) -> None:
    code, out, _ = run(capsys, "simulate", "--set", "d1.cmc=100",
                       "--seconds", "0.2")
    assert code == 1
    assert "settled within 0.0879 deg: NO" in out


def test_simulate_unknown_joint(capsys) -> None:
    code, _, err = run(capsys, "simulate", "--set", "d2.elbow=10")
    assert code == 2
    assert "unknown joint" in err


def test_missing_config_is_runtime_error(capsys) -> None:
    code, _, err = run(capsys, "rom", "--config", "/nonexistent/hand.json")
    assert code == 1
    assert err.startswith("error:")


# -- replay ----------------------------------------------------------------------


def test_replay_custom_trace(capsys, tmp_path, desc) -> None:
    mapping = Mapping()
    states = [
        desc.zero_state(),
        desc.zero_state().with_values({"d2.mcp": 25.0}),
        desc.zero_state().with_values({"d2.mcp": 50.0, "d3.mcp": 20.0}),
    ]
    records = [frame_from_state(desc, st, 100 * i, mapping)
               for i, st in enumerate(states)]
    path = tmp_path / "trace.jsonl"
    teleop.write_trace(path, records)
    code, out, _ = run(capsys, "replay", "--trace", str(path),
                       "--settle-tail", "1.0")
    assert code == 0
    assert "frames 3, accepted 3, skipped 0" in out
    assert "worst tracking error" in out


def test_replay_json_format(capsys, tmp_path, desc) -> None:
    records = [frame_from_state(desc, desc.zero_state(), 0, Mapping())]
    path = tmp_path / "one.jsonl"
    teleop.write_trace(path, records)
    code, out, _ = run(capsys, "replay", "--trace", str(path),
                       "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert payload["frames"] == 1
    assert payload["accepted"] == 1
    assert set(payload["contact_gap_mm"]) == {"D2", "D3", "D4", "D5"}


# -- calibrate -------------------------------------------------------------------


def test_calibrate_reproduces_bundled_geometry(capsys, tmp_path, desc) -> None:
    path = tmp_path / "calibrated.json"
    code, out, _ = run(capsys, "calibrate", "--out", str(path))
    assert code == 0
    assert "wheel radius" in out
    again = model.load_config(json.loads(path.read_text()))
    for digit in model.DIGITS:
        for a, b in zip(desc.digits[digit].joints, again.digits[digit].joints):
            if a.kind != "leadscrew":
                continue
            assert abs(a.rocker.b_mm - b.rocker.b_mm) < 1e-9
            assert abs(a.rocker.theta0_rad - b.rocker.theta0_rad) < 1e-9
    for d, br in desc.abduction_train.branches.items():
        solved = again.abduction_train.branches[d]
        assert abs(br.wheel_radius_mm - solved.wheel_radius_mm) < 1e-9


# -- config resolution -----------------------------------------------------------


def test_env_config_fallback(capsys, tmp_path, monkeypatch, desc) -> None:
    cfg = model.to_config(desc)
    cfg["bus"]["nominal_torque_nmm"] = 36.0
    path = tmp_path / "alt.json"
    path.write_text(json.dumps(cfg))
    monkeypatch.setenv(model.CONFIG_ENV_VAR, str(path))
    code, out, _ = run(capsys, "force", "--digit", "D2")
    assert code == 0
    assert "36.0 N.mm per motor" in out
    monkeypatch.delenv(model.CONFIG_ENV_VAR)
    code, out, _ = run(capsys, "force", "--digit", "D2")
    assert code == 0
    assert "45.0 N.mm per motor" in out
