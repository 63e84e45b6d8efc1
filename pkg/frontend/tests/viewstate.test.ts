import { describe, expect, it } from "vitest";

import type { ServerFrame, StateSnapshot, Telemetry } from "../src/protocol.js";
import {
  STALE_AFTER_MS,
  contactDigits,
  initialView,
  orderJoints,
  reduce,
  sliderValue,
  tipOf,
  type ViewState,
} from "../src/viewstate.js";

function telemetry(overrides: Partial<Telemetry> = {}): Telemetry {
  return {
    type: "telemetry",
    seq: 1,
    time_s: 0.033,
    targets: { "d2.mcp": 45.0 },
    measured: { "d2.mcp": 44.91 },
    skeleton: {
      digits: { D2: [[8, 34, 162], [9, 34, 180]] },
      palm_outline: [[0, 46, 33], [0, -46, 33], [0, -46, 0], [0, 46, 0]],
    },
    tip_gaps_mm: { D2: 112.4, D3: 3.2 },
    settled: false,
    replay: { trace: "", frame: 0, frames: 0, playing: false },
    ...overrides,
  };
}

function snapshot(): StateSnapshot {
  const { type: _drop, ...rest } = telemetry();
  return {
    ...rest,
    limits: { "d2.mcp": [0, 103.13], "wrist.fe": [-18, 52] },
    self_lock_margin_deg: { "d2.mcp": 20.2 },
  };
}

function opened(): ViewState {
  let v = initialView();
  v = reduce(v, { kind: "open", atMs: 0 });
  v = reduce(v, { kind: "snapshot", snapshot: snapshot(), atMs: 0 });
  return v;
}

describe("staleness", () => {
  it("flags the view after a second without telemetry", () => {
    let v = opened();
    v = reduce(v, { kind: "frame", frame: telemetry(), atMs: 100 });
    expect(v.stale).toBe(false);
    v = reduce(v, { kind: "tick", atMs: 100 + STALE_AFTER_MS - 1 });
    expect(v.stale).toBe(false);
    v = reduce(v, { kind: "tick", atMs: 100 + STALE_AFTER_MS });
    expect(v.stale).toBe(true);
  });

  it("clears the flag when telemetry resumes", () => {
    let v = opened();
    v = reduce(v, { kind: "frame", frame: telemetry(), atMs: 0 });
    v = reduce(v, { kind: "tick", atMs: 2000 });
    expect(v.stale).toBe(true);
    v = reduce(v, { kind: "frame", frame: telemetry({ seq: 2 }), atMs: 2010 });
    expect(v.stale).toBe(false);
  });

  it("treats a closed connection as stale", () => {
    let v = opened();
    v = reduce(v, { kind: "frame", frame: telemetry(), atMs: 0 });
    v = reduce(v, { kind: "closed", atMs: 5 });
    expect(v.stale).toBe(true);
  });
});

describe("telemetry merge", () => {
  it("adopts pose, gaps, and replay status wholesale", () => {
    let v = opened();
    const frame = telemetry({
      seq: 9,
      settled: true,
      replay: { trace: "sweep", frame: 12, frames: 600, playing: true },
    });
    v = reduce(v, { kind: "frame", frame, atMs: 50 });
    expect(v.seq).toBe(9);
    expect(v.settled).toBe(true);
    expect(v.replay.trace).toBe("sweep");
    expect(sliderValue(v, "d2.mcp")).toBeCloseTo(45.0);
    expect(tipOf(v, "D2")).toEqual([9, 34, 180]);
    expect(contactDigits(v, 5)).toEqual(["D3"]);
  });

  it("keeps limits and margins from the snapshot", () => {
    const v = opened();
    expect(v.limits["d2.mcp"]).toEqual([0, 103.13]);
    expect(v.selfLockMarginDeg["d2.mcp"]).toBeCloseTo(20.2);
  });
});

describe("acks and replies", () => {
  it("slider ack updates the target and clamp badge, keeps the pose source", () => {
    let v = opened();
    v = reduce(v, {
      kind: "sent",
      intent: { intent: "slider", id: "s-1", joint: "d2.mcp", value_deg: 200 },
      atMs: 0,
    });
    expect(v.pending["s-1"]).toBeDefined();
    const ack: ServerFrame = {
      type: "ack", intent: "slider", id: "s-1",
      joint: "d2.mcp", applied_deg: 103.13, clamped: true,
    };
    v = reduce(v, { kind: "frame", frame: ack, atMs: 30 });
    expect(v.pending["s-1"]).toBeUndefined();
    expect(v.targets["d2.mcp"]).toBeCloseTo(103.13);
    expect(v.clamped["d2.mcp"]).toBe(true);
  });

  it("a later in-range ack clears the clamp badge", () => {
    let v = opened();
    const clamp: ServerFrame = {
      type: "ack", intent: "slider", id: "s-1",
      joint: "d2.mcp", applied_deg: 103.13, clamped: true,
    };
    const fine: ServerFrame = {
      type: "ack", intent: "slider", id: "s-2",
      joint: "d2.mcp", applied_deg: 50.0, clamped: false,
    };
    v = reduce(v, { kind: "frame", frame: clamp, atMs: 1 });
    v = reduce(v, { kind: "frame", frame: fine, atMs: 2 });
    expect(v.clamped["d2.mcp"]).toBe(false);
  });

  it("reachable drag merges the solved state and flags green", () => {
    let v = opened();
    const reply: ServerFrame = {
      type: "ik", intent: "drag", id: "g-1", digit: "D2",
      reachable: true, residual_mm: 0.41, iterations: 11,
      applied: ["d2.mcp"], state: { "d2.mcp": 23.4 },
    };
    v = reduce(v, { kind: "frame", frame: reply, atMs: 40 });
    expect(v.reach.D2?.reachable).toBe(true);
    expect(v.targets["d2.mcp"]).toBeCloseTo(23.4);
  });

  it("unreachable drag keeps targets and surfaces the residual", () => {
    let v = opened();
    const reply: ServerFrame = {
      type: "ik", intent: "drag", id: "g-2", digit: "D2",
      reachable: false, residual_mm: 87.3, iterations: 200,
      applied: [], state: { "d2.mcp": 99.0 },
    };
    v = reduce(v, { kind: "frame", frame: reply, atMs: 40 });
    expect(v.reach.D2?.reachable).toBe(false);
    expect(v.reach.D2?.residualMm).toBeCloseTo(87.3);
    expect(v.targets["d2.mcp"]).toBeCloseTo(45.0);
  });

  it("wrist ack merges both commanded values", () => {
    let v = opened();
    const ack: ServerFrame = {
      type: "ack", intent: "wrist", id: "w-1",
      applied_deg: { "wrist.fe": 30.0, "wrist.rud": -10.0 }, clamped: false,
    };
    v = reduce(v, { kind: "frame", frame: ack, atMs: 5 });
    expect(v.targets["wrist.fe"]).toBeCloseTo(30.0);
    expect(v.targets["wrist.rud"]).toBeCloseTo(-10.0);
  });

  it("rejected retarget keeps prior targets in force", () => {
    let v = opened();
    const reply: ServerFrame = {
      type: "retarget", intent: "frame", id: "f-1",
      accepted: false, residual_mm: 9.7, state: { "d2.mcp": 1.0 },
    };
    v = reduce(v, { kind: "frame", frame: reply, atMs: 5 });
    expect(v.retarget).toEqual({ accepted: false, residualMm: 9.7 });
    expect(v.targets["d2.mcp"]).toBeCloseTo(45.0);
  });

  it("server errors append to the log and resolve their intent", () => {
    let v = opened();
    v = reduce(v, {
      kind: "sent",
      intent: { intent: "slider", id: "s-9", joint: "d9.mcp", value_deg: 1 },
      atMs: 0,
    });
    const err: ServerFrame = { type: "error", id: "s-9", error: "unknown joint 'd9.mcp'" };
    v = reduce(v, { kind: "frame", frame: err, atMs: 1 });
    expect(v.errors.at(-1)?.error).toContain("d9.mcp");
    expect(v.pending["s-9"]).toBeUndefined();
  });
});

describe("retry bookkeeping", () => {
  it("marks retried intents and clears on reply", () => {
    let v = opened();
    v = reduce(v, {
      kind: "sent",
      intent: { intent: "slider", id: "s-1", joint: "d2.mcp", value_deg: 10 },
      atMs: 0,
    });
    v = reduce(v, { kind: "retried", id: "s-1", atMs: 501 });
    expect(v.retrying["s-1"]).toBe(1);
    expect(v.pending["s-1"]?.attempts).toBe(2);
    const ack: ServerFrame = {
      type: "ack", intent: "slider", id: "s-1",
      joint: "d2.mcp", applied_deg: 10, clamped: false,
    };
    v = reduce(v, { kind: "frame", frame: ack, atMs: 600 });
    expect(v.retrying["s-1"]).toBeUndefined();
  });

  it("moves exhausted intents to the failed set", () => {
    let v = opened();
    v = reduce(v, {
      kind: "sent",
      intent: { intent: "slider", id: "s-1", joint: "d2.mcp", value_deg: 10 },
      atMs: 0,
    });
    v = reduce(v, { kind: "gave-up", id: "s-1", atMs: 2500 });
    expect(v.pending["s-1"]).toBeUndefined();
    expect(v.failed["s-1"]?.intent.id).toBe("s-1");
  });

  it("a bad frame raises the banner but retains the view", () => {
    let v = opened();
    v = reduce(v, { kind: "frame", frame: telemetry({ seq: 7 }), atMs: 1 });
    const before = v;
    v = reduce(v, { kind: "bad-frame", raw: "{not json", atMs: 2 });
    expect(v.banner).toContain("unreadable");
    expect(v.seq).toBe(before.seq);
    expect(v.skeleton).toBe(before.skeleton);
  });
});

describe("orderJoints", () => {
  it("orders chains proximal to distal, then spread, then wrist", () => {
    const names = [
      "wrist.rud", "abduction", "d2.dip", "d2.mcp", "d2.pip",
      "d1.ip", "d1.cmc", "d1.mcp", "wrist.fe", "d5.mcp",
    ];
    expect(orderJoints(names)).toEqual([
      "d1.cmc", "d1.mcp", "d1.ip",
      "d2.mcp", "d2.pip", "d2.dip",
      "d5.mcp", "abduction", "wrist.fe", "wrist.rud",
    ]);
  });
});
