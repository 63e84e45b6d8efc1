import { describe, expect, it } from "vitest";

import {
  decodeFrame,
  encodeIntent,
  isStateSnapshot,
  type ServerFrame,
} from "../src/protocol.js";

const telemetry = {
  type: "telemetry",
  seq: 372,
  time_s: 12.399,
  targets: { "d2.mcp": 45.0, "wrist.fe": 0.0 },
  measured: { "d2.mcp": 44.91, "wrist.fe": 0.0 },
  skeleton: {
    digits: { D2: [[8.0, 34.5, 162.0], [9.0, 34.5, 170.0]] },
    palm_outline: [[0, 46, 33], [0, -46, 33], [0, -46, 0], [0, 46, 0]],
  },
  tip_gaps_mm: { D2: 112.4, D3: 98.1, D4: 121.9, D5: 130.2 },
  settled: false,
  replay: { trace: "", frame: 0, frames: 0, playing: false },
};

describe("decodeFrame", () => {
  it("accepts a telemetry broadcast", () => {
    const frame = decodeFrame(JSON.stringify(telemetry));
    expect(frame).not.toBeNull();
    expect(frame?.type).toBe("telemetry");
    if (frame?.type === "telemetry") {
      expect(frame.measured["d2.mcp"]).toBeCloseTo(44.91);
      expect(frame.skeleton.digits.D2).toHaveLength(2);
    }
  });

  it("accepts every documented reply shape", () => {
    const frames = [
      {
        type: "ack", intent: "slider", id: "s-17",
        joint: "d2.mcp", applied_deg: 45.0, clamped: false,
      },
      {
        type: "ik", intent: "drag", id: "g-4", digit: "D2",
        reachable: true, residual_mm: 0.415, iterations: 11,
        applied: ["d2.mcp", "d2.pip", "d2.dip", "abduction"],
        state: { "d2.mcp": 23.418 },
      },
      {
        type: "ack", intent: "wrist", id: "w-2",
        applied_deg: { "wrist.fe": 30.0, "wrist.rud": -10.0 }, clamped: false,
      },
      {
        type: "retarget", intent: "frame", id: "f-88",
        accepted: true, residual_mm: 0.062, state: { "d2.mcp": 12.0 },
      },
      {
        type: "ack", intent: "replay", id: "r-2",
        trace: "opposition", frame: 0, frames: 727, playing: true,
      },
      { type: "error", id: "s-19", error: "unknown joint 'd9.mcp'" },
      { type: "error", id: null, error: "frame is not a JSON object" },
    ];
    for (const raw of frames) {
      const decoded = decodeFrame(JSON.stringify(raw));
      expect(decoded, JSON.stringify(raw)).not.toBeNull();
      expect((decoded as ServerFrame).type).toBe(raw.type);
    }
  });

  it("rejects garbage without throwing", () => {
    expect(decodeFrame("{not json")).toBeNull();
    expect(decodeFrame("[1,2,3]")).toBeNull();
    expect(decodeFrame('"telemetry"')).toBeNull();
    expect(decodeFrame(JSON.stringify({ type: "telemetry", seq: 1 }))).toBeNull();
    expect(
      decodeFrame(JSON.stringify({ type: "ack", intent: "slider", id: 7 })),
    ).toBeNull();
    expect(
      decodeFrame(JSON.stringify({ ...telemetry, tip_gaps_mm: { D2: "close" } })),
    ).toBeNull();
  });

  it("rejects non-finite numbers smuggled as null", () => {
    const bad = { ...telemetry, time_s: null };
    expect(decodeFrame(JSON.stringify(bad))).toBeNull();
  });
});

describe("isStateSnapshot", () => {
  const snapshot = {
    ...telemetry,
    limits: { "d2.mcp": [0.0, 103.13], "wrist.fe": [-18.0, 52.0] },
    self_lock_margin_deg: { "d2.mcp": 20.231 },
  };

  it("accepts the /state payload", () => {
    const { type: _drop, ...body } = snapshot;
    expect(isStateSnapshot(body)).toBe(true);
  });

  it("requires limit pairs", () => {
    const { type: _drop, ...body } = snapshot;
    expect(isStateSnapshot({ ...body, limits: { "d2.mcp": [0.0] } })).toBe(false);
    expect(isStateSnapshot({ ...body, self_lock_margin_deg: null })).toBe(false);
  });
});

describe("encodeIntent", () => {
  it("round-trips through JSON untouched", () => {
    const intent = {
      intent: "drag" as const,
      id: "g-4",
      digit: "D2",
      point_mm: [61.0, 30.0, 120.0] as [number, number, number],
    };
    expect(JSON.parse(encodeIntent(intent))).toEqual(intent);
  });
});
