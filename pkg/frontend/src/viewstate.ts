/** Pure view model for the operator console.
 *
 * The UI renders ViewState and nothing else; network events are folded
 * in through `reduce`, so rendering never blocks on the network and
 * every displayed pose originates from server data. All times are
 * caller-supplied monotonic milliseconds, which keeps the reducer
 * deterministic and testable.
 */

import type {
  ErrorReply,
  Intent,
  ReplayStatus,
  ServerFrame,
  Skeleton,
  StateSnapshot,
  Vec3,
} from "./protocol.js";

/** Telemetry older than this is flagged as stale in the view. */
export const STALE_AFTER_MS = 1000;

const MAX_ERRORS = 20;

export type Connection = "connecting" | "open" | "closed";

export interface ReachInfo {
  reachable: boolean;
  residualMm: number;
  atMs: number;
}

export interface PendingIntent {
  intent: Intent;
  sentAtMs: number;
  attempts: number;
}

export interface ViewState {
  connection: Connection;
  lastTelemetryMs: number | null;
  stale: boolean;
  seq: number | null;
  timeS: number;
  targets: Record<string, number>;
  measured: Record<string, number>;
  limits: Record<string, [number, number]>;
  selfLockMarginDeg: Record<string, number>;
  skeleton: Skeleton | null;
  tipGapsMm: Record<string, number>;
  settled: boolean;
  replay: ReplayStatus;
  /** Joints whose last slider/wrist ack came back clamped (amber badges). */
  clamped: Record<string, boolean>;
  /** Latest per-digit drag verdict (green/red indicator + residual). */
  reach: Record<string, ReachInfo>;
  /** Latest retarget verdict for live frames. */
  retarget: { accepted: boolean; residualMm: number } | null;
  /** In-flight intents by id; entries past their deadline get retried. */
  pending: Record<string, PendingIntent>;
  /** Ids currently showing a retry badge (timed out at least once). */
  retrying: Record<string, number>;
  /** Intents that exhausted their retry budget (dead-letter badges). */
  failed: Record<string, PendingIntent>;
  errors: ErrorReply[];
  banner: string | null;
}

export type ViewEvent =
  | { kind: "connecting"; atMs: number }
  | { kind: "open"; atMs: number }
  | { kind: "closed"; atMs: number }
  | { kind: "snapshot"; snapshot: StateSnapshot; atMs: number }
  | { kind: "frame"; frame: ServerFrame; atMs: number }
  | { kind: "bad-frame"; raw: string; atMs: number }
  | { kind: "sent"; intent: Intent; atMs: number }
  | { kind: "retried"; id: string; atMs: number }
  | { kind: "gave-up"; id: string; atMs: number }
  | { kind: "tick"; atMs: number };

export function initialView(): ViewState {
  return {
    connection: "connecting",
    lastTelemetryMs: null,
    stale: false,
    seq: null,
    timeS: 0,
    targets: {},
    measured: {},
    limits: {},
    selfLockMarginDeg: {},
    skeleton: null,
    tipGapsMm: {},
    settled: false,
    replay: { trace: "", frame: 0, frames: 0, playing: false },
    clamped: {},
    reach: {},
    retarget: null,
    pending: {},
    retrying: {},
    failed: {},
    errors: [],
    banner: null,
  };
}

function withStaleness(view: ViewState, atMs: number): ViewState {
  const stale =
    view.connection !== "open" ||
    view.lastTelemetryMs === null ||
    atMs - view.lastTelemetryMs >= STALE_AFTER_MS;
  return stale === view.stale ? view : { ...view, stale };
}

function clearPending(view: ViewState, id: string | null): ViewState {
  if (id === null || !(id in view.pending || id in view.retrying)) return view;
  const pending = { ...view.pending };
  const retrying = { ...view.retrying };
  delete pending[id];
  delete retrying[id];
  return { ...view, pending, retrying };
}

function applyServerFrame(view: ViewState, frame: ServerFrame, atMs: number): ViewState {
  switch (frame.type) {
    case "telemetry":
      return {
        ...view,
        lastTelemetryMs: atMs,
        stale: false,
        seq: frame.seq,
        timeS: frame.time_s,
        targets: frame.targets,
        measured: frame.measured,
        skeleton: frame.skeleton,
        tipGapsMm: frame.tip_gaps_mm,
        settled: frame.settled,
        replay: frame.replay,
      };
    case "error": {
      const errors = [...view.errors, frame].slice(-MAX_ERRORS);
      return { ...clearPending(view, frame.id ?? null), errors };
    }
    case "ack": {
      const base = clearPending(view, frame.id ?? null);
      if (frame.intent === "slider") {
        return {
          ...base,
          targets: { ...base.targets, [frame.joint]: frame.applied_deg },
          clamped: { ...base.clamped, [frame.joint]: frame.clamped },
        };
      }
      if (frame.intent === "wrist") {
        const clamped = { ...base.clamped };
        for (const joint of Object.keys(frame.applied_deg)) {
          clamped[joint] = frame.clamped;
        }
        return {
          ...base,
          targets: { ...base.targets, ...frame.applied_deg },
          clamped,
        };
      }
      return {
        ...base,
        replay: {
          trace: frame.trace,
          frame: frame.frame,
          frames: frame.frames,
          playing: frame.playing,
        },
      };
    }
    case "ik": {
      const base = clearPending(view, frame.id ?? null);
      const reach = {
        ...base.reach,
        [frame.digit]: {
          reachable: frame.reachable,
          residualMm: frame.residual_mm,
          atMs,
        },
      };
      const targets = frame.reachable
        ? { ...base.targets, ...frame.state }
        : base.targets;
      return { ...base, reach, targets };
    }
    case "retarget": {
      const base = clearPending(view, frame.id ?? null);
      const targets = frame.accepted
        ? { ...base.targets, ...frame.state }
        : base.targets;
      return {
        ...base,
        targets,
        retarget: { accepted: frame.accepted, residualMm: frame.residual_mm },
      };
    }
  }
}

export function reduce(view: ViewState, event: ViewEvent): ViewState {
  switch (event.kind) {
    case "connecting":
      return withStaleness({ ...view, connection: "connecting" }, event.atMs);
    case "open":
      return withStaleness(
        { ...view, connection: "open", banner: null },
        event.atMs,
      );
    case "closed":
      return withStaleness(
        { ...view, connection: "closed", pending: {}, retrying: {} },
        event.atMs,
      );
    case "snapshot": {
      const s = event.snapshot;
      return withStaleness(
        {
          ...view,
          lastTelemetryMs: event.atMs,
          seq: s.seq,
          timeS: s.time_s,
          targets: s.targets,
          measured: s.measured,
          limits: s.limits,
          selfLockMarginDeg: s.self_lock_margin_deg,
          skeleton: s.skeleton,
          tipGapsMm: s.tip_gaps_mm,
          settled: s.settled,
          replay: s.replay,
        },
        event.atMs,
      );
    }
    case "frame":
      return withStaleness(
        applyServerFrame(view, event.frame, event.atMs),
        event.atMs,
      );
    case "bad-frame":
      return { ...view, banner: "unreadable frame from server; view retained" };
    case "sent": {
      const id = event.intent.id;
      const prior = view.pending[id];
      return {
        ...view,
        pending: {
          ...view.pending,
          [id]: {
            intent: event.intent,
            sentAtMs: event.atMs,
            attempts: (prior?.attempts ?? 0) + 1,
          },
        },
      };
    }
    case "retried": {
      const entry = view.pending[event.id];
      if (!entry) return view;
      return {
        ...view,
        pending: {
          ...view.pending,
          [event.id]: {
            ...entry,
            sentAtMs: event.atMs,
            attempts: entry.attempts + 1,
          },
        },
        retrying: { ...view.retrying, [event.id]: entry.attempts },
      };
    }
    case "gave-up": {
      const entry = view.pending[event.id];
      if (!entry) return view;
      const next = clearPending(view, event.id);
      return { ...next, failed: { ...next.failed, [event.id]: entry } };
    }
    case "tick":
      return withStaleness(view, event.atMs);
  }
}

/** Slider positions the widgets should show: commanded targets. */
export function sliderValue(view: ViewState, joint: string): number {
  return view.targets[joint] ?? 0;
}

/** Digits whose thumb-tip gap is within the contact threshold. */
export function contactDigits(view: ViewState, thresholdMm: number): string[] {
  return Object.entries(view.tipGapsMm)
    .filter(([, gap]) => gap < thresholdMm)
    .map(([digit]) => digit)
    .sort();
}

/** Fingertip point of a digit from server-supplied skeleton data. */
export function tipOf(view: ViewState, digit: string): Vec3 | null {
  const line = view.skeleton?.digits[digit];
  if (!line || line.length === 0) return null;
  return line[line.length - 1] ?? null;
}

const JOINT_RANK = ["cmc", "mcp", "pip", "ip", "dip"];

/** Display order for the commanded values: digit chains proximal to
 * distal, then the shared spread servo, then the wrist pair. */
export function orderJoints(names: string[]): string[] {
  const rank = (name: string): [number, number, string] => {
    const [head, part] = name.split(".", 2);
    if (head && part && /^d\d$/.test(head)) {
      const r = JOINT_RANK.indexOf(part);
      return [Number(head.slice(1)), r === -1 ? JOINT_RANK.length : r, name];
    }
    if (name === "abduction") return [90, 0, name];
    if (head === "wrist") return [91, part === "fe" ? 0 : 1, name];
    return [99, 0, name];
  };
  return [...names].sort((a, b) => {
    const ra = rank(a);
    const rb = rank(b);
    if (ra[0] !== rb[0]) return ra[0] - rb[0];
    if (ra[1] !== rb[1]) return ra[1] - rb[1];
    return ra[2] < rb[2] ? -1 : ra[2] > rb[2] ? 1 : 0;
  });
}
