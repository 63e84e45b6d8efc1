/** Wire types for the simulator service, mirroring protocol.md.
 *
 * Every frame on the control socket is one JSON document. The guards
 * here are the single trust boundary: everything past decodeFrame is
 * typed, and malformed frames are surfaced, never thrown.
 */

export type Vec3 = [number, number, number];

export interface ReplayStatus {
  trace: string;
  frame: number;
  frames: number;
  playing: boolean;
}

export interface Skeleton {
  digits: Record<string, Vec3[]>;
  palm_outline: Vec3[];
}

export interface Telemetry {
  type: "telemetry";
  seq: number;
  time_s: number;
  targets: Record<string, number>;
  measured: Record<string, number>;
  skeleton: Skeleton;
  tip_gaps_mm: Record<string, number>;
  settled: boolean;
  replay: ReplayStatus;
}

/** GET /state payload: telemetry fields plus the static tables. */
export interface StateSnapshot extends Omit<Telemetry, "type"> {
  limits: Record<string, [number, number]>;
  self_lock_margin_deg: Record<string, number>;
}

export interface SliderAck {
  type: "ack";
  intent: "slider";
  id: string | null;
  joint: string;
  applied_deg: number;
  clamped: boolean;
}

export interface WristAck {
  type: "ack";
  intent: "wrist";
  id: string | null;
  applied_deg: Record<string, number>;
  clamped: boolean;
}

export interface ReplayAck extends ReplayStatus {
  type: "ack";
  intent: "replay";
  id: string | null;
}

export interface IkReply {
  type: "ik";
  intent: "drag";
  id: string | null;
  digit: string;
  reachable: boolean;
  residual_mm: number;
  iterations: number;
  applied: string[];
  state: Record<string, number>;
}

export interface RetargetReply {
  type: "retarget";
  intent: "frame";
  id: string | null;
  accepted: boolean;
  residual_mm: number;
  state: Record<string, number>;
}

export interface ErrorReply {
  type: "error";
  id: string | null;
  error: string;
}

export type ServerFrame =
  | Telemetry
  | SliderAck
  | WristAck
  | ReplayAck
  | IkReply
  | RetargetReply
  | ErrorReply;

export interface TraceRecord {
  t_ms: number;
  fingers: Record<string, { dip: Vec3; tip: Vec3 }>;
  wrist?: { fe_deg: number; rud_deg: number };
}

export interface SliderIntent {
  intent: "slider";
  id: string;
  joint: string;
  value_deg: number;
}

export interface DragIntent {
  intent: "drag";
  id: string;
  digit: string;
  point_mm: Vec3;
}

export interface WristIntent {
  intent: "wrist";
  id: string;
  fe_deg: number;
  rud_deg: number;
}

export interface FrameIntent {
  intent: "frame";
  id: string;
  record: TraceRecord;
}

export interface ReplayIntent {
  intent: "replay";
  id: string;
  action: "load" | "play" | "pause" | "seek";
  trace?: string;
  frame?: number;
}

export type Intent =
  | SliderIntent
  | DragIntent
  | WristIntent
  | FrameIntent
  | ReplayIntent;

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isNumberMap(v: unknown): v is Record<string, number> {
  return isRecord(v) && Object.values(v).every(isFiniteNumber);
}

function isVec3(v: unknown): v is Vec3 {
  return Array.isArray(v) && v.length === 3 && v.every(isFiniteNumber);
}

function isPolyline(v: unknown): v is Vec3[] {
  return Array.isArray(v) && v.every(isVec3);
}

function isId(v: unknown): v is string | null {
  return v === null || v === undefined || typeof v === "string";
}

export function isReplayStatus(v: unknown): v is ReplayStatus {
  return (
    isRecord(v) &&
    typeof v.trace === "string" &&
    isFiniteNumber(v.frame) &&
    isFiniteNumber(v.frames) &&
    typeof v.playing === "boolean"
  );
}

export function isSkeleton(v: unknown): v is Skeleton {
  if (!isRecord(v) || !isRecord(v.digits) || !isPolyline(v.palm_outline)) {
    return false;
  }
  return Object.values(v.digits).every(isPolyline);
}

export function isTelemetry(v: unknown): v is Telemetry {
  return (
    isRecord(v) &&
    v.type === "telemetry" &&
    isFiniteNumber(v.seq) &&
    isFiniteNumber(v.time_s) &&
    isNumberMap(v.targets) &&
    isNumberMap(v.measured) &&
    isSkeleton(v.skeleton) &&
    isNumberMap(v.tip_gaps_mm) &&
    typeof v.settled === "boolean" &&
    isReplayStatus(v.replay)
  );
}

export function isStateSnapshot(v: unknown): v is StateSnapshot {
  if (!isRecord(v) || !isNumberMap(v.self_lock_margin_deg)) return false;
  if (!isRecord(v.limits)) return false;
  const pairs = Object.values(v.limits);
  if (!pairs.every((p) => Array.isArray(p) && p.length === 2 && p.every(isFiniteNumber))) {
    return false;
  }
  return isTelemetry({ ...v, type: "telemetry" });
}

function isSliderAck(v: Record<string, unknown>): v is SliderAck & Record<string, unknown> {
  return (
    v.intent === "slider" &&
    typeof v.joint === "string" &&
    isFiniteNumber(v.applied_deg) &&
    typeof v.clamped === "boolean"
  );
}

function isWristAck(v: Record<string, unknown>): v is WristAck & Record<string, unknown> {
  return v.intent === "wrist" && isNumberMap(v.applied_deg) && typeof v.clamped === "boolean";
}

function isReplayAck(v: Record<string, unknown>): v is ReplayAck & Record<string, unknown> {
  return v.intent === "replay" && isReplayStatus(v);
}

function isIkReply(v: Record<string, unknown>): v is IkReply & Record<string, unknown> {
  return (
    v.type === "ik" &&
    v.intent === "drag" &&
    typeof v.digit === "string" &&
    typeof v.reachable === "boolean" &&
    isFiniteNumber(v.residual_mm) &&
    isFiniteNumber(v.iterations) &&
    Array.isArray(v.applied) &&
    v.applied.every((j) => typeof j === "string") &&
    isNumberMap(v.state)
  );
}

function isRetargetReply(v: Record<string, unknown>): v is RetargetReply & Record<string, unknown> {
  return (
    v.type === "retarget" &&
    v.intent === "frame" &&
    typeof v.accepted === "boolean" &&
    isFiniteNumber(v.residual_mm) &&
    isNumberMap(v.state)
  );
}

export function isServerFrame(v: unknown): v is ServerFrame {
  if (!isRecord(v)) return false;
  if (v.type === "telemetry") return isTelemetry(v);
  if (v.type === "error") return isId(v.id) && typeof v.error === "string";
  if (!isId(v.id)) return false;
  if (v.type === "ik") return isIkReply(v);
  if (v.type === "retarget") return isRetargetReply(v);
  if (v.type === "ack") return isSliderAck(v) || isWristAck(v) || isReplayAck(v);
  return false;
}

/** Parse one control-socket frame; null means unusable (report, don't throw). */
export function decodeFrame(raw: string): ServerFrame | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  return isServerFrame(parsed) ? parsed : null;
}

export function encodeIntent(intent: Intent): string {
  return JSON.stringify(intent);
}
