/** Browser entry point: builds the console DOM, owns the socket and the
 * clock, and renders ViewState. All state transitions go through the
 * pure reducer; this file is glue only.
 */

import { wireChannel, type ControlChannel, type SocketLike } from "./client.js";
import { IntentTracker } from "./intents.js";
import {
  isStateSnapshot,
  type Intent,
  type Vec3,
} from "./protocol.js";
import { ContactTimeline, contactFlags, frameAt, fractionOf } from "./replay.js";
import {
  depthStyle,
  fitTransform,
  fromPixels,
  layoutSkeleton,
  project,
  toPixels,
  unproject,
  type Transform,
  type ViewName,
} from "./skeleton.js";
import {
  initialView,
  orderJoints,
  reduce,
  tipOf,
  type ViewEvent,
  type ViewState,
} from "./viewstate.js";

const TICK_MS = 100;
const DRAG_MIN_GAP_MS = 50;
const RECONNECT_MS = 1000;

let view: ViewState = initialView();
const tracker = new IntentTracker();
const contacts = new ContactTimeline();
let channel: ControlChannel | null = null;
let viewName: ViewName = "palm";
let dragging: { digit: string; depth: number; lastSentMs: number } | null = null;
let lastTransform: Transform | null = null;

function now(): number {
  return performance.now();
}

function dispatch(event: ViewEvent): void {
  view = reduce(view, event);
  scheduleRender();
}

function sendIntent(intent: Intent): void {
  if (!channel) return;
  channel.send(intent);
  tracker.sent(intent, now());
  dispatch({ kind: "sent", intent, atMs: now() });
}

// -- DOM scaffolding ---------------------------------------------------------

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

const app = document.getElementById("app") ?? document.body;

const banner = el("div", { class: "banner hidden" });
const statusDot = el("span", { class: "dot" });
const statusText = el("span", {}, "connecting");
const settledText = el("span", { class: "chip" }, "settled");
const retryChip = el("span", { class: "chip warn hidden" });
const hostInput = el("input", {
  type: "text",
  value: defaultHost(),
  title: "service address (host:port)",
}) as HTMLInputElement;
const connectBtn = el("button", {}, "connect");

const slidersBox = el("div", { class: "sliders" });
const canvas = el("canvas", { width: "720", height: "560" }) as HTMLCanvasElement;
const viewToggle = el("button", {}, "side view");
const reachBox = el("div", { class: "reach" });
const wristPad = el("div", { class: "pad" });
const wristDot = el("div", { class: "pad-dot" });
const wristLabel = el("div", { class: "pad-label" }, "wrist fe 0.0 / rud 0.0");
const marginBox = el("div", { class: "margins" });
const errorsBox = el("ul", { class: "errors" });
const replayBox = el("div", { class: "replay" });
const scrubber = el("input", {
  type: "range",
  min: "0",
  max: "1000",
  value: "0",
}) as HTMLInputElement;
const replayLabel = el("div", {}, "no trace");
const marksBox = el("div", { class: "marks" });

wristPad.append(wristDot);

function buildLayout(): void {
  const header = el(
    "div",
    { class: "topbar" },
    statusDot,
    statusText,
    settledText,
    retryChip,
    el("span", { class: "spacer" }),
    hostInput,
    connectBtn,
  );
  const replayButtons = el(
    "div",
    { class: "row" },
    el("button", { "data-replay": "sweep" }, "load sweep"),
    el("button", { "data-replay": "opposition" }, "load opposition"),
    el("button", { "data-replay": "play" }, "play"),
    el("button", { "data-replay": "pause" }, "pause"),
  );
  replayBox.append(replayButtons, scrubber, marksBox, replayLabel);
  app.append(
    banner,
    header,
    el(
      "div",
      { class: "columns" },
      el("div", { class: "col left" }, el("h2", {}, "joints"), slidersBox),
      el(
        "div",
        { class: "col center" },
        el("div", { class: "row" }, viewToggle),
        canvas,
        el("h2", {}, "fingertip reach"),
        reachBox,
      ),
      el(
        "div",
        { class: "col right" },
        el("h2", {}, "wrist"),
        wristPad,
        wristLabel,
        el("h2", {}, "replay"),
        replayBox,
        el("h2", {}, "self-lock margin (deg)"),
        marginBox,
        el("h2", {}, "server errors"),
        errorsBox,
      ),
    ),
  );
}

function defaultHost(): string {
  if (location.protocol.startsWith("http") && location.host) {
    return location.host;
  }
  return "127.0.0.1:8000";
}

// -- Sliders ------------------------------------------------------------------

interface SliderRow {
  row: HTMLElement;
  input: HTMLInputElement;
  value: HTMLElement;
  clampBadge: HTMLElement;
}

const sliderRows = new Map<string, SliderRow>();

function buildSliders(): void {
  slidersBox.replaceChildren();
  sliderRows.clear();
  for (const joint of orderJoints(Object.keys(view.limits))) {
    const [lo, hi] = view.limits[joint] ?? [0, 0];
    const input = el("input", {
      type: "range",
      min: String(lo),
      max: String(hi),
      step: "0.1",
      value: String(view.targets[joint] ?? 0),
    }) as HTMLInputElement;
    const value = el("span", { class: "val" }, "0.0");
    const clampBadge = el("span", { class: "chip warn hidden" }, "clamped");
    const row = el(
      "div",
      { class: "slider-row" },
      el("label", {}, joint),
      input,
      value,
      clampBadge,
    );
    input.addEventListener("input", () => {
      sendIntent({
        intent: "slider",
        id: tracker.nextId("s"),
        joint,
        value_deg: Number(input.value),
      });
    });
    sliderRows.set(joint, { row, input, value, clampBadge });
    slidersBox.append(row);
  }
}

// -- Wrist pad ----------------------------------------------------------------

let wristSentMs = 0;

function wristFromEvent(ev: PointerEvent): { fe: number; rud: number } | null {
  const fe = view.limits["wrist.fe"];
  const rud = view.limits["wrist.rud"];
  if (!fe || !rud) return null;
  const rect = wristPad.getBoundingClientRect();
  const fx = Math.min(Math.max((ev.clientX - rect.left) / rect.width, 0), 1);
  const fy = Math.min(Math.max((ev.clientY - rect.top) / rect.height, 0), 1);
  return {
    rud: rud[0] + fx * (rud[1] - rud[0]),
    fe: fe[0] + (1 - fy) * (fe[1] - fe[0]),
  };
}

function onWristPointer(ev: PointerEvent): void {
  const pose = wristFromEvent(ev);
  if (!pose || now() - wristSentMs < DRAG_MIN_GAP_MS) return;
  wristSentMs = now();
  sendIntent({
    intent: "wrist",
    id: tracker.nextId("w"),
    fe_deg: pose.fe,
    rud_deg: pose.rud,
  });
}

// -- Canvas -------------------------------------------------------------------

function pickDigit(xPx: number, yPx: number): { digit: string; depth: number } | null {
  if (!view.skeleton || !lastTransform) return null;
  let best: { digit: string; depth: number; d2: number } | null = null;
  for (const digit of Object.keys(view.skeleton.digits)) {
    const tip = tipOf(view, digit);
    if (!tip) continue;
    const proj = project(viewName, tip);
    const px = toPixels(lastTransform, proj);
    const d2 = (px.x - xPx) ** 2 + (px.y - yPx) ** 2;
    if (d2 <= 16 * 16 && (best === null || d2 < best.d2)) {
      best = { digit, depth: proj.depth, d2 };
    }
  }
  return best ? { digit: best.digit, depth: best.depth } : null;
}

function dragTarget(ev: PointerEvent): Vec3 | null {
  if (!dragging || !lastTransform) return null;
  const rect = canvas.getBoundingClientRect();
  const planar = fromPixels(
    lastTransform,
    ev.clientX - rect.left,
    ev.clientY - rect.top,
  );
  return unproject(viewName, planar, dragging.depth);
}

function onCanvasDown(ev: PointerEvent): void {
  const rect = canvas.getBoundingClientRect();
  const hit = pickDigit(ev.clientX - rect.left, ev.clientY - rect.top);
  if (hit) {
    dragging = { ...hit, lastSentMs: 0 };
    canvas.setPointerCapture(ev.pointerId);
  }
}

function onCanvasMove(ev: PointerEvent): void {
  if (!dragging || now() - dragging.lastSentMs < DRAG_MIN_GAP_MS) return;
  const point = dragTarget(ev);
  if (!point) return;
  dragging.lastSentMs = now();
  sendIntent({
    intent: "drag",
    id: tracker.nextId("g"),
    digit: dragging.digit,
    point_mm: point,
  });
}

function onCanvasUp(): void {
  dragging = null;
}

function drawSkeleton(): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!view.skeleton) return;
  const lines = layoutSkeleton(viewName, view.skeleton);
  const allPoints = lines.flatMap((l) => l.points);
  const t = fitTransform(allPoints, {
    widthPx: canvas.width,
    heightPx: canvas.height,
    marginPx: 40,
  });
  lastTransform = t;
  let minD = Infinity;
  let maxD = -Infinity;
  for (const p of allPoints) {
    minD = Math.min(minD, p.depth);
    maxD = Math.max(maxD, p.depth);
  }
  const range = { min: minD, max: maxD };
  const touching = contactFlags(view.tipGapsMm);
  for (const line of lines) {
    const style = depthStyle(line.meanDepth, range);
    ctx.beginPath();
    line.points.forEach((p, i) => {
      const px = toPixels(t, p);
      if (i === 0) ctx.moveTo(px.x, px.y);
      else ctx.lineTo(px.x, px.y);
    });
    ctx.lineWidth = style.widthPx;
    ctx.strokeStyle =
      line.name === "palm"
        ? `rgba(90, 110, 140, ${style.alpha})`
        : `rgba(40, 60, 90, ${style.alpha})`;
    ctx.lineJoin = "round";
    ctx.lineCap = "round";
    ctx.stroke();
    if (line.name !== "palm" && line.points.length > 0) {
      const tip = line.points[line.points.length - 1];
      if (tip) {
        const px = toPixels(t, tip);
        ctx.beginPath();
        ctx.arc(px.x, px.y, 5, 0, Math.PI * 2);
        const reach = view.reach[line.name];
        ctx.fillStyle =
          reach && !reach.reachable ? "#c0392b" : "#2d7d46";
        ctx.fill();
        if (touching[line.name]) {
          ctx.beginPath();
          ctx.arc(px.x, px.y, 9, 0, Math.PI * 2);
          ctx.strokeStyle = "#e67e22";
          ctx.lineWidth = 2;
          ctx.stroke();
        }
      }
    }
  }
}

// -- Panels -------------------------------------------------------------------

function renderPanels(): void {
  statusText.textContent = view.connection;
  statusDot.className = `dot ${view.connection}`;
  banner.classList.toggle("hidden", !view.stale && view.banner === null);
  banner.textContent = view.stale
    ? "telemetry stale: no fresh data for over a second"
    : view.banner ?? "";
  settledText.classList.toggle("ok", view.settled);
  settledText.textContent = view.settled ? "settled" : "moving";

  const retrying = Object.keys(view.retrying).length;
  retryChip.classList.toggle("hidden", retrying === 0);
  retryChip.textContent = `retrying ${retrying}`;

  for (const [joint, row] of sliderRows) {
    const target = view.targets[joint] ?? 0;
    if (document.activeElement !== row.input) {
      row.input.value = String(target);
    }
    const measured = view.measured[joint];
    row.value.textContent =
      measured === undefined
        ? target.toFixed(1)
        : `${target.toFixed(1)} / ${measured.toFixed(2)}`;
    row.clampBadge.classList.toggle("hidden", !view.clamped[joint]);
  }

  reachBox.replaceChildren(
    ...Object.entries(view.reach).map(([digit, r]) =>
      el(
        "div",
        { class: r.reachable ? "reach-row ok" : "reach-row bad" },
        `${digit}: ${r.reachable ? "reachable" : "unreachable"}, residual ${r.residualMm.toFixed(3)} mm`,
      ),
    ),
  );

  const fe = view.targets["wrist.fe"] ?? 0;
  const rud = view.targets["wrist.rud"] ?? 0;
  wristLabel.textContent = `wrist fe ${fe.toFixed(1)} / rud ${rud.toFixed(1)}`;
  const feLim = view.limits["wrist.fe"];
  const rudLim = view.limits["wrist.rud"];
  if (feLim && rudLim) {
    const fx = (rud - rudLim[0]) / (rudLim[1] - rudLim[0] || 1);
    const fy = 1 - (fe - feLim[0]) / (feLim[1] - feLim[0] || 1);
    wristDot.style.left = `${(fx * 100).toFixed(1)}%`;
    wristDot.style.top = `${(fy * 100).toFixed(1)}%`;
  }

  marginBox.replaceChildren(
    ...Object.entries(view.selfLockMarginDeg)
      .sort(([a], [b]) => (a < b ? -1 : 1))
      .map(([name, margin]) =>
        el(
          "div",
          { class: margin > 0 ? "margin ok" : "margin bad" },
          `${name}: ${margin.toFixed(2)}`,
        ),
      ),
  );

  errorsBox.replaceChildren(
    ...view.errors
      .slice(-8)
      .reverse()
      .map((e) => el("li", {}, `${e.id ?? "?"}: ${e.error}`)),
  );

  const r = view.replay;
  replayLabel.textContent = r.trace
    ? `${r.trace}: frame ${r.frame + 1} / ${r.frames}${r.playing ? " (playing)" : ""}`
    : "no trace";
  if (document.activeElement !== scrubber) {
    scrubber.value = String(Math.round(fractionOf(r.frame, r.frames) * 1000));
  }
  contacts.observe(r.trace, r.frame, view.tipGapsMm);
  marksBox.replaceChildren(
    ...contacts.marks().map((m) => {
      const mark = el("span", { class: "mark", title: `${m.digit} @ ${m.frame}` });
      mark.style.left = `${(fractionOf(m.frame, r.frames) * 100).toFixed(1)}%`;
      return mark;
    }),
  );
}

let renderQueued = false;

function scheduleRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    drawSkeleton();
    renderPanels();
  });
}

// -- Connection ---------------------------------------------------------------

async function fetchSnapshot(host: string): Promise<void> {
  try {
    const res = await fetch(`http://${host}/state`);
    const body: unknown = await res.json();
    if (!isStateSnapshot(body)) {
      dispatch({ kind: "bad-frame", raw: "snapshot", atMs: now() });
      return;
    }
    dispatch({ kind: "snapshot", snapshot: body, atMs: now() });
    buildSliders();
  } catch {
    view = { ...view, banner: "snapshot fetch failed; retrying" };
    scheduleRender();
  }
}

function connect(): void {
  const host = hostInput.value.trim();
  channel?.close();
  dispatch({ kind: "connecting", atMs: now() });
  void fetchSnapshot(host);
  const socket = new WebSocket(`ws://${host}/control`) as unknown as SocketLike;
  channel = wireChannel(socket, {
    onOpen: () => dispatch({ kind: "open", atMs: now() }),
    onClose: () => {
      tracker.reset();
      dispatch({ kind: "closed", atMs: now() });
      setTimeout(() => {
        if (view.connection === "closed") connect();
      }, RECONNECT_MS);
    },
    onFrame: (frame) => {
      if (frame.type !== "telemetry") tracker.resolved(frame.id ?? null);
      dispatch({ kind: "frame", frame, atMs: now() });
    },
    onBadFrame: (raw) => dispatch({ kind: "bad-frame", raw, atMs: now() }),
  });
}

function tick(): void {
  const atMs = now();
  for (const due of tracker.due(atMs)) {
    channel?.send(due.intent);
    dispatch({ kind: "retried", id: due.intent.id, atMs });
  }
  for (const intent of tracker.expired(atMs)) {
    dispatch({ kind: "gave-up", id: intent.id, atMs });
  }
  dispatch({ kind: "tick", atMs });
}

// -- Wire up ------------------------------------------------------------------

buildLayout();
viewToggle.addEventListener("click", () => {
  viewName = viewName === "palm" ? "side" : "palm";
  viewToggle.textContent = viewName === "palm" ? "side view" : "palm view";
  scheduleRender();
});
connectBtn.addEventListener("click", connect);
canvas.addEventListener("pointerdown", onCanvasDown);
canvas.addEventListener("pointermove", onCanvasMove);
canvas.addEventListener("pointerup", onCanvasUp);
wristPad.addEventListener("pointerdown", onWristPointer);
wristPad.addEventListener("pointermove", (ev) => {
  if (ev.buttons !== 0) onWristPointer(ev);
});
replayBox.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const action = target.getAttribute("data-replay");
  if (!action) return;
  if (action === "sweep" || action === "opposition") {
    sendIntent({
      intent: "replay",
      id: tracker.nextId("r"),
      action: "load",
      trace: action,
    });
  } else if (action === "play" || action === "pause") {
    sendIntent({ intent: "replay", id: tracker.nextId("r"), action });
  }
});
scrubber.addEventListener("input", () => {
  if (view.replay.frames === 0) return;
  sendIntent({
    intent: "replay",
    id: tracker.nextId("r"),
    action: "seek",
    frame: frameAt(Number(scrubber.value) / 1000, view.replay.frames),
  });
});

setInterval(tick, TICK_MS);
connect();
