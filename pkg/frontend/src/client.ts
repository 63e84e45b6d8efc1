/** Control-socket wiring: one socket, decoded frames out, intents in.
 *
 * The socket object is injected (anything WebSocket-shaped works), so
 * the wiring is testable without a browser and the rest of the console
 * never touches raw network events.
 */

import { decodeFrame, encodeIntent, type Intent, type ServerFrame } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export interface ChannelHandlers {
  onOpen(): void;
  onClose(): void;
  onFrame(frame: ServerFrame): void;
  onBadFrame(raw: string): void;
}

export interface ControlChannel {
  send(intent: Intent): void;
  close(): void;
}

export function wireChannel(socket: SocketLike, handlers: ChannelHandlers): ControlChannel {
  socket.onopen = () => handlers.onOpen();
  socket.onclose = () => handlers.onClose();
  socket.onmessage = (ev) => {
    const raw = typeof ev.data === "string" ? ev.data : String(ev.data);
    const frame = decodeFrame(raw);
    if (frame === null) {
      handlers.onBadFrame(raw);
    } else {
      handlers.onFrame(frame);
    }
  };
  return {
    send(intent: Intent): void {
      socket.send(encodeIntent(intent));
    },
    close(): void {
      socket.close();
    },
  };
}

/** ws:// or wss:// address of the control endpoint for a page origin. */
export function controlUrl(location: { protocol: string; host: string }): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/control`;
}
