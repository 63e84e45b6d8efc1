/** At-least-once intent delivery with idempotent ids.
 *
 * Every intent carries a fresh client id; the server deduplicates by id
 * and replays the first reply on redelivery, so the safe response to a
 * timeout is to retransmit the identical message. The tracker owns the
 * id counter and the retry schedule; the caller owns the socket and the
 * clock (all times are caller-supplied milliseconds).
 */

import type { Intent } from "./protocol.js";

export const TIMEOUT_MS = 500;
export const MAX_ATTEMPTS = 5;

interface Tracked {
  intent: Intent;
  deadlineMs: number;
  attempts: number;
}

export interface DueIntent {
  intent: Intent;
  /** Attempts already made before this retry. */
  attempts: number;
}

export class IntentTracker {
  private counter = 0;
  private inflight = new Map<string, Tracked>();

  constructor(
    private readonly timeoutMs: number = TIMEOUT_MS,
    private readonly maxAttempts: number = MAX_ATTEMPTS,
  ) {}

  /** Fresh id, unique within this tracker: "<prefix>-<n>". */
  nextId(prefix: string): string {
    this.counter += 1;
    return `${prefix}-${this.counter}`;
  }

  /** Record an intent as sent; it stays tracked until reply or give-up. */
  sent(intent: Intent, atMs: number): void {
    const prior = this.inflight.get(intent.id);
    this.inflight.set(intent.id, {
      intent,
      deadlineMs: atMs + this.timeoutMs,
      attempts: (prior?.attempts ?? 0) + 1,
    });
  }

  /** A reply with this id arrived; duplicate replies resolve to false. */
  resolved(id: string | null): boolean {
    if (id === null) return false;
    return this.inflight.delete(id);
  }

  /** Intents past their deadline, rescheduled for retransmission.
   *
   * Each returned intent has already been rescheduled (deadline pushed,
   * attempt counted), so calling due() again within the timeout window
   * returns nothing; the caller just resends the payloads verbatim.
   */
  due(atMs: number): DueIntent[] {
    const out: DueIntent[] = [];
    for (const tracked of this.inflight.values()) {
      if (atMs < tracked.deadlineMs || tracked.attempts >= this.maxAttempts) {
        continue;
      }
      out.push({ intent: tracked.intent, attempts: tracked.attempts });
      tracked.attempts += 1;
      tracked.deadlineMs = atMs + this.timeoutMs;
    }
    return out;
  }

  /** Intents that timed out after exhausting the retry budget. */
  expired(atMs: number): Intent[] {
    const out: Intent[] = [];
    for (const [id, tracked] of this.inflight) {
      if (atMs >= tracked.deadlineMs && tracked.attempts >= this.maxAttempts) {
        out.push(tracked.intent);
        this.inflight.delete(id);
      }
    }
    return out;
  }

  pendingCount(): number {
    return this.inflight.size;
  }

  /** Drop all in-flight intents (socket closed; ids stay unique). */
  reset(): void {
    this.inflight.clear();
  }
}
