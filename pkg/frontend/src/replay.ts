/** Replay timeline helpers: scrubber math and contact flagging.
 *
 * Contacts are purely a display of server-supplied thumb-tip gaps; the
 * timeline remembers where along the trace each digit first came into
 * contact so the scrubber can show marks as they occur.
 */

/** Tips closer to the thumb than this read as contact (display rule,
 * matching the service's opposition tolerance default). */
export const CONTACT_MM = 5.0;

export function clampFrame(frame: number, frames: number): number {
  if (frames <= 0) return 0;
  return Math.min(Math.max(Math.round(frame), 0), frames - 1);
}

/** Scrubber position in [0, 1] for a frame index. */
export function fractionOf(frame: number, frames: number): number {
  if (frames <= 1) return 0;
  return clampFrame(frame, frames) / (frames - 1);
}

/** Frame index for a scrubber position in [0, 1]. */
export function frameAt(fraction: number, frames: number): number {
  if (frames <= 0) return 0;
  const f = Math.min(Math.max(fraction, 0), 1);
  return clampFrame(f * (frames - 1), frames);
}

export function contactFlags(
  tipGapsMm: Record<string, number>,
  thresholdMm: number = CONTACT_MM,
): Record<string, boolean> {
  const out: Record<string, boolean> = {};
  for (const [digit, gap] of Object.entries(tipGapsMm)) {
    out[digit] = gap < thresholdMm;
  }
  return out;
}

export interface ContactMark {
  digit: string;
  frame: number;
}

/** Accumulates contact onsets while a trace plays.
 *
 * A mark is recorded when a digit's gap crosses below the threshold
 * (rising contact edge); marks reset when the trace changes or the
 * playhead jumps backwards, so scrubbing back replays them.
 */
export class ContactTimeline {
  private trace = "";
  private lastFrame = -1;
  private touching = new Set<string>();
  private readonly marks_: ContactMark[] = [];

  constructor(private readonly thresholdMm: number = CONTACT_MM) {}

  observe(trace: string, frame: number, tipGapsMm: Record<string, number>): void {
    if (trace !== this.trace || frame < this.lastFrame) {
      this.trace = trace;
      this.marks_.length = 0;
      this.touching.clear();
    }
    this.lastFrame = frame;
    for (const [digit, gap] of Object.entries(tipGapsMm)) {
      const contact = gap < this.thresholdMm;
      if (contact && !this.touching.has(digit)) {
        this.touching.add(digit);
        this.marks_.push({ digit, frame });
      } else if (!contact) {
        this.touching.delete(digit);
      }
    }
  }

  marks(): readonly ContactMark[] {
    return this.marks_;
  }

  /** Digits currently in contact. */
  active(): string[] {
    return [...this.touching].sort();
  }
}
