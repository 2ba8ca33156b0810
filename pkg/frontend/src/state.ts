/** Client-side session state: the last frame's state plus the merged
 * transcript.  A snapshot frame replaces everything; a delta frame appends
 * its transcript entries.  Frame steps must never regress: the server
 * guarantees a monotone sequence, so a regression means frames from two
 * different sessions got mixed up, and the store refuses to continue.
 */

import type { Frame, Metrics, SnapshotState, TranscriptEntry } from "./types.js";

export class SessionStore {
  state: SnapshotState | null = null;
  transcript: TranscriptEntry[] = [];
  metrics: Metrics | null = null;
  lastStep = -1;
  frameCount = 0;

  applyFrame(frame: Frame): void {
    if (frame.type !== "snapshot" && this.state === null) {
      throw new Error("delta frame before any snapshot");
    }
    if (frame.step < this.lastStep) {
      throw new Error(`frame step went backwards: ${this.lastStep} -> ${frame.step}`);
    }
    if (frame.type === "snapshot") {
      this.transcript = [...frame.transcript];
    } else {
      this.transcript.push(...frame.transcript);
    }
    this.state = frame.state;
    this.metrics = frame.metrics;
    this.lastStep = frame.step;
    this.frameCount += 1;
  }

  mode(): string {
    return this.state === null ? "disconnected" : this.state.mode;
  }
}
