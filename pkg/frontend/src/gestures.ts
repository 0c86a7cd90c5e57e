// Scripted gesture policies: synthetic "hands" that react to snapshots.
// Used by the automated end-to-end tests and handy for demos; they emit
// intended deltas that still pass through the emulation filter like real
// pointer input.

import { TickState } from "./protocol.js";

export interface GesturePolicy {
  // intended delta for this frame given the latest snapshot
  step(snap: TickState, dt: number): [number, number];
}

// Move straight at the active target at a capped speed; inside the disc
// corrections slow to a careful hold speed (a human does not whip the
// pointer around while dwelling).
export class AimPolicy implements GesturePolicy {
  constructor(private speedPxS: number = 900.0,
              private holdSpeedPxS: number = 140.0) {}

  step(snap: TickState, dt: number): [number, number] {
    const tgt = snap.target;
    if (!tgt || !tgt.screen) return [0, 0];
    const dx = tgt.screen[0] - snap.cursor[0];
    const dy = tgt.screen[1] - snap.cursor[1];
    const d = Math.hypot(dx, dy);
    if (d <= tgt.radius_px * 0.15) return [0, 0]; // settled: hold
    const speed = d > tgt.radius_px ? this.speedPxS : this.holdSpeedPxS;
    const step = Math.min(speed * dt, d);
    return [(dx / d) * step, (dy / d) * step];
  }
}
