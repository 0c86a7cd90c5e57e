// Device-emulation filters: pure transforms applied to pointer deltas
// before they are sent, so one laptop and mouse can stand in for the
// hands-free device classes. Parameters derive from the same presets JSON
// the backend serves at /api/presets.

import { gaussian, mulberry32, Rng } from "./prng.js";

export type EmulationMode = "direct" | "head-emu" | "image-emu";

export interface PresetParams {
  latency_s: number;
  max_speed_px_s: number;
  gain_hz: number;
  noise_coeff: number;
  tremor_amp_px_s: number;
  tremor_freq_hz: number;
  damping: number;
}

export interface PresetsDoc {
  schema: string;
  classes: Record<string, { params: PresetParams }>;
}

export interface DeltaFilter {
  // transform one frame's coalesced delta; dt is the frame interval
  apply(dx: number, dy: number, t: number, dt: number): [number, number];
}

class DirectFilter implements DeltaFilter {
  apply(dx: number, dy: number): [number, number] {
    return [dx, dy];
  }
}

// Head tracking feel: a one-pole low-pass with the class latency as its
// time constant (step responses lag) plus a slow sinusoidal drift.
class HeadEmuFilter implements DeltaFilter {
  private sx = 0;
  private sy = 0;
  private phase: number;
  private driftAmp: number;
  private tau: number;

  constructor(p: PresetParams, seed: number) {
    const rng = mulberry32(seed);
    this.phase = rng() * 2 * Math.PI;
    this.tau = Math.max(0.02, p.latency_s);
    this.driftAmp = 0.15 * p.tremor_amp_px_s;
  }

  apply(dx: number, dy: number, t: number, dt: number): [number, number] {
    const a = 1 - Math.exp(-dt / this.tau);
    this.sx += a * (dx - this.sx);
    this.sy += a * (dy - this.sy);
    const drift = 2 * Math.PI * 0.3 * t + this.phase;
    return [
      this.sx + this.driftAmp * Math.sin(drift) * dt,
      this.sy + this.driftAmp * Math.cos(drift) * dt,
    ];
  }
}

// Marker tracking feel: sinusoidal tremor with seeded jitter, plus frame
// dropouts where the tracker loses the marker and the delta is lost.
class ImageEmuFilter implements DeltaFilter {
  private rng: Rng;
  private gauss: () => number;
  private px: number;
  private py: number;
  private amp: number;
  private freq: number;
  private jitter: number;
  private dropP: number;

  constructor(p: PresetParams, seed: number) {
    this.rng = mulberry32(seed);
    this.gauss = gaussian(this.rng);
    this.px = this.rng() * 2 * Math.PI;
    this.py = this.rng() * 2 * Math.PI;
    this.amp = p.tremor_amp_px_s;
    this.freq = p.tremor_freq_hz;
    this.jitter = 0.5 * p.noise_coeff * p.tremor_amp_px_s;
    this.dropP = Math.min(0.15, p.noise_coeff / 2);
  }

  apply(dx: number, dy: number, t: number, dt: number): [number, number] {
    if (this.rng() < this.dropP) {
      this.gauss();
      this.gauss();
      return [0, 0]; // dropped frame: the movement is lost, not deferred
    }
    const w = 2 * Math.PI * this.freq * t;
    const tx = (this.amp * Math.sin(w + this.px) + this.jitter * this.gauss()) * dt;
    const ty = (this.amp * Math.sin(w + this.py) + this.jitter * this.gauss()) * dt;
    return [dx + tx, dy + ty];
  }
}

export function makeFilter(mode: EmulationMode, presets: PresetsDoc | null,
                           seed: number): DeltaFilter {
  if (mode === "direct") return new DirectFilter();
  if (presets === null) throw new Error(`${mode} needs the presets document`);
  if (mode === "head-emu") {
    return new HeadEmuFilter(presets.classes["head"].params, seed);
  }
  return new ImageEmuFilter(presets.classes["image"].params, seed);
}
