// Rendering split in two: a pure function from snapshot to a display list
// (unit-testable without a DOM) and a thin canvas adapter that draws it.
// Identical snapshots render identical scenes regardless of input history.

import { TickState } from "./protocol.js";

export type DrawOp =
  | { op: "clear"; w: number; h: number }
  | { op: "disc"; x: number; y: number; r: number; color: string; fill: boolean }
  | { op: "line"; x0: number; y0: number; x1: number; y1: number; color: string; width: number }
  | { op: "crosshair"; x: number; y: number; size: number; color: string }
  | { op: "arc"; x: number; y: number; r: number; frac: number; color: string }
  | { op: "arrow"; x: number; y: number; dx: number; dy: number; color: string }
  | { op: "text"; x: number; y: number; text: string; color: string; size: number };

export const STATIC_TARGET_COLOR = "#19d3e0";  // cyan static target
export const MOVING_TARGET_COLOR = "#9e9e9e";  // gray moving target

export interface RenderSettings {
  showAssistOverlay: boolean;
}

export function renderScene(snap: TickState, settings: RenderSettings): DrawOp[] {
  const [w, h] = snap.viewport;
  const ops: DrawOp[] = [{ op: "clear", w, h }];
  const tgt = snap.target;
  if (tgt && tgt.screen) {
    if (tgt.moving && tgt.path) {
      // path indicators: marks at both ends of the trip
      ops.push({ op: "line", x0: tgt.path.start[0], y0: tgt.path.start[1],
                 x1: tgt.path.end[0], y1: tgt.path.end[1],
                 color: "#3a3a3a", width: 1 });
      for (const p of [tgt.path.start, tgt.path.end]) {
        ops.push({ op: "disc", x: p[0], y: p[1], r: 6, color: "#6a6a6a", fill: false });
      }
    }
    const color = tgt.moving ? MOVING_TARGET_COLOR : STATIC_TARGET_COLOR;
    ops.push({ op: "disc", x: tgt.screen[0], y: tgt.screen[1], r: tgt.radius_px,
               color, fill: true });
    if (tgt.dwell_frac !== undefined && tgt.dwell_frac > 0) {
      ops.push({ op: "arc", x: tgt.screen[0], y: tgt.screen[1],
                 r: tgt.radius_px + 6, frac: tgt.dwell_frac, color: "#ffd166" });
    }
    ops.push({ op: "text", x: 12, y: 24,
               text: `target ${tgt.id}  ${tgt.time_remaining_s.toFixed(1)}s`,
               color: "#e8e8e8", size: 16 });
  } else {
    ops.push({ op: "text", x: 12, y: 24, text: snap.status, color: "#e8e8e8", size: 16 });
  }
  if (settings.showAssistOverlay) {
    const [dx, dy] = snap.deviation_last;
    if (dx !== 0 || dy !== 0) {
      ops.push({ op: "arrow", x: snap.cursor[0], y: snap.cursor[1],
                 dx: dx * 12, dy: dy * 12, color: "#ff5d73" });
    }
  }
  ops.push({ op: "crosshair", x: snap.cursor[0], y: snap.cursor[1], size: 12,
             color: "#ffffff" });
  return ops;
}

export function drawToCanvas(ctx: CanvasRenderingContext2D, ops: DrawOp[],
                             scale: number) {
  for (const o of ops) {
    switch (o.op) {
      case "clear":
        ctx.fillStyle = "#101418";
        ctx.fillRect(0, 0, o.w * scale, o.h * scale);
        break;
      case "disc":
        ctx.beginPath();
        ctx.arc(o.x * scale, o.y * scale, o.r * scale, 0, 2 * Math.PI);
        if (o.fill) {
          ctx.fillStyle = o.color;
          ctx.fill();
        } else {
          ctx.strokeStyle = o.color;
          ctx.stroke();
        }
        break;
      case "line":
        ctx.strokeStyle = o.color;
        ctx.lineWidth = o.width;
        ctx.beginPath();
        ctx.moveTo(o.x0 * scale, o.y0 * scale);
        ctx.lineTo(o.x1 * scale, o.y1 * scale);
        ctx.stroke();
        break;
      case "crosshair":
        ctx.strokeStyle = o.color;
        ctx.lineWidth = 1.5;
        ctx.beginPath();
        ctx.moveTo((o.x - o.size) * scale, o.y * scale);
        ctx.lineTo((o.x + o.size) * scale, o.y * scale);
        ctx.moveTo(o.x * scale, (o.y - o.size) * scale);
        ctx.lineTo(o.x * scale, (o.y + o.size) * scale);
        ctx.stroke();
        break;
      case "arc":
        ctx.strokeStyle = o.color;
        ctx.lineWidth = 3;
        ctx.beginPath();
        ctx.arc(o.x * scale, o.y * scale, o.r * scale, -Math.PI / 2,
                -Math.PI / 2 + 2 * Math.PI * o.frac);
        ctx.stroke();
        break;
      case "arrow": {
        ctx.strokeStyle = o.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(o.x * scale, o.y * scale);
        ctx.lineTo((o.x + o.dx) * scale, (o.y + o.dy) * scale);
        ctx.stroke();
        break;
      }
      case "text":
        ctx.fillStyle = o.color;
        ctx.font = `${o.size}px monospace`;
        ctx.fillText(o.text, o.x, o.y);
        break;
    }
  }
}
