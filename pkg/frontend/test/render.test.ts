import { describe, expect, it } from "vitest";
import { MOVING_TARGET_COLOR, STATIC_TARGET_COLOR, renderScene } from "../src/render.js";
import { TickState } from "../src/protocol.js";
import { abandonedRows, resultRows } from "../src/results.js";

function base(): TickState {
  return {
    session: "s1", status: "running", tick: 10, t: 10 / 60,
    cursor: [960, 540], raw_last: [2, 0], assisted_last: [2, 0],
    deviation_last: [0, 0], mode: "locate", viewport: [1920, 1080],
    target: null,
  };
}

describe("renderScene", () => {
  it("draws only crosshair and HUD without an active target", () => {
    const ops = renderScene(base(), { showAssistOverlay: false });
    expect(ops.some((o) => o.op === "crosshair")).toBe(true);
    expect(ops.some((o) => o.op === "disc")).toBe(false);
  });

  it("draws a cyan disc for static targets", () => {
    const s = base();
    s.target = { id: 0, radius_px: 40, visible: true, screen: [700, 400],
                 time_remaining_s: 5, moving: false };
    const ops = renderScene(s, { showAssistOverlay: false });
    const disc = ops.find((o) => o.op === "disc") as any;
    expect(disc.color).toBe(STATIC_TARGET_COLOR);
  });

  it("draws a gray moving target between the two path indicators", () => {
    const s = base();
    s.mode = "follow";
    s.target = { id: 1, radius_px: 40, visible: true, screen: [800, 500],
                 time_remaining_s: 3, moving: true,
                 path: { start: [600, 500], end: [1000, 500] } };
    const ops = renderScene(s, { showAssistOverlay: false });
    const discs = ops.filter((o) => o.op === "disc") as any[];
    expect(discs.filter((d) => !d.fill).length).toBe(2); // path indicator rings
    const tgt = discs.find((d) => d.fill);
    expect(tgt.color).toBe(MOVING_TARGET_COLOR);
    expect(ops.some((o) => o.op === "line")).toBe(true);
  });

  it("draws the deviation arrow only when assisted and enabled", () => {
    const s = base();
    expect(renderScene(s, { showAssistOverlay: true })
      .some((o) => o.op === "arrow")).toBe(false); // zero deviation, no arrow
    s.deviation_last = [1.5, -0.5];
    expect(renderScene(s, { showAssistOverlay: true })
      .some((o) => o.op === "arrow")).toBe(true);
    expect(renderScene(s, { showAssistOverlay: false })
      .some((o) => o.op === "arrow")).toBe(false);
  });

  it("is a pure function of the snapshot", () => {
    const s = base();
    s.target = { id: 0, radius_px: 40, visible: true, screen: [700, 400],
                 time_remaining_s: 5, moving: false, dwell_frac: 0.4 };
    expect(renderScene(s, { showAssistOverlay: true }))
      .toEqual(renderScene(JSON.parse(JSON.stringify(s)), { showAssistOverlay: true }));
  });
});

describe("results", () => {
  const recs = [
    { target_id: 0, mode: "select", success: true, cause: "none",
      overshoot_time_s: 0.25, acquire_time_s: null, extra_time_s: 0.3,
      follow_fraction: null, appear_center_dist_px: 10, camera_dist_m: 30,
      t_activate_s: 0, t_complete_s: 2 },
    { target_id: 1, mode: "select", success: false, cause: "expired",
      overshoot_time_s: null, acquire_time_s: null, extra_time_s: null,
      follow_fraction: null, appear_center_dist_px: 10, camera_dist_m: 30,
      t_activate_s: 2, t_complete_s: null },
  ];

  it("maps records to rows with per-mode scores", () => {
    const rows = resultRows(recs as any);
    expect(rows[0]).toEqual({ targetId: 0, success: true, score: "0.250 s", cause: "none" });
    expect(rows[1].success).toBe(false);
  });

  it("marks abandoned sessions", () => {
    const rows = abandonedRows(recs as any);
    expect(rows[rows.length - 1].cause).toBe("abandoned");
  });
});
