// Results screen model: per-subtask rows from the session summary, plus
// the records CSV exactly as the server produced it (single source of
// truth for the download).

import { SessionSummary, SubtaskResult } from "./protocol.js";

export interface ResultRow {
  targetId: number;
  success: boolean;
  score: string;
  cause: string;
}

function scoreOf(r: SubtaskResult): string {
  if (r.mode === "locate") {
    return r.acquire_time_s == null ? "-" : `${r.acquire_time_s.toFixed(3)} s`;
  }
  if (r.mode === "select") {
    return r.overshoot_time_s == null ? "-" : `${r.overshoot_time_s.toFixed(3)} s`;
  }
  return r.follow_fraction == null ? "-" : `${(100 * r.follow_fraction).toFixed(1)} %`;
}

export function resultRows(records: SubtaskResult[]): ResultRow[] {
  return records.map((r) => ({
    targetId: r.target_id,
    success: r.success,
    score: scoreOf(r),
    cause: r.cause,
  }));
}

export function csvDownload(summary: SessionSummary): { name: string; text: string } {
  return { name: `records-${summary.session}.csv`, text: summary.csv };
}

// Partial table for sessions that ended without a summary (disconnect):
// rows for what finished, plus an abandonment marker.
export function abandonedRows(records: SubtaskResult[]): ResultRow[] {
  const rows = resultRows(records);
  rows.push({ targetId: -1, success: false, score: "-", cause: "abandoned" });
  return rows;
}
