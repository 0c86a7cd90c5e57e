// Wire protocol spoken with the session service: JSON messages
// {kind, seq, payload} over one WebSocket, seq strictly increasing per
// direction. The client never computes game state; it renders snapshots.

export interface WireMessage {
  kind: string;
  seq: number;
  payload: unknown;
}

export interface TargetState {
  id: number;
  radius_px: number;
  visible: boolean;
  screen: [number, number] | null;
  time_remaining_s: number;
  moving: boolean;
  path?: { start: [number, number]; end: [number, number] };
  dwell_frac?: number;
}

export interface TickState {
  session: string;
  status: "running" | "finished" | "lobby";
  tick: number;
  t: number;
  cursor: [number, number];
  raw_last: [number, number];
  assisted_last: [number, number];
  deviation_last: [number, number];
  mode: string;
  viewport: [number, number];
  target: TargetState | null;
}

export interface SubtaskResult {
  target_id: number;
  mode: string;
  success: boolean;
  cause: string;
  acquire_time_s: number | null;
  overshoot_time_s: number | null;
  extra_time_s: number | null;
  follow_fraction: number | null;
  appear_center_dist_px: number | null;
  camera_dist_m: number | null;
  t_activate_s: number | null;
  t_complete_s: number | null;
  [key: string]: unknown;
}

export interface SessionSummary {
  session: string;
  seed: number;
  records: SubtaskResult[];
  summary: unknown;
  input_log: [number, number, number][];
  late_inputs: number;
  csv: string;
}

export interface HelloPayload {
  protocol: number;
  heartbeat_s: number;
  tick_rate_default: number;
}

export function parseMessage(text: string): WireMessage {
  const doc = JSON.parse(text);
  if (typeof doc !== "object" || doc === null) throw new Error("not an object");
  if (typeof doc.kind !== "string") throw new Error("missing kind");
  if (typeof doc.seq !== "number") throw new Error("missing seq");
  return doc as WireMessage;
}

export function encodeMessage(kind: string, seq: number, payload: unknown): string {
  return JSON.stringify({ kind, seq, payload });
}
