// Session client: drives the wire protocol over an injectable transport
// (browser WebSocket or node ws in tests). Snapshots coalesce to the
// latest one; results and the summary are delivered in order.

import {
  HelloPayload, SessionSummary, SubtaskResult, TickState, WireMessage,
  encodeMessage, parseMessage,
} from "./protocol.js";

export interface Transport {
  send(text: string): void;
  close(): void;
  onmessage: ((text: string) => void) | null;
  onclose: (() => void) | null;
}

export interface StartOptions {
  spec?: unknown;
  sample?: { mode: string; targets: number; seed: number;
             follow_speed?: number; tick_rate?: number };
  assist?: unknown;
  seed?: number;
}

export class SessionClient {
  private seq = 0;
  private lastServerSeq = -1;
  seqViolations = 0;
  snapshot: TickState | null = null;
  hello: HelloPayload | null = null;
  results: SubtaskResult[] = [];
  summary: SessionSummary | null = null;
  lastError: string | null = null;
  disconnected = false;

  onSnapshot: ((s: TickState) => void) | null = null;
  onResult: ((r: SubtaskResult) => void) | null = null;
  onSummary: ((s: SessionSummary) => void) | null = null;
  onError: ((reason: string) => void) | null = null;
  onDisconnect: (() => void) | null = null;

  constructor(private transport: Transport) {
    transport.onmessage = (text) => this.handle(text);
    transport.onclose = () => {
      this.disconnected = true;
      if (this.onDisconnect) this.onDisconnect();
    };
  }

  private send(kind: string, payload: unknown) {
    this.transport.send(encodeMessage(kind, this.seq++, payload));
  }

  sendHello() {
    this.send("hello", {});
  }

  start(opts: StartOptions) {
    const payload: Record<string, unknown> = {};
    if (opts.spec !== undefined) payload["spec"] = opts.spec;
    if (opts.sample !== undefined) payload["sample"] = opts.sample;
    if (opts.assist !== undefined) payload["assist"] = opts.assist;
    if (opts.seed !== undefined) payload["seed"] = opts.seed;
    this.send("start", payload);
  }

  sendMove(dx: number, dy: number, t: number) {
    this.send("input_move", { t, move: [dx, dy] });
  }

  close() {
    this.transport.close();
  }

  private handle(text: string) {
    let msg: WireMessage;
    try {
      msg = parseMessage(text);
    } catch {
      this.seqViolations += 1;
      return;
    }
    if (msg.seq <= this.lastServerSeq) this.seqViolations += 1;
    else this.lastServerSeq = msg.seq;
    switch (msg.kind) {
      case "hello":
        this.hello = msg.payload as HelloPayload;
        break;
      case "tick_state":
        this.snapshot = msg.payload as TickState;
        if (this.onSnapshot) this.onSnapshot(this.snapshot);
        break;
      case "subtask_result": {
        const r = msg.payload as SubtaskResult;
        this.results.push(r);
        if (this.onResult) this.onResult(r);
        break;
      }
      case "session_summary":
        this.summary = msg.payload as SessionSummary;
        if (this.onSummary) this.onSummary(this.summary);
        break;
      case "error": {
        const reason = (msg.payload as { reason?: string }).reason ?? "unknown";
        this.lastError = reason;
        if (this.onError) this.onError(reason);
        break;
      }
      default:
        break;
    }
  }
}

// Accumulates pointer deltas between ticks and flushes at most once per
// tick interval, so the client sends at <= tick rate with coalescing.
export class InputPump {
  private ax = 0;
  private ay = 0;
  private lastFlush = -Infinity;

  constructor(private client: SessionClient, private tickRate: number) {}

  add(dx: number, dy: number) {
    this.ax += dx;
    this.ay += dy;
  }

  flush(now: number): boolean {
    if (now - this.lastFlush < 1.0 / this.tickRate) return false;
    if (this.ax === 0 && this.ay === 0) return false;
    this.client.sendMove(this.ax, this.ay, now);
    this.ax = 0;
    this.ay = 0;
    this.lastFlush = now;
    return true;
  }
}
