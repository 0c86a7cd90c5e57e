import { describe, expect, it } from "vitest";
import { InputPump, SessionClient, Transport } from "../src/client.js";
import { encodeMessage } from "../src/protocol.js";

class FakeTransport implements Transport {
  sent: string[] = [];
  onmessage: ((text: string) => void) | null = null;
  onclose: (() => void) | null = null;
  send(text: string) {
    this.sent.push(text);
  }
  close() {
    if (this.onclose) this.onclose();
  }
  feed(kind: string, seq: number, payload: unknown) {
    this.onmessage!(encodeMessage(kind, seq, payload));
  }
}

function snap(tick: number) {
  return {
    session: "s1", status: "running", tick, t: tick / 60,
    cursor: [960, 540], raw_last: [0, 0], assisted_last: [0, 0],
    deviation_last: [0, 0], mode: "locate", viewport: [1920, 1080],
    target: null,
  };
}

describe("SessionClient", () => {
  it("sends strictly increasing sequence numbers", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t);
    c.sendHello();
    c.start({ sample: { mode: "locate", targets: 3, seed: 1 } });
    c.sendMove(1, 2, 0.1);
    const seqs = t.sent.map((s) => JSON.parse(s).seq);
    expect(seqs).toEqual([0, 1, 2]);
  });

  it("keeps only the latest snapshot and counts seq violations", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t);
    t.feed("tick_state", 0, snap(0));
    t.feed("tick_state", 5, snap(5));
    t.feed("tick_state", 3, snap(3)); // regression: counted, still applied last-wins
    expect(c.seqViolations).toBe(1);
    expect(c.snapshot!.tick).toBe(3);
  });

  it("collects results and the summary in order", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t);
    const seen: number[] = [];
    c.onResult = (r) => seen.push(r.target_id);
    t.feed("subtask_result", 0, { target_id: 0, mode: "locate", success: true, cause: "none" });
    t.feed("subtask_result", 1, { target_id: 1, mode: "locate", success: false, cause: "expired" });
    t.feed("session_summary", 2, { session: "s1", records: [], input_log: [], csv: "schema\n", seed: 0, late_inputs: 0, summary: null });
    expect(seen).toEqual([0, 1]);
    expect(c.summary!.csv).toBe("schema\n");
  });

  it("surfaces errors and disconnects", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t);
    let gotError = "";
    let closed = false;
    c.onError = (r) => (gotError = r);
    c.onDisconnect = () => (closed = true);
    t.feed("error", 0, { reason: "bad start: nope" });
    t.close();
    expect(gotError).toContain("bad start");
    expect(c.disconnected).toBe(true);
    expect(closed).toBe(true);
  });
});

describe("InputPump", () => {
  it("coalesces deltas and sends at most once per tick", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t);
    const pump = new InputPump(c, 60);
    pump.add(1, 0);
    pump.add(2, 3);
    expect(pump.flush(1.0)).toBe(true);
    pump.add(1, 1);
    expect(pump.flush(1.001)).toBe(false); // within the same tick window
    expect(pump.flush(1.02)).toBe(true);
    const moves = t.sent.map((s) => JSON.parse(s).payload.move);
    expect(moves).toEqual([[3, 3], [1, 1]]);
  });

  it("sends nothing when there was no movement", () => {
    const t = new FakeTransport();
    const c = new SessionClient(t);
    const pump = new InputPump(c, 60);
    expect(pump.flush(0.5)).toBe(false);
    expect(t.sent.length).toBe(0);
  });
});
