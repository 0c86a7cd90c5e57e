"""Live session service.

Runs the identical trial loop as the batch harness for a human client:
raw movement vectors stream in over a WebSocket, the configured assist is
applied server-side, and per-tick state streams back for rendering. The
server is authoritative; clients never send positions, only movements.

Wire protocol: JSON messages {"kind", "seq", "payload"} over a single
WebSocket, seq strictly increasing per direction. Kinds:

  client -> server: hello, start, input_move
  server -> client: hello, tick_state, subtask_result, session_summary, error

start carries either a full trial spec ({"spec": {...}}) or sampler
arguments ({"sample": {"mode", "targets", "seed", ...}}), plus an optional
assist config and seed. input_move carries {"t", "move": [dx, dy]};
within one tick the latest input wins. tick_state doubles as the
heartbeat (at least every 5 s in lobby and after finish). State messages
may be dropped under backpressure (latest wins); result messages never are.
"""

from __future__ import annotations

import asyncio
import json
import math
from collections import deque

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from . import scene
from .agents import load_presets
from .assist import AssistConfig, AssistConfigError
from .harness import (SubtaskRecord, TrialRunner, aggregate, records_to_csv,
                      CSV_COLUMNS)
from .scene import SceneError, TrialSpec

PROTOCOL_VERSION = 1
HEARTBEAT_S = 5.0


class SessionError(ValueError):
    pass


def record_to_json(r: SubtaskRecord) -> dict:
    out = {}
    for c in CSV_COLUMNS:
        v = getattr(r, c)
        if isinstance(v, float) and math.isnan(v):
            v = None
        out[c] = v
    return out


class SessionCore:
    """Deterministic session state machine, transport-free.

    ingest() stores the latest raw movement for the next tick (latest
    wins); advance_tick() applies it through the shared trial runner and
    returns the (kind, payload) events the tick produced. A recorded
    input_log replayed into a fresh core with the same spec and seed
    reproduces the records exactly.
    """

    def __init__(self, spec: TrialSpec, config: AssistConfig | None = None,
                 seed: int | None = None, session_id: str = "", model=None):
        self.spec = spec
        self.config = config or AssistConfig()
        self.seed = spec.seed if seed is None else seed
        self.id = session_id or f"s{self.seed & 0xFFFFFFFF:08x}"
        self.runner = TrialRunner(spec, self.config, source=None,
                                  seed=self.seed, model=model)
        self.status = "running"
        self.pending: tuple[float, float] | None = None
        self.input_log: list[list] = []  # [tick, dx, dy] for applied inputs
        self.late_inputs = 0
        self._sent = 0

    def ingest(self, move) -> bool:
        """Store a raw movement for the next tick; latest wins within a tick."""
        if self.status != "running":
            self.late_inputs += 1
            return False
        self.pending = (float(move[0]), float(move[1]))
        return True

    def advance_tick(self) -> list[tuple[str, dict]]:
        if self.status != "running":
            return []
        raw = self.pending
        if raw is not None:
            self.input_log.append([self.runner.tick_global, raw[0], raw[1]])
            self.pending = None
        else:
            raw = (0.0, 0.0)
        self.runner.step(raw)
        events: list[tuple[str, dict]] = []
        while self._sent < len(self.runner.records):
            events.append(("subtask_result",
                           record_to_json(self.runner.records[self._sent])))
            self._sent += 1
        if self.runner.finished:
            self.status = "finished"
            events.append(("session_summary", self.summary()))
        return events

    def snapshot(self) -> dict:
        """Pure read of the current tick state for rendering."""
        r = self.runner
        raw = r.last_raw
        asst = r.last_assisted
        snap = {
            "session": self.id,
            "status": self.status,
            "tick": r.tick_global,
            "t": r.tick_global * r.dt,
            "cursor": [r.cursor[0], r.cursor[1]],
            "raw_last": [raw[0], raw[1]],
            "assisted_last": [asst[0], asst[1]],
            "deviation_last": [asst[0] - raw[0], asst[1] - raw[1]],
            "mode": self.spec.mode,
            "viewport": list(self.spec.camera.viewport),
            "target": None,
        }
        if not r.finished:
            tgt = r._tgt
            ticks_left = r._n_ticks - r._j
            info = {
                "id": tgt.id,
                "radius_px": tgt.radius_px,
                "visible": bool(r._tgt_valid),
                "screen": [r._tgt_screen[0], r._tgt_screen[1]] if r._tgt_valid else None,
                "time_remaining_s": ticks_left * r.dt,
                "moving": tgt.moving,
            }
            if tgt.moving:
                (ex, ey), _ = scene.project(self.spec.camera, tgt.end)
                (sx0, sy0), _ = scene.project(self.spec.camera, tgt.position)
                info["path"] = {"start": [sx0, sy0], "end": [ex, ey]}
            if self.spec.mode == "select":
                st = r._st
                import aimassist.kernels as k
                if st[k.ST_INSIDE] > 0.5:
                    dw = (r._j * r.dt - st[k.ST_CONT_START]) / self.spec.dwell_s
                    info["dwell_frac"] = max(0.0, min(1.0, dw))
                else:
                    info["dwell_frac"] = 0.0
            snap["target"] = info
        return snap

    def summary(self) -> dict:
        recs = self.runner.records
        return {
            "session": self.id,
            "seed": self.seed,
            "records": [record_to_json(r) for r in recs],
            "summary": aggregate(recs).to_json() if recs else None,
            "input_log": [list(e) for e in self.input_log],
            "late_inputs": self.late_inputs,
            "csv": records_to_csv(recs),
        }


def replay(spec: TrialSpec, config: AssistConfig | None, seed: int,
           input_log) -> SessionCore:
    """Re-run a recorded input log through a fresh session."""
    core = SessionCore(spec, config, seed=seed)
    moves = {int(t): (dx, dy) for t, dx, dy in input_log}
    while core.status == "running":
        tick = core.runner.tick_global
        if tick in moves:
            core.ingest(moves[tick])
        core.advance_tick()
    return core


def parse_start(payload: dict) -> tuple[TrialSpec, AssistConfig, int | None]:
    if "spec" in payload:
        spec = TrialSpec.from_json(payload["spec"])
    elif "sample" in payload:
        s = payload["sample"]
        spec = scene.make_trial_spec(
            mode=s.get("mode", "locate"),
            n_targets=int(s.get("targets", 10)),
            seed=int(s.get("seed", 1)),
            follow_speed=float(s.get("follow_speed", 2.0)),
            tick_rate=float(s.get("tick_rate", scene.DEFAULT_TICK_RATE)),
        )
    else:
        raise SessionError("start needs a 'spec' or 'sample' payload")
    assist = AssistConfig.from_json(payload["assist"]) if payload.get("assist") \
        else AssistConfig()
    seed = payload.get("seed")
    return spec, assist, None if seed is None else int(seed)


class _Outbox:
    """Per-connection send coordination: events are reliable, tick states
    collapse to the latest one so a slow client never blocks the tick loop."""

    def __init__(self):
        self.events: deque = deque()
        self.state: dict | None = None
        self.wake = asyncio.Event()

    def put_event(self, kind: str, payload: dict):
        self.events.append((kind, payload))
        self.wake.set()

    def put_state(self, payload: dict):
        self.state = payload
        self.wake.set()


def create_app(presets_path: str | None = None, frontend_dir: str | None = None):
    """FastAPI app exposing the WebSocket session endpoint plus small REST
    helpers (presets, sample specs, records download, static frontend)."""
    app = FastAPI(title="aimassist session service")
    sessions: dict[str, SessionCore] = {}
    app.state.sessions = sessions
    counter = {"n": 0}

    @app.get("/api/presets")
    def presets():
        return JSONResponse(load_presets(presets_path))

    @app.get("/api/specs/sample")
    def sample_spec(mode: str = "locate", targets: int = 10, seed: int = 1,
                    follow_speed: float = 2.0, tick_rate: float = scene.DEFAULT_TICK_RATE):
        try:
            spec = scene.make_trial_spec(mode, targets, seed,
                                         follow_speed=follow_speed,
                                         tick_rate=tick_rate)
        except SceneError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        return JSONResponse(spec.to_json())

    @app.get("/api/sessions/{sid}/records.csv")
    def session_csv(sid: str):
        core = sessions.get(sid)
        if core is None:
            return PlainTextResponse(f"unknown session {sid}\n", status_code=404)
        return PlainTextResponse(records_to_csv(core.runner.records),
                                 media_type="text/csv")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        out = _Outbox()
        server_seq = {"n": 0}
        client_seq = {"last": -1, "violations": 0}
        core: SessionCore | None = None
        tasks: list[asyncio.Task] = []
        alive = {"up": True}

        async def send(kind: str, payload: dict):
            msg = {"kind": kind, "seq": server_seq["n"], "payload": payload}
            server_seq["n"] += 1
            await ws.send_text(json.dumps(msg))

        async def writer():
            while alive["up"]:
                await out.wake.wait()
                out.wake.clear()
                while out.events:
                    kind, payload = out.events.popleft()
                    await send(kind, payload)
                if out.state is not None:
                    s = out.state
                    out.state = None
                    await send("tick_state", s)

        async def ticker(c: SessionCore):
            loop = asyncio.get_event_loop()
            next_t = loop.time()
            while alive["up"] and c.status == "running":
                for kind, payload in c.advance_tick():
                    out.put_event(kind, payload)
                out.put_state(c.snapshot())
                next_t += c.runner.dt
                delay = next_t - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_t = loop.time()

        async def heartbeat():
            while alive["up"]:
                await asyncio.sleep(HEARTBEAT_S)
                if core is None or core.status != "running":
                    out.put_state(core.snapshot() if core else
                                  {"status": "lobby", "session": None})

        tasks.append(asyncio.create_task(writer()))
        tasks.append(asyncio.create_task(heartbeat()))
        try:
            while True:
                try:
                    msg = json.loads(await ws.receive_text())
                except json.JSONDecodeError:
                    out.put_event("error", {"reason": "malformed JSON"})
                    continue
                kind = msg.get("kind")
                seq = msg.get("seq", -1)
                if not isinstance(seq, int) or seq <= client_seq["last"]:
                    client_seq["violations"] += 1
                else:
                    client_seq["last"] = seq
                payload = msg.get("payload") or {}
                if kind == "hello":
                    out.put_event("hello", {
                        "protocol": PROTOCOL_VERSION,
                        "heartbeat_s": HEARTBEAT_S,
                        "tick_rate_default": scene.DEFAULT_TICK_RATE,
                    })
                elif kind == "start":
                    if core is not None and core.status == "running":
                        out.put_event("error", {"reason": "session already running"})
                        continue
                    try:
                        spec, assist, seed = parse_start(payload)
                        counter["n"] += 1
                        core = SessionCore(spec, assist, seed=seed,
                                           session_id=f"s{counter['n']:04d}")
                    except (SessionError, SceneError, AssistConfigError,
                            KeyError, TypeError, ValueError) as e:
                        out.put_event("error", {"reason": f"bad start: {e}"})
                        continue
                    sessions[core.id] = core
                    out.put_state(core.snapshot())
                    tasks.append(asyncio.create_task(ticker(core)))
                elif kind == "input_move":
                    if core is None:
                        out.put_event("error", {"reason": "no session started"})
                    else:
                        core.ingest(payload.get("move", (0.0, 0.0)))
                else:
                    out.put_event("error", {"reason": f"unknown kind {kind!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            alive["up"] = False
            for t in tasks:
                t.cancel()

    if frontend_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def serve(host: str = "127.0.0.1", port: int = 8080,
          presets_path: str | None = None, frontend_dir: str | None = None):
    """Blocking server entry point (used by the CLI serve subcommand)."""
    import socket
    import uvicorn

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as e:
        raise SessionError(f"cannot bind port {port} on {host}: {e}") from e
    finally:
        probe.close()
    app = create_app(presets_path=presets_path, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
