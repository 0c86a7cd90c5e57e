// Browser entry: canvas + pointer lock, settings panel, HUD, results
// screen with CSV download. All game state comes from server snapshots.

import { InputPump, SessionClient, Transport } from "./client.js";
import { EmulationMode, PresetsDoc, makeFilter } from "./filters.js";
import { SessionSummary } from "./protocol.js";
import { drawToCanvas, renderScene } from "./render.js";
import { abandonedRows, csvDownload, resultRows } from "./results.js";

function wsTransport(url: string): Transport {
  const ws = new WebSocket(url);
  const t: Transport = {
    send: (text) => ws.send(text),
    close: () => ws.close(),
    onmessage: null,
    onclose: null,
  };
  ws.onmessage = (ev) => t.onmessage && t.onmessage(String(ev.data));
  ws.onclose = () => t.onclose && t.onclose();
  return t;
}

function qs(name: string, fallback: string): string {
  return new URLSearchParams(location.search).get(name) ?? fallback;
}

async function boot() {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const hud = document.getElementById("hud")!;
  const banner = document.getElementById("banner")!;
  const results = document.getElementById("results")!;
  const form = document.getElementById("settings") as HTMLFormElement;

  const server = qs("server", location.host);
  const presets: PresetsDoc = await (await fetch(`http://${server}/api/presets`)).json();

  let client: SessionClient | null = null;
  let pump: InputPump | null = null;
  let scale = 1.0;

  function startSession() {
    const mode = (form.elements.namedItem("mode") as HTMLSelectElement).value;
    const targets = parseInt((form.elements.namedItem("targets") as HTMLInputElement).value, 10);
    const seed = parseInt((form.elements.namedItem("seed") as HTMLInputElement).value, 10);
    const emu = (form.elements.namedItem("emulation") as HTMLSelectElement).value as EmulationMode;
    const overlay = (form.elements.namedItem("overlay") as HTMLInputElement).checked;
    const assistMethod = (form.elements.namedItem("assist") as HTMLSelectElement).value;

    const filter = makeFilter(emu, presets, seed);
    const transport = wsTransport(`ws://${server}/ws`);
    client = new SessionClient(transport);
    pump = new InputPump(client, 60);
    results.style.display = "none";
    banner.style.display = "none";

    client.onDisconnect = () => {
      banner.textContent = "disconnected - session abandoned";
      banner.style.display = "block";
      if (client && !client.summary) {
        renderResults(abandonedRows(client.results), null);
      }
    };
    client.onSummary = (s) => renderResults(resultRows(s.records), s);
    client.sendHello();
    const assist = assistMethod === "none" ? undefined : { method: assistMethod };
    client.start({ sample: { mode, targets, seed }, assist, seed });

    let lastT = performance.now() / 1000;
    canvas.onclick = () => canvas.requestPointerLock();
    document.onpointerlockchange = () => undefined;
    canvas.onpointermove = (ev) => {
      if (document.pointerLockElement !== canvas || !client || !pump) return;
      const now = performance.now() / 1000;
      const dt = Math.max(1e-3, now - lastT);
      lastT = now;
      const [fx, fy] = filter.apply(ev.movementX / scale, ev.movementY / scale, now, dt);
      pump.add(fx, fy);
      pump.flush(now);
    };

    const loop = () => {
      if (!client) return;
      const snap = client.snapshot;
      if (snap) {
        scale = Math.min(canvas.width / snap.viewport[0], canvas.height / snap.viewport[1]);
        drawToCanvas(ctx, renderScene(snap, { showAssistOverlay: overlay }), scale);
        hud.textContent = `session ${snap.session}  tick ${snap.tick}  mode ${snap.mode}`;
      }
      if (!client.summary && !client.disconnected) requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  function renderResults(rows: ReturnType<typeof resultRows>, summary: SessionSummary | null) {
    results.style.display = "block";
    const body = rows.map((r) =>
      `<tr class="${r.success ? "ok" : "fail"}"><td>${r.targetId}</td>` +
      `<td>${r.success ? "success" : "fail"}</td><td>${r.score}</td><td>${r.cause}</td></tr>`).join("");
    results.innerHTML =
      `<h2>Session results</h2><table><tr><th>target</th><th>outcome</th>` +
      `<th>score</th><th>cause</th></tr>${body}</table>`;
    if (summary) {
      const dl = document.createElement("button");
      dl.textContent = "download records CSV";
      dl.onclick = () => {
        const { name, text } = csvDownload(summary);
        const blob = new Blob([text], { type: "text/csv" });
        const a = document.createElement("a");
        a.href = URL.createObjectURL(blob);
        a.download = name;
        a.click();
      };
      results.appendChild(dl);
    }
  }

  (document.getElementById("start") as HTMLButtonElement).onclick = (ev) => {
    ev.preventDefault();
    if (client) client.close();
    startSession();
  };
}

boot();
