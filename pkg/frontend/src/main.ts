/** Browser bootstrap: wire the panel to the page and the local service. */

import { Client, type SocketLike } from "./api.js";
import { buildElements, Panel } from "./panel.js";

const API_BASE = "http://127.0.0.1:8000";

function wireControls(panel: Panel, root: HTMLElement): void {
  const bar = document.createElement("div");
  bar.className = "controls";
  const actions: [string, () => Promise<void>][] = [
    ["Pause", () => panel.pause()],
    ["Resume", () => panel.resume()],
    ["Faster", () => panel.faster()],
    ["Slower", () => panel.slower()],
  ];
  for (const [label, action] of actions) {
    const button = document.createElement("button");
    button.textContent = label;
    button.addEventListener("click", () => void action());
    bar.appendChild(button);
  }
  root.appendChild(bar);
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) {
    return;
  }
  const params = new URLSearchParams(window.location.search);
  const sceneId = params.get("scene") ?? "dragon_lab";
  const sessionId = params.get("session");
  const client = new Client(
    API_BASE,
    (url, init) => fetch(url, init),
    (url) => new WebSocket(url) as unknown as SocketLike,
  );
  const els = buildElements(root, document);
  const panel = new Panel(client, els, document);
  wireControls(panel, root);
  els.input.placeholder = "say something to the robot";
  els.input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      const text = els.input.value;
      els.input.value = "";
      void panel.say(text);
    }
  });
  window.addEventListener("beforeunload", () => panel.close());
  if (sessionId !== null) {
    await panel.attach(sceneId, sessionId);
  } else {
    await panel.start(sceneId);
  }
}

void boot();
