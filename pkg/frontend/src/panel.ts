/** The single-page session panel: map canvas, dialogue log, controls.
 *
 * All state changes flow through frames: user input only posts to the
 * service, and the view (badge, chat, metrics, canvas) re-renders when a
 * frame arrives.  While the robot navigates the panel drives the clock by
 * posting small advance batches; pausing stops the motion server-side, so
 * the driver keeps polling until the mode leaves Navigating.
 */

import type { Client, SocketLike } from "./api.js";
import { ApiError } from "./api.js";
import type { Draw2D } from "./render.js";
import { canvasSize, drawFrame } from "./render.js";
import { SessionStore } from "./state.js";
import type { Frame, SceneData } from "./types.js";

export const ADVANCE_BATCH = 10;
export const RETRY_MS = 1000;

export interface PanelElements {
  badge: HTMLElement;
  chat: HTMLElement;
  metrics: HTMLElement;
  banner: HTMLElement;
  input: HTMLInputElement;
  canvas: HTMLCanvasElement;
}

export function buildElements(root: HTMLElement, doc: Document): PanelElements {
  const make = <T extends HTMLElement>(tag: string, cls: string): T => {
    const el = doc.createElement(tag) as T;
    el.className = cls;
    root.appendChild(el);
    return el;
  };
  const banner = make<HTMLElement>("div", "banner");
  banner.hidden = true;
  const badge = make<HTMLElement>("div", "badge");
  const canvas = make<HTMLCanvasElement>("canvas", "map");
  const chat = make<HTMLElement>("ul", "chat");
  const input = make<HTMLInputElement>("input", "say");
  const metrics = make<HTMLElement>("div", "metrics");
  return { badge, chat, metrics, banner, input, canvas };
}

export class Panel {
  readonly store = new SessionStore();
  sessionId: string | null = null;
  scene: SceneData | null = null;
  socket: SocketLike | null = null;
  closed = false;
  driving = false;
  retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private client: Client,
    private els: PanelElements,
    private doc: Document,
    private scale = 24,
    private getContext: () => Draw2D | null = () =>
      this.els.canvas.getContext("2d") as Draw2D | null,
  ) {}

  /** Create a fresh session on the scene and subscribe to its stream. */
  async start(sceneId: string): Promise<void> {
    this.scene = await this.client.getScene(sceneId);
    const [w, h] = canvasSize(this.scene, this.scale);
    this.els.canvas.width = w;
    this.els.canvas.height = h;
    const created = await this.client.createSession(sceneId);
    this.sessionId = created.id;
    this.subscribe();
  }

  /** Attach to an existing session id (e.g. from the URL). */
  async attach(sceneId: string, sessionId: string): Promise<void> {
    try {
      await this.client.state(sessionId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.showBanner(`session ${sessionId} does not exist`);
        return;
      }
      throw err;
    }
    this.scene = await this.client.getScene(sceneId);
    const [w, h] = canvasSize(this.scene, this.scale);
    this.els.canvas.width = w;
    this.els.canvas.height = h;
    this.sessionId = sessionId;
    this.subscribe();
  }

  private subscribe(): void {
    if (this.sessionId === null) {
      return;
    }
    this.socket = this.client.stream(
      this.sessionId,
      (frame) => this.onFrame(frame),
      (code) => this.onDrop(code),
    );
  }

  onFrame(frame: Frame): void {
    this.store.applyFrame(frame);
    this.hideBanner();
    this.render();
  }

  private onDrop(code: number): void {
    if (this.closed) {
      return;
    }
    this.showBanner(`stream lost (code ${code}), retrying`);
    this.retryTimer = setTimeout(() => this.subscribe(), RETRY_MS);
  }

  showBanner(text: string): void {
    this.els.banner.textContent = text;
    this.els.banner.hidden = false;
  }

  private hideBanner(): void {
    this.els.banner.hidden = true;
  }

  /** Post one user line, then keep sim time moving while navigating. */
  async say(text: string): Promise<void> {
    if (this.sessionId === null || text.trim() === "") {
      return;
    }
    const reply = await this.client.utterance(this.sessionId, text);
    if (reply.mode === "Navigating") {
      void this.drive();
    }
  }

  pause(): Promise<void> {
    return this.say("pause");
  }

  resume(): Promise<void> {
    return this.say("resume");
  }

  faster(): Promise<void> {
    return this.say("go faster");
  }

  slower(): Promise<void> {
    return this.say("slow down");
  }

  /** Advance in batches until the robot stops navigating.
   *
   * The loop condition reads the advance response, not the store: the
   * matching stream frame may not have arrived yet, and the response mode
   * is authoritative.
   */
  async drive(): Promise<void> {
    if (this.driving || this.sessionId === null) {
      return;
    }
    this.driving = true;
    try {
      while (!this.closed) {
        const result = await this.client.advance(this.sessionId, ADVANCE_BATCH);
        if (result.state.mode !== "Navigating") {
          break;
        }
      }
    } finally {
      this.driving = false;
    }
  }

  render(): void {
    const { badge, chat, metrics } = this.els;
    badge.textContent = this.store.mode();
    chat.textContent = "";
    for (const entry of this.store.transcript) {
      const line = this.doc.createElement("li");
      line.className = entry.speaker;
      line.textContent = `${entry.speaker}: ${entry.text}`;
      chat.appendChild(line);
    }
    const m = this.store.metrics;
    if (m !== null) {
      metrics.textContent =
        `collisions ${m.robot_collisions}/${m.user_collisions}` +
        ` · dispatched ${m.dispatched.length} · arrived ${m.arrivals.length}`;
    }
    const ctx = this.getContext();
    if (ctx !== null && this.scene !== null && this.store.state !== null) {
      drawFrame(ctx, this.scene, this.store.state, this.scale);
    }
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
    }
    this.socket?.close();
  }
}
