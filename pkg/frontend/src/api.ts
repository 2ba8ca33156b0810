/** Thin typed client over the session service.
 *
 * Every call goes through request(), which appends to an access log; the
 * tests assert the UI never touches an undocumented endpoint.  The
 * WebSocket constructor is injected so tests and node can supply their
 * own implementation.
 */

import type {
  AdvanceReply,
  Frame,
  SceneData,
  SnapshotState,
  UtteranceReply,
} from "./types.js";

export interface SocketLike {
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: { code: number }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  onopen: ((event: unknown) => void) | null;
  close(): void;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
export type SocketFactory = (url: string) => SocketLike;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class Client {
  readonly accessLog: string[] = [];

  constructor(
    private base: string,
    private fetchImpl: FetchLike,
    private socketFactory: SocketFactory,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    this.accessLog.push(`${method} ${path}`);
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = ((await response.json()) as { detail: string }).detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  getScene(sceneId: string): Promise<SceneData> {
    return this.request("GET", `/scenes/${sceneId}`);
  }

  createSession(scene: string, method = "clip", seed = 0): Promise<{ id: string; mode: string }> {
    return this.request("POST", "/sessions", { scene, method, seed });
  }

  state(sessionId: string): Promise<SnapshotState> {
    return this.request("GET", `/sessions/${sessionId}/state`);
  }

  utterance(sessionId: string, text: string): Promise<UtteranceReply> {
    return this.request("POST", `/sessions/${sessionId}/utterance`, { text });
  }

  advance(sessionId: string, steps: number): Promise<AdvanceReply> {
    return this.request("POST", `/sessions/${sessionId}/advance`, { steps });
  }

  end(sessionId: string): Promise<void> {
    return this.request("DELETE", `/sessions/${sessionId}`);
  }

  /** Open the frame stream; onFrame gets each parsed frame in order. */
  stream(
    sessionId: string,
    onFrame: (frame: Frame) => void,
    onDrop: (code: number) => void,
  ): SocketLike {
    const path = `/sessions/${sessionId}/stream`;
    this.accessLog.push(`WS ${path}`);
    const wsBase = this.base.replace(/^http/, "ws");
    const socket = this.socketFactory(wsBase + path);
    socket.onmessage = (event) => {
      const raw = typeof event.data === "string" ? event.data : String(event.data);
      onFrame(JSON.parse(raw) as Frame);
    };
    socket.onclose = (event) => onDrop(event.code);
    return socket;
  }
}
