"""HTTP and WebSocket service exposing live guidance sessions.

Each session wraps one Session from the sim module.  The simulation only
moves when a client posts to the advance endpoint, so a recorded sequence
of requests replays to byte-identical payloads; the browser client drives
the clock by advancing in small batches while the robot navigates.

Streaming: subscribers get one full snapshot frame on connect, then a
delta frame after every utterance and every batch of ticks.  Frames carry
the session state, the transcript entries added since the previous frame,
and the running collision and dispatch counters.  All subscribers of a
session observe the same frame sequence.
"""

from __future__ import annotations

import asyncio
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .grounding import recognizer_for
from .nlu import fit, shipped_corpus
from .sim import Session, SimConfig, TrialDeps
from .world import Scene, scene_to_dict, shipped_scene

# One frame per this many sim steps when advancing in bulk.
BATCH_STEPS = 10

# Close code sent to stream subscribers when their session is deleted.
SESSION_ENDED = 4001

METHODS = {"clip": "lexicon", "detector": "detector"}


class CreateSession(BaseModel):
    scene: str
    method: str = "clip"
    seed: int = 0


class Utterance(BaseModel):
    text: str


class Advance(BaseModel):
    steps: int = BATCH_STEPS


class _LiveSession:
    """A Session plus the bookkeeping the service needs around it."""

    def __init__(self, session: Session):
        self.session = session
        self.lock = asyncio.Lock()
        self.subscribers: list[asyncio.Queue] = []
        self.sent_transcript = 0
        self.closed = False

    def _metrics(self) -> dict:
        s = self.session
        return {
            "robot_collisions": s.robot_collisions,
            "user_collisions": s.user_collisions,
            "dispatched": list(s.dispatched),
            "arrivals": [[lm, t] for lm, t in s.arrivals],
        }

    def frame(self, kind: str) -> dict:
        transcript = self.session.dstate.transcript
        if kind == "snapshot":
            entries = transcript
        else:
            entries = transcript[self.sent_transcript :]
        self.sent_transcript = len(transcript)
        return {
            "type": kind,
            "step": self.session.sim.step,
            "state": self.session.snapshot(),
            "transcript": [e.to_dict() for e in entries],
            "metrics": self._metrics(),
        }

    def broadcast(self) -> None:
        if not self.subscribers:
            # Nobody listening; keep the delta cursor at the tail so a new
            # subscriber's snapshot stays the sole source of history.
            self.sent_transcript = len(self.session.dstate.transcript)
            return
        frame = self.frame("delta")
        for queue in self.subscribers:
            queue.put_nowait(frame)

    def end(self) -> None:
        self.closed = True
        for queue in self.subscribers:
            queue.put_nowait(None)


def create_app() -> FastAPI:
    app = FastAPI(title="wayfinder")
    # The browser client is served from its own origin during development.
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, _LiveSession] = {}
    counter = {"n": 0}
    cache: dict = {}

    def nlu_model():
        if "model" not in cache:
            cache["model"] = fit(shipped_corpus())
        return cache["model"]

    def live(session_id: str) -> _LiveSession:
        if session_id not in sessions:
            raise HTTPException(status_code=404, detail="unknown session")
        return sessions[session_id]

    @app.get("/scenes/{scene_id}")
    def get_scene(scene_id: str):
        try:
            return scene_to_dict(shipped_scene(scene_id))
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown scene {scene_id!r}")

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        if body.method not in METHODS:
            raise HTTPException(status_code=400, detail=f"unknown method {body.method!r}")
        try:
            scene: Scene = shipped_scene(body.scene)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown scene {body.scene!r}")
        deps = TrialDeps(
            nlu_model=nlu_model(),
            recognizer=recognizer_for(METHODS[body.method], scene.landmarks),
        )
        counter["n"] += 1
        session_id = f"s{counter['n']}"
        sessions[session_id] = _LiveSession(
            Session(scene, SimConfig(seed=body.seed), deps)
        )
        return {"id": session_id, "mode": sessions[session_id].session.dstate.mode.value}

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        return live(session_id).session.snapshot()

    @app.post("/sessions/{session_id}/utterance")
    async def post_utterance(session_id: str, body: Utterance):
        entry = live(session_id)
        async with entry.lock:
            reply, effects = entry.session.utterance(body.text)
            entry.broadcast()
            return {
                "reply": reply,
                "mode": entry.session.dstate.mode.value,
                "effects": [list(e) for e in effects],
            }

    @app.post("/sessions/{session_id}/advance")
    async def post_advance(session_id: str, body: Advance):
        if body.steps < 1:
            raise HTTPException(status_code=400, detail="steps must be >= 1")
        entry = live(session_id)
        async with entry.lock:
            notices = []
            remaining = body.steps
            while remaining > 0:
                for _ in range(min(BATCH_STEPS, remaining)):
                    notice = entry.session.advance()
                    if notice:
                        notices.append(notice)
                remaining -= min(BATCH_STEPS, remaining)
                entry.broadcast()
            return {"state": entry.session.snapshot(), "notices": notices}

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        entry = live(session_id)
        entry.end()
        del sessions[session_id]

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(socket: WebSocket, session_id: str):
        await socket.accept()
        entry = sessions.get(session_id)
        if entry is None or entry.closed:
            await socket.close(code=SESSION_ENDED, reason="unknown session")
            return
        queue: asyncio.Queue = asyncio.Queue()
        async with entry.lock:
            snapshot = entry.frame("snapshot")
            entry.subscribers.append(queue)
        try:
            await socket.send_json(snapshot)
            while True:
                frame = await queue.get()
                if frame is None:
                    await socket.close(code=SESSION_ENDED, reason="session ended")
                    return
                await socket.send_json(frame)
        except WebSocketDisconnect:
            pass
        finally:
            if queue in entry.subscribers:
                entry.subscribers.remove(queue)

    # WebSocket routes fall outside OpenAPI proper; describe the stream in a
    # vendor extension so the shipped schema covers every endpoint.
    base_openapi = app.openapi

    def openapi_with_stream() -> dict:
        schema = base_openapi()
        schema["x-websocket"] = {
            "path": "/sessions/{session_id}/stream",
            "frames": {
                "type": "'snapshot' on connect, then 'delta'",
                "step": "sim step number at emission, monotone per session",
                "state": "same object as GET /sessions/{session_id}/state",
                "transcript": "all entries on snapshot, entries added since "
                "the previous frame on delta",
                "metrics": {
                    "robot_collisions": "running count",
                    "user_collisions": "running count",
                    "dispatched": "landmark ids dispatched so far",
                    "arrivals": "[landmark id, sim time] pairs",
                },
            },
            "batch_steps": BATCH_STEPS,
            "close_codes": {str(SESSION_ENDED): "unknown or ended session"},
        }
        return schema

    app.openapi = openapi_with_stream  # type: ignore[method-assign]
    return app


app = create_app()
