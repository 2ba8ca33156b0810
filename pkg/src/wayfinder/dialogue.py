"""Session state machine: routes intents to grounding, perception, and motion.

One SessionState per user session, mutated only through handle_utterance and
notify_arrival.  A navigation goal is dispatched exclusively by an Affirm
while a confirmation is pending; every other path can at most ask questions
or adjust motion preferences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable, Optional

from . import nlu
from .grounding import (
    Ambiguous,
    Chosen,
    NoMatch,
    RecognitionOutcome,
    disambiguation_question,
    with_article,
)
from .nlu import Entities, Intent, IntentResult, NluModel
from .planner import GoalManager
from .world import Scene


class IllegalState(RuntimeError):
    """An operation was invoked in a dialogue mode that forbids it."""


class DialogueMode(Enum):
    Idle = "Idle"
    AwaitingDisambiguation = "AwaitingDisambiguation"
    AwaitingConfirmation = "AwaitingConfirmation"
    Navigating = "Navigating"
    Paused = "Paused"


# Intents that advance goal selection; their turns count as dialogue rounds.
_SELECTION_INTENTS = (Intent.ObjectGoal, Intent.LocationGoal)
_ACTION_ORDER = (
    Intent.ObjectGoal,
    Intent.LocationGoal,
    Intent.Affirm,
    Intent.Deny,
    Intent.Describe,
    Intent.Ask,
    Intent.Pause,
    Intent.Resume,
    Intent.Accelerate,
    Intent.Decelerate,
)

Effect = tuple


def load_templates() -> dict[str, str]:
    with resources.files("wayfinder.data").joinpath("templates.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


_TEMPLATES = load_templates()


def template(key: str, **kwargs) -> str:
    return _TEMPLATES[key].format(**kwargs)


@dataclass(frozen=True)
class TranscriptEntry:
    t: float
    speaker: str  # "user" | "robot"
    text: str
    mode: str
    effects: tuple[Effect, ...] = ()

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "speaker": self.speaker,
            "text": self.text,
            "mode": self.mode,
            "effects": [list(e) for e in self.effects],
        }


@dataclass
class DialogueDeps:
    """Everything the state machine calls out to; one bundle per session."""

    scene: Scene
    nlu_model: NluModel
    recognizer: Callable[[Entities], RecognitionOutcome]
    goal_manager: GoalManager
    describe_scene: Callable[[], str]
    answer_question: Callable[[str], str]


@dataclass
class SessionState:
    mode: DialogueMode = DialogueMode.Idle
    pending_entities: Entities = field(default_factory=Entities)
    pending_landmark: Optional[str] = None
    pending_question: Optional[str] = None
    active_landmark: Optional[str] = None
    active_phrase: Optional[str] = None
    transcript: list[TranscriptEntry] = field(default_factory=list)
    rounds_for_current_goal: int = 0
    last_goal_rounds: int = 0
    total_rounds: int = 0  # selection turns over the whole session; never reset
    seq: int = 0

    def check_invariants(self) -> None:
        if (self.pending_landmark is not None) != (self.mode is DialogueMode.AwaitingConfirmation):
            raise IllegalState(
                f"pending landmark {self.pending_landmark!r} in mode {self.mode.value}"
            )
        if self.mode in (DialogueMode.Navigating, DialogueMode.Paused):
            if self.active_landmark is None:
                raise IllegalState(f"{self.mode.value} without an active landmark")


def _merge_entities(pending: Entities, new: Entities) -> Entities:
    attrs = pending.attributes + tuple(
        a for a in new.attributes if a not in pending.attributes
    )
    return Entities(
        object=new.object or pending.object,
        location=new.location or pending.location,
        attributes=attrs,
    )


def _clear_pending(state: SessionState) -> None:
    state.pending_entities = Entities()
    state.pending_landmark = None
    state.pending_question = None


def _cancel_active(state: SessionState, deps: DialogueDeps, effects: list[Effect]) -> None:
    if state.active_landmark is not None:
        deps.goal_manager.clear_goal()
        effects.append(("cancel_goal", state.active_landmark))
        state.active_landmark = None
        state.active_phrase = None


def _start_selection(
    state: SessionState, entities: Entities, deps: DialogueDeps, effects: list[Effect]
) -> str:
    """Run recognition for a goal request and move to the matching wait mode."""
    _cancel_active(state, deps, effects)
    state.rounds_for_current_goal += 1
    state.total_rounds += 1
    if not entities.object:
        state.mode = DialogueMode.AwaitingDisambiguation
        state.pending_entities = entities
        state.pending_landmark = None
        state.pending_question = disambiguation_question(None, entities)
        return state.pending_question
    outcome = deps.recognizer(entities)
    if isinstance(outcome, Chosen):
        landmark = deps.scene.landmark(outcome.landmark_id)
        state.mode = DialogueMode.AwaitingConfirmation
        state.pending_entities = entities
        state.pending_landmark = landmark.id
        state.pending_question = None
        return template("confirm", phrase=with_article(landmark.canonical_phrase))
    if isinstance(outcome, Ambiguous):
        state.mode = DialogueMode.AwaitingDisambiguation
        state.pending_entities = entities
        state.pending_landmark = None
        state.pending_question = disambiguation_question(outcome, entities)
        return state.pending_question
    state.mode = DialogueMode.Idle
    _clear_pending(state)
    return template("no_match")


def _dispatch_goal(state: SessionState, deps: DialogueDeps, effects: list[Effect]) -> str:
    landmark = deps.scene.landmark(state.pending_landmark)
    deps.goal_manager.set_goal(landmark.pose)
    effects.append(("dispatch_goal", landmark.id))
    state.rounds_for_current_goal += 1
    state.total_rounds += 1
    state.last_goal_rounds = state.rounds_for_current_goal
    state.rounds_for_current_goal = 0
    state.mode = DialogueMode.Navigating
    state.active_landmark = landmark.id
    state.active_phrase = landmark.canonical_phrase
    _clear_pending(state)
    return template("dispatch", phrase=landmark.canonical_phrase)


def _handle_motion(
    state: SessionState, intent: Intent, deps: DialogueDeps, effects: list[Effect]
) -> str:
    manager = deps.goal_manager
    if intent is Intent.Pause:
        if state.mode is not DialogueMode.Navigating:
            return template("not_moving")
        manager.pause()
        effects.append(("pause", state.active_landmark))
        state.mode = DialogueMode.Paused
        return template("pause")
    if intent is Intent.Resume:
        if state.mode is not DialogueMode.Paused:
            return template("nothing_to_resume")
        manager.resume()
        effects.append(("resume", state.active_landmark))
        state.mode = DialogueMode.Navigating
        return template("resume")
    step = 1 if intent is Intent.Accelerate else -1
    before = manager.v_limit
    after = manager.adjust_speed(step)
    effects.append(("speed", step, after))
    if after == before:
        return template("fastest" if step > 0 else "slowest")
    return template("faster" if step > 0 else "slower")


def _handle_intent(
    state: SessionState,
    intent: Intent,
    result: IntentResult,
    deps: DialogueDeps,
    effects: list[Effect],
) -> str:
    mode = state.mode
    if intent in _SELECTION_INTENTS:
        _clear_pending(state)
        return _start_selection(state, result.entities, deps, effects)
    if intent is Intent.Affirm:
        if mode is DialogueMode.AwaitingConfirmation:
            return _dispatch_goal(state, deps, effects)
        if mode is DialogueMode.AwaitingDisambiguation:
            # "yes" does not answer a which-question; ask it again.
            state.rounds_for_current_goal += 1
            state.total_rounds += 1
            return state.pending_question or template("nothing_to_confirm")
        return template("nothing_to_confirm")
    if intent is Intent.Deny:
        if mode in (DialogueMode.AwaitingConfirmation, DialogueMode.AwaitingDisambiguation):
            state.rounds_for_current_goal = 0
            state.total_rounds += 1
            _clear_pending(state)
            state.mode = DialogueMode.Idle
            return template("deny")
        return template("acknowledge")
    if intent is Intent.Describe:
        return deps.describe_scene()
    if intent is Intent.Ask:
        return deps.answer_question(result.raw_text)
    return _handle_motion(state, intent, deps, effects)


def handle_result(
    state: SessionState,
    result: IntentResult,
    deps: DialogueDeps,
    t: Optional[float] = None,
) -> tuple[SessionState, str, list[Effect]]:
    """Apply one classified utterance; the NLU-free core of handle_utterance."""
    stamp = float(state.seq) if t is None else t
    state.seq += 1
    state.transcript.append(
        TranscriptEntry(t=stamp, speaker="user", text=result.raw_text, mode=state.mode.value)
    )
    effects: list[Effect] = []

    if result.intents[0][0] is Intent.Unknown:
        # Out-of-scope speech is ignored entirely.
        state.check_invariants()
        return state, "", effects

    intents = [i for i, _ in result.intents]
    parts: list[str] = []

    if (
        state.mode is DialogueMode.AwaitingDisambiguation
        and Intent.Deny not in intents
        and (
            result.entities.object
            or result.entities.attributes
            or result.entities.location
            or any(i in _SELECTION_INTENTS for i in intents)
        )
    ):
        merged = _merge_entities(state.pending_entities, result.entities)
        _clear_pending(state)
        if Intent.Greet in intents:
            parts.append(template("greet_short"))
        parts.append(_start_selection(state, merged, deps, effects))
    else:
        actionable = [i for i in _ACTION_ORDER if i in intents]
        if Intent.Greet in intents:
            parts.append(template("greet") if not actionable else template("greet_short"))
        if actionable:
            parts.append(_handle_intent(state, actionable[0], result, deps, effects))

    reply = " ".join(p for p in parts if p)
    if reply:
        state.transcript.append(
            TranscriptEntry(
                t=stamp, speaker="robot", text=reply, mode=state.mode.value,
                effects=tuple(effects),
            )
        )
    state.check_invariants()
    return state, reply, effects


def handle_utterance(
    state: SessionState,
    text: str,
    deps: DialogueDeps,
    t: Optional[float] = None,
) -> tuple[SessionState, str, list[Effect]]:
    """Classify one user utterance and run it through the state machine."""
    result = nlu.understand(deps.nlu_model, text)
    return handle_result(state, result, deps, t)


def notify_arrival(
    state: SessionState,
    goal_manager: Optional[GoalManager] = None,
    t: Optional[float] = None,
) -> tuple[SessionState, str]:
    """Planner reached the goal: announce it and return to Idle."""
    if state.mode is not DialogueMode.Navigating:
        raise IllegalState(f"arrival while {state.mode.value}")
    phrase = state.active_phrase or state.active_landmark or "destination"
    reply = template("arrival", phrase=phrase)
    state.mode = DialogueMode.Idle
    state.active_landmark = None
    state.active_phrase = None
    state.rounds_for_current_goal = 0
    if goal_manager is not None:
        goal_manager.clear_goal()
    stamp = float(state.seq) if t is None else t
    state.seq += 1
    state.transcript.append(
        TranscriptEntry(t=stamp, speaker="robot", text=reply, mode=state.mode.value)
    )
    state.check_invariants()
    return state, reply


def export_transcript(state: SessionState) -> str:
    """Transcript as JSON lines, one utterance per line."""
    return "\n".join(json.dumps(e.to_dict()) for e in state.transcript)
