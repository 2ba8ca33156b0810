"""Landmark recognition: concept embeddings, cosine selection, detector baseline.

Queries and landmark descriptions are embedded into a shared concept space by
a token lexicon (or by precomputed vectors), and the landmark with the highest
cosine similarity wins.  Near-ties surface as an Ambiguous outcome so the
dialogue layer can ask a follow-up instead of guessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Union

import numpy as np

from .nlu import Entities, tokenize
from .world import Landmark

DEFAULT_MARGIN = 0.02

_VOWELS = "aeiou"


class MissingObject(ValueError):
    """Prompt composition needs an object entity."""


class LexiconError(ValueError):
    """Lexicon data violates a structural constraint."""


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit vector in concept space; all-zero is the 'nothing recognized' sentinel."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        norm = float(np.linalg.norm(values))
        if norm > 0.0 and abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is neither 0 nor 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def is_zero(self) -> bool:
        return not self.values.any()

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity; the zero sentinel is similar to nothing."""
    if a.is_zero or b.is_zero:
        return 0.0
    return float(np.dot(a.values, b.values))


@dataclass(frozen=True)
class ConceptLexicon:
    """Surface token -> (concept, weight) table; concepts are the embedding axes."""

    concepts: tuple[str, ...]
    tokens: Mapping[str, tuple[str, float]]

    def __post_init__(self):
        if len(set(self.concepts)) != len(self.concepts):
            raise LexiconError("duplicate concept ids")
        used = set()
        for token, (concept, weight) in self.tokens.items():
            if concept not in self.concepts:
                raise LexiconError(f"token {token!r} maps to unknown concept {concept!r}")
            if weight <= 0:
                raise LexiconError(f"token {token!r} has non-positive weight")
            used.add(concept)
        unreachable = set(self.concepts) - used
        if unreachable:
            raise LexiconError(f"concepts reachable from no token: {sorted(unreachable)}")
        object.__setattr__(self, "_axis", {c: i for i, c in enumerate(self.concepts)})

    @property
    def dimension(self) -> int:
        return len(self.concepts)

    def axis(self, concept: str) -> int:
        return self._axis[concept]


def lexicon_embed(lex: ConceptLexicon, tokens: Sequence[str]) -> EmbeddingVector:
    """Weighted sum of concept axes over known tokens, L2-normalized.

    Unknown tokens contribute nothing; if no token is known the zero sentinel
    comes back unnormalized, flagging "this text means nothing to me".
    """
    raw = np.zeros(lex.dimension)
    for token in tokens:
        entry = lex.tokens.get(token)
        if entry is not None:
            concept, weight = entry
            raw[lex.axis(concept)] += weight
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        return EmbeddingVector(raw)
    return EmbeddingVector(raw / norm)


def load_lexicon(path: str | Path) -> ConceptLexicon:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return lexicon_from_dict(data)


def lexicon_from_dict(data: dict) -> ConceptLexicon:
    try:
        concepts = tuple(data["concepts"])
        tokens = {
            str(tok): (str(spec["concept"]), float(spec.get("weight", 1.0)))
            for tok, spec in data["tokens"].items()
        }
    except (KeyError, TypeError) as e:
        raise LexiconError(f"malformed lexicon: {e}") from e
    return ConceptLexicon(concepts=concepts, tokens=tokens)


def shipped_lexicon() -> ConceptLexicon:
    with resources.files("wayfinder.data").joinpath("lexicon.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return lexicon_from_dict(json.load(fh))


class EmbeddingProvider(Protocol):
    @property
    def dimension(self) -> int: ...

    def embed_text(self, text: str) -> EmbeddingVector: ...

    def embed_landmark(self, landmark: Landmark) -> EmbeddingVector: ...


@dataclass(frozen=True)
class LexiconProvider:
    """Default provider: both text and landmark descriptions go through the lexicon."""

    lexicon: ConceptLexicon

    @property
    def dimension(self) -> int:
        return self.lexicon.dimension

    def embed_text(self, text: str) -> EmbeddingVector:
        return lexicon_embed(self.lexicon, tokenize(text))

    def embed_landmark(self, landmark: Landmark) -> EmbeddingVector:
        if landmark.embedding is not None:
            return EmbeddingVector(landmark.embedding)
        return lexicon_embed(self.lexicon, landmark.description_tokens)


@dataclass(frozen=True)
class VectorTableProvider:
    """Provider backed by precomputed vectors (e.g. exported from a real encoder).

    Text queries are looked up by their normalized token string; anything not
    in the table embeds to the zero sentinel.
    """

    vectors: Mapping[str, EmbeddingVector]
    dim: int

    @property
    def dimension(self) -> int:
        return self.dim

    def embed_text(self, text: str) -> EmbeddingVector:
        key = " ".join(tokenize(text))
        found = self.vectors.get(key)
        return found if found is not None else EmbeddingVector(np.zeros(self.dim))

    def embed_landmark(self, landmark: Landmark) -> EmbeddingVector:
        if landmark.embedding is not None:
            return EmbeddingVector(landmark.embedding)
        found = self.vectors.get(landmark.id)
        return found if found is not None else EmbeddingVector(np.zeros(self.dim))


def load_vector_table(path: str | Path) -> VectorTableProvider:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    vectors = {key: EmbeddingVector(np.asarray(vec, dtype=float)) for key, vec in data.items()}
    dims = {v.dimension for v in vectors.values()}
    if len(dims) > 1:
        raise LexiconError(f"mixed vector dimensions: {sorted(dims)}")
    return VectorTableProvider(vectors=vectors, dim=dims.pop() if dims else 0)


def default_provider() -> LexiconProvider:
    return LexiconProvider(shipped_lexicon())


@dataclass(frozen=True)
class Candidate:
    landmark_id: str
    phrase: str


@dataclass(frozen=True)
class Chosen:
    landmark_id: str
    score: float


@dataclass(frozen=True)
class Ambiguous:
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise ValueError("ambiguity needs at least two candidates")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.landmark_id for c in self.candidates)

    @property
    def phrases(self) -> tuple[str, ...]:
        return tuple(c.phrase for c in self.candidates)


@dataclass(frozen=True)
class NoMatch:
    pass


RecognitionOutcome = Union[Chosen, Ambiguous, NoMatch]


def compose_prompt(entities: Entities) -> str:
    """Render entities as a retrieval query, e.g. "a fabric chair in the office"."""
    if not entities.object:
        raise MissingObject("cannot compose a query without an object")
    words = ["a", *entities.attributes, entities.object]
    prompt = " ".join(words)
    if entities.location:
        prompt += f" in the {entities.location}"
    return prompt


def _ranked(scored: list[tuple[float, Landmark]]) -> list[tuple[float, Landmark]]:
    # Sort by descending score with id as the tiebreak; ties still become
    # Ambiguous, the tiebreak only stabilizes candidate listing order.
    return sorted(scored, key=lambda pair: (-pair[0], pair[1].id))


def recognize_clip(
    provider: EmbeddingProvider,
    landmarks: Sequence[Landmark],
    query: str,
    margin: float = DEFAULT_MARGIN,
) -> RecognitionOutcome:
    """Pick the landmark whose embedding is most similar to the query.

    Within ``margin`` of the best score counts as a tie and produces
    Ambiguous; a query with no recognizable content (or no similarity to any
    landmark) produces NoMatch rather than an arbitrary argmax.
    """
    if not landmarks:
        raise ValueError("need at least one landmark")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    q = provider.embed_text(query)
    if q.is_zero:
        return NoMatch()
    ranked = _ranked([(cosine(q, provider.embed_landmark(lm)), lm) for lm in landmarks])
    top, best = ranked[0]
    if top <= 0.0:
        return NoMatch()
    if len(ranked) == 1 or top - ranked[1][0] > margin:
        return Chosen(landmark_id=best.id, score=top)
    candidates = tuple(
        Candidate(landmark_id=lm.id, phrase=lm.canonical_phrase)
        for score, lm in ranked
        if score >= top - margin
    )
    return Ambiguous(candidates=candidates)


def recognize_detector(
    landmarks: Sequence[Landmark], query_tokens: Sequence[str]
) -> RecognitionOutcome:
    """Count-based baseline over each landmark's fixed detector vocabulary.

    Only exact class-name matches count, so synonyms and attributes the
    vocabulary does not contain are invisible to it.
    """
    if not landmarks:
        raise ValueError("need at least one landmark")
    tokens = set(query_tokens)
    counted = [(len(tokens & lm.detector_classes), lm) for lm in landmarks]
    ranked = sorted(counted, key=lambda pair: (-pair[0], pair[1].id))
    top, best = ranked[0]
    if top == 0:
        return NoMatch()
    if len(ranked) == 1 or ranked[1][0] < top:
        return Chosen(landmark_id=best.id, score=float(top))
    candidates = tuple(
        Candidate(landmark_id=lm.id, phrase=lm.canonical_phrase)
        for count, lm in ranked
        if count == top
    )
    return Ambiguous(candidates=candidates)


def entity_tokens(entities: Entities) -> list[str]:
    """The object words a user actually said, attributes included."""
    words = [*entities.attributes, entities.object or ""]
    return tokenize(" ".join(words))


def recognizer_for(
    method: str,
    landmarks: Sequence[Landmark],
    provider: Optional[EmbeddingProvider] = None,
    margin: float = DEFAULT_MARGIN,
):
    """Entities -> RecognitionOutcome callable for a named grounding method.

    "lexicon" runs the cosine recognizer over a composed prompt; "detector"
    runs the fixed-vocabulary count baseline over the raw entity tokens.
    """
    if method == "lexicon":
        prov = provider if provider is not None else default_provider()

        def recognize(entities: Entities) -> RecognitionOutcome:
            return recognize_clip(prov, landmarks, compose_prompt(entities), margin)

        return recognize
    if method == "detector":

        def recognize(entities: Entities) -> RecognitionOutcome:
            return recognize_detector(landmarks, entity_tokens(entities))

        return recognize
    raise ValueError(f"unknown grounding method {method!r}")


def with_article(phrase: str) -> str:
    article = "an" if phrase[:1].lower() in _VOWELS else "a"
    return f"{article} {phrase}"


def disambiguation_question(outcome: Optional[Ambiguous], entities: Entities) -> str:
    """Ask the user to pick among the tied candidates.

    Without an object entity there is nothing to enumerate, so the question
    becomes a hint for one (outcome may then be None).
    """
    if not entities.object:
        if entities.location:
            return f"What object are you looking for in the {entities.location}?"
        return "What object are you looking for?"
    if outcome is None:
        raise ValueError("an object entity requires tied candidates to enumerate")
    parts = [with_article(p) for p in outcome.phrases]
    parts[0] = parts[0][0].upper() + parts[0][1:]
    listing = ", ".join(parts[:-1]) + ", or " + parts[-1]
    return f"What kind of {entities.object} are you looking for? {listing}?"
