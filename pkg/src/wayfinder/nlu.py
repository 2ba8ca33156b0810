"""Intent classification, entity extraction, and transcript corruption.

A deliberately small text pipeline: whitespace tokens, per-intent token
weights fitted as smoothed log-likelihood ratios, and a phrase gazetteer for
objects, locations, and attributes.  Scores are sums of positive token
weights, so evidence for one intent never argues against another; that keeps
multi-intent utterances ("hello ... take me to a sofa") simple to emit.
"""

from __future__ import annotations

import json
import math
import random
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class Intent(str, Enum):
    Greet = "Greet"
    ObjectGoal = "ObjectGoal"
    LocationGoal = "LocationGoal"
    Affirm = "Affirm"
    Deny = "Deny"
    Describe = "Describe"
    Ask = "Ask"
    Pause = "Pause"
    Resume = "Resume"
    Accelerate = "Accelerate"
    Decelerate = "Decelerate"
    Unknown = "Unknown"


class MissingIntentCoverage(ValueError):
    """Training corpus lacks examples for one or more intents."""


_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")


def tokenize(text: str) -> list[str]:
    """Lowercased, punctuation-free, whitespace-split tokens."""
    return _PUNCT.sub("", text.lower()).split()


@dataclass(frozen=True)
class Entities:
    object: Optional[str] = None
    location: Optional[str] = None
    attributes: tuple[str, ...] = ()


@dataclass(frozen=True)
class IntentResult:
    """Emitted intents sorted by confidence, plus whatever entities matched.

    Entity values keep the user's surface form (lowercased), not a canonical
    synonym, so downstream grounding sees what was actually said.
    """

    intents: tuple[tuple[Intent, float], ...]
    entities: Entities
    raw_text: str

    def top_intent(self) -> Intent:
        return self.intents[0][0]

    def has(self, intent: Intent) -> bool:
        return any(i is intent for i, _ in self.intents)


GazetteerKind = str  # "object" | "location" | "attribute"


@dataclass(frozen=True)
class NluModel:
    """Fitted weights and gazetteer; immutable, safe for concurrent readers."""

    weights: Mapping[Intent, Mapping[str, float]]
    gazetteer: Mapping[tuple[str, ...], GazetteerKind]
    secondary_threshold: float
    unknown_floor: float
    max_phrase_len: int

    def token_weight(self, intent: Intent, token: str) -> float:
        return self.weights[intent].get(token, 0.0)

    def score(self, intent: Intent, tokens: Sequence[str]) -> float:
        table = self.weights[intent]
        return sum(max(0.0, table.get(t, 0.0)) for t in tokens)


def _normalize_example(item) -> tuple[str, list[Intent], dict]:
    if isinstance(item, Mapping):
        text, intents, entities = item["text"], item["intents"], item.get("entities", {})
    else:
        text, intents, entities = item
    return str(text), [Intent(i) for i in intents], dict(entities or {})


def _shipped_json(name: str):
    with resources.files("wayfinder.data").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def load_corpus(path: str | Path) -> list[dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("corpus file must be a JSON list")
    return data


def load_confusion(path: str | Path) -> dict[str, list[str]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    # Keys starting with "_" are annotations (e.g. which pairs are filler),
    # not confusable tokens.
    return {k: list(v) for k, v in data.items() if not k.startswith("_")}


def shipped_corpus() -> list[dict]:
    return _shipped_json("corpus.json")


def shipped_eval_corpus() -> list[dict]:
    return _shipped_json("eval_corpus.json")


def shipped_confusion() -> dict[str, list[str]]:
    return {k: list(v) for k, v in _shipped_json("confusion.json").items() if not k.startswith("_")}


def shipped_synonyms() -> list[list[str]]:
    return _shipped_json("synonyms.json")


def fit(
    corpus: Iterable,
    synonym_groups: Optional[Sequence[Sequence[str]]] = None,
    secondary_threshold: float = 0.65,
    smoothing: float = 0.1,
) -> NluModel:
    """Fit token weights and the gazetteer from an annotated corpus.

    weight(token, intent) = smoothed log-likelihood ratio of the token's
    frequency inside vs. outside the intent.  The Unknown floor is the 5th
    percentile of per-token in-class training scores, so a test utterance
    whose average token carries less evidence than almost all training data
    is refused.  Per-token (not summed) because sentence length should not
    decide refusal.
    """
    examples = [_normalize_example(item) for item in corpus]
    covered = {i for _, intents, _ in examples for i in intents}
    missing = [i.value for i in Intent if i not in covered]
    if missing:
        raise MissingIntentCoverage(f"no examples for: {', '.join(missing)}")
    if synonym_groups is None:
        synonym_groups = shipped_synonyms()

    counts: dict[Intent, dict[str, float]] = {i: {} for i in Intent}
    totals: dict[Intent, float] = {i: 0.0 for i in Intent}
    vocab: set[str] = set()
    tokenized: list[tuple[list[str], list[Intent]]] = []
    for text, intents, _ in examples:
        tokens = tokenize(text)
        tokenized.append((tokens, intents))
        vocab.update(tokens)
        # A sentence with k labels contributes 1/k of each token to every
        # label's bag.  Full double counting would teach each label the
        # other's whole phrasing and blur the classes together.
        share = 1.0 / len(intents)
        for intent in intents:
            totals[intent] += share * len(tokens)
            bag = counts[intent]
            for t in tokens:
                bag[t] = bag.get(t, 0.0) + share

    grand_total = sum(totals.values())
    v = len(vocab)
    weights: dict[Intent, dict[str, float]] = {}
    for intent in Intent:
        n_in = totals[intent]
        n_out = grand_total - n_in
        table = {}
        for t in vocab:
            c_in = counts[intent].get(t, 0.0)
            c_out = sum(counts[i].get(t, 0.0) for i in Intent) - c_in
            p_in = (c_in + smoothing) / (n_in + smoothing * v)
            p_out = (c_out + smoothing) / (n_out + smoothing * v)
            table[t] = math.log(p_in) - math.log(p_out)
        weights[intent] = table

    gazetteer: dict[tuple[str, ...], GazetteerKind] = {}

    def add_phrase(phrase: str, kind: GazetteerKind):
        key = tuple(tokenize(phrase))
        if key:
            gazetteer.setdefault(key, kind)

    for _, _, entities in examples:
        if entities.get("object"):
            add_phrase(entities["object"], "object")
        if entities.get("location"):
            add_phrase(entities["location"], "location")
        for attr in entities.get("attributes", []):
            add_phrase(attr, "attribute")
    # Synonym groups widen recognition: every member of a group gets the kind
    # of any member the corpus annotated.
    for group in synonym_groups:
        kinds = {gazetteer.get(tuple(tokenize(m))) for m in group}
        kinds.discard(None)
        if len(kinds) == 1:
            kind = kinds.pop()
            for member in group:
                add_phrase(member, kind)

    model = NluModel(
        weights=weights,
        gazetteer=gazetteer,
        secondary_threshold=secondary_threshold,
        unknown_floor=-math.inf,
        max_phrase_len=max((len(k) for k in gazetteer), default=1),
    )
    in_class = [
        model.score(intent, tokens) / len(tokens)
        for tokens, intents in tokenized
        for intent in intents
        if tokens
    ]
    floor = float(np.percentile(in_class, 5))
    return NluModel(
        weights=weights,
        gazetteer=gazetteer,
        secondary_threshold=secondary_threshold,
        unknown_floor=floor,
        max_phrase_len=model.max_phrase_len,
    )


def extract_entities(model: NluModel, tokens: Sequence[str]) -> Entities:
    """Leftmost-longest gazetteer matching; first object/location wins."""
    obj: Optional[str] = None
    loc: Optional[str] = None
    attrs: list[str] = []
    i = 0
    while i < len(tokens):
        match = None
        for n in range(min(model.max_phrase_len, len(tokens) - i), 0, -1):
            key = tuple(tokens[i : i + n])
            kind = model.gazetteer.get(key)
            if kind is not None:
                match = (n, key, kind)
                break
        if match is None:
            i += 1
            continue
        n, key, kind = match
        phrase = " ".join(key)
        if kind == "object" and obj is None:
            obj = phrase
        elif kind == "location" and loc is None:
            loc = phrase
        elif kind == "attribute":
            attrs.append(phrase)
        i += n
    return Entities(object=obj, location=loc, attributes=tuple(attrs))


_UNKNOWN_ONLY = ((Intent.Unknown, 1.0),)


def understand(model: NluModel, text: str) -> IntentResult:
    """Classify one utterance; Unknown is emitted alone or not at all."""
    tokens = tokenize(text)
    entities = extract_entities(model, tokens)
    if not tokens:
        return IntentResult(intents=_UNKNOWN_ONLY, entities=entities, raw_text=text)
    scores = {intent: model.score(intent, tokens) for intent in Intent}
    top_intent = max(Intent, key=lambda i: (scores[i], -list(Intent).index(i)))
    top = scores[top_intent]
    if (
        top <= 0
        or top / len(tokens) < model.unknown_floor
        or top_intent is Intent.Unknown
    ):
        return IntentResult(intents=_UNKNOWN_ONLY, entities=entities, raw_text=text)
    emitted = [
        (intent, scores[intent] / top)
        for intent in Intent
        if intent is not Intent.Unknown
        and scores[intent] >= model.secondary_threshold * top
    ]
    emitted.sort(key=lambda pair: (-pair[1], list(Intent).index(pair[0])))
    return IntentResult(intents=tuple(emitted), entities=entities, raw_text=text)


def corrupt_transcript(
    text: str,
    confusion_table: Mapping[str, Sequence[str]],
    rate: float,
    seed: int,
) -> str:
    """Simulate speech-recognition noise by swapping confusable tokens.

    Every token draws once from the seeded stream, so adding table entries
    never changes which of the other tokens get corrupted.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    rng = random.Random(seed)
    out = []
    for token in tokenize(text):
        flip = rng.random() < rate
        pick = rng.random()
        options = confusion_table.get(token)
        if flip and options:
            token = options[int(pick * len(options))]
        out.append(token)
    return " ".join(out)
