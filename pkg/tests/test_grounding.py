import json
import math

import numpy as np
import pytest

from wayfinder.grounding import (
    Ambiguous,
    Candidate,
    Chosen,
    ConceptLexicon,
    EmbeddingVector,
    LexiconError,
    LexiconProvider,
    MissingObject,
    NoMatch,
    compose_prompt,
    cosine,
    default_provider,
    disambiguation_question,
    lexicon_embed,
    load_lexicon,
    load_vector_table,
    recognize_clip,
    recognize_detector,
    shipped_lexicon,
)
from wayfinder.nlu import Entities
from wayfinder.world import Landmark, Pose2D, shipped_scene


@pytest.fixture(scope="module")
def lab():
    return shipped_scene("dragon_lab")


@pytest.fixture(scope="module")
def provider():
    return default_provider()


def landmark(id, tokens, phrases=(), classes=()):
    return Landmark(
        id=id,
        pose=Pose2D(0.0, 0.0, 0.0),
        description_tokens=tuple(tokens),
        canonical_phrases=tuple(phrases),
        detector_classes=frozenset(classes),
    )


def oracle_embed(lex, tokens):
    # Independent dense construction straight from the table.
    v = np.zeros(len(lex.concepts))
    for t in tokens:
        if t in lex.tokens:
            concept, weight = lex.tokens[t]
            v[list(lex.concepts).index(concept)] += weight
    n = np.linalg.norm(v)
    return v if n == 0 else v / n


# --- embedding vectors -----------------------------------------------------

def test_embedding_vector_must_be_unit_or_zero():
    EmbeddingVector(np.array([1.0, 0.0]))
    EmbeddingVector(np.zeros(3))
    with pytest.raises(ValueError):
        EmbeddingVector(np.array([1.0, 1.0]))


def test_cosine_of_zero_sentinel_is_zero():
    z = EmbeddingVector(np.zeros(2))
    u = EmbeddingVector(np.array([0.0, 1.0]))
    assert cosine(z, u) == 0.0
    assert cosine(z, z) == 0.0
    assert cosine(u, u) == pytest.approx(1.0)


# --- lexicon ---------------------------------------------------------------

def test_lexicon_validation():
    with pytest.raises(LexiconError):
        ConceptLexicon(concepts=("A",), tokens={"x": ("B", 1.0)})
    with pytest.raises(LexiconError):
        ConceptLexicon(concepts=("A",), tokens={"x": ("A", 0.0)})
    with pytest.raises(LexiconError):
        ConceptLexicon(concepts=("A", "B"), tokens={"x": ("A", 1.0)})


def test_lexicon_embed_matches_oracle():
    lex = shipped_lexicon()
    for tokens in (["couch"], ["glass", "door"], ["paper", "towel", "dispenser"],
                   ["a", "chair", "in", "the", "office"]):
        got = lexicon_embed(lex, tokens)
        assert np.allclose(got.values, oracle_embed(lex, tokens))
        assert abs(np.linalg.norm(got.values) - 1.0) < 1e-9


def test_single_concept_is_one_hot():
    lex = shipped_lexicon()
    v = lexicon_embed(lex, ["couch"])
    assert v.values[lex.axis("SOFA")] == pytest.approx(1.0)
    assert np.count_nonzero(v.values) == 1


def test_synonyms_embed_identically():
    lex = shipped_lexicon()
    assert np.array_equal(
        lexicon_embed(lex, ["sofa"]).values, lexicon_embed(lex, ["couch"]).values
    )


def test_shared_concept_cosine_is_half():
    lex = shipped_lexicon()
    a = lexicon_embed(lex, ["dining", "chair"])
    b = lexicon_embed(lex, ["office", "chair"])
    assert cosine(a, b) == pytest.approx(0.5)


def test_unknown_tokens_give_zero_sentinel():
    lex = shipped_lexicon()
    assert lexicon_embed(lex, ["qwxz", "zzz"]).is_zero
    assert lexicon_embed(lex, []).is_zero
    # Unknown tokens mixed with known ones are simply dropped.
    assert np.array_equal(
        lexicon_embed(lex, ["shiny", "door"]).values,
        lexicon_embed(lex, ["door"]).values,
    )


def test_load_lexicon_file(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({
        "concepts": ["X"], "tokens": {"x": {"concept": "X", "weight": 2.0}}
    }), encoding="utf-8")
    lex = load_lexicon(path)
    assert lex.dimension == 1
    assert lex.tokens["x"] == ("X", 2.0)


# --- prompt composition ----------------------------------------------------

def test_compose_prompt():
    assert compose_prompt(Entities(object="chair", attributes=("gaming",))) == "a gaming chair"
    assert compose_prompt(Entities(object="chair", location="office")) == "a chair in the office"
    assert compose_prompt(Entities(object="sink")) == "a sink"
    with pytest.raises(MissingObject):
        compose_prompt(Entities(location="kitchen"))


# --- cosine recognition ----------------------------------------------------

CLIP_TABLE = [
    ("door", "A"), ("exit", "A"), ("entrance", "A"), ("gate", "A"),
    ("glass door", "A"), ("automatic door", "A"),
    ("sofa", "B"), ("couch", "B"), ("coach", "B"), ("fabric chair", "B"),
    ("relaxing chair", "B"), ("thermostat", "B"), ("climate control", "B"),
    ("sink", "C"), ("think", "C"), ("sync", "C"), ("faucet", "C"),
    ("soap", "C"), ("hand wash", "C"), ("paper towel dispenser", "C"),
    ("kitchen countertop", "C"),
]


@pytest.mark.parametrize("query,want", CLIP_TABLE)
def test_reference_scene_expression_table(lab, provider, query, want):
    outcome = recognize_clip(provider, lab.landmarks, query)
    assert isinstance(outcome, Chosen)
    assert outcome.landmark_id == want
    assert outcome.score > 0


def test_chosen_scores_match_hand_geometry(lab, provider):
    # A holds {DOOR x2, GLASS, AUTOMATIC, POSTER}: norm sqrt(7).
    door = recognize_clip(provider, lab.landmarks, "door")
    assert door.score == pytest.approx(2 / math.sqrt(7))
    glass = recognize_clip(provider, lab.landmarks, "glass door")
    assert glass.score == pytest.approx(3 / math.sqrt(14))
    # C holds 16 unit-weight concept tokens: norm 4.
    sink = recognize_clip(provider, lab.landmarks, "sink")
    assert sink.score == pytest.approx(0.25)
    wash = recognize_clip(provider, lab.landmarks, "hand wash")
    assert wash.score == pytest.approx(2 / (math.sqrt(2) * 4))
    # B holds 5 unit-weight concepts.
    fabric = recognize_clip(provider, lab.landmarks, "fabric chair")
    assert fabric.score == pytest.approx(2 / math.sqrt(10))


def test_bare_chair_is_ambiguous_between_chair_areas(lab, provider):
    outcome = recognize_clip(provider, lab.landmarks, "chair")
    assert isinstance(outcome, Ambiguous)
    assert outcome.ids == ("D", "E")
    assert outcome.phrases == ("dining chair", "office chair")


def test_attribute_resolves_the_chair_tie(lab, provider):
    assert recognize_clip(provider, lab.landmarks, "a dining chair").landmark_id == "D"
    assert recognize_clip(provider, lab.landmarks, "an office chair").landmark_id == "E"
    assert recognize_clip(provider, lab.landmarks, "a chair in the office").landmark_id == "E"


def test_gibberish_query_is_nomatch(lab, provider):
    assert recognize_clip(provider, lab.landmarks, "qwxz zzz") == NoMatch()
    assert recognize_clip(provider, lab.landmarks, "") == NoMatch()


def test_three_way_symmetric_tie():
    lms = [
        landmark("A", ["dining", "chair"], ["dining chair"]),
        landmark("D", ["office", "chair"], ["office chair"]),
        landmark("E", ["relaxing", "chair"], ["relaxing chair"]),
    ]
    outcome = recognize_clip(default_provider(), lms, "chair")
    assert isinstance(outcome, Ambiguous)
    assert set(outcome.ids) == {"A", "D", "E"}


def test_landmark_order_never_changes_the_outcome(lab, provider):
    for query in ("door", "fabric chair", "chair"):
        fwd = recognize_clip(provider, lab.landmarks, query)
        rev = recognize_clip(provider, tuple(reversed(lab.landmarks)), query)
        if isinstance(fwd, Chosen):
            assert isinstance(rev, Chosen) and rev.landmark_id == fwd.landmark_id
        else:
            assert set(rev.ids) == set(fwd.ids)


def test_scaling_description_weights_keeps_the_choice(provider):
    # Repeating every token scales the raw vector; cosine ignores scale.
    single = [landmark("D", ["dining", "chair"]), landmark("E", ["office", "chair", "desk"])]
    doubled = [
        landmark("D", ["dining", "chair"] * 2),
        landmark("E", ["office", "chair", "desk"]),
    ]
    a = recognize_clip(provider, single, "a dining chair")
    b = recognize_clip(provider, doubled, "a dining chair")
    assert isinstance(a, Chosen) and isinstance(b, Chosen)
    assert a.landmark_id == b.landmark_id == "D"
    assert a.score == pytest.approx(b.score)


def test_synonym_queries_get_identical_outcomes(lab, provider):
    a = recognize_clip(provider, lab.landmarks, "sofa")
    b = recognize_clip(provider, lab.landmarks, "couch")
    assert a == b


def test_margin_widens_the_tie():
    lms = [landmark("D", ["dining", "chair"]), landmark("E", ["office", "chair", "desk"])]
    provider = default_provider()
    # "chair": D scores 1/sqrt(2), E scores 1/sqrt(3); gap ~ 0.13.
    assert isinstance(recognize_clip(provider, lms, "chair", margin=0.02), Chosen)
    wide = recognize_clip(provider, lms, "chair", margin=0.2)
    assert isinstance(wide, Ambiguous)
    with pytest.raises(ValueError):
        recognize_clip(provider, lms, "chair", margin=-0.1)
    with pytest.raises(ValueError):
        recognize_clip(provider, [], "chair")


def test_embedded_landmark_overrides_description(provider):
    lex = shipped_lexicon()
    vec = np.zeros(lex.dimension)
    vec[lex.axis("DOOR")] = 1.0
    lm = Landmark(
        id="X",
        pose=Pose2D(0, 0, 0),
        description_tokens=("sofa",),
        canonical_phrases=("door",),
        detector_classes=frozenset(),
        embedding=vec,
    )
    outcome = recognize_clip(provider, [lm], "door")
    assert isinstance(outcome, Chosen)
    assert outcome.score == pytest.approx(1.0)


def test_vector_table_provider(tmp_path, lab):
    dim = 2
    path = tmp_path / "vecs.json"
    path.write_text(json.dumps({
        "a sink": [1.0, 0.0], "C": [1.0, 0.0], "A": [0.0, 1.0]
    }), encoding="utf-8")
    provider = load_vector_table(path)
    assert provider.dimension == dim
    lms = [landmark("A", []), landmark("C", [])]
    outcome = recognize_clip(provider, lms, "A sink!")
    assert outcome == Chosen(landmark_id="C", score=pytest.approx(1.0))
    assert recognize_clip(provider, lms, "unknown text") == NoMatch()


# --- detector baseline -----------------------------------------------------

@pytest.mark.parametrize("query,want", [("sofa", "B"), ("faucet", "C"), ("poster", "A")])
def test_detector_fixed_vocabulary_hits(lab, query, want):
    outcome = recognize_detector(lab.landmarks, [query])
    assert isinstance(outcome, Chosen)
    assert outcome.landmark_id == want


@pytest.mark.parametrize("query", ["door", "couch", "exit"])
def test_detector_misses_out_of_vocabulary(lab, query):
    assert recognize_detector(lab.landmarks, [query]) == NoMatch()


def test_detector_chair_tie(lab):
    outcome = recognize_detector(lab.landmarks, ["chair"])
    assert isinstance(outcome, Ambiguous)
    assert set(outcome.ids) == {"D", "E"}


def test_detector_ignores_attribute_tokens(lab):
    # Attributes outside every vocabulary never move the counts.
    plain = recognize_detector(lab.landmarks, ["sofa"])
    dressed = recognize_detector(lab.landmarks, ["fabric", "relaxing", "sofa"])
    assert plain == dressed
    still_tied = recognize_detector(lab.landmarks, ["dining", "chair"])
    assert isinstance(still_tied, Ambiguous)


def test_detector_counts_drive_the_choice():
    lms = [landmark("B", [], classes=("sofa", "thermostat")), landmark("D", [], classes=("chair",))]
    outcome = recognize_detector(lms, ["sofa", "thermostat", "chair"])
    assert outcome == Chosen(landmark_id="B", score=2.0)
    with pytest.raises(ValueError):
        recognize_detector([], ["sofa"])


# --- disambiguation question -----------------------------------------------

def test_disambiguation_question_three_candidates():
    outcome = Ambiguous(candidates=(
        Candidate("D", "dining chair"),
        Candidate("E", "office chair"),
        Candidate("B", "sofa"),
    ))
    question = disambiguation_question(outcome, Entities(object="chair"))
    assert question == (
        "What kind of chair are you looking for? "
        "A dining chair, an office chair, or a sofa?"
    )


def test_disambiguation_question_two_candidates():
    outcome = Ambiguous(candidates=(
        Candidate("D", "dining chair"),
        Candidate("E", "office chair"),
    ))
    question = disambiguation_question(outcome, Entities(object="chair"))
    assert question == "What kind of chair are you looking for? A dining chair, or an office chair?"


def test_location_only_hint():
    outcome = Ambiguous(candidates=(Candidate("B", "sofa"), Candidate("C", "kitchen sink")))
    hint = disambiguation_question(outcome, Entities(location="kitchen"))
    assert hint == "What object are you looking for in the kitchen?"
    assert (
        disambiguation_question(outcome, Entities())
        == "What object are you looking for?"
    )


def test_ambiguous_needs_two_candidates():
    with pytest.raises(ValueError):
        Ambiguous(candidates=(Candidate("B", "sofa"),))
