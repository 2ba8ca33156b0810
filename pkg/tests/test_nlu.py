import random

import pytest

from wayfinder.nlu import (
    Entities,
    Intent,
    MissingIntentCoverage,
    corrupt_transcript,
    extract_entities,
    fit,
    load_confusion,
    load_corpus,
    shipped_confusion,
    shipped_corpus,
    shipped_eval_corpus,
    shipped_synonyms,
    tokenize,
    understand,
)


@pytest.fixture(scope="module")
def model():
    return fit(shipped_corpus())


def intent_set(result):
    return frozenset(i for i, _ in result.intents)


def label_set(item):
    return frozenset(Intent(name) for name in item["intents"])


def accuracy(model, items, transform=None):
    hits = 0
    for idx, item in enumerate(items):
        text = item["text"] if transform is None else transform(idx, item["text"])
        if intent_set(understand(model, text)) == label_set(item):
            hits += 1
    return hits / len(items)


# --- tokenize --------------------------------------------------------------

@pytest.mark.parametrize(
    "text,expected",
    [
        ("Take me to the sofa!", ["take", "me", "to", "the", "sofa"]),
        ("Hello, robot.", ["hello", "robot"]),
        ("  spaced   out  ", ["spaced", "out"]),
        ("", []),
        ("don't", ["dont"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


# --- fitting ---------------------------------------------------------------

def test_fit_requires_full_intent_coverage():
    partial = [{"text": "hello", "intents": ["Greet"]}]
    with pytest.raises(MissingIntentCoverage):
        fit(partial)


def test_shipped_corpus_shape():
    corpus = shipped_corpus()
    assert len(corpus) == 224
    for item in corpus:
        assert tokenize(item["text"]), item
        assert item["intents"]


def test_self_consistency_on_training_corpus(model):
    # The fitted model must reproduce its own training labels almost exactly.
    assert accuracy(model, shipped_corpus()) >= 0.99


def test_score_is_permutation_invariant(model):
    rng = random.Random(11)
    for item in rng.sample(shipped_corpus(), 25):
        tokens = tokenize(item["text"])
        shuffled = tokens[:]
        rng.shuffle(shuffled)
        for intent in Intent:
            assert model.score(intent, tokens) == pytest.approx(
                model.score(intent, shuffled)
            )


def test_score_never_decreases_when_appending_tokens(model):
    # Positive-part scoring: extra words add evidence or nothing, never doubt.
    tokens = tokenize("take me to the sofa")
    for extra in ("hello", "qwxz", "sink", "the"):
        for intent in Intent:
            assert model.score(intent, tokens + [extra]) >= model.score(intent, tokens)


# --- understand: pinned examples -------------------------------------------

def test_plain_location_goal(model):
    result = understand(model, "Take me to the kitchen")
    assert [i for i, _ in result.intents] == [Intent.LocationGoal]
    assert result.entities.location == "kitchen"
    assert result.entities.object is None


def test_greeting_plus_goal_in_one_utterance(model):
    result = understand(model, "Hello robot, can you take me to a sofa?")
    assert intent_set(result) == {Intent.Greet, Intent.ObjectGoal}
    assert result.entities.object == "sofa"


def test_gibberish_is_unknown(model):
    result = understand(model, "qwxz zzz")
    assert result.intents == ((Intent.Unknown, 1.0),)


def test_empty_utterance_is_unknown(model):
    assert understand(model, "").intents == ((Intent.Unknown, 1.0),)
    assert understand(model, "   !!!").intents == ((Intent.Unknown, 1.0),)


def test_attribute_and_surface_form(model):
    result = understand(model, "take me to a fabric sofa")
    assert result.entities == Entities(object="sofa", attributes=("fabric",))
    # Synonyms are recognized but not canonicalized.
    assert understand(model, "take me to the couch").entities.object == "couch"


def test_multiword_phrases_match_whole(model):
    result = understand(model, "guide me to the glass door")
    assert result.entities.object == "door"
    assert result.entities.attributes == ("glass",)
    assert understand(model, "go to the dining area").entities.location == "dining area"


# --- understand: emission rules --------------------------------------------

def test_unknown_is_always_emitted_alone(model):
    texts = [item["text"] for item in shipped_corpus()]
    texts += [item["text"] for item in shipped_eval_corpus()]
    table = shipped_confusion()
    texts += [corrupt_transcript(t, table, 0.5, seed=i) for i, t in enumerate(texts)]
    for text in texts:
        emitted = intent_set(understand(model, text))
        if Intent.Unknown in emitted:
            assert emitted == {Intent.Unknown}, text


def test_confidences_sorted_and_top_is_one(model):
    for item in shipped_corpus():
        result = understand(model, item["text"])
        confs = [c for _, c in result.intents]
        assert confs[0] == pytest.approx(1.0)
        assert confs == sorted(confs, reverse=True)
        assert all(0.0 < c <= 1.0 for c in confs)


def test_secondary_intents_respect_threshold(model):
    for item in shipped_corpus():
        result = understand(model, item["text"])
        if result.top_intent() is Intent.Unknown:
            continue
        for _, conf in result.intents:
            assert conf >= model.secondary_threshold - 1e-12


def test_secondary_threshold_is_configurable():
    # Raising the threshold high enough forces single-intent output.
    strict = fit(shipped_corpus(), secondary_threshold=1.0)
    result = understand(strict, "Hello robot, can you take me to a sofa?")
    assert len(result.intents) == 1


# --- transcript corruption --------------------------------------------------

def test_corrupt_transcript_deterministic():
    table = shipped_confusion()
    text = "take me to the sink and the couch"
    a = corrupt_transcript(text, table, 0.7, seed=3)
    b = corrupt_transcript(text, table, 0.7, seed=3)
    assert a == b
    assert corrupt_transcript(text, table, 0.7, seed=4) != a


def test_corrupt_transcript_rate_extremes():
    table = {"sink": ["think"], "couch": ["coach"]}
    text = "the sink near the couch"
    assert corrupt_transcript(text, table, 0.0, seed=1) == text
    assert corrupt_transcript(text, table, 1.0, seed=1) == "the think near the coach"


def test_corrupt_transcript_only_swaps_listed_tokens():
    table = {"sink": ["think", "sync"]}
    out = corrupt_transcript("walk me to the sink please", table, 1.0, seed=9)
    tokens = out.split()
    assert tokens[:4] == ["walk", "me", "to", "the"]
    assert tokens[4] in ("think", "sync")
    assert tokens[5] == "please"


def test_corrupt_transcript_table_growth_does_not_shift_stream():
    # Adding entries for other tokens must not change which tokens flip:
    # every token consumes the same number of rng draws either way.
    small = {"sink": ["think"]}
    big = {"sink": ["think"], "door": ["floor"], "me": ["we"]}
    text = "take me to the sink by the door"
    for seed in range(40):
        a = corrupt_transcript(text, small, 0.3, seed=seed).split()
        b = corrupt_transcript(text, big, 0.3, seed=seed).split()
        assert a[4] == b[4]  # the sink slot agrees under both tables


def test_corrupt_transcript_rejects_bad_rate():
    with pytest.raises(ValueError):
        corrupt_transcript("hi", {}, 1.5, seed=0)
    with pytest.raises(ValueError):
        corrupt_transcript("hi", {}, -0.1, seed=0)


def test_shipped_confusion_contains_observed_pairs():
    table = shipped_confusion()
    assert set(table["sink"]) >= {"think", "sync"}
    assert "coach" in table["couch"]
    assert "forced" in table["faucet"]
    assert not any(k.startswith("_") for k in table)


# --- robustness metrics ----------------------------------------------------

def test_clean_eval_accuracy(model):
    items = shipped_eval_corpus()
    assert len(items) == 200
    assert accuracy(model, items) >= 0.95


def test_corruption_degrades_but_gap_is_bounded(model):
    items = shipped_eval_corpus()
    table = shipped_confusion()

    def noisy(idx, text):
        return corrupt_transcript(text, table, 0.3, seed=idx)

    clean = accuracy(model, items)
    corrupt = accuracy(model, items, transform=noisy)
    assert corrupt < clean
    assert (clean - corrupt) * 100.0 >= 10.0


def test_metrics_are_reproducible(model):
    items = shipped_eval_corpus()
    table = shipped_confusion()

    def run():
        return [
            intent_set(understand(model, corrupt_transcript(i["text"], table, 0.3, seed=n)))
            for n, i in enumerate(items)
        ]

    assert run() == run()


# --- data loading ----------------------------------------------------------

def test_load_corpus_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('[{"text": "hi", "intents": ["Greet"]}]', encoding="utf-8")
    assert load_corpus(path) == [{"text": "hi", "intents": ["Greet"]}]
    bad = tmp_path / "bad.json"
    bad.write_text('{"text": "hi"}', encoding="utf-8")
    with pytest.raises(ValueError):
        load_corpus(bad)


def test_load_confusion_drops_annotation_keys(tmp_path):
    path = tmp_path / "conf.json"
    path.write_text('{"_note": "x", "sink": ["think"]}', encoding="utf-8")
    assert load_confusion(path) == {"sink": ["think"]}


def test_synonym_groups_extend_gazetteer():
    # "sofa" is annotated in the corpus; its group members inherit the kind.
    groups = shipped_synonyms()
    assert any("sofa" in g and "couch" in g for g in groups)
    model = fit(shipped_corpus(), synonym_groups=groups)
    assert extract_entities(model, ["coach"]).object == "coach"
