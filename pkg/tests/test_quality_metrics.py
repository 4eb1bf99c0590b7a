import json
import math
import random

import httpx
import numpy as np
import pytest

from oracles import brute_bleu
from proswitch.errors import InputError, TransportError
from proswitch.quality_metrics import (
    HashedTrigramProvider,
    HttpEmbeddingProvider,
    bert_score,
    bleu,
    closest_ref_length,
    modified_precision,
    tokenize,
)

VOCAB = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", "."]


def _sentence(rng, lo=1, hi=12):
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


def test_tokenize_detaches_punctuation():
    assert tokenize("Hello, world! It's 3.5") == ["Hello", ",", "world", "!", "It", "'", "s", "3", ".", "5"]


def test_bleu_matches_brute_force_oracle():
    rng = random.Random(42)
    for _ in range(200):
        cand = _sentence(rng)
        refs = [_sentence(rng) for _ in range(rng.randint(1, 3))]
        m = rng.randint(1, 4)
        expected = brute_bleu(tokenize(cand), [tokenize(r) for r in refs], m)
        assert abs(bleu(cand, refs, m=m) - expected) <= 1e-12, (cand, refs, m)


def test_bleu_identity_is_exactly_one():
    text = "the cat sat on the mat ."
    assert bleu(text, [text]) == 1.0
    assert bleu(text, [text, "a dog ran"]) == 1.0


def test_bleu_worked_example():
    # P1 = 3/3, P2 = 2/2, brevity = 3/4
    assert bleu("the cat sat", ["the cat sat down"], m=2) == pytest.approx(0.75, abs=1e-15)


def test_bleu_standard_brevity():
    score = bleu("the cat sat", ["the cat sat down"], m=2, standard_bp=True)
    assert score == pytest.approx(math.exp(1 - 4 / 3), abs=1e-15)
    assert bleu("the cat sat down now", ["the cat sat down"], m=1, standard_bp=True) == pytest.approx(0.8)


def test_bleu_edge_cases():
    assert bleu("", ["the cat"]) == 0.0
    assert bleu("the", ["the cat"], m=2) == 0.0
    assert bleu("dog", ["the cat"], m=1) == 0.0
    with pytest.raises(InputError):
        bleu("x", [])
    with pytest.raises(InputError):
        bleu("x", "x")
    with pytest.raises(InputError):
        bleu("x", ["x"], m=0)


def test_bleu_bounds():
    rng = random.Random(7)
    for _ in range(200):
        score = bleu(_sentence(rng), [_sentence(rng)], m=rng.randint(1, 4))
        assert 0.0 <= score <= 1.0


def test_modified_precision_clips():
    assert modified_precision(["the"] * 7, [["the", "cat", "the"], ["the"]], 1) == 2 / 7


def test_closest_ref_length_prefers_shorter_on_tie():
    assert closest_ref_length(5, [3, 7, 9]) == 3
    assert closest_ref_length(5, [6, 4]) == 4


def test_bert_identity():
    provider = HashedTrigramProvider()
    scores = bert_score("Apoptosis is programmed cell death.", "Apoptosis is programmed cell death.", provider)
    assert scores.bert_f == pytest.approx(1.0)
    assert scores.bleu is None


def test_bert_symmetry():
    provider = HashedTrigramProvider()
    rng = random.Random(9)
    for _ in range(100):
        a, b = _sentence(rng), _sentence(rng)
        ab, ba = bert_score(a, b, provider), bert_score(b, a, provider)
        assert ab.bert_precision == pytest.approx(ba.bert_recall, abs=1e-12)
        assert ab.bert_recall == pytest.approx(ba.bert_precision, abs=1e-12)
        assert ab.bert_f == pytest.approx(ba.bert_f, abs=1e-12)


class _TableProvider:
    def __init__(self, table, scale=1.0):
        self.table = table
        self.scale = scale

    def embed(self, text):
        return np.array([self.table[t] for t in text.split()], dtype=float) * self.scale


def test_bert_orthogonal_embeddings_give_zero():
    provider = _TableProvider({"a": [1, 0, 0, 0], "b": [0, 1, 0, 0], "c": [0, 0, 1, 0], "d": [0, 0, 0, 1]})
    scores = bert_score("a b", "c d", provider)
    assert (scores.bert_precision, scores.bert_recall, scores.bert_f) == (0.0, 0.0, 0.0)


def test_bert_greedy_matching_by_hand():
    table = {"a": [1, 0], "b": [0, 1], "c": [1, 1]}
    scores = bert_score("a b", "c", _TableProvider(table))
    # each candidate token has cosine 1/sqrt(2) with "c"
    assert scores.bert_precision == pytest.approx(1 / math.sqrt(2))
    assert scores.bert_recall == pytest.approx(1 / math.sqrt(2))


def test_bert_scale_invariance():
    table = {"a": [1, 2, 0], "b": [0, 1, 3], "c": [2, 0, 1]}
    base = bert_score("a b c", "c a", _TableProvider(table))
    scaled = bert_score("a b c", "c a", _TableProvider(table, scale=37.5))
    assert scaled.bert_f == pytest.approx(base.bert_f, abs=1e-12)


def test_bert_rejects_empty():
    with pytest.raises(InputError):
        bert_score("", "x", HashedTrigramProvider())


def test_hashed_provider_is_deterministic():
    a = HashedTrigramProvider().embed("Protein folding")
    b = HashedTrigramProvider().embed("Protein folding")
    assert a.shape == (2, 64)
    assert np.array_equal(a, b)


def test_http_embedding_provider():
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"embeddings": [[1.0, 0.0], [0.0, 1.0]]})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    provider = HttpEmbeddingProvider("http://embed.test/v1", client=client)
    assert provider.embed("two tokens").shape == (2, 2)
    assert seen == [{"text": "two tokens"}]


def test_http_embedding_errors(monkeypatch):
    monkeypatch.delenv("PROSWITCH_EMBED_URL", raising=False)
    with pytest.raises(InputError):
        HttpEmbeddingProvider()
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(503)))
    with pytest.raises(TransportError):
        HttpEmbeddingProvider("http://embed.test", client=client).embed("x")
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    with pytest.raises(TransportError):
        HttpEmbeddingProvider("http://embed.test", client=client).embed("x")
