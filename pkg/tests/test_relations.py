import json
from itertools import combinations

import numpy as np
import pytest
import requests

from src.data_ingest.corpus import CorpusFormatError, Item
from src.relations.cooccurrence import candidate_pairs, count_copurchases
from src.relations.relation_miner import (
    RelationSet,
    build_substitutable,
    expand_relations,
    mine_relations,
    read_relations,
    write_relations,
)
from src.relations.scorers import (
    FileScorer,
    HttpScorer,
    MockScorer,
    ScorerBackend,
    ScorerError,
    build_prompt,
    parse_score,
    score_pairs,
)

A, B, C, D = range(4)


class TableScorer(ScorerBackend):
    """Scores fixés à l'avance, indexés par (item_id, item_id)."""

    name = "table"

    def __init__(self, table):
        self.table = table

    def score(self, item_a, item_b):
        return self.table[(item_a.item_id, item_b.item_id)]


def _items(n):
    return [Item(f"i{k}", k, f"Item {k}") for k in range(n)]


# --- Co-achats et candidats ---

def test_count_copurchases_window():
    counts = count_copurchases([[A, B, C, D]], 3)
    assert counts == {(A, B): 1, (A, C): 1, (B, C): 1, (B, D): 1, (C, D): 1}


def test_count_copurchases_edge_cases():
    assert count_copurchases([[A]], 3) == {}
    assert count_copurchases([[A, B], [A, B]], 3) == {(A, B): 2}
    # positions, pas valeurs : un item répété compte à chaque occurrence
    assert count_copurchases([[A, A, B]], 2) == {(A, A): 1, (A, B): 1}
    with pytest.raises(ValueError):
        count_copurchases([[A, B]], 1)


def test_count_copurchases_parallel_matches_serial():
    rng = np.random.default_rng(0)
    sequences = [rng.integers(0, 50, size=12).tolist() for _ in range(5000)]
    assert count_copurchases(sequences, 3, workers=4) == count_copurchases(sequences, 3, workers=1)


def test_candidate_pairs_threshold():
    counts = {(A, B): 2, (A, C): 1}
    assert candidate_pairs(counts, 2) == {(A, B)}
    assert candidate_pairs(counts, 1) == {(A, B), (A, C)}
    assert candidate_pairs({}, 2) == set()
    assert candidate_pairs({(A, A): 5}, 1) == set()


# --- Scoreurs ---

def test_mock_scorer_rules():
    scorer = MockScorer()
    tent = Item("t", categories=["Outdoors", "bundle-001"])
    stakes = Item("s", categories=["Garden", "bundle-001"])
    mug = Item("m", categories=["Kitchen", "bundle-002"])
    assert scorer.score(tent, stakes) == 0.9
    assert scorer.score(stakes, tent) == 0.9
    assert scorer.score(tent, mug) == 0.1
    assert scorer.score(Item("a", categories=["Audio", "Cables"]), Item("b", categories=["Office", "Cables"])) == 0.9
    assert scorer.score(Item("a"), Item("b")) == 0.1


@pytest.mark.parametrize("text, expected", [
    ("Reasoning... the final score: 0.8", 0.8),
    ("Criteria 1 and 2 apply.\nScore: 1", 1.0),
    ("score = .35", 0.35),
    ("Score: 7", None),
    ("no numeric answer", None),
    ("", None),
])
def test_parse_score(text, expected):
    assert parse_score(text) == expected


def test_prompt_contains_both_products():
    prompt = build_prompt(Item("a", title="Tent"), Item("b", title="Stakes", brand="Acme"))
    assert "- Product 1: Tent." in prompt
    assert "- Product 2: Stakes. Acme." in prompt
    assert "Direct Interaction" in prompt and "Functional Enhancement" in prompt and "Market Relationship" in prompt


def test_file_scorer_symmetric_lookup_and_missing_pairs(tmp_path):
    path = tmp_path / "scores.jsonl"
    path.write_text(json.dumps({"i": "a", "j": "b", "w": 0.7}) + "\n", encoding="utf-8")
    scorer = FileScorer(str(path))
    a, b, c = Item("a"), Item("b"), Item("c")
    assert scorer.score(a, b) == 0.7
    assert scorer.score(b, a) == 0.7
    assert scorer.score(a, c) == 0.0
    assert scorer.misses == 1


def test_file_scorer_rejects_out_of_range(tmp_path):
    path = tmp_path / "scores.jsonl"
    path.write_text(json.dumps({"i": "a", "j": "b", "w": 1.7}) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        FileScorer(str(path))


class _FakeResponse:
    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"{self.status}")

    def json(self):
        if isinstance(self.payload, Exception):
            raise self.payload
        return self.payload


def _chat(content):
    return _FakeResponse({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})


def test_http_scorer_posts_chat_body_with_token(monkeypatch):
    monkeypatch.setenv("TEST_SCORER_TOKEN", "s3cret")
    scorer = HttpScorer("http://scorer.invalid/v1/chat/completions", "demo-model", "TEST_SCORER_TOKEN",
                        timeout=1.0, max_tries=2, backoff_factor=0)
    seen = {}

    def fake_post(url, json=None, timeout=None):
        seen.update(url=url, body=json, timeout=timeout)
        return _chat("Both are used outdoors. Score: 0.8")

    monkeypatch.setattr(scorer.session, "post", fake_post)
    assert scorer.score(Item("a", title="Tent"), Item("b", title="Stakes")) == 0.8
    assert seen["body"]["model"] == "demo-model"
    assert seen["body"]["messages"][0]["role"] == "user"
    assert "- Product 1: Tent." in seen["body"]["messages"][0]["content"]
    assert scorer.session.headers["Authorization"] == "Bearer s3cret"


def test_http_scorer_retries_then_fails(monkeypatch):
    scorer = HttpScorer("http://scorer.invalid", "m", "", max_tries=3, backoff_factor=0)
    calls = []

    def failing_post(url, json=None, timeout=None):
        calls.append(url)
        raise requests.ConnectionError("refused")

    monkeypatch.setattr(scorer.session, "post", failing_post)
    with pytest.raises(ScorerError) as excinfo:
        scorer.score(Item("a"), Item("b"))
    assert len(calls) == 3
    assert "(a, b)" in str(excinfo.value)


def test_http_scorer_recovers_after_transient_error(monkeypatch):
    scorer = HttpScorer("http://scorer.invalid", "m", "", max_tries=3, backoff_factor=0)
    responses = iter([_FakeResponse({}, status=503), _chat("score 0.25")])
    monkeypatch.setattr(scorer.session, "post", lambda url, json=None, timeout=None: next(responses))
    assert scorer.score(Item("a"), Item("b")) == 0.25


def test_http_scorer_unparseable_response_is_skipped(monkeypatch):
    scorer = HttpScorer("http://scorer.invalid", "m", "", max_tries=1, backoff_factor=0)
    monkeypatch.setattr(scorer.session, "post", lambda url, json=None, timeout=None: _chat("I cannot say."))
    assert scorer.score(Item("a"), Item("b")) is None
    monkeypatch.setattr(scorer.session, "post", lambda url, json=None, timeout=None: _FakeResponse({"x": 1}))
    assert scorer.score(Item("a"), Item("b")) is None


def test_http_scorer_non_json_body_is_skipped_without_retry(monkeypatch):
    scorer = HttpScorer("http://scorer.invalid", "m", "", max_tries=3, backoff_factor=0)
    calls = []

    def html_post(url, json=None, timeout=None):
        calls.append(url)
        return _FakeResponse(requests.exceptions.JSONDecodeError("Expecting value", "<html>", 0))

    monkeypatch.setattr(scorer.session, "post", html_post)
    assert scorer.score(Item("a"), Item("b")) is None
    assert len(calls) == 1


def test_score_pairs_is_ordered_and_drops_skipped_pairs():
    items = _items(4)
    table = {("i0", "i1"): 0.6, ("i2", "i3"): None, ("i1", "i3"): 0.2}
    scores = score_pairs(TableScorer(table), [(2, 3), (1, 3), (0, 1)], items, max_in_flight=3)
    assert list(scores) == [(0, 1), (1, 3)]
    assert scores == {(0, 1): 0.6, (1, 3): 0.2}


# --- Substituables et expansion ---

def test_build_substitutable_examples():
    emb = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    pairs = build_substitutable(emb, 0.85)
    assert pairs == {(0, 1)}
    assert build_substitutable(emb, 0.7) == {(0, 1), (0, 3), (1, 3), (2, 3)}
    assert build_substitutable(emb, 0.85, scope=[2, 3]) == set()
    with pytest.raises(ValueError):
        build_substitutable(emb, 0.0)


def test_expansion_example():
    final = expand_relations({(A, B): 0.8}, {(A, C)})
    for pair in [(A, B), (B, A), (C, B), (B, C)]:
        assert final[pair] == 0.8


def test_expansion_keeps_maximum_and_drops_self_pairs():
    final = expand_relations({(A, B): 0.6, (C, B): 0.9}, {(A, C), (A, B)})
    assert final[(B, C)] == final[(C, B)] == 0.9
    assert all(i != j for i, j in final)


# --- Oracle : lecture littérale de l'algorithme sur de petits corpus ---

def _oracle(sequences, items, emb, table, w, theta_f, theta_c, theta_s):
    freq = {}
    for seq in sequences:
        for p in range(len(seq)):
            for q in range(p + 1, len(seq)):
                if q - p < w:
                    freq[(seq[p], seq[q])] = freq.get((seq[p], seq[q]), 0) + 1
    r0 = [pair for pair, f in freq.items() if f >= theta_f and pair[0] != pair[1]]
    rc = {}
    for i, j in r0:
        s = table[(items[i].item_id, items[j].item_id)]
        if s is not None and s >= theta_c:
            rc[(i, j)] = s

    def cos(u, v):
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        return 0.0 if nu == 0 or nv == 0 else float(u @ v / (nu * nv))

    rs = {(i, k) for i, k in combinations(range(len(items)), 2) if cos(emb[i], emb[k]) >= theta_s}

    out = {}

    def add(i, j, weight):
        if i != j:
            out[(i, j)] = max(out.get((i, j), -1.0), weight)

    for (i, j), weight in rc.items():
        add(i, j, weight)
        for a, b in rs:
            if a == i:
                add(b, j, weight)
            elif b == i:
                add(a, j, weight)
    for (i, j), weight in list(out.items()):
        add(j, i, weight)
    return out


@pytest.mark.parametrize("seed", range(120))
def test_mine_relations_matches_bruteforce_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    items = _items(n)
    sequences = [rng.integers(0, n, size=int(rng.integers(1, 9))).tolist() for _ in range(int(rng.integers(1, 6)))]
    prototypes = rng.normal(size=(3, 4))
    emb = prototypes[rng.integers(0, 3, size=n)] + 0.2 * rng.normal(size=(n, 4))
    if n > 2:
        emb[rng.integers(n)] = 0.0
    table = {(a.item_id, b.item_id): (None if rng.random() < 0.1 else float(np.round(rng.random(), 3)))
             for a in items for b in items}
    w, theta_f = int(rng.integers(2, 4)), int(rng.integers(1, 3))
    theta_c, theta_s = float(rng.choice([0.3, 0.5, 0.7])), float(rng.choice([0.8, 0.85, 0.95]))

    expected = _oracle(sequences, items, emb, table, w, theta_f, theta_c, theta_s)
    for full_scan in (True, False):
        relations = mine_relations(sequences, items, emb, TableScorer(table), window=w, theta_f=theta_f,
                                   theta_c=theta_c, theta_s=theta_s, full_scan=full_scan)
        assert relations.comp == expected
        for (i, j), weight in relations.comp.items():
            assert relations.comp[(j, i)] == weight
            assert weight >= theta_c and i != j


@pytest.mark.parametrize("seed", range(10))
def test_thresholds_are_monotone(seed):
    rng = np.random.default_rng(seed)
    n = 8
    items = _items(n)
    sequences = [rng.integers(0, n, size=8).tolist() for _ in range(5)]
    emb = rng.normal(size=(n, 3))
    table = {(a.item_id, b.item_id): float(rng.random()) for a in items for b in items}

    def mine(theta_f, theta_c):
        return mine_relations(sequences, items, emb, TableScorer(table), theta_f=theta_f, theta_c=theta_c)

    assert set(mine(2, 0.6).comp) <= set(mine(2, 0.3).comp)
    assert mine(3, 0.5).stats["candidates"] <= mine(2, 0.5).stats["candidates"]


def test_mine_relations_without_substitutes_is_symmetrized_candidates():
    items = [Item("a", 0, categories=["x", "bundle-1"]), Item("b", 1, categories=["y", "bundle-1"]),
             Item("c", 2, categories=["z", "bundle-2"])]
    emb = np.eye(3)
    relations = mine_relations([[0, 1, 2], [0, 1, 2]], items, emb, MockScorer())
    assert relations.comp == {(0, 1): 0.9, (1, 0): 0.9}
    assert relations.subst == set()
    assert relations.stats["candidates"] == 3


def test_relations_file_round_trip(tmp_path):
    relations = RelationSet(comp={(0, 1): 0.9, (1, 0): 0.9})
    path = str(tmp_path / "relations.jsonl")
    write_relations(path, relations, ["a", "b"])
    lines = [json.loads(line) for line in open(path, encoding="utf-8")]
    assert lines == [{"i": "a", "j": "b", "w": 0.9}, {"i": "b", "j": "a", "w": 0.9}]
    assert read_relations(path, ["a", "b", "c"]).comp == relations.comp
    assert read_relations(path, ["a"]).comp == {}
