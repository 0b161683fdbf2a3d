import random

import pytest
from hypothesis import given, strategies as st

from suggestaudit.exceptions import ConfigError, MissingInputError
from suggestaudit.preprocess import (STAGES, AuditCorpus, ProcessedSuggestion, build_corpus, drop_ambiguous_roots,
                                     format_stage_report, load_stopwords, process_tree, read_corpus,
                                     remove_stopwords, stage_report, strip_root, write_corpus)
from suggestaudit.source import ReplaySource
from suggestaudit.tree import RootTerm, build_tree, prune

BAERBOCK = RootTerm("annalena baerbock", ("baerbok",))


def test_strip_root_examples():
    assert strip_root("annalena baerbock address private potsdam", BAERBOCK) == "address private potsdam"
    assert strip_root("baerbok age", BAERBOCK) == "age"
    assert strip_root("Annalena BAERBOCK", BAERBOCK) == ""
    # whole words only
    assert strip_root("annalenas baerbockfan", BAERBOCK) == "annalenas baerbockfan"
    with pytest.raises(ValueError):
        strip_root("  ", BAERBOCK)


def test_remove_stopwords():
    assert remove_stopwords("wie alt ist mann", ["wie", "ist"]) == ["alt", "mann"]
    assert remove_stopwords("Der Mann", {"der"}) == ["mann"]
    with pytest.raises(ConfigError):
        remove_stopwords("x", None)


def test_load_stopwords(tmp_path):
    f = tmp_path / "stop.txt"
    f.write_text("Der\n\ndie\n# note\n", encoding="utf-8")
    words = load_stopwords(f)
    assert "der" in words and "die" in words


@given(st.lists(st.sampled_from(["annalena", "baerbock", "baerbok", "age", "kinder", "mann", "x1"]), min_size=1))
def test_strip_is_idempotent(words):
    q = " ".join(words)
    once = strip_root(q, BAERBOCK)
    if once:
        assert strip_root(once, BAERBOCK) == once
    assert not set(once.split()) & {"annalena", "baerbock", "baerbok"}


def _naive(queries, root_tokens, stop):
    out = set()
    for q in queries:
        toks = [t for t in q.lower().split() if t not in root_tokens and t not in stop]
        if toks:
            out.add(" ".join(t for t in q.lower().split() if t not in root_tokens))
    return out


def test_random_corpus_matches_naive_oracle():
    rng = random.Random(3)
    words = [f"w{i}" for i in range(40)] + ["der", "die", "das"]
    stop = {"der", "die", "das"}
    graph = {}
    queries = []
    for i in range(1000):
        toks = rng.sample(words, rng.randint(1, 3))
        if rng.random() < 0.7:
            toks.insert(rng.randint(0, len(toks)), rng.choice(["Baerbock", "annalena", "baerbok"]))
        queries.append(" ".join(toks))
    graph["annalena baerbock"] = []
    # chain the queries under seeds so every query becomes a node
    for j in range(0, 1000, 10):
        graph[f"annalena baerbock {chr(97 + j // 10 % 26)}{j}"] = queries[j:j + 10]
    alphabet = [f"{chr(97 + j // 10 % 26)}{j}" for j in range(0, 1000, 10)]
    tree = build_tree(BAERBOCK, ReplaySource(graph), max_depth=2, alphabet=alphabet)
    got = set(process_tree(tree, stop, include_pruned=True))
    seen = [n.query for n in tree.suggestion_nodes(include_pruned=True)]
    assert got == _naive(seen, {"annalena", "baerbock", "baerbok"}, stop)


def _tree(name, graph, variants=()):
    rt = RootTerm(name, variants, metadata_key=name)
    return build_tree(rt, ReplaySource(graph), max_depth=3, alphabet=["a"])


def _trees():
    t1 = _tree("anna x", {"anna x": ["anna x alter", "anna x mann", "e-auto"], "anna x a": ["anna x alter"],
                          "e-auto": ["e-auto preis"]})
    t2 = _tree("bernd y", {"bernd y": ["bernd y alter", "bernd y partei"]})
    t3 = _tree("carl z", {"carl z": ["carl z verein", "carl z alter"]})
    return [prune(t)[0] for t in (t1, t2, t3)]


def test_build_corpus_stage_counts():
    corpus = build_corpus(_trees(), ["der"])
    # crawl includes pruned "e-auto" and "e-auto preis"; min_depth kept
    assert corpus.stage_counts == [("RAI crawl", 6), ("Pruning", 4)]
    assert corpus.per_root["anna x"]["alter"].min_depth == 1
    assert corpus.per_root["anna x"]["alter"].original == "anna x alter"
    dropped = drop_ambiguous_roots(corpus, ["carl z", "nobody"])
    assert dropped.dropped_roots == ["carl z"]
    # "alter" is still shared with other roots, so only "verein" disappears
    assert dropped.stage_counts[-1] == ("removing ambiguous root term", 3)
    assert corpus.unique_count() == 4  # input unchanged


def test_drop_root_with_unique_suggestions():
    trees = _trees()
    corpus = build_corpus(trees, [])
    k = len(set(corpus.per_root["carl z"]) - set(corpus.per_root["anna x"]) - set(corpus.per_root["bernd y"]))
    after = drop_ambiguous_roots(corpus, ["carl z"])
    assert corpus.unique_count() - after.unique_count() == k == 1


def test_empty_after_stripping_excluded():
    t = _tree("anna x", {"anna x": ["anna x", "x anna", "anna x der", "anna x ok"]})
    corpus = build_corpus([t], ["der"])
    assert set(corpus.per_root["anna x"]) == {"ok"}


def test_stage_report_order_and_zero_fill():
    corpus = build_corpus(_trees(), [])
    rows = stage_report(corpus)
    assert [r[0] for r in rows] == list(STAGES)
    assert rows[2][1] == 0 and rows[3][1] == 0
    text = format_stage_report(rows)
    assert "RAI crawl" in text and text.count("\n") == 6


def test_corpus_roundtrip(tmp_path):
    corpus = drop_ambiguous_roots(build_corpus(_trees(), []), ["bernd y"])
    path = write_corpus(corpus, tmp_path / "corpus.jsonl")
    back = read_corpus(path)
    assert back.per_root == corpus.per_root
    assert back.stage_counts == corpus.stage_counts
    assert back.dropped_roots == ["bernd y"]
    with pytest.raises(MissingInputError):
        read_corpus(tmp_path / "nope.jsonl")


def test_processed_suggestion_record_roundtrip():
    ps = ProcessedSuggestion("a b c", "b c", ("b", "c"), "a", 2)
    assert ProcessedSuggestion.from_record(ps.to_record()) == ps
    assert ProcessedSuggestion("a", "", (), "a", 1).empty


def test_duplicate_root_rejected():
    t = _trees()[0]
    with pytest.raises(ConfigError):
        build_corpus([t, t], [])


def test_filter_copies():
    corpus = AuditCorpus(per_root={"r": {"a": ProcessedSuggestion("r a", "a", ("a",), "r", 1)}})
    assert corpus.filter(lambda ps: False).unique_count() == 0
    assert corpus.unique_count() == 1
