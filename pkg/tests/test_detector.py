"""Retrieval, hierarchical pooling, significance scoring, replacement sampling."""

import math
from collections import Counter

import numpy as np
import pytest

from medqgen.corpus import MaterialCorpus, Phrase, QAPair, Vocabulary
from medqgen.detector import (BM25Index, RetrievalResult, SignificanceProfile,
                              doc_phrase_splits, hier_pool, minmax_normalize,
                              retrieve, sample_mask, score_phrases)
from medqgen.embeddings import EmbeddingTable, cosine
from medqgen.errors import DataError

RNG = np.random.default_rng(23)


def make_table(tokens, dim=6, seed=0):
    vocab = Vocabulary(tokens)
    rng = np.random.default_rng(seed)
    return EmbeddingTable(vocab, rng.normal(size=(len(vocab), dim)))


def bm25_oracle(docs, query, k1=1.2, b=0.75):
    """Naive rescan of the BM25 formula, no shared index state."""
    n = len(docs)
    avg = sum(len(d) for d in docs) / n
    dfs = Counter()
    for d in docs:
        dfs.update(set(d))
    scores = []
    for d in docs:
        tf = Counter(d)
        s = 0.0
        for t in query:
            if t not in tf:
                continue
            idf = math.log(1.0 + (n - dfs[t] + 0.5) / (dfs[t] + 0.5))
            s += idf * tf[t] * (k1 + 1.0) / (tf[t] + k1 * (1 - b + b * len(d) / avg))
        scores.append(s)
    return scores


def test_bm25_matches_bruteforce_oracle():
    docs = [tuple(RNG.choice([f"t{i}" for i in range(15)], size=RNG.integers(5, 20)))
            for _ in range(12)]
    index = BM25Index(MaterialCorpus(list(docs)))
    query = ["t1", "t3", "t3", "t7", "zzz"]
    got = index.score(query)
    expected = bm25_oracle(docs, query)
    assert np.max(np.abs(got - np.array(expected))) < 1e-12


def test_retrieve_single_answer_bearing_doc():
    corpus = MaterialCorpus([("the", "answer", "here", "x")])
    pair = QAPair("p", ("answer",), (Phrase(("x",)),))
    result = retrieve(pair, BM25Index(corpus), m=5)
    assert result.texts == [corpus.documents[0]]


def test_retrieve_empty_when_answer_absent():
    corpus = MaterialCorpus([("nothing", "relevant"), ("still", "no")])
    pair = QAPair("p", ("answer",), (Phrase(("x",)),))
    assert len(retrieve(pair, BM25Index(corpus), m=5)) == 0


def test_retrieve_requires_all_answer_tokens():
    corpus = MaterialCorpus([("japanese", "food"), ("japanese", "encephalitis", "doc")])
    pair = QAPair("p", ("japanese", "encephalitis"), (Phrase(("x",)),))
    result = retrieve(pair, BM25Index(corpus), m=5)
    assert result.texts == [corpus.documents[1]]


def test_retrieve_planted_overlap_ranks_first():
    rng = np.random.default_rng(4)
    vocab = [f"v{i}" for i in range(30)]
    docs = [tuple(["ans"] + list(rng.choice(vocab, size=10))) for _ in range(9)]
    planted = ("ans", "stiff", "neck", "fever", "pap", "test")
    docs.append(planted)
    pair = QAPair("p", ("ans",),
                  (Phrase(("stiff", "neck")), Phrase(("fever",)), Phrase(("pap", "test"))))
    index = BM25Index(MaterialCorpus(list(docs)))
    result = retrieve(pair, index, m=3)
    assert result.texts[0] == planted
    # full ordering agrees with the brute-force oracle on the filtered set
    query = list(pair.answer) + pair.question_tokens
    oracle = bm25_oracle(docs, query)
    expected_order = sorted(range(len(docs)), key=lambda i: (-oracle[i], i))[:3]
    assert result.texts == [docs[i] for i in expected_order]


def test_hier_pool_single_token():
    table = make_table(["a", "b"])
    assert np.array_equal(hier_pool(["a"], table, window=3), table.vector("a"))


def test_hier_pool_identical_tokens_idempotent():
    table = make_table(["a"])
    out = hier_pool(["a", "a", "a", "a"], table, window=3)
    assert np.allclose(out, table.vector("a"))


def test_hier_pool_matches_two_loop_oracle():
    table = make_table([f"w{i}" for i in range(4)], dim=5, seed=8)
    tokens = ["w0", "w1", "w2", "w3"]
    window = 3
    vecs = [table.vector(t) for t in tokens]
    windows = []
    for i in range(len(tokens) - window + 1):
        acc = np.zeros(5)
        for j in range(i, i + window):
            acc += vecs[j]
        windows.append(acc / window)
    expected = windows[0].copy()
    for w in windows[1:]:
        expected = np.maximum(expected, w)
    assert np.allclose(hier_pool(tokens, table, window), expected, atol=1e-12)


def test_hier_pool_empty_rejected():
    with pytest.raises(DataError):
        hier_pool([], make_table(["a"]), 3)


def test_hier_pool_palindrome_reversal_invariant():
    table = make_table([f"w{i}" for i in range(3)], dim=4, seed=9)
    tokens = ["w0", "w1", "w2", "w1", "w0"]
    fwd = hier_pool(tokens, table, window=3)
    rev = hier_pool(tokens[::-1], table, window=3)
    assert np.array_equal(fwd, rev)


def test_doc_phrase_splits_cover_tail():
    doc = [f"t{i}" for i in range(13)]
    splits = doc_phrase_splits(doc, length=8, stride=4)
    assert splits[0] == doc[0:8]
    assert splits[-1][-1] == "t12"
    assert all(len(s) == 8 for s in splits)
    assert doc_phrase_splits(["a", "b"], 8, 4) == [["a", "b"]]


def test_minmax_examples():
    assert minmax_normalize([0.2, 0.8]) == [0.0, 1.0]
    assert minmax_normalize([0.4, 0.4, 0.4]) == [0.5, 0.5, 0.5]
    raw = [0.1, 0.5, 0.3]
    norm = minmax_normalize(raw)
    assert sorted(range(3), key=lambda i: raw[i]) == sorted(range(3), key=lambda i: norm[i])


def test_identical_phrase_scores_one():
    # the phrase appears verbatim as a full split of every retrieved doc
    table = make_table(["stiff", "neck", "other", "ans"], dim=6, seed=2)
    phrase = ("stiff", "neck")
    result = RetrievalResult([phrase, phrase])
    pair = QAPair("p", ("ans",), (Phrase(phrase), Phrase(("other",))))
    profile = score_phrases(pair, result, table, window=3)
    assert profile.raw[0] == pytest.approx(1.0)
    assert profile.normalized[0] == 1.0


def test_empty_retrieval_uniform_profile():
    table = make_table(["a"])
    pair = QAPair("p", ("ans",), (Phrase(("a",)), Phrase(("a",))))
    profile = score_phrases(pair, RetrievalResult([]), table, window=3)
    assert profile.normalized == [0.5, 0.5]


def test_sample_mask_extremes():
    profile = SignificanceProfile(raw=[1.0, 0.0], normalized=[1.0, 0.0])
    rng = np.random.default_rng(0)
    for _ in range(200):
        mask = sample_mask(profile, rng)
        assert not mask[0]  # s=1 never replaced
        assert mask[1]      # s=0 replaced (ties have measure zero)


def test_sample_mask_monte_carlo_rate():
    profile = SignificanceProfile(raw=[0.3], normalized=[0.3])
    rng = np.random.default_rng(11)
    replaced = sum(sample_mask(profile, rng)[0] for _ in range(10_000))
    assert abs(replaced / 10_000 - 0.7) <= 0.015


def test_expected_retention_equals_score():
    # E[kept] = s_k for several scores at once
    profile = SignificanceProfile(raw=[0.1, 0.5, 0.9], normalized=[0.1, 0.5, 0.9])
    rng = np.random.default_rng(12)
    kept = np.zeros(3)
    n = 10_000
    for _ in range(n):
        kept += ~sample_mask(profile, rng)
    for k, s in zip(kept / n, [0.1, 0.5, 0.9]):
        assert abs(k - s) <= 0.015
