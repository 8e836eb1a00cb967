"""Unsupervised key-phrase significance scoring.

For each QA pair: retrieve answer-bearing documents with BM25, embed
phrases by hierarchical pooling (window-average then elementwise max),
take each phrase's best cosine match per document, average across
documents, and Min-Max normalize within the question. The normalized
score s_k is the probability the phrase is kept during generation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import MaterialCorpus, QAPair
from .embeddings import EmbeddingTable, cosine
from .errors import DataError

UNIFORM_SCORE = 0.5  # degenerate cases: empty retrieval, all-equal raws


class BM25Index:
    """In-process Okapi BM25 over tokenized documents.

    idf = log(1 + (N - df + 0.5)/(df + 0.5)), always positive.
    """

    def __init__(self, corpus: MaterialCorpus, k1: float = 1.2, b: float = 0.75):
        if len(corpus) == 0:
            raise DataError("cannot index an empty material corpus")
        self.documents = corpus.documents
        self.k1 = k1
        self.b = b
        self.doc_terms = [Counter(doc) for doc in self.documents]
        self.doc_lens = np.array([len(doc) for doc in self.documents], dtype=np.float64)
        self.avg_len = float(self.doc_lens.mean())
        n = len(self.documents)
        df = Counter()
        for terms in self.doc_terms:
            df.update(terms.keys())
        self.idf = {t: math.log(1.0 + (n - c + 0.5) / (c + 0.5)) for t, c in df.items()}

    def score(self, query) -> np.ndarray:
        scores = np.zeros(len(self.documents))
        for i, terms in enumerate(self.doc_terms):
            norm = self.k1 * (1.0 - self.b + self.b * self.doc_lens[i] / self.avg_len)
            s = 0.0
            for t in query:
                f = terms.get(t)
                if not f:
                    continue
                s += self.idf[t] * f * (self.k1 + 1.0) / (f + norm)
            scores[i] = s
        return scores


@dataclass
class RetrievalResult:
    texts: list[tuple[str, ...]]

    def __len__(self):
        return len(self.texts)


@dataclass
class SignificanceProfile:
    raw: list[float]
    normalized: list[float]

    def __len__(self):
        return len(self.normalized)


def retrieve(pair: QAPair, index: BM25Index, m: int) -> RetrievalResult:
    """Top-m answer-bearing documents by BM25 over the whole QA pair.

    Documents must contain every answer token; fewer than m may survive
    the filter. Ties break toward the lower document index.
    """
    answer = set(pair.answer)
    candidates = [i for i, doc in enumerate(index.documents) if answer.issubset(doc)]
    if not candidates:
        return RetrievalResult([])
    query = list(pair.answer) + pair.question_tokens
    scores = index.score(query)
    ranked = sorted(candidates, key=lambda i: (-scores[i], i))
    return RetrievalResult([index.documents[i] for i in ranked[:m]])


def hier_pool(tokens, table: EmbeddingTable, window: int) -> np.ndarray:
    """Sliding-window average pooling, then elementwise max over windows."""
    tokens = list(tokens)
    if not tokens:
        raise DataError("hier_pool on an empty token sequence")
    vecs = table.vectors(tokens)
    k = min(window, len(tokens))
    pooled = [vecs[i:i + k].mean(axis=0) for i in range(len(tokens) - k + 1)]
    return np.max(pooled, axis=0)


def doc_phrase_splits(doc, length: int = 8, stride: int = 4):
    """Fixed-stride token windows standing in for document phrases.

    The tail is always covered: if the last strided window stops short of
    the end, one extra window ending at the document's final token is
    appended.
    """
    doc = list(doc)
    if len(doc) <= length:
        return [doc]
    starts = list(range(0, len(doc) - length + 1, stride))
    if starts[-1] + length < len(doc):
        starts.append(len(doc) - length)
    return [doc[s:s + length] for s in starts]


def minmax_normalize(raw) -> list[float]:
    """Min-Max within the question; all-equal collapses to 0.5 everywhere."""
    raw = list(raw)
    lo, hi = min(raw), max(raw)
    if hi - lo == 0.0:
        return [UNIFORM_SCORE] * len(raw)
    return [(v - lo) / (hi - lo) for v in raw]


def score_phrases(pair: QAPair, result: RetrievalResult, table: EmbeddingTable,
                  window: int, split_len: int = 8, split_stride: int = 4
                  ) -> SignificanceProfile:
    """Per-phrase mean-of-best-match scores, Min-Max normalized.

    Empty retrieval yields the uniform 0.5 profile.
    """
    n = len(pair.phrases)
    if len(result) == 0:
        return SignificanceProfile(raw=[UNIFORM_SCORE] * n,
                                   normalized=[UNIFORM_SCORE] * n)
    doc_vecs = []
    for doc in result.texts:
        splits = doc_phrase_splits(doc, split_len, split_stride)
        doc_vecs.append([hier_pool(s, table, window) for s in splits])
    raw = []
    for phrase in pair.phrases:
        pv = hier_pool(phrase.tokens, table, window)
        best_per_doc = [max(cosine(pv, dv) for dv in vecs) for vecs in doc_vecs]
        raw.append(float(np.mean(best_per_doc)))
    return SignificanceProfile(raw=raw, normalized=minmax_normalize(raw))


def sample_mask(profile: SignificanceProfile, rng: np.random.Generator) -> np.ndarray:
    """True where the phrase is replaced: draw p' ~ U[0,1), replace iff p' > s_k."""
    draws = rng.random(len(profile.normalized))
    return draws > np.asarray(profile.normalized)


def score_corpus(pairs, corpus: MaterialCorpus, table: EmbeddingTable, m: int,
                 window: int, split_len: int = 8, split_stride: int = 4,
                 k1: float = 1.2, b: float = 0.75) -> list[SignificanceProfile]:
    """Significance profiles for a batch of pairs over one shared index."""
    index = BM25Index(corpus, k1=k1, b=b)
    profiles = []
    for pair in pairs:
        result = retrieve(pair, index, m)
        profiles.append(score_phrases(pair, result, table, window,
                                      split_len, split_stride))
    return profiles
