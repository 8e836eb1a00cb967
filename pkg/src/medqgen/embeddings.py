"""Word embeddings: table container, file format, skip-gram pretraining.

The trainer is plain skip-gram with negative sampling over the material
corpus; vectors for the reserved symbols stay at their init (the corpus
never contains them). Everything is seeded and single-threaded, so the
same seed reproduces the same table bit for bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import MaterialCorpus, Vocabulary
from .errors import DataError
from .nn.layers import INIT_SCALE


class EmbeddingTable:
    def __init__(self, vocab: Vocabulary, matrix: np.ndarray):
        if matrix.shape[0] != len(vocab):
            raise DataError(f"embedding rows {matrix.shape[0]} != vocab size {len(vocab)}")
        self.vocab = vocab
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if not np.isfinite(self.matrix).all():
            raise DataError("non-finite embedding values")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.id(token)]

    def vectors(self, tokens) -> np.ndarray:
        return self.matrix[self.vocab.encode(tokens)]

    def mean_vector(self, tokens) -> np.ndarray:
        """Mean of the tokens' vectors; the answer embedding uses this."""
        return self.vectors(tokens).mean(axis=0)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.matrix.shape[0]} {self.matrix.shape[1]}\n")
            for i, token in enumerate(self.vocab.tokens()):
                values = " ".join(repr(float(v)) for v in self.matrix[i])
                fh.write(f"{token} {values}\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        path = Path(path)
        if not path.exists():
            raise DataError(f"embedding file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise DataError(f"{path}: expected 'count dim' header")
            count, dim = int(header[0]), int(header[1])
            tokens, rows = [], []
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise DataError(f"{path}: row for {parts[0]!r} has wrong width")
                tokens.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
        if len(tokens) != count:
            raise DataError(f"{path}: header says {count} rows, found {len(tokens)}")
        from .corpus import RESERVED
        if tuple(tokens[:len(RESERVED)]) != RESERVED:
            raise DataError(f"{path}: reserved tokens missing or reordered")
        vocab = Vocabulary(tokens[len(RESERVED):])
        return cls(vocab, np.array(rows))


def train_embeddings(corpus: MaterialCorpus, dim: int, window: int, epochs: int,
                     seed: int, negatives: int = 5, lr: float = 0.025,
                     extra_tokens=()) -> EmbeddingTable:
    """Skip-gram with negative sampling; deterministic per seed.

    extra_tokens are added to the vocabulary (QA-side words that never
    occur in the materials); their rows keep the random init, which is
    what maps genuinely unseen tokens near nothing in particular.
    """
    if len(corpus) == 0:
        raise DataError("cannot train embeddings on an empty corpus")
    vocab = Vocabulary()
    for doc in corpus.documents:
        for t in doc:
            vocab.add(t)
    for t in extra_tokens:
        vocab.add(t)

    rng = np.random.default_rng(seed)
    n = len(vocab)
    vec_in = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n, dim))
    vec_out = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n, dim))

    counts = np.zeros(n)
    docs_ids = []
    for doc in corpus.documents:
        ids = vocab.encode(doc)
        docs_ids.append(ids)
        for i in ids:
            counts[i] += 1
    # unigram^0.75 negative-sampling distribution over observed tokens
    weights = counts ** 0.75
    total = weights.sum()
    if total == 0:
        raise DataError("material corpus contains no tokens")
    cumulative = np.cumsum(weights / total)

    for _epoch in range(epochs):
        for ids in docs_ids:
            length = len(ids)
            for pos, center in enumerate(ids):
                lo = max(0, pos - window)
                hi = min(length, pos + window + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    target = ids[ctx_pos]
                    neg = np.searchsorted(cumulative, rng.random(negatives))
                    idx = np.concatenate(([target], neg))
                    v = vec_in[center]
                    outs = vec_out[idx]
                    scores = 1.0 / (1.0 + np.exp(-outs @ v))
                    # labels: 1 for the true context, 0 for negatives
                    errs = scores.copy()
                    errs[0] -= 1.0
                    grad_v = errs @ outs
                    np.subtract.at(vec_out, idx, lr * np.outer(errs, v))
                    vec_in[center] -= lr * grad_v

    return EmbeddingTable(vocab, vec_in)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; defined as 0 when either vector is all-zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
