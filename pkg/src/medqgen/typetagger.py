"""Dictionary-supervised word-type tagger (Bi-LSTM-CRF).

Labels are projected from the entity dictionary: tokens inside a matched
span take the span's type, everything else the reserved "other" type,
which participates in the CRF like any other tag. After pretraining the
tagger is frozen; its per-word hidden states, max-pooled over a phrase,
provide the contextualized phrase-type vectors the generator consumes.
"""

from __future__ import annotations

import numpy as np

from .corpus import EntityDictionary, QAPair
from .embeddings import EmbeddingTable
from .errors import DataError
from .nn import autograd as ag
from .nn.autograd import Tensor, no_grad
from .nn.crf import crf_nll, crf_viterbi
from .nn.layers import Affine, BiLSTMEncoder, ParamSet
from .nn.optim import Adam


def project_labels(pair: QAPair, dictionary: EntityDictionary) -> list[int]:
    """Per-word type ids over the concatenated question."""
    return dictionary.token_types(pair.question_tokens)


class TypeTagger:
    def __init__(self, table: EmbeddingTable, n_tags: int, hidden: int, seed: int = 0):
        self.table = table
        self.n_tags = n_tags
        self.hidden = hidden
        self.params = ParamSet()
        rng = np.random.default_rng(seed)
        self.encoder = BiLSTMEncoder(self.params, "bilstm", table.dim, hidden, rng)
        self.emission = Affine(self.params, "emission", 2 * hidden, n_tags, rng)
        self.transitions = self.params.add("transitions", (n_tags, n_tags), rng)

    @property
    def type_vector_dim(self) -> int:
        return 2 * self.hidden

    def _inputs(self, tokens) -> list[Tensor]:
        return [Tensor(v) for v in self.table.vectors(tokens)]

    def _hidden_states(self, tokens) -> list[Tensor]:
        return self.encoder(self._inputs(tokens))

    def emissions(self, tokens) -> Tensor:
        states = self._hidden_states(tokens)
        return ag.stack([self.emission(h) for h in states])

    def nll(self, tokens, tags) -> Tensor:
        return crf_nll(self.emissions(tokens), self.transitions, tags)

    def predict(self, tokens) -> list[int]:
        with no_grad():
            em = self.emissions(tokens).data
        return crf_viterbi(em, self.transitions.data)

    def hidden_matrix(self, tokens) -> np.ndarray:
        """(L, 2*hidden) contextual states, gradient-free."""
        with no_grad():
            states = self._hidden_states(tokens)
        return np.stack([h.data for h in states])

    def type_vectors(self, pair: QAPair) -> list[np.ndarray]:
        """One vector per phrase: elementwise max over the phrase's words.

        The Bi-LSTM runs over the whole question so the vectors are
        contextualized, then each phrase's span is pooled.
        """
        hidden = self.hidden_matrix(pair.question_tokens)
        out = []
        for k in range(len(pair.phrases)):
            start, end = pair.phrase_span(k)
            out.append(hidden[start:end].max(axis=0))
        return out

    def type_vector(self, pair: QAPair, k: int) -> np.ndarray:
        return self.type_vectors(pair)[k]

    def state_dict(self):
        return self.params.state_dict()

    def meta(self):
        return {"n_tags": self.n_tags, "hidden": self.hidden}

    @classmethod
    def from_state(cls, table: EmbeddingTable, state, meta) -> "TypeTagger":
        tagger = cls(table, int(meta["n_tags"]), int(meta["hidden"]))
        tagger.params.load_state_dict(state)
        return tagger


def token_accuracy(tagger: TypeTagger, pairs, dictionary: EntityDictionary) -> float:
    correct = total = 0
    for pair in pairs:
        gold = project_labels(pair, dictionary)
        pred = tagger.predict(pair.question_tokens)
        correct += sum(g == p for g, p in zip(gold, pred))
        total += len(gold)
    return correct / total if total else 0.0


def confusion_summary(tagger: TypeTagger, pairs, dictionary: EntityDictionary) -> np.ndarray:
    """counts[gold, predicted] over all tokens."""
    counts = np.zeros((tagger.n_tags, tagger.n_tags), dtype=np.int64)
    for pair in pairs:
        gold = project_labels(pair, dictionary)
        pred = tagger.predict(pair.question_tokens)
        for g, p in zip(gold, pred):
            counts[g, p] += 1
    return counts


def split_heldout(pairs, every: int = 10):
    """Deterministic split: every N-th pair is held out."""
    train = [p for i, p in enumerate(pairs) if i % every != every - 1]
    held = [p for i, p in enumerate(pairs) if i % every == every - 1]
    return train, held


def train_tagger(pairs, dictionary: EntityDictionary, table: EmbeddingTable,
                 hidden: int = 25, epochs: int = 20, batch_size: int = 30,
                 lr: float = 0.001, clip_norm: float = 5.0, seed: int = 0,
                 target_accuracy: float | None = None, heldout_every: int = 10):
    """Minimize CRF NLL with Adam; returns (tagger, history).

    history rows: {"epoch", "loss", "heldout_accuracy"}. Training stops
    early once target_accuracy is reached on the held-out split.
    """
    if not pairs:
        raise DataError("cannot train the type tagger on an empty pair list")
    train, held = split_heldout(pairs, heldout_every)
    if not held:
        train, held = pairs, pairs
    tagger = TypeTagger(table, dictionary.n_tags, hidden, seed=seed)
    opt = Adam(tagger.params, lr=lr, clip_norm=clip_norm)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        total_loss = 0.0
        for lo in range(0, len(order), batch_size):
            batch = [train[i] for i in order[lo:lo + batch_size]]
            losses = [tagger.nll(p.question_tokens, project_labels(p, dictionary))
                      for p in batch]
            loss = ag.mul(ag.add_n(losses), 1.0 / len(losses))
            tagger.params.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item() * len(losses)
        accuracy = token_accuracy(tagger, held, dictionary)
        history.append({"epoch": epoch, "loss": total_loss / len(train),
                        "heldout_accuracy": accuracy})
        if target_accuracy is not None and accuracy >= target_accuracy:
            break
    return tagger, history
