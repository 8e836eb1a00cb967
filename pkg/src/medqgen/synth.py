"""Deterministic synthetic QA fixture generator.

Stands in for the proprietary exam data so every test is self-contained.
The construction plants controllable ground truth:

* each answer owns a set of key phrases; answer documents in the material
  corpus contain the answer token plus (at the configured co-occurrence
  rate) those key phrases as contiguous runs, so the detector has a
  recoverable signal;
* distractor phrases appear only in background documents (no answer
  tokens), giving them real embeddings but zero answer co-occurrence;
* every entity token's type is a pure function of the token, so the type
  tagger is learnable by construction;
* questions are built from per-answer phrase templates, giving the
  generator a learnable phrase grammar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EntityDictionary, MaterialCorpus, Phrase, QAPair
from .errors import DataError


@dataclass
class SynthSpec:
    n_answers: int = 10
    pairs_per_answer: int = 20
    phrases_per_question: int = 4
    key_phrases_per_answer: int = 3
    key_in_question: int = 2
    n_types: int = 5
    distractor_vocab: int = 24
    filler_vocab: int = 20
    docs_per_answer: int = 4
    background_docs: int = 20
    doc_filler_tokens: int = 10
    key_cooccur: float = 1.0
    distractor_cooccur: float = 0.0

    def validate(self):
        if self.n_answers < 1:
            raise DataError("synth spec needs at least one answer")
        if self.key_in_question > self.key_phrases_per_answer:
            raise DataError("key_in_question exceeds key_phrases_per_answer")
        if self.key_in_question > self.phrases_per_question:
            raise DataError("key_in_question exceeds phrases_per_question")


# phrase shapes cycled over key-phrase index; X is the entity token
_KEY_TEMPLATES = (
    lambda x: (x, "present"),
    lambda x: (x, "level", "high"),
    lambda x: ("mild", x),
)
_DISTRACTOR_TEMPLATES = (
    lambda x: (x, "noted"),
    lambda x: ("history", "of", x),
)


def _answer_tokens(i: int) -> tuple[str, ...]:
    return (f"cond{i}",)


def key_phrase_tokens(answer_idx: int, j: int) -> tuple[str, ...]:
    return _KEY_TEMPLATES[j % len(_KEY_TEMPLATES)](f"sym{answer_idx}x{j}")


def distractor_phrase_tokens(m: int) -> tuple[str, ...]:
    return _DISTRACTOR_TEMPLATES[m % len(_DISTRACTOR_TEMPLATES)](f"misc{m}")


def synth_corpus(spec: SynthSpec, seed: int):
    """Returns (pairs, materials, dictionary, key_mask).

    key_mask[i] is a per-phrase boolean tuple for pairs[i]: True where the
    phrase is one of its answer's planted key phrases.
    """
    spec.validate()
    rng = np.random.default_rng(seed)

    dictionary = EntityDictionary()
    for i in range(spec.n_answers):
        for j in range(spec.key_phrases_per_answer):
            token = f"sym{i}x{j}"
            # type tracks the key-phrase slot, so both the token identity and
            # its template context carry the type signal
            dictionary.add((token,), f"TYPE{j % spec.n_types}")

    fillers = [f"fill{m}" for m in range(spec.filler_vocab)]

    pairs = []
    key_mask = []
    for i in range(spec.n_answers):
        answer = _answer_tokens(i)
        for p in range(spec.pairs_per_answer):
            keys = rng.choice(spec.key_phrases_per_answer, size=spec.key_in_question,
                              replace=False)
            phrases = [(key_phrase_tokens(i, int(j)), True) for j in sorted(keys)]
            n_dist = spec.phrases_per_question - spec.key_in_question
            for m in rng.integers(0, spec.distractor_vocab, size=n_dist):
                phrases.append((distractor_phrase_tokens(int(m)), False))
            order = rng.permutation(len(phrases))
            phrases = [phrases[k] for k in order]
            pairs.append(QAPair(
                id=f"a{i}p{p}",
                answer=answer,
                phrases=tuple(Phrase(tokens) for tokens, _ in phrases),
            ))
            key_mask.append(tuple(flag for _, flag in phrases))

    documents = []
    for i in range(spec.n_answers):
        for _ in range(spec.docs_per_answer):
            doc = list(_answer_tokens(i))
            for j in range(spec.key_phrases_per_answer):
                if rng.random() < spec.key_cooccur:
                    doc.extend(key_phrase_tokens(i, j))
                    doc.extend(rng.choice(fillers, size=2))
            for m in range(spec.distractor_vocab):
                if rng.random() < spec.distractor_cooccur:
                    doc.extend(distractor_phrase_tokens(m))
            doc.extend(rng.choice(fillers, size=spec.doc_filler_tokens))
            documents.append(tuple(doc))
    for _ in range(spec.background_docs):
        doc = []
        for m in rng.integers(0, spec.distractor_vocab, size=4):
            doc.extend(distractor_phrase_tokens(int(m)))
            doc.extend(rng.choice(fillers, size=2))
        documents.append(tuple(doc))

    return pairs, MaterialCorpus(documents), dictionary, key_mask
