"""Data model: QA pairs, tokenization, vocabulary, entity dictionary, materials.

QA pairs keep surface-token strings so file round-trips are lossless;
models map tokens to ids (UNK for out-of-vocabulary) at their boundary.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

UNK = "<unk>"
BOS = "<bos>"
EOP = "<eop>"  # end of phrase, appended to decoder targets
RESERVED = (UNK, BOS, EOP)

OTHER_TYPE = "OTHER"
NULL_ENTITY = "<none>"

# words (incl. unicode letters/digits) or single non-space symbols
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

# phrase boundaries when a question arrives as one string
PHRASE_DELIMITERS = (",", ";", ".", "。", "；", "，")


def tokenize(text: str) -> list[str]:
    """Lowercased word/punctuation segmentation; empty text -> []."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens) -> str:
    return " ".join(tokens)


def split_phrases(text: str, delimiters=PHRASE_DELIMITERS) -> list[list[str]]:
    """Split a raw question string into non-empty tokenized phrases."""
    pattern = "|".join(re.escape(d) for d in delimiters)
    parts = re.split(pattern, text)
    phrases = [tokenize(p) for p in parts]
    return [p for p in phrases if p]


@dataclass(frozen=True)
class Phrase:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise DataError("phrase must contain at least one token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class QAPair:
    id: str
    answer: tuple[str, ...]
    phrases: tuple[Phrase, ...]

    def __post_init__(self):
        if len(self.phrases) < 1:
            raise DataError(f"pair {self.id}: question needs at least one phrase")

    @property
    def question_tokens(self) -> list[str]:
        out = []
        for p in self.phrases:
            out.extend(p.tokens)
        return out

    def phrase_span(self, k: int) -> tuple[int, int]:
        """Token [start, end) of phrase k within the concatenated question."""
        start = sum(len(p) for p in self.phrases[:k])
        return start, start + len(self.phrases[k])


class Vocabulary:
    """token <-> id with reserved symbols first; unknown tokens map to UNK."""

    def __init__(self, tokens=()):
        self._tokens: list[str] = list(RESERVED)
        self._index: dict[str, int] = {t: i for i, t in enumerate(self._tokens)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._tokens.append(token)
            self._index[token] = idx
        return idx

    def id(self, token: str) -> int:
        return self._index.get(token, self._index[UNK])

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self._tokens[i] for i in ids]

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    @property
    def unk_id(self):
        return self._index[UNK]

    @property
    def bos_id(self):
        return self._index[BOS]

    @property
    def eop_id(self):
        return self._index[EOP]

    def tokens(self):
        return list(self._tokens)


@dataclass
class EntityDictionary:
    """surface token sequence -> (entity id, type id), greedy longest-match.

    Entity id 0 is the reserved null entity (phrases without any entity).
    Type ids index ``type_names``; tokens outside matched spans get the
    reserved "other" type, id ``len(type_names)``.
    """

    surfaces: dict[tuple[str, ...], tuple[int, int]] = field(default_factory=dict)
    type_names: list[str] = field(default_factory=list)
    entity_names: list[str] = field(default_factory=lambda: [NULL_ENTITY])

    @property
    def n_types(self) -> int:
        return len(self.type_names)

    @property
    def other_type_id(self) -> int:
        return len(self.type_names)

    @property
    def n_tags(self) -> int:
        return len(self.type_names) + 1

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def max_surface_len(self) -> int:
        return max((len(s) for s in self.surfaces), default=1)

    def add(self, surface: tuple[str, ...], type_name: str) -> int:
        if type_name not in self.type_names:
            self.type_names.append(type_name)
        type_id = self.type_names.index(type_name)
        if surface in self.surfaces:
            return self.surfaces[surface][0]
        entity_id = len(self.entity_names)
        self.entity_names.append(" ".join(surface))
        self.surfaces[surface] = (entity_id, type_id)
        return entity_id

    def tag_entities(self, tokens) -> list[tuple[int, int, int, int]]:
        """Non-overlapping (start, end, entity_id, type_id) spans.

        Greedy left-to-right; at each position the longest matching
        surface wins, so "stiff neck" beats "neck pain" inside
        "stiff neck pain".
        """
        tokens = list(tokens)
        spans = []
        i = 0
        max_len = self.max_surface_len
        while i < len(tokens):
            hit = None
            for width in range(min(max_len, len(tokens) - i), 0, -1):
                key = tuple(tokens[i:i + width])
                if key in self.surfaces:
                    hit = (width, *self.surfaces[key])
                    break
            if hit is None:
                i += 1
            else:
                width, entity_id, type_id = hit
                spans.append((i, i + width, entity_id, type_id))
                i += width
        return spans

    def token_types(self, tokens) -> list[int]:
        """Per-token type ids; tokens outside entity spans get "other"."""
        tokens = list(tokens)
        out = [self.other_type_id] * len(tokens)
        for start, end, _entity, type_id in self.tag_entities(tokens):
            for i in range(start, end):
                out[i] = type_id
        return out

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for surface, (_eid, type_id) in self.surfaces.items():
                fh.write(f"{' '.join(surface)}\t{self.type_names[type_id]}\n")

    @classmethod
    def load(cls, path) -> "EntityDictionary":
        path = Path(path)
        if not path.exists():
            raise DataError(f"entity dictionary not found: {path}")
        d = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    surface, type_name = line.split("\t")
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: expected 'surface<TAB>type'") from exc
                d.add(tuple(surface.split(" ")), type_name)
        return d


@dataclass
class MaterialCorpus:
    """Unstructured token sequences the detector retrieves from."""

    documents: list[tuple[str, ...]]

    def __post_init__(self):
        if not isinstance(self.documents, list):
            self.documents = list(self.documents)

    def __len__(self):
        return len(self.documents)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for doc in self.documents:
                fh.write(" ".join(doc) + "\n")

    @classmethod
    def load(cls, path) -> "MaterialCorpus":
        path = Path(path)
        if not path.exists():
            raise DataError(f"material corpus not found: {path}")
        docs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    docs.append(tuple(line.split(" ")))
        return cls(docs)


def save_pairs(path, pairs: list[QAPair]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            record = {
                "id": pair.id,
                "answer": list(pair.answer),
                "phrases": [list(p.tokens) for p in pair.phrases],
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_pairs(path) -> list[QAPair]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"QA pairs file not found: {path}")
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                pairs.append(QAPair(
                    id=str(record["id"]),
                    answer=tuple(record["answer"]),
                    phrases=tuple(Phrase(tuple(p)) for p in record["phrases"]),
                ))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed QA record: {exc}") from exc
    return pairs


def build_vocabulary(pairs: list[QAPair], corpus: MaterialCorpus | None = None) -> Vocabulary:
    vocab = Vocabulary()
    if corpus is not None:
        for doc in corpus.documents:
            for t in doc:
                vocab.add(t)
    for pair in pairs:
        for t in pair.answer:
            vocab.add(t)
        for p in pair.phrases:
            for t in p.tokens:
                vocab.add(t)
    return vocab
