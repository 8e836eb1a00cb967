"""Automatic evaluation: smoothed BLEU-3, BOW-embedding cosine, distinct-n.

Evaluation is phrase-level: each generated phrase is compared with the
source phrase at the same position, and results are averaged over all
positions of all pairs. With N samples per source, BLEU precision is
the mean of the N scores and recall the maximum.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .embeddings import EmbeddingTable, cosine
from .errors import DataError


def ngrams(tokens, n: int) -> Counter:
    tokens = list(tokens)
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu3_smoothed(candidate, reference) -> float:
    """Sentence BLEU with 3-gram precision and add-one smoothing.

    Smoothing applies to numerator and denominator for n >= 2 only, so a
    candidate with no unigram overlap scores exactly 0. Brevity penalty
    is min(1, e^(1 - r/c)).
    """
    candidate, reference = list(candidate), list(reference)
    if not reference:
        raise DataError("BLEU needs a non-empty reference")
    if not candidate:
        return 0.0
    precisions = []
    for n in (1, 2, 3):
        cand_counts = ngrams(candidate, n)
        ref_counts = ngrams(reference, n)
        total = sum(cand_counts.values())
        clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        if n == 1:
            p = clipped / total
        else:
            p = (clipped + 1.0) / (total + 1.0)
        precisions.append(p)
    if precisions[0] == 0.0:
        return 0.0
    geo_mean = math.exp(sum(math.log(p) for p in precisions) / 3.0)
    brevity = min(1.0, math.exp(1.0 - len(reference) / len(candidate)))
    return brevity * geo_mean


def bleu_agg(samples, reference) -> tuple[float, float, float]:
    """(precision, recall, f1) over N candidates: mean, max, harmonic mean."""
    if not samples:
        raise DataError("bleu_agg needs at least one sample")
    scores = [bleu3_smoothed(s, reference) for s in samples]
    precision = float(np.mean(scores))
    recall = float(np.max(scores))
    f1 = harmonic_mean(precision, recall)
    return precision, recall, f1


def harmonic_mean(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def _extreme_vector(matrix: np.ndarray) -> np.ndarray:
    """Per dimension, the value of largest absolute magnitude, sign kept."""
    idx = np.argmax(np.abs(matrix), axis=0)
    return matrix[idx, np.arange(matrix.shape[1])]


def bow_similarity(candidate, reference, table: EmbeddingTable,
                   mode: str) -> float:
    """Cosine of pooled bag-of-words embeddings (average/extreme/greedy).

    Greedy matches each word in one phrase to its best cosine in the
    other, averages, and symmetrizes by doing both directions.
    """
    candidate, reference = list(candidate), list(reference)
    if not candidate or not reference:
        raise DataError("bow_similarity needs non-empty phrases")
    a = table.vectors(candidate)
    b = table.vectors(reference)
    if mode == "average":
        return cosine(a.mean(axis=0), b.mean(axis=0))
    if mode == "extreme":
        return cosine(_extreme_vector(a), _extreme_vector(b))
    if mode == "greedy":
        sims = np.array([[cosine(u, v) for v in b] for u in a])
        return 0.5 * (float(sims.max(axis=1).mean()) + float(sims.max(axis=0).mean()))
    raise DataError(f"unknown BOW mode {mode!r}")


def distinct(samples, n: int, scope: str) -> float:
    """Unique/total n-gram ratio; intra averages per sample, inter pools.

    Samples shorter than n contribute no n-grams and are skipped in the
    intra average; an all-empty collection scores 0.
    """
    if n < 1:
        raise DataError("distinct needs n >= 1")
    if scope == "intra":
        ratios = []
        for s in samples:
            counts = ngrams(s, n)
            total = sum(counts.values())
            if total:
                ratios.append(len(counts) / total)
        return float(np.mean(ratios)) if ratios else 0.0
    if scope == "inter":
        pooled = Counter()
        for s in samples:
            pooled.update(ngrams(s, n))
        total = sum(pooled.values())
        return len(pooled) / total if total else 0.0
    raise DataError(f"unknown distinct scope {scope!r}")


@dataclass
class MetricReport:
    bleu_precision: float
    bleu_recall: float
    bleu_f1: float
    bow_average: float
    bow_extreme: float
    bow_greedy: float
    intra_dist1: float
    intra_dist2: float
    inter_dist1: float
    inter_dist2: float

    def as_record(self) -> dict:
        return asdict(self)

    def render_table(self, label: str = "run") -> str:
        header = ("method | bleu-p bleu-r bleu-f1 | bow-avg bow-ext bow-gre"
                  " | intra-d1 intra-d2 | inter-d1 inter-d2")
        row = (f"{label} | {self.bleu_precision:.3f} {self.bleu_recall:.3f} "
               f"{self.bleu_f1:.3f} | {self.bow_average:.3f} "
               f"{self.bow_extreme:.3f} {self.bow_greedy:.3f} | "
               f"{self.intra_dist1:.3f} {self.intra_dist2:.3f} | "
               f"{self.inter_dist1:.3f} {self.inter_dist2:.3f}")
        return header + "\n" + row


def evaluate_batches(batches, sources: dict, table: EmbeddingTable) -> MetricReport:
    """Phrase-position-level metrics averaged over the whole run.

    ``sources`` maps source id -> QAPair. All phrase positions of all
    pairs contribute equally (kept phrases included). The aggregated BOW
    cosines are clipped into [0, 1]; the report-level f1 is the harmonic
    mean of the aggregated precision and recall.
    """
    precisions, recalls = [], []
    bows = {"average": [], "extreme": [], "greedy": []}
    intra1, intra2, inter1, inter2 = [], [], [], []
    for batch in batches:
        pair = sources.get(batch.source_id)
        if pair is None:
            raise DataError(f"generated output references unknown pair {batch.source_id!r}")
        for k, phrase in enumerate(pair.phrases):
            reference = list(phrase.tokens)
            cands = [list(sample.phrases[k].tokens) for sample in batch.samples]
            p, r, _ = bleu_agg(cands, reference)
            precisions.append(p)
            recalls.append(r)
            for mode in bows:
                bows[mode].append(float(np.mean(
                    [bow_similarity(c, reference, table, mode) for c in cands])))
            intra1.append(distinct(cands, 1, "intra"))
            intra2.append(distinct(cands, 2, "intra"))
            inter1.append(distinct(cands, 1, "inter"))
            inter2.append(distinct(cands, 2, "inter"))
    if not precisions:
        raise DataError("nothing to evaluate")
    precision = float(np.mean(precisions))
    recall = float(np.mean(recalls))
    clip = lambda v: float(min(1.0, max(0.0, v)))
    return MetricReport(
        bleu_precision=precision,
        bleu_recall=recall,
        bleu_f1=harmonic_mean(precision, recall),
        bow_average=clip(np.mean(bows["average"])),
        bow_extreme=clip(np.mean(bows["extreme"])),
        bow_greedy=clip(np.mean(bows["greedy"])),
        intra_dist1=float(np.mean(intra1)),
        intra_dist2=float(np.mean(intra2)),
        inter_dist1=float(np.mean(inter1)),
        inter_dist2=float(np.mean(inter2)),
    )
