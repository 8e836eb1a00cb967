"""Linear-chain CRF: forward-algorithm NLL and Viterbi decoding.

Path score = sum of emissions plus transitions between consecutive tags;
no separate start/end scores. The partition function runs in log space
with the log-sum-exp max-shift, so large emissions cannot overflow.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import autograd as ag
from .autograd import Tensor


def crf_log_partition(emissions: Tensor, transitions: Tensor) -> Tensor:
    """log Z over all tag paths. emissions: (L, T), transitions: (T, T)."""
    length, n_tags = emissions.data.shape
    if transitions.data.shape != (n_tags, n_tags):
        raise ShapeError(f"transitions {transitions.data.shape} vs {n_tags} tags")
    alpha = ag.row(emissions, 0)
    for t in range(1, length):
        # alpha[i] + transitions[i, j], reduced over i
        scores = ag.add(ag.reshape(alpha, (n_tags, 1)), transitions)
        alpha = ag.add(ag.logsumexp(scores, axis=0), ag.row(emissions, t))
    return ag.logsumexp(alpha)


def crf_path_score(emissions: Tensor, transitions: Tensor, tags) -> Tensor:
    """Score of one tag path via constant indicator masks (2 nodes)."""
    length, n_tags = emissions.data.shape
    tags = list(tags)
    if len(tags) != length:
        raise ShapeError(f"{len(tags)} tags for {length} positions")
    if any(t < 0 or t >= n_tags for t in tags):
        raise IndexError(f"tag id out of range [0, {n_tags})")
    emit_mask = np.zeros((length, n_tags))
    emit_mask[np.arange(length), tags] = 1.0
    score = ag.tsum(ag.mul(emissions, emit_mask))
    if length > 1:
        trans_mask = np.zeros((n_tags, n_tags))
        for a, b in zip(tags[:-1], tags[1:]):
            trans_mask[a, b] += 1.0
        score = ag.add(score, ag.tsum(ag.mul(transitions, trans_mask)))
    return score


def crf_nll(emissions: Tensor, transitions: Tensor, tags) -> Tensor:
    """Negative log-likelihood -(score(tags) - log Z); always >= 0."""
    return ag.sub(crf_log_partition(emissions, transitions),
                  crf_path_score(emissions, transitions, tags))


def crf_viterbi(emissions: np.ndarray, transitions: np.ndarray) -> list[int]:
    """Best tag path; ties break toward the lower tag id.

    Pure numpy (decoding needs no gradients). np.argmax returns the first
    maximal index, which is the lowest tag id.
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    transitions = np.asarray(transitions, dtype=np.float64)
    length, n_tags = emissions.shape
    score = emissions[0].copy()
    backptr = np.zeros((length, n_tags), dtype=np.int64)
    for t in range(1, length):
        cand = score[:, None] + transitions  # (from, to)
        backptr[t] = np.argmax(cand, axis=0)
        score = cand[backptr[t], np.arange(n_tags)] + emissions[t]
    best = int(np.argmax(score))
    path = [best]
    for t in range(length - 1, 0, -1):
        best = int(backptr[t, best])
        path.append(best)
    path.reverse()
    return path
