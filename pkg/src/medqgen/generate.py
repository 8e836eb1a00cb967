"""Inference: keep/replace sampling plus beam-search phrase regeneration.

For each sample, the keep/replace mask is drawn from the significance
profile; replaced positions are regenerated left to right. The context
at position k mixes the already-final prefix (kept or freshly generated
phrases) with the original suffix. Latents come from the prior network;
each replaced phrase draws its own z. Everything is seeded, so a
(model, profile, seed) triple reproduces identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Phrase, QAPair
from .cvae import PhraseCVAE, reparameterize
from .detector import SignificanceProfile, sample_mask
from .errors import DataError
from .nn.autograd import no_grad


@dataclass
class BeamResult:
    tokens: list[int]
    logp: float          # cumulative log-probability (EOS step included)
    score: float         # length-normalized: logp / len(tokens)


def beam_search(step, init_state, bos_id: int, eos_id: int, width: int,
                max_len: int) -> BeamResult:
    """Beam search over a stepwise decoder.

    ``step(state, token) -> (new_state, log_prob_vector)``. Hypotheses
    finishing on EOS move to the result pool with the EOS log-prob
    added; at max_len every expansion is force-finished unpruned (so a
    beam as wide as the vocabulary enumerates every sequence). EOS is
    masked at the first step, keeping phrases non-empty. Final ranking
    is by length-normalized score; ties keep insertion order.
    """
    if width < 1:
        raise DataError(f"beam width must be >= 1, got {width}")
    if max_len < 1:
        raise DataError(f"max_len must be >= 1, got {max_len}")
    live = [([], 0.0, init_state)]
    finished: list[BeamResult] = []
    for t in range(1, max_len + 1):
        candidates = []
        for tokens, logp, state in live:
            prev = tokens[-1] if tokens else bos_id
            new_state, logprobs = step(state, prev)
            logprobs = np.asarray(logprobs, dtype=np.float64)
            for v in range(logprobs.shape[0]):
                if v == eos_id:
                    if t > 1:
                        phrase = list(tokens)
                        finished.append(BeamResult(
                            phrase, logp + logprobs[v],
                            (logp + logprobs[v]) / len(phrase)))
                    continue
                cand_logp = logp + logprobs[v]
                if t == max_len:
                    phrase = tokens + [v]
                    finished.append(BeamResult(phrase, cand_logp,
                                               cand_logp / len(phrase)))
                else:
                    candidates.append((tokens + [v], cand_logp, new_state))
        if t < max_len:
            order = np.argsort([-c[1] for c in candidates], kind="stable")
            live = [candidates[i] for i in order[:width]]
    best_idx = int(np.argmax([f.score for f in finished]))
    return finished[best_idx]


@dataclass
class GeneratedPhrase:
    tokens: tuple[str, ...]
    provenance: str              # "kept" | "generated"
    score: float | None = None   # beam score for generated phrases


@dataclass
class GeneratedSample:
    phrases: list[GeneratedPhrase]
    latent_seed: int


@dataclass
class GenerationBatch:
    source_id: str
    answer: tuple[str, ...]
    samples: list[GeneratedSample]


def generate_pair(pair: QAPair, profile: SignificanceProfile, model: PhraseCVAE,
                  n_samples: int, beam_width: int, max_phrase_len: int,
                  seed: int) -> GenerationBatch:
    """N candidate questions for one source pair; deterministic per seed."""
    if n_samples < 1:
        raise DataError("n_samples must be >= 1")
    if len(profile) != len(pair.phrases):
        raise DataError(
            f"profile length {len(profile)} != {len(pair.phrases)} phrases "
            f"for pair {pair.id}")
    answer_vec = model.table.mean_vector(pair.answer)
    master = np.random.default_rng(seed)
    samples = []
    with no_grad():
        for _ in range(n_samples):
            latent_seed = int(master.integers(0, 2 ** 31))
            rng = np.random.default_rng(latent_seed)
            replace = sample_mask(profile, rng)
            current = [GeneratedPhrase(p.tokens, "kept") for p in pair.phrases]
            for k in np.flatnonzero(replace):
                tokens, score = _regenerate(model, current, int(k), answer_vec, rng,
                                            beam_width, max_phrase_len)
                current[int(k)] = GeneratedPhrase(tuple(tokens), "generated", score)
            samples.append(GeneratedSample(current, latent_seed))
    return GenerationBatch(pair.id, pair.answer, samples)


def _regenerate(model: PhraseCVAE, current: list[GeneratedPhrase], k: int,
                answer_vec: np.ndarray, rng: np.random.Generator,
                beam_width: int, max_phrase_len: int):
    encodings = [model.encode_phrase(model.vocab.encode(p.tokens))
                 for p in current]
    cond = model.encode_context(encodings, k, answer_vec)
    prior = model.prior(cond)
    z = reparameterize(prior, rng.standard_normal(model.cfg.latent_dim))
    outputs = model.decode_passes(z, cond)  # predicted t', e' at test time

    def step(state, token_id):
        new_state, logp = model.decode_step(state, token_id, outputs)
        return new_state, logp.data

    result = beam_search(step, outputs.decoder_init, model.vocab.bos_id,
                         model.vocab.eop_id, beam_width, max_phrase_len)
    return model.vocab.decode(result.tokens), result.score


def generate_corpus(pairs, profiles, model: PhraseCVAE, n_samples: int,
                    beam_width: int, max_phrase_len: int, seed: int
                    ) -> list[GenerationBatch]:
    """Generation over a corpus with per-pair child seeds."""
    if len(pairs) != len(profiles):
        raise DataError("pairs and profiles must align")
    child_seeds = np.random.SeedSequence(seed).generate_state(len(pairs))
    return [generate_pair(pair, profile, model, n_samples, beam_width,
                          max_phrase_len, int(child))
            for pair, profile, child in zip(pairs, profiles, child_seeds)]


def save_batches(path, batches: list[GenerationBatch]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for batch in batches:
            for idx, sample in enumerate(batch.samples):
                record = {
                    "source_id": batch.source_id,
                    "sample_index": idx,
                    "answer": list(batch.answer),
                    "phrases": [list(p.tokens) for p in sample.phrases],
                    "provenance": [p.provenance for p in sample.phrases],
                    "scores": [p.score for p in sample.phrases],
                    "latent_seed": sample.latent_seed,
                }
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_batches(path) -> list[GenerationBatch]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"generation file not found: {path}")
    by_source: dict[str, GenerationBatch] = {}
    order = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                phrases = [GeneratedPhrase(tuple(t), prov, score)
                           for t, prov, score in zip(rec["phrases"],
                                                     rec["provenance"],
                                                     rec["scores"])]
                sample = GeneratedSample(phrases, int(rec["latent_seed"]))
                sid = rec["source_id"]
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed generation record: {exc}") from exc
            if sid not in by_source:
                by_source[sid] = GenerationBatch(sid, tuple(rec["answer"]), [])
                order.append(sid)
            by_source[sid].samples.append(sample)
    return [by_source[sid] for sid in order]


def render_batches(batches: list[GenerationBatch]) -> str:
    """Plain-text rendering for human inspection."""
    lines = []
    for batch in batches:
        lines.append(f"== {batch.source_id} | answer: {' '.join(batch.answer)}")
        for idx, sample in enumerate(batch.samples):
            parts = []
            for p in sample.phrases:
                marker = "*" if p.provenance == "generated" else " "
                parts.append(f"{marker}{' '.join(p.tokens)}")
            lines.append(f"  [{idx}] " + " | ".join(parts))
    return "\n".join(lines) + "\n"
