"""Conditional VAE over question phrases with a multi-pass decoder.

Each phrase position of a QA pair is one training instance: the target
phrase x is encoded by a bi-GRU (augmented with the frozen tagger's
contextualized type vector on the recognition path), the condition c is
a GRU over the remaining phrases' encodings concatenated with the answer
embedding, and z is a diagonal Gaussian (affine recognition network,
MLP prior network). Decoding runs in three passes: predict a type
vector from (z, c), predict an entity distribution from (z, c, t) and
aggregate it against the entity embedding matrix, then decode the
phrase tokens with a GRU whose initial state is an affine map of
[z, c, t, e]. Training teacher-forces t and e; inference uses the
predicted ones.

The loss is the annealed KL plus type / entity / reconstruction /
bag-of-words log-likelihood terms. The type and entity passes can be
disabled independently, which recovers the plain and type-only
objectives exactly (the ablation tests rely on this).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .corpus import EntityDictionary, QAPair
from .embeddings import EmbeddingTable
from .errors import DataError, ShapeError
from .nn import autograd as ag
from .nn.autograd import Tensor, no_grad
from .nn.layers import Affine, BiGRULastState, GRUCell, MLP, ParamSet, gru_scan
from .nn.optim import Adam

# posterior-collapse guard: mean post-annealing KL must stay above
# this many nats per latent dimension
COLLAPSE_FLOOR_NATS_PER_DIM = 0.01


@dataclass
class GeneratorConfig:
    embedding_dim: int = 200
    phrase_hidden: int = 300
    context_hidden: int = 600
    latent_dim: int = 200
    mlp_hidden: int = 400
    decoder_hidden: int = 400
    entity_dim: int = 50
    type_dim: int = 200          # 2 * tagger hidden
    use_type_pass: bool = True
    use_entity_pass: bool = True
    bow_weight: float = 1.0


@dataclass
class LatentGaussian:
    mu: Tensor
    logvar: Tensor


@dataclass
class MultiPassOutputs:
    type_pred: Tensor | None      # t' (continuous)
    entity_logits: Tensor | None
    entity_softmax: Tensor | None  # distribution over entity vocabulary
    entity_pred: Tensor | None    # e' = softmax @ entity embedding matrix
    type_used: Tensor | None      # teacher t in training, t' at test
    entity_used: Tensor | None    # teacher pooled e in training, e' at test
    decoder_init: Tensor


@dataclass
class LossBreakdown:
    kl: float
    type_ll: float
    entity_ll: float
    recon_ll: float
    bow_ll: float
    kl_weight: float
    total: float

    def as_record(self) -> dict:
        return asdict(self)


def kl_weight_at(step: int, anneal_batches: int) -> float:
    """Linear KL annealing from 0 to 1 over anneal_batches steps."""
    if anneal_batches <= 0:
        return 1.0
    return min(1.0, step / anneal_batches)


def kl_divergence(q: LatentGaussian, p: LatentGaussian) -> Tensor:
    """Closed-form KL(q || p) between diagonal Gaussians; >= 0."""
    if q.mu.data.shape != p.mu.data.shape:
        raise ShapeError(f"KL dims {q.mu.data.shape} vs {p.mu.data.shape}")
    d = ag.sub(q.mu, p.mu)
    terms = ag.add(
        ag.sub(ag.sub(p.logvar, q.logvar), 1.0),
        ag.add(ag.exp(ag.sub(q.logvar, p.logvar)),
               ag.mul(ag.square(d), ag.exp(ag.mul(p.logvar, -1.0)))))
    return ag.mul(ag.tsum(terms), 0.5)


def reparameterize(g: LatentGaussian, eps: np.ndarray) -> Tensor:
    """z = mu + sigma * eps, differentiable through mu and logvar."""
    sigma = ag.exp(ag.mul(g.logvar, 0.5))
    return ag.add(g.mu, ag.mul(sigma, eps))


@dataclass
class PhraseInstance:
    """Precomputed per-phrase training inputs (teacher side is frozen)."""

    token_ids: list[int]
    target_ids: list[int]          # token_ids + [EOP]
    type_vector: np.ndarray | None
    entity_ids: list[int]          # [0] (null) when the phrase has none
    bow_counts: np.ndarray


class PhraseCVAE:
    def __init__(self, table: EmbeddingTable, n_entities: int,
                 cfg: GeneratorConfig, seed: int = 0):
        self.table = table
        self.cfg = cfg
        self.n_entities = n_entities
        self.vocab = table.vocab
        self.params = ParamSet()
        rng = np.random.default_rng(seed)
        c = cfg

        self.cond_dim = c.context_hidden + c.embedding_dim
        enc_dim = 2 * c.phrase_hidden
        rec_in = enc_dim + (c.type_dim if c.use_type_pass else 0) + self.cond_dim

        self.phrase_enc = BiGRULastState(self.params, "phrase_enc",
                                         c.embedding_dim, c.phrase_hidden, rng)
        self.context_gru = GRUCell(self.params, "context", enc_dim,
                                   c.context_hidden, rng)
        self.recognition_net = Affine(self.params, "recognition", rec_in,
                                      2 * c.latent_dim, rng)
        self.prior_net = MLP(self.params, "prior", self.cond_dim, c.mlp_hidden,
                             2 * c.latent_dim, rng)
        if c.use_type_pass:
            self.type_mlp = MLP(self.params, "type_mlp",
                                c.latent_dim + self.cond_dim, c.mlp_hidden,
                                c.type_dim, rng)
        if c.use_entity_pass:
            ent_in = c.latent_dim + self.cond_dim + (c.type_dim if c.use_type_pass else 0)
            self.entity_mlp = MLP(self.params, "entity_mlp", ent_in,
                                  c.mlp_hidden, n_entities, rng)
            self.entity_emb = self.params.add("entity_emb",
                                              (n_entities, c.entity_dim), rng)
        dec_in = (c.latent_dim + self.cond_dim
                  + (c.type_dim if c.use_type_pass else 0)
                  + (c.entity_dim if c.use_entity_pass else 0))
        self.decoder_init = Affine(self.params, "decoder_init", dec_in,
                                   c.decoder_hidden, rng)
        step_in = (c.embedding_dim
                   + (c.type_dim if c.use_type_pass else 0)
                   + (c.entity_dim if c.use_entity_pass else 0))
        self.decoder_gru = GRUCell(self.params, "decoder", step_in,
                                   c.decoder_hidden, rng)
        self.out_proj = Affine(self.params, "out_proj", c.decoder_hidden,
                               len(self.vocab), rng)
        self.bow_mlp = MLP(self.params, "bow", c.latent_dim + self.cond_dim,
                           c.mlp_hidden, len(self.vocab), rng)

    # encoders ------------------------------------------------------------

    def embed(self, token_id: int) -> Tensor:
        return Tensor(self.table.matrix[token_id])

    def encode_phrase(self, token_ids) -> Tensor:
        """Bi-GRU over word embeddings; last-state concatenation."""
        if not token_ids:
            raise DataError("cannot encode an empty phrase")
        return self.phrase_enc([self.embed(i) for i in token_ids])

    def encode_context(self, phrase_encodings: list[Tensor], k: int,
                       answer_vec: np.ndarray) -> Tensor:
        """c = [last context-GRU state over phrases != k, answer embedding].

        A single-phrase question leaves the GRU at its zero initial state.
        """
        if not 0 <= k < len(phrase_encodings):
            raise DataError(f"context position {k} out of range")
        others = phrase_encodings[:k] + phrase_encodings[k + 1:]
        hv_c = gru_scan(self.context_gru, others)
        return ag.concat([hv_c, Tensor(answer_vec)])

    # latent networks -----------------------------------------------------

    def _split_gaussian(self, packed: Tensor) -> LatentGaussian:
        d = self.cfg.latent_dim
        return LatentGaussian(mu=ag.narrow(packed, 0, d),
                              logvar=ag.narrow(packed, d, d))

    def recognition(self, x_aug: Tensor, cond: Tensor) -> LatentGaussian:
        """[mu; log var] = W [x; c] + b."""
        return self._split_gaussian(self.recognition_net(ag.concat([x_aug, cond])))

    def prior(self, cond: Tensor) -> LatentGaussian:
        """[mu'; log var'] = MLP(c), one tanh hidden layer."""
        return self._split_gaussian(self.prior_net(cond))

    # multi-pass decoding ---------------------------------------------------

    def pooled_entity_embedding(self, entity_ids) -> Tensor:
        """Average of the (trainable) entity embedding rows."""
        rows = [ag.row(self.entity_emb, i) for i in entity_ids]
        return ag.mul(ag.add_n(rows), 1.0 / len(rows))

    def decode_passes(self, z: Tensor, cond: Tensor,
                      teacher_type: np.ndarray | None = None,
                      teacher_entity_ids=None) -> MultiPassOutputs:
        """Type pass, entity pass, and the phrase-decoder initial state.

        Passing teacher values (training) routes them into later passes
        and the decoder init; omitting them (testing) routes the
        predictions instead.
        """
        cfg = self.cfg
        zc = ag.concat([z, cond])
        type_pred = type_used = None
        if cfg.use_type_pass:
            type_pred = self.type_mlp(zc)
            type_used = Tensor(teacher_type) if teacher_type is not None else type_pred
        entity_logits = entity_softmax = entity_pred = entity_used = None
        if cfg.use_entity_pass:
            ent_in = ag.concat([z, cond, type_used]) if cfg.use_type_pass else zc
            entity_logits = self.entity_mlp(ent_in)
            entity_softmax = ag.softmax(entity_logits)
            entity_pred = ag.matmul(entity_softmax, self.entity_emb)
            entity_used = (self.pooled_entity_embedding(teacher_entity_ids)
                           if teacher_entity_ids is not None else entity_pred)
        init_parts = [z, cond]
        if type_used is not None:
            init_parts.append(type_used)
        if entity_used is not None:
            init_parts.append(entity_used)
        d_init = self.decoder_init(ag.concat(init_parts))
        return MultiPassOutputs(type_pred, entity_logits, entity_softmax,
                                entity_pred, type_used, entity_used, d_init)

    def _step_input(self, token_id: int, outputs: MultiPassOutputs) -> Tensor:
        parts = [self.embed(token_id)]
        if outputs.type_used is not None:
            parts.append(outputs.type_used)
        if outputs.entity_used is not None:
            parts.append(outputs.entity_used)
        return ag.concat(parts)

    def decode_phrase(self, outputs: MultiPassOutputs, target_ids) -> Tensor:
        """Teacher-forced log-likelihood of the target token sequence."""
        h = outputs.decoder_init
        prev = self.vocab.bos_id
        logps = []
        for target in target_ids:
            h = self.decoder_gru(self._step_input(prev, outputs), h)
            logp = ag.log_softmax(self.out_proj(h))
            logps.append(ag.pick(logp, target))
            prev = target
        return ag.add_n(logps)

    def decode_step(self, state: Tensor, token_id: int,
                    outputs: MultiPassOutputs):
        """One decoder step; returns (new state, log-prob vector)."""
        h = self.decoder_gru(self._step_input(token_id, outputs), state)
        return h, ag.log_softmax(self.out_proj(h))

    def bow_logll(self, z: Tensor, cond: Tensor, bow_counts: np.ndarray) -> Tensor:
        """Sum over target tokens of their bag-of-words log-probability."""
        logp = ag.log_softmax(self.bow_mlp(ag.concat([z, cond])))
        return ag.tsum(ag.mul(logp, bow_counts))

    # loss ------------------------------------------------------------------

    def instance_terms(self, x_aug: Tensor, cond: Tensor,
                       instance: PhraseInstance, eps: np.ndarray) -> dict:
        """All loss terms (as graph tensors) for one phrase position."""
        q = self.recognition(x_aug, cond)
        p = self.prior(cond)
        kl = kl_divergence(q, p)
        z = reparameterize(q, eps)
        outputs = self.decode_passes(
            z, cond,
            teacher_type=instance.type_vector if self.cfg.use_type_pass else None,
            teacher_entity_ids=instance.entity_ids if self.cfg.use_entity_pass else None)
        terms = {"kl": kl}
        if self.cfg.use_type_pass:
            diff = ag.sub(outputs.type_pred, outputs.type_used)
            terms["type_ll"] = ag.mul(ag.tsum(ag.square(diff)), -0.5)
        if self.cfg.use_entity_pass:
            target = np.zeros(self.n_entities)
            target[instance.entity_ids] = 1.0 / len(instance.entity_ids)
            terms["entity_ll"] = ag.tsum(
                ag.mul(ag.log_softmax(outputs.entity_logits), target))
        terms["recon_ll"] = self.decode_phrase(outputs, instance.target_ids)
        terms["bow_ll"] = self.bow_logll(z, cond, instance.bow_counts)
        return terms

    def total_from_terms(self, terms: dict, kl_weight: float) -> Tensor:
        zero = Tensor(0.0)
        type_ll = terms.get("type_ll", zero)
        entity_ll = terms.get("entity_ll", zero)
        total = ag.sub(ag.mul(terms["kl"], kl_weight), type_ll)
        total = ag.sub(total, entity_ll)
        total = ag.sub(total, terms["recon_ll"])
        return ag.sub(total, ag.mul(terms["bow_ll"], self.cfg.bow_weight))

    # persistence -------------------------------------------------------------

    def state_dict(self):
        return self.params.state_dict()

    def meta(self) -> dict:
        return {"config": asdict(self.cfg), "n_entities": self.n_entities}

    @classmethod
    def from_state(cls, table: EmbeddingTable, state, meta) -> "PhraseCVAE":
        cfg = GeneratorConfig(**meta["config"])
        model = cls(table, int(meta["n_entities"]), cfg)
        model.params.load_state_dict(state)
        return model


def build_instances(pair: QAPair, vocab, dictionary: EntityDictionary,
                    type_vectors: list[np.ndarray] | None) -> list[PhraseInstance]:
    """Frozen per-phrase teacher inputs for one pair."""
    instances = []
    for k, phrase in enumerate(pair.phrases):
        ids = vocab.encode(phrase.tokens)
        spans = dictionary.tag_entities(phrase.tokens)
        entity_ids = sorted({eid for _s, _e, eid, _t in spans}) or [0]
        counts = np.zeros(len(vocab))
        for i in ids:
            counts[i] += 1.0
        instances.append(PhraseInstance(
            token_ids=ids,
            target_ids=ids + [vocab.eop_id],
            type_vector=None if type_vectors is None else type_vectors[k],
            entity_ids=entity_ids,
            bow_counts=counts,
        ))
    return instances


@dataclass
class TrainerConfig:
    epochs: int = 30
    batch_size: int = 30          # counted in phrase instances
    lr: float = 0.001
    clip_norm: float = 5.0
    anneal_batches: int = 10_000


def pair_loss(model: PhraseCVAE, pair_instances: list[PhraseInstance],
              answer_vec: np.ndarray, rng: np.random.Generator,
              kl_weight: float):
    """Summed loss over one pair's phrase positions, sharing encodings.

    Returns (total Tensor, per-term float sums).
    """
    encodings = [model.encode_phrase(inst.token_ids) for inst in pair_instances]
    totals = []
    sums = {"kl": 0.0, "type_ll": 0.0, "entity_ll": 0.0,
            "recon_ll": 0.0, "bow_ll": 0.0}
    for k, inst in enumerate(pair_instances):
        cond = model.encode_context(encodings, k, answer_vec)
        if model.cfg.use_type_pass:
            x_aug = ag.concat([encodings[k], Tensor(inst.type_vector)])
        else:
            x_aug = encodings[k]
        eps = rng.standard_normal(model.cfg.latent_dim)
        terms = model.instance_terms(x_aug, cond, inst, eps)
        totals.append(model.total_from_terms(terms, kl_weight))
        for name, t in terms.items():
            sums[name] += t.item()
    return ag.add_n(totals), sums


def train_generator(pairs, tagger, table: EmbeddingTable,
                    dictionary: EntityDictionary, cfg: GeneratorConfig,
                    train_cfg: TrainerConfig, seed: int = 0,
                    model: PhraseCVAE | None = None):
    """Train the phrase CVAE; returns (model, per-batch loss log).

    Each batch groups whole pairs until at least batch_size phrase
    instances are collected. The tagger (teacher type vectors) and the
    word embeddings stay frozen.
    """
    if not pairs:
        raise DataError("cannot train the generator on an empty pair list")
    if model is None:
        model = PhraseCVAE(table, dictionary.n_entities, cfg, seed=seed)
    if cfg.use_type_pass and tagger is None:
        raise DataError("type pass enabled but no tagger provided")

    prepared = []
    for pair in pairs:
        type_vecs = tagger.type_vectors(pair) if cfg.use_type_pass else None
        instances = build_instances(pair, model.vocab, dictionary, type_vecs)
        answer_vec = table.mean_vector(pair.answer)
        prepared.append((instances, answer_vec))

    opt = Adam(model.params, lr=train_cfg.lr, clip_norm=train_cfg.clip_norm)
    rng = np.random.default_rng(seed)
    log = []
    batch_index = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(prepared))
        cursor = 0
        while cursor < len(order):
            kl_weight = kl_weight_at(batch_index, train_cfg.anneal_batches)
            batch_totals = []
            batch_sums = {"kl": 0.0, "type_ll": 0.0, "entity_ll": 0.0,
                          "recon_ll": 0.0, "bow_ll": 0.0}
            n_instances = 0
            while cursor < len(order) and n_instances < train_cfg.batch_size:
                instances, answer_vec = prepared[order[cursor]]
                total, sums = pair_loss(model, instances, answer_vec, rng, kl_weight)
                batch_totals.append(total)
                for k in batch_sums:
                    batch_sums[k] += sums[k]
                n_instances += len(instances)
                cursor += 1
            loss = ag.mul(ag.add_n(batch_totals), 1.0 / n_instances)
            model.params.zero_grad()
            loss.backward()
            opt.step()
            means = {k: v / n_instances for k, v in batch_sums.items()}
            log.append(LossBreakdown(
                kl=means["kl"], type_ll=means["type_ll"],
                entity_ll=means["entity_ll"], recon_ll=means["recon_ll"],
                bow_ll=means["bow_ll"], kl_weight=kl_weight,
                total=loss.item()).as_record() | {"epoch": epoch, "batch": batch_index})
            batch_index += 1
    return model, log
