"""Independent numpy reimplementation of the generator's training objective.

No autograd tensors anywhere: this recomputes one training instance's
loss directly from the model's parameter arrays with explicit formulas.
It serves as the oracle for the objective-nesting checks (plain CVAE,
type-augmented, and full multi-pass objectives).
"""

import numpy as np


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def np_gru_step(p, prefix, x, h):
    w_g = p[f"{prefix}.w_gates"]
    b_g = p[f"{prefix}.b_gates"]
    w_c = p[f"{prefix}.w_cand"]
    b_c = p[f"{prefix}.b_cand"]
    d_h = h.shape[0]
    gates = np_sigmoid(w_g @ np.concatenate([x, h]) + b_g)
    z, r = gates[:d_h], gates[d_h:]
    cand = np.tanh(w_c @ np.concatenate([x, r * h]) + b_c)
    return (1.0 - z) * h + z * cand


def np_bigru_last(p, prefix, xs, d_h):
    h = np.zeros(d_h)
    for x in xs:
        h = np_gru_step(p, f"{prefix}.fwd", x, h)
    hb = np.zeros(d_h)
    for x in reversed(xs):
        hb = np_gru_step(p, f"{prefix}.bwd", x, hb)
    return np.concatenate([h, hb])


def np_affine(p, prefix, x):
    return p[f"{prefix}.w"] @ x + p[f"{prefix}.b"]


def np_mlp(p, prefix, x):
    return np_affine(p, f"{prefix}.out", np.tanh(np_affine(p, f"{prefix}.hidden", x)))


def np_log_softmax(x):
    m = x.max()
    return x - (np.log(np.exp(x - m).sum()) + m)


def np_softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def np_kl(q_mu, q_lv, p_mu, p_lv):
    d = q_mu - p_mu
    return 0.5 * np.sum(p_lv - q_lv - 1.0 + np.exp(q_lv - p_lv)
                        + d * d * np.exp(-p_lv))


def reference_instance_loss(model, pair_token_ids, k, answer_vec, instance,
                            eps, kl_weight):
    """Loss for phrase position k of a pair, recomputed from scratch.

    pair_token_ids: list of per-phrase token-id lists (the whole pair).
    instance: the PhraseInstance for position k.
    Returns (total, terms dict).
    """
    p = {name: t.data for name, t in model.params.items()}
    cfg = model.cfg
    emb = model.table.matrix

    encodings = [np_bigru_last(p, "phrase_enc", [emb[i] for i in ids],
                               cfg.phrase_hidden)
                 for ids in pair_token_ids]
    h = np.zeros(cfg.context_hidden)
    for enc in encodings[:k] + encodings[k + 1:]:
        h = np_gru_step(p, "context", enc, h)
    cond = np.concatenate([h, answer_vec])

    x_aug = encodings[k]
    if cfg.use_type_pass:
        x_aug = np.concatenate([x_aug, instance.type_vector])
    rec = np_affine(p, "recognition", np.concatenate([x_aug, cond]))
    q_mu, q_lv = rec[:cfg.latent_dim], rec[cfg.latent_dim:]
    pri = np_mlp(p, "prior", cond)
    p_mu, p_lv = pri[:cfg.latent_dim], pri[cfg.latent_dim:]

    kl = np_kl(q_mu, q_lv, p_mu, p_lv)
    z = q_mu + np.exp(0.5 * q_lv) * eps

    terms = {"kl": kl}
    zc = np.concatenate([z, cond])
    type_used = None
    if cfg.use_type_pass:
        t_pred = np_mlp(p, "type_mlp", zc)
        type_used = instance.type_vector
        terms["type_ll"] = -0.5 * np.sum((t_pred - type_used) ** 2)
    entity_used = None
    if cfg.use_entity_pass:
        ent_in = np.concatenate([zc, type_used]) if cfg.use_type_pass else zc
        logits = np_mlp(p, "entity_mlp", ent_in)
        target = np.zeros(model.n_entities)
        target[instance.entity_ids] = 1.0 / len(instance.entity_ids)
        terms["entity_ll"] = float(np.sum(np_log_softmax(logits) * target))
        entity_used = p["entity_emb"][instance.entity_ids].sum(axis=0) / len(instance.entity_ids)

    init_parts = [z, cond]
    if type_used is not None:
        init_parts.append(type_used)
    if entity_used is not None:
        init_parts.append(entity_used)
    state = np_affine(p, "decoder_init", np.concatenate(init_parts))

    recon = 0.0
    prev = model.vocab.bos_id
    for target_id in instance.target_ids:
        parts = [emb[prev]]
        if type_used is not None:
            parts.append(type_used)
        if entity_used is not None:
            parts.append(entity_used)
        state = np_gru_step(p, "decoder", np.concatenate(parts), state)
        logp = np_log_softmax(np_affine(p, "out_proj", state))
        recon += logp[target_id]
        prev = target_id
    terms["recon_ll"] = recon

    bow_logp = np_log_softmax(np_mlp(p, "bow", zc))
    terms["bow_ll"] = float(np.sum(bow_logp * instance.bow_counts))

    total = kl_weight * terms["kl"] - terms.get("type_ll", 0.0) \
        - terms.get("entity_ll", 0.0) - terms["recon_ll"] \
        - cfg.bow_weight * terms["bow_ll"]
    return total, terms
