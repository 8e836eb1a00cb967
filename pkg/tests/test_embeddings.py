"""Skip-gram trainer and embedding file format."""

import numpy as np
import pytest

from medqgen.corpus import MaterialCorpus, UNK
from medqgen.embeddings import EmbeddingTable, cosine, train_embeddings
from medqgen.errors import DataError


def co_occurrence_corpus():
    # "left"/"right" appear only with each other; fillers mix freely
    rng = np.random.default_rng(0)
    fillers = [f"w{i}" for i in range(12)]
    docs = [tuple(rng.choice(fillers, size=8)) for _ in range(40)]
    docs += [("left", "right") * 3 for _ in range(20)]
    return MaterialCorpus(docs)


def test_cooccurring_tokens_more_similar_than_average():
    table = train_embeddings(co_occurrence_corpus(), dim=16, window=2,
                             epochs=8, seed=3)
    pair_sim = cosine(table.vector("left"), table.vector("right"))
    words = [t for t in table.vocab.tokens() if not t.startswith("<")]
    sims = []
    for i, a in enumerate(words):
        for b in words[i + 1:]:
            sims.append(cosine(table.vector(a), table.vector(b)))
    assert pair_sim > np.mean(sims)


def test_unseen_token_maps_to_unk_row():
    table = train_embeddings(co_occurrence_corpus(), dim=8, window=2,
                             epochs=1, seed=1)
    assert np.array_equal(table.vector("never-seen-token"), table.vector(UNK))


def test_same_seed_identical_tables():
    corpus = co_occurrence_corpus()
    t1 = train_embeddings(corpus, dim=8, window=2, epochs=2, seed=7)
    t2 = train_embeddings(corpus, dim=8, window=2, epochs=2, seed=7)
    assert np.array_equal(t1.matrix, t2.matrix)
    t3 = train_embeddings(corpus, dim=8, window=2, epochs=2, seed=8)
    assert not np.array_equal(t1.matrix, t3.matrix)


def test_empty_corpus_rejected():
    with pytest.raises(DataError):
        train_embeddings(MaterialCorpus([]), dim=8, window=2, epochs=1, seed=0)


def test_extra_tokens_present_with_init_rows():
    corpus = co_occurrence_corpus()
    table = train_embeddings(corpus, dim=8, window=2, epochs=1, seed=0,
                             extra_tokens=["qa-only-token"])
    assert "qa-only-token" in table.vocab
    assert not np.array_equal(table.vector("qa-only-token"), table.vector(UNK))


def test_save_load_round_trip(tmp_path):
    table = train_embeddings(co_occurrence_corpus(), dim=8, window=2,
                             epochs=1, seed=5)
    path = tmp_path / "emb.txt"
    table.save(path)
    loaded = EmbeddingTable.load(path)
    assert loaded.vocab.tokens() == table.vocab.tokens()
    assert np.array_equal(loaded.matrix, table.matrix)  # repr round-trips exactly


def test_mean_vector():
    table = train_embeddings(co_occurrence_corpus(), dim=8, window=2,
                             epochs=1, seed=5)
    mean = table.mean_vector(["left", "right"])
    expected = (table.vector("left") + table.vector("right")) / 2.0
    assert np.allclose(mean, expected)


def test_cosine_properties():
    rng = np.random.default_rng(2)
    v = rng.normal(size=16)
    assert abs(cosine(v, v) - 1.0) < 1e-12
    assert abs(cosine(v, 3.7 * v) - 1.0) < 1e-12  # scale invariance
    assert cosine(v, np.zeros(16)) == 0.0
    assert cosine(np.zeros(16), np.zeros(16)) == 0.0
