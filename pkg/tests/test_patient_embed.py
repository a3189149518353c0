import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohortstrat.cohort import apply_stoplist, frequency_filter
from cohortstrat.embed import EmbeddingTable
from cohortstrat.patient_embed import (FineTuneConfig, average_embedding,
                                       build_patient_embeddings, fine_tune, head_loss_and_grads,
                                       init_head)

from conftest import rec


def test_average_examples():
    t = EmbeddingTable(["a", "b"], np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert average_embedding(["a", "b"], t)[0].tolist() == [0.5, 0.5]
    assert average_embedding(["b"], t)[0].tolist() == [0.0, 1.0]
    vec, missing = average_embedding(["a", "zz"], t)
    assert vec.tolist() == [1.0, 0.0] and missing == 1
    vec, missing = average_embedding(["zz"], t)
    assert vec.tolist() == [0.0, 0.0] and missing == 1


def test_average_brute_force(rng):
    toks = [f"t{i}" for i in range(30)]
    t = EmbeddingTable(toks, rng.normal(size=(30, 6)))
    feats = list(rng.choice(toks, 10, replace=False))
    want = [sum(t[f][j] for f in feats) / 10 for j in range(6)]
    assert np.allclose(average_embedding(feats, t)[0], want, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.permutations(list(range(8))), st.floats(-10, 10, allow_nan=False))
def test_average_permutation_and_scale(perm, c):
    rng = np.random.default_rng(0)
    toks = [f"t{i}" for i in range(8)]
    V = rng.normal(size=(8, 3))
    t = EmbeddingTable(toks, V)
    base = average_embedding(toks, t)[0]
    assert np.allclose(average_embedding([toks[i] for i in perm], t)[0], base, atol=1e-12)
    scaled = EmbeddingTable(toks, c * V)
    assert np.allclose(average_embedding(toks, scaled)[0], c * base, atol=1e-9)


def _setup(d=100):
    recs = [rec("P1", {"a", "b"}, {"X-PATH"}, "male", "prostate"),
            rec("P2", {"a"}, (), "female", "breast"),
            rec("P3", (), {"X-PATH", "Y-VUS"}, "female", "lung")]
    vocab = frequency_filter(recs, 0, 0)
    toks = vocab.tokens[:-1] + ["D:gender_male", "D:gender_female"]
    rng = np.random.default_rng(0)
    return recs, vocab, EmbeddingTable(toks, rng.normal(size=(len(toks), d)))


def test_build_layout():
    recs, vocab, t = _setup()
    pe = build_patient_embeddings(recs, t, vocab)
    assert pe.vectors.shape == (3, 201) and pe.ids == ["P1", "P2", "P3"]
    v = pe.vectors[0]
    assert np.allclose(v[:100], (t["P:a"] + t["P:b"]) / 2)
    assert np.allclose(v[100:200], t["G:X-PATH"]) and v[200] == 1.0
    assert not pe.vectors[1, 100:200].any() and pe.empty_gene == ["P2"]
    assert pe.empty_pheno == ["P3"] and pe.vectors[2, 200] == 0.0


def test_gender_node_mode():
    recs, vocab, t = _setup(d=4)
    pe = build_patient_embeddings(recs, t, vocab, gender_mode="node")
    assert pe.vectors.shape == (3, 12)
    assert np.allclose(pe.vectors[0, 8:], t["D:gender_male"])
    with pytest.raises(ValueError):
        build_patient_embeddings(recs, t, vocab, gender_mode="onehot")


def test_patient_shuffle_commutes(small_cohort):
    recs = apply_stoplist(small_cohort)
    vocab = frequency_filter(recs, 5, 3)
    rng = np.random.default_rng(1)
    t = EmbeddingTable(vocab.tokens, rng.normal(size=(len(vocab), 8)))
    pe = build_patient_embeddings(recs, t, vocab)
    perm = rng.permutation(len(recs))
    pe2 = build_patient_embeddings([recs[i] for i in perm], t, vocab)
    assert np.array_equal(pe2.vectors, pe.vectors[perm])
    assert len(pe.ids) == len(recs)


def test_finetune_zero_epochs_identity(rng):
    E = rng.normal(size=(10, 5))
    res = fine_tune(E, ["lung", "liver"] * 5, FineTuneConfig(epochs=0))
    assert np.array_equal(res.embeddings, E) and res.embeddings is not E


def test_finetune_gradients_finite_differences(rng):
    for _ in range(20):
        n, d = 6, 5
        E = rng.normal(size=(n, d))
        Y = np.eye(3)[rng.integers(0, 3, n)]
        head = init_head(d, 4, 3, rng)
        head["b1"] += 0.5
        _, grads, dE = head_loss_and_grads(E, head, Y)
        for P, g in [(E, dE)] + [(head[k], grads[k]) for k in head]:
            fd = np.zeros_like(P)
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + 1e-5
                up = head_loss_and_grads(E, head, Y)[0]
                P[idx] = old - 1e-5
                down = head_loss_and_grads(E, head, Y)[0]
                P[idx] = old
                fd[idx] = (up - down) / 2e-5
            err = np.linalg.norm(fd - g) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
            assert err <= 1e-4


def test_finetune_loss_monotone_small_lr(small_cohort):
    recs = apply_stoplist(small_cohort)
    vocab = frequency_filter(recs, 5, 3)
    t = EmbeddingTable(vocab.tokens, np.random.default_rng(0).normal(size=(len(vocab), 16)))
    pe = build_patient_embeddings(recs, t, vocab)
    res = fine_tune(pe.vectors, pe.labels, FineTuneConfig(epochs=100, learning_rate=0.01))
    h = np.array(res.history)
    assert (np.diff(h) <= 1e-12).all()
    assert h[-1] < h[0]
    assert (res.predict(res.embeddings) == pe.labels).mean() > 0.8


def test_finetune_errors(rng):
    with pytest.raises(ValueError):
        fine_tune(rng.normal(size=(4, 2)), ["lung"] * 4)
    with pytest.raises(ValueError):
        FineTuneConfig(hidden=0)
    E = np.array([[1e308, 1e308], [0.0, 1.0]])
    with pytest.raises(FloatingPointError, match="epoch"):
        with np.errstate(all="ignore"):
            fine_tune(E, ["lung", "liver"], FineTuneConfig(epochs=3, learning_rate=1e10))
