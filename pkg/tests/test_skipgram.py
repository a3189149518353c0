import numpy as np
import pytest

from cohortstrat import DataError
from cohortstrat.embed import (EmbeddingTable, TrainConfig, WalkConfig, embed_graph, pair_grad,
                               pair_loss, read_emb, train_skipgram, write_emb)
from cohortstrat.embed.skipgram import _softmax_epoch, context_pairs


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def test_first_loss_is_log_vocab(rng):
    V, d = 17, 5
    w_in = rng.normal(size=(V, d))
    assert pair_loss(w_in, np.zeros((V, d)), 3, 9) == pytest.approx(np.log(V), abs=1e-12)
    walks = [["a", "b", "c", "a"]]
    t = train_skipgram(walks, TrainConfig(dim=4, window=1, epochs=1, learning_rate=1e-9),
                       ["a", "b", "c", "d"])
    assert t.history[0] == pytest.approx(np.log(4), abs=1e-6)


def test_pair_gradient_finite_differences(rng):
    for _ in range(20):
        V, d = 7, 4
        w_in, w_out = rng.normal(size=(V, d)), rng.normal(size=(V, d))
        c, o = rng.integers(V, size=2)
        _, g_in, g_out = pair_grad(w_in, w_out, c, o)
        fd_in = fd_grad(lambda: pair_loss(w_in, w_out, c, o), w_in)
        fd_out = fd_grad(lambda: pair_loss(w_in, w_out, c, o), w_out)
        assert rel_err(g_in, fd_in) <= 1e-4
        assert rel_err(g_out, fd_out) <= 1e-4


def test_epoch_matches_replayed_pair_gradients(rng):
    V, d, lr = 6, 3, 0.1
    w_in, w_out = rng.normal(size=(V, d)), rng.normal(size=(V, d))
    walks = [[2, 4, 1, 4], [0, 5]]
    a_in, a_out = w_in.copy(), w_out.copy()
    _softmax_epoch(walks, a_in, a_out, 1, lr)
    # each center takes one step along the summed gradient of its window pairs
    for walk in walks:
        for c, ctx in context_pairs(walk, 1):
            g_in = sum(pair_grad(w_in, w_out, c, o)[1] for o in ctx)
            g_out = sum(pair_grad(w_in, w_out, c, o)[2] for o in ctx)
            w_in = w_in - lr * g_in
            w_out = w_out - lr * g_out
    assert np.allclose(a_in, w_in, atol=1e-12) and np.allclose(a_out, w_out, atol=1e-12)


def test_context_truncates_at_walk_ends():
    assert list(context_pairs([0, 1, 2, 3], 2)) == [
        (0, [1, 2]), (1, [0, 2, 3]), (2, [0, 1, 3]), (3, [1, 2])]


def _cos(u, v):
    return u @ v / (np.linalg.norm(u) * np.linalg.norm(v))


def test_planted_blocks_separate(planted):
    graph, member = planted
    table = embed_graph(graph, WalkConfig(seed=1), TrainConfig(dim=16, epochs=5, seed=1))
    within, across = [], []
    toks = table.tokens
    for i in range(len(toks)):
        for j in range(i + 1, len(toks)):
            s = _cos(table.vectors[i], table.vectors[j])
            (within if member[toks[i]] == member[toks[j]] else across).append(s)
    assert np.mean(within) > np.mean(across)


def test_loss_non_increasing_first_epochs(planted):
    graph, _ = planted
    table = embed_graph(graph, WalkConfig(seed=0), TrainConfig(dim=16, epochs=3, seed=0))
    h = table.history
    assert h[0] >= h[1] >= h[2]


def test_negative_sampling_trains(planted):
    graph, _ = planted
    table = embed_graph(graph, WalkConfig(seed=0),
                        TrainConfig(dim=8, epochs=2, negative=5, seed=0))
    assert np.isfinite(table.vectors).all() and table.history[1] < table.history[0]


def test_emb_format(tmp_path):
    p = tmp_path / "a.emb"
    write_emb(EmbeddingTable(["P:a"], np.array([[0.5, -1.0]])), p)
    assert p.read_bytes() == b"1 2\nP:a 0.5 -1.0\n"


def test_emb_round_trip(tmp_path, rng):
    t = EmbeddingTable([f"P:node {i}" for i in range(50)], rng.normal(size=(50, 100)))
    p = tmp_path / "t.emb"
    write_emb(t, p)
    back = read_emb(p)
    assert back.tokens == t.tokens
    assert np.abs(back.vectors - t.vectors).max() <= 1e-8


def test_empty_table_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_emb(EmbeddingTable([], np.zeros((0, 3))), tmp_path / "e.emb")


@pytest.mark.parametrize("text,line", [
    ("2\nP:a 1 2\n", ":1:"),
    ("1 2\nP:a 1\n", ":2:"),
    ("2 2\nP:a 1 2\nP:b 1 2 3\n", ":3:"),
    ("1 2\nP:a 1 x\n", ":2:"),
])
def test_emb_read_errors(tmp_path, text, line):
    p = tmp_path / "bad.emb"
    p.write_text(text)
    with pytest.raises(DataError, match=line):
        read_emb(p)


def test_training_deterministic(tmp_path, planted):
    graph, _ = planted
    paths = []
    for k in range(2):
        t = embed_graph(graph, WalkConfig(seed=5), TrainConfig(dim=8, epochs=2, seed=5))
        paths.append(tmp_path / f"{k}.emb")
        write_emb(t, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
