"""Skip-gram node embeddings trained by SGD on walk co-occurrences.

The default objective is the full softmax over the node vocabulary:
for a center node with input vector ``v`` and a context node ``c``, the
pair loss is ``logsumexp(W_out @ v) - W_out[c] @ v``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .table import EmbeddingTable
from .walks import sample_walks

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 100
    window: int = 10
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    negative: int = 0  # 0 = full softmax; k > 0 = negative sampling with k noise nodes

    def __post_init__(self):
        if self.dim < 1 or self.window < 1:
            raise ValueError("dim and window must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.negative < 0:
            raise ValueError("epochs and negative must be >= 0")


def _log_softmax(scores):
    m = scores.max()
    return scores - (m + np.log(np.exp(scores - m).sum()))


def pair_loss(w_in, w_out, center: int, ctx: int) -> float:
    return float(-_log_softmax(w_out @ w_in[center])[ctx])


def pair_grad(w_in, w_out, center: int, ctx: int):
    """Loss and gradients of one (center, context) pair w.r.t. ``w_in`` and ``w_out``."""
    v = w_in[center]
    logp = _log_softmax(w_out @ v)
    ds = np.exp(logp)
    ds[ctx] -= 1.0
    g_in = np.zeros_like(w_in)
    g_in[center] = w_out.T @ ds
    g_out = np.outer(ds, v)
    return float(-logp[ctx]), g_in, g_out


def context_pairs(walk, window: int):
    """Yield ``(center, [contexts])`` with the window truncated at walk ends."""
    n = len(walk)
    for i, c in enumerate(walk):
        lo, hi = max(0, i - window), min(n, i + window + 1)
        ctx = [walk[j] for j in range(lo, hi) if j != i]
        if ctx:
            yield c, ctx


def init_tables(n: int, dim: int, rng):
    w_in = (rng.random((n, dim)) - 0.5) / dim
    w_out = np.zeros((n, dim))
    return w_in, w_out


def _softmax_epoch(walks, w_in, w_out, window, lr):
    total, pairs = 0.0, 0
    n = w_out.shape[0]
    for walk in walks:
        for c, ctx in context_pairs(walk, window):
            v = w_in[c]
            logp = _log_softmax(w_out @ v)
            counts = np.bincount(ctx, minlength=n)
            total -= float(logp[ctx].sum())
            pairs += len(ctx)
            # sum of the per-pair gradients, all taken at the current parameters
            ds = len(ctx) * np.exp(logp) - counts
            g_v = w_out.T @ ds
            w_out -= lr * np.outer(ds, v)
            w_in[c] -= lr * g_v
    return total / max(pairs, 1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _negative_epoch(walks, w_in, w_out, window, lr, k, noise_cdf, rng):
    total, pairs = 0.0, 0
    for walk in walks:
        for c, ctx in context_pairs(walk, window):
            for t in ctx:
                neg = np.searchsorted(noise_cdf, rng.random(k), side="right")
                idx = np.concatenate(([t], neg))
                lab = np.zeros(k + 1)
                lab[0] = 1.0
                v = w_in[c]
                sc = _sigmoid(w_out[idx] @ v)
                total -= float(np.log(sc[0] + 1e-12) + np.log(1.0 - sc[1:] + 1e-12).sum())
                pairs += 1
                g = sc - lab
                g_v = g @ w_out[idx]
                np.add.at(w_out, idx, -lr * np.outer(g, v))
                w_in[c] -= lr * g_v
    return total / max(pairs, 1)


def train_skipgram(walks, cfg: TrainConfig, vocab) -> EmbeddingTable:
    """Train on ``walks`` (lists of tokens) over node list ``vocab``.

    Each center position is updated once with the summed gradient of all
    its window pairs. Returns the input-vector table; per-epoch mean pair
    loss is kept in ``table.history``.
    """
    if not walks:
        raise ValueError("no walks to train on")
    tokens = list(vocab)
    index = {t: i for i, t in enumerate(tokens)}
    id_walks = [[index[t] for t in w] for w in walks]
    rng = np.random.default_rng(cfg.seed)
    w_in, w_out = init_tables(len(tokens), cfg.dim, rng)
    history = []
    if cfg.negative:
        freq = np.bincount(np.concatenate([np.asarray(w) for w in id_walks]),
                           minlength=len(tokens)).astype(float) ** 0.75
        noise_cdf = np.cumsum(freq / freq.sum())
        noise_cdf[-1] = 1.0
    for epoch in range(cfg.epochs):
        if cfg.negative:
            loss = _negative_epoch(id_walks, w_in, w_out, cfg.window, cfg.learning_rate,
                                   cfg.negative, noise_cdf, rng)
        else:
            loss = _softmax_epoch(id_walks, w_in, w_out, cfg.window, cfg.learning_rate)
        if not np.isfinite(loss):
            raise FloatingPointError(f"skip-gram loss diverged at epoch {epoch}")
        history.append(loss)
        log.info("skip-gram epoch %d: mean pair loss %.4f", epoch, loss)
    table = EmbeddingTable(tokens, w_in, context=w_out)
    table.history = history
    return table


def embed_graph(graph, walk_cfg, train_cfg) -> EmbeddingTable:
    """Walks over ``graph`` followed by skip-gram training."""
    walks = sample_walks(graph, walk_cfg)
    return train_skipgram(walks, train_cfg, graph.nodes)
