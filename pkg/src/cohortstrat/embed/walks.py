"""Second-order biased random walks over a FeatureGraph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..textio import escape_token
from .alias import alias_draw, build_alias


@dataclass(frozen=True)
class WalkConfig:
    p: float = 0.5
    q: float = 0.5
    walks_per_node: int = 5
    walk_length: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")
        if self.walk_length < 2:
            raise ValueError("walk_length must be at least 2")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be at least 1")


def _weights(graph, prev, cur, p, q):
    nbrs, w = graph.neighbors[cur], graph.weights[cur]
    if prev is None:
        return w.copy()
    alpha = np.where(np.isin(nbrs, graph.neighbors[prev], assume_unique=True), 1.0, 1.0 / q)
    alpha[nbrs == prev] = 1.0 / p
    return alpha * w


def transition_weights(graph, prev: str | None, cur: str, p: float, q: float):
    """Unnormalized ``[(neighbor, pi)]`` for a step from ``cur`` having
    arrived from ``prev`` (``None`` on the first step)."""
    i = graph.index[cur]
    s = None if prev is None else graph.index[prev]
    pis = _weights(graph, s, i, p, q)
    return [(graph.nodes[t], float(x)) for t, x in zip(graph.neighbors[i], pis)]


def transition_probabilities(graph, prev, cur, p, q) -> dict:
    pairs = transition_weights(graph, prev, cur, p, q)
    z = sum(x for _, x in pairs)
    return {t: x / z for t, x in pairs}


class WalkSampler:
    """Alias tables per node (first step) and per directed edge ``(prev, cur)``.

    Edge tables are built on first use and cached; a walk corpus touches far
    fewer directed edges than the sum of squared degrees on dense graphs.
    """

    def __init__(self, graph, p: float, q: float):
        self.graph, self.p, self.q = graph, p, q
        self.node_tables = [build_alias(graph.weights[i]) if len(graph.neighbors[i]) else None
                            for i in range(len(graph))]
        self.edge_tables = {}

    def edge_table(self, prev: int, cur: int):
        key = (prev, cur)
        table = self.edge_tables.get(key)
        if table is None:
            table = build_alias(_weights(self.graph, prev, cur, self.p, self.q))
            self.edge_tables[key] = table
        return table

    def walk(self, start: int, length: int, rng) -> list[int]:
        nbrs = self.graph.neighbors
        u = rng.random(length - 1)
        walk = [start]
        for k in range(length - 1):
            cur = walk[-1]
            if len(nbrs[cur]) == 0:
                break
            if k == 0:
                acc, al = self.node_tables[cur]
            else:
                acc, al = self.edge_table(walk[-2], cur)
            walk.append(int(nbrs[cur][alias_draw(acc, al, u[k])]))
        return walk


def sample_walks(graph, cfg: WalkConfig, as_ids: bool = False) -> list:
    """``walks_per_node`` rounds; each round starts one walk from every node
    in a freshly shuffled order."""
    if len(graph) == 0:
        raise ValueError("graph has no nodes")
    sampler = WalkSampler(graph, cfg.p, cfg.q)
    rng = np.random.default_rng(cfg.seed)
    walks = []
    for _ in range(cfg.walks_per_node):
        for start in rng.permutation(len(graph)):
            walks.append(sampler.walk(int(start), cfg.walk_length, rng))
    if as_ids:
        return walks
    return [[graph.nodes[i] for i in w] for w in walks]


def write_walks(walks, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for w in walks:
            fh.write(" ".join(escape_token(t) for t in w) + "\n")
