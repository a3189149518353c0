"""Undirected phenotype-genotype co-occurrence graph and its edge-list format."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from . import DataError
from .cohort import retained_features
from .textio import escape_token, unescape_token

NAMESPACES = ("P:", "G:", "D:")


def node_side(token: str) -> str:
    """``"pheno"`` for phenotype/demographic nodes, ``"gene"`` for genetic ones."""
    if token.startswith("G:"):
        return "gene"
    if token.startswith(("P:", "D:")):
        return "pheno"
    raise DataError(f"unknown node namespace in {token!r}")


class FeatureGraph:
    """Immutable once built. Node ids index ``nodes`` (sorted tokens)."""

    def __init__(self, edges: dict, nodes=(), bipartite: bool = True):
        # edges: {(token_a, token_b): weight}, orientation ignored
        canon = {}
        for (a, b), w in edges.items():
            if a == b:
                raise DataError(f"self-loop on {a!r}")
            if not w > 0:
                raise DataError(f"non-positive weight on {a}-{b}")
            if bipartite and node_side(a) == node_side(b):
                raise DataError(f"edge {a}-{b} joins two {node_side(a)}-side nodes")
            key = (a, b) if a < b else (b, a)
            if key in canon:
                raise DataError(f"duplicate edge {a}-{b}")
            canon[key] = float(w)
        names = set(nodes)
        for a, b in canon:
            names.update((a, b))
        for t in names:
            node_side(t)
        self.bipartite = bipartite
        self.nodes = sorted(names)
        self.index = {t: i for i, t in enumerate(self.nodes)}
        nbrs = defaultdict(dict)
        for (a, b), w in canon.items():
            i, j = self.index[a], self.index[b]
            nbrs[i][j] = w
            nbrs[j][i] = w
        self.neighbors = []
        self.weights = []
        for i in range(len(self.nodes)):
            js = sorted(nbrs[i])
            self.neighbors.append(np.array(js, dtype=np.int64))
            self.weights.append(np.array([nbrs[i][j] for j in js], dtype=float))
        self.neighbor_sets = [frozenset(nbrs[i]) for i in range(len(self.nodes))]
        self._edges = canon

    def __len__(self):
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def edges(self):
        """Sorted list of ``(token_a, token_b, weight)`` with ``token_a < token_b``."""
        return [(a, b, w) for (a, b), w in sorted(self._edges.items())]

    def edge_ids(self) -> np.ndarray:
        return np.array([(self.index[a], self.index[b]) for a, b, _ in self.edges()],
                        dtype=np.int64).reshape(-1, 2)

    def has_edge(self, a: str, b: str) -> bool:
        return ((a, b) if a < b else (b, a)) in self._edges

    def weight(self, a: str, b: str) -> float:
        return self._edges[(a, b) if a < b else (b, a)]

    def degree(self, token: str) -> int:
        return len(self.neighbors[self.index[token]])

    def subgraph(self, edge_list, keep_nodes=True) -> FeatureGraph:
        """Graph with only ``edge_list`` (pairs of tokens); keeps all nodes by default."""
        sub = {(a, b): self.weight(a, b) for a, b in edge_list}
        return FeatureGraph(sub, self.nodes if keep_nodes else (), self.bipartite)

    def __eq__(self, other):
        if not isinstance(other, FeatureGraph):
            return NotImplemented
        return self.nodes == other.nodes and self._edges == other._edges

    def __repr__(self):
        return f"FeatureGraph(nodes={len(self.nodes)}, edges={self.n_edges})"


def gender_node(gender: str) -> str:
    return f"D:gender_{gender}"


def build_graph(records, vocab, weighted: bool = False, include_gender: bool = True) -> FeatureGraph:
    """Link every retained phenotype-side feature to every retained genetic
    feature of the same patient. Weights stay 1 unless ``weighted``, which
    counts co-occurring patients instead."""
    edges = defaultdict(float)
    for rec in records:
        ph, ge = retained_features(rec, vocab)
        if include_gender and "D:gender" in vocab:
            ph = ph + [gender_node(rec.gender)]
        for a in ph:
            for b in ge:
                edges[(a, b)] += 1.0
    if not weighted:
        edges = {k: 1.0 for k in edges}
    return FeatureGraph(dict(edges))


def write_edge_list(graph: FeatureGraph, path, with_weights: bool | None = None) -> None:
    """One ``<node> <node> [weight]`` per line; weights are written only when
    some edge is not 1 (or when forced by ``with_weights``)."""
    # phenotype-side node first on each line
    edges = sorted((b, a, w) if node_side(a) == "gene" and node_side(b) == "pheno" else (a, b, w)
                   for a, b, w in graph.edges())
    if with_weights is None:
        with_weights = any(w != 1.0 for _, _, w in edges)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b, w in edges:
            line = f"{escape_token(a)} {escape_token(b)}"
            if with_weights:
                line += " " + repr(float(w))  # shortest lossless decimal
            fh.write(line + "\n")


def read_edge_list(path, bipartite: bool = True) -> FeatureGraph:
    edges = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) not in (2, 3) or not all(parts):
                raise DataError(f"{path}:{lineno}: expected '<node> <node> [weight]'")
            a, b = unescape_token(parts[0]), unescape_token(parts[1])
            for t in (a, b):
                if not t.startswith(NAMESPACES):
                    raise DataError(f"{path}:{lineno}: unknown token namespace in {t!r}")
            if a == b:
                raise DataError(f"{path}:{lineno}: self-loop on {a!r}")
            try:
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad weight {parts[2]!r}") from None
            key = (a, b) if a < b else (b, a)
            if key in edges:
                raise DataError(f"{path}:{lineno}: duplicate edge {a}-{b}")
            if bipartite and node_side(a) == node_side(b):
                raise DataError(f"{path}:{lineno}: edge joins two same-side nodes")
            if not w > 0:
                raise DataError(f"{path}:{lineno}: non-positive weight")
            edges[key] = w
    return FeatureGraph(edges, bipartite=bipartite)
