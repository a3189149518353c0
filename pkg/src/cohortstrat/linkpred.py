"""Link-prediction evaluation of node embeddings.

Edges are split 60/10/30 into train/validation/test, embeddings are
trained on the train subgraph only, node pairs are turned into edge
features by a symmetric operator, and a classifier separating edges from
sampled non-edges is scored by ROC AUC.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import DataError
from .classify.models import ClassifierSpec, make_model
from .embed import embed_graph
from .feature_graph import FeatureGraph, node_side

log = logging.getLogger(__name__)

OPERATORS = ("average", "hadamard", "l1", "l2")
SPLIT_FRACTIONS = (0.6, 0.1, 0.3)
DEFAULT_CLASSIFIER = ClassifierSpec("random_forest", {"trees": 30, "max_depth": 10})


def edge_embed(op: str, u, v) -> np.ndarray:
    """Symmetric edge feature from node vectors; works row-wise on 2-D input."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if op == "average":
        return (u + v) / 2.0
    if op == "hadamard":
        return u * v
    if op == "l1":
        return np.abs(u - v)
    if op == "l2":
        return (u - v) ** 2
    raise ValueError(f"unknown edge operator {op!r}; expected one of {OPERATORS}")


@dataclass
class EdgeSplit:
    train_edges: list
    valid_edges: list
    test_edges: list
    train_neg: list
    valid_neg: list
    test_neg: list
    train_graph: FeatureGraph = field(repr=False)

    def pairs(self, part: str):
        """Node pairs and 0/1 labels (positives first) for ``train``/``valid``/``test``."""
        pos, neg = getattr(self, f"{part}_edges"), getattr(self, f"{part}_neg")
        return pos + neg, np.r_[np.ones(len(pos)), np.zeros(len(neg))]

    def to_json(self) -> dict:
        return {k: [list(e) for e in getattr(self, k)]
                for k in ("train_edges", "valid_edges", "test_edges",
                          "train_neg", "valid_neg", "test_neg")}


def split_sizes(n_edges: int, fractions=SPLIT_FRACTIONS) -> tuple[int, int, int]:
    n_train = int(round(n_edges * fractions[0]))
    n_valid = int(round(n_edges * fractions[1]))
    return n_train, n_valid, n_edges - n_train - n_valid


def _non_edges(graph: FeatureGraph) -> np.ndarray:
    """All absent node-id pairs ``(i, j)``, ``i < j``, respecting bipartite sides."""
    n = len(graph)
    adj = np.zeros((n, n), dtype=bool)
    e = graph.edge_ids()
    adj[e[:, 0], e[:, 1]] = adj[e[:, 1], e[:, 0]] = True
    i, j = np.triu_indices(n, k=1)
    keep = ~adj[i, j]
    if graph.bipartite:
        side = np.array([node_side(t) == "gene" for t in graph.nodes])
        keep &= side[i] != side[j]
    return np.stack([i[keep], j[keep]], axis=1)


def split_edges(graph: FeatureGraph, seed: int = 0, fractions=SPLIT_FRACTIONS,
                max_retries: int = 100) -> EdgeSplit:
    edges = [(a, b) for a, b, _ in graph.edges()]
    n_train, n_valid, _ = split_sizes(len(edges), fractions)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        perm = rng.permutation(len(edges))
        train = [edges[k] for k in perm[:n_train]]
        covered = {t for e in train for t in e}
        if len(covered) == len(graph):
            break
    else:
        raise DataError(f"could not split {len(edges)} edges so every node keeps a training "
                        f"edge after {max_retries} tries; use a denser graph")
    valid = [edges[k] for k in perm[n_train:n_train + n_valid]]
    test = [edges[k] for k in perm[n_train + n_valid:]]

    cand = _non_edges(graph)
    if len(cand) < len(edges):
        raise DataError(f"graph has {len(cand)} candidate non-edges but {len(edges)} edges; "
                        "balanced negatives are impossible")
    pick = cand[rng.choice(len(cand), size=len(edges), replace=False)]
    neg = [(graph.nodes[i], graph.nodes[j]) for i, j in pick]
    train_neg, valid_neg = neg[:len(train)], neg[len(train):len(train) + len(valid)]
    test_neg = neg[len(train) + len(valid):]
    return EdgeSplit(train, valid, test, train_neg, valid_neg, test_neg, graph.subgraph(train))


def roc_auc(labels, scores) -> float:
    """Mann-Whitney rank statistic; tied scores count one half."""
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative examples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(labels, scores):
    """``(fpr, tpr)`` arrays from (0, 0) to (1, 1), one point per distinct score."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    tp, fp = np.cumsum(lab), np.cumsum(~lab)
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tpr = np.r_[0.0, tp[last] / max(lab.sum(), 1)]
    fpr = np.r_[0.0, fp[last] / max((~lab).sum(), 1)]
    return fpr, tpr


def edge_features(table, pairs, op: str) -> np.ndarray:
    idx_a = [table.index[a] for a, _ in pairs]
    idx_b = [table.index[b] for _, b in pairs]
    return edge_embed(op, table.vectors[idx_a], table.vectors[idx_b])


@dataclass
class OperatorResult:
    operator: str
    classifier: ClassifierSpec
    valid_auc: float
    test_auc: float
    fpr: np.ndarray
    tpr: np.ndarray


def evaluate_link_prediction(table, split: EdgeSplit, op: str, clf=DEFAULT_CLASSIFIER,
                             seed: int = 0, shuffle: str | None = None) -> OperatorResult:
    """Fit ``clf`` (one spec or a list, picked on validation AUC) on operator
    features of train pairs; report validation and test AUC plus the test ROC.

    ``shuffle="test"`` permutes the test labels against the scores and
    ``shuffle="train"`` permutes the training labels; both are null controls.
    """
    if op not in OPERATORS:
        raise ValueError(f"unknown edge operator {op!r}")
    specs = [clf] if isinstance(clf, ClassifierSpec) else list(clf)
    for s in specs:
        if not isinstance(s, ClassifierSpec):
            raise ValueError(f"not a classifier spec: {s!r}")
    tr_pairs, y_tr = split.pairs("train")
    va_pairs, y_va = split.pairs("valid")
    te_pairs, y_te = split.pairs("test")
    X_tr = edge_features(table, tr_pairs, op)
    if shuffle not in (None, "train", "test"):
        raise ValueError("shuffle must be None, 'train' or 'test'")
    if shuffle == "train":
        y_tr = np.random.default_rng(seed).permutation(y_tr)
    elif shuffle == "test":
        y_te = np.random.default_rng(seed).permutation(y_te)
    X_va, X_te = edge_features(table, va_pairs, op), edge_features(table, te_pairs, op)
    best = None
    for spec in specs:
        model = make_model(spec, seed).fit(X_tr, y_tr)
        pos_col = list(model.classes_).index(1.0) if 1.0 in model.classes_ else None
        def score(X):
            return np.zeros(len(X)) if pos_col is None else model.predict_proba(X)[:, pos_col]
        v_auc = roc_auc(y_va, score(X_va)) if len(split.valid_edges) else float("nan")
        if best is None or v_auc > best[0]:
            best = (v_auc, spec, score(X_te))
    v_auc, spec, s_te = best
    fpr, tpr = roc_curve(y_te, s_te)
    return OperatorResult(op, spec, v_auc, roc_auc(y_te, s_te), fpr, tpr)


def run_link_prediction(graph: FeatureGraph, walk_cfg, train_cfg, seed: int = 0,
                        operators=OPERATORS, clf=DEFAULT_CLASSIFIER):
    """Split, train embeddings on the train subgraph, evaluate every operator.

    Returns ``(split, table, {operator: OperatorResult})``.
    """
    split = split_edges(graph, seed)
    table = embed_graph(split.train_graph, walk_cfg, train_cfg)
    results = {op: evaluate_link_prediction(table, split, op, clf, seed) for op in operators}
    return split, table, results


def best_operator(results: dict) -> str:
    """Operator with the highest validation AUC (ties: listed order)."""
    return max(results, key=lambda op: (results[op].valid_auc, -OPERATORS.index(op)))


def write_roc_csv(results: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["operator", "fpr", "tpr"])
        for op, r in results.items():
            for f, t in zip(r.fpr, r.tpr):
                w.writerow([op, f"{f:.6f}", f"{t:.6f}"])


def write_auc_json(results: dict, path) -> None:
    summary = {op: r.test_auc for op, r in results.items()}
    payload = {"test_auc": summary,
               "valid_auc": {op: r.valid_auc for op, r in results.items()},
               "selected_operator": best_operator(results),
               "classifier": {op: r.classifier.to_json() for op, r in results.items()}}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
