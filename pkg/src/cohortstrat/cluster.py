"""K-means, purity, exact t-SNE and per-cluster profiles."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .cohort import retained_features


@dataclass
class Clustering:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    objective: float
    history: list = field(default_factory=list)  # objective after each assignment step
    init_objective: float = float("nan")


def _sq_dists(X, C):
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _objective(X, C, a):
    return float(((X - C[a]) ** 2).sum())


def kmeans_plus_plus(X, k, rng) -> np.ndarray:
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(np.searchsorted(np.cumsum(d2) / total, rng.random(), side="right"))
            nxt = min(nxt, n - 1)
        else:
            nxt = int(rng.integers(n))
        centers.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[centers].copy()


def lloyd(X, C, max_iter=300):
    """Lloyd iterations from centroids ``C`` until the assignment is a fixpoint."""
    a = np.argmin(_sq_dists(X, C), axis=1)
    history = [_objective(X, C, a)]
    for _ in range(max_iter):
        C = C.copy()
        counts = np.bincount(a, minlength=len(C))
        for j in np.flatnonzero(counts):
            C[j] = X[a == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            # re-seed empty clusters at the points worst served by their centroid
            far = np.argsort(-((X - C[a]) ** 2).sum(axis=1), kind="stable")
            for j, i in zip(empty, far):
                C[j] = X[i]
        a_new = np.argmin(_sq_dists(X, C), axis=1)
        history.append(_objective(X, C, a_new))
        if np.array_equal(a_new, a) and not len(empty):
            a = a_new
            break
        a = a_new
    return a, C, history


def kmeans(points, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300) -> Clustering:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must lie in [1, {len(X)}]")
    best = None
    for ss in np.random.SeedSequence(seed).spawn(n_init):
        C0 = kmeans_plus_plus(X, k, np.random.default_rng(ss))
        a, C, hist = lloyd(X, C0, max_iter)
        obj = _objective(X, C, a)
        if best is None or obj < best.objective:
            best = Clustering(k, a, C, obj, hist, hist[0])
    return best


def purity(assignments, labels) -> float:
    assignments, labels = np.asarray(assignments), np.asarray(labels)
    if len(assignments) != len(labels):
        raise ValueError("assignments and labels differ in length")
    if len(labels) == 0:
        return 0.0
    total = 0
    for c in np.unique(assignments):
        _, counts = np.unique(labels[assignments == c], return_counts=True)
        total += counts.max()
    return float(total / len(labels))


def scan_k(points, labels, k_range=(2, 20), seed: int = 0, n_init: int = 10):
    """K-means for every k in the inclusive range; best purity wins, ties to smaller k.

    Returns ``(best_k, best_purity, [(k, purity), ...], {k: Clustering})``.
    """
    lo, hi = k_range
    table, fits = [], {}
    for k in range(lo, hi + 1):
        fits[k] = kmeans(points, k, seed, n_init)
        table.append((k, purity(fits[k].assignments, labels)))
    best_k, best_p = max(table, key=lambda kp: (kp[1], -kp[0]))
    return best_k, best_p, table, fits


# ---------------------------------------------------------------- t-SNE

EPS = 1e-12


def pairwise_sq_dists(X):
    s = (X * X).sum(axis=1)
    D = np.maximum(s[:, None] - 2.0 * X @ X.T + s[None, :], 0.0)
    np.fill_diagonal(D, 0.0)
    return D


def conditional_p(D, perplexity: float, tol: float = 1e-5, max_steps: int = 100):
    """Row-stochastic affinities with per-row precision set by bisection so
    each row's entropy equals ``log(perplexity)``."""
    n = len(D)
    target = np.log(perplexity)
    off = ~np.eye(n, dtype=bool)
    # P is invariant to a common rescaling of D together with beta
    D = D / max(D[off].mean(), EPS) if n > 1 else D
    beta = np.ones(n)
    lo, hi = np.zeros(n), np.full(n, np.inf)
    for _ in range(max_steps):
        logits = np.where(off, -D * beta[:, None], -np.inf)
        logits -= logits.max(axis=1, keepdims=True)
        W = np.exp(logits)
        P = W / np.maximum(W.sum(axis=1, keepdims=True), EPS)
        H = -(P * np.log(np.maximum(P, EPS))).sum(axis=1)
        diff = H - target
        if np.all(np.abs(diff) < tol):
            break
        up = diff > 0  # entropy too high: raise precision
        lo = np.where(up, beta, lo)
        hi = np.where(up, hi, beta)
        beta = np.where(np.isinf(hi), beta * 2.0, (lo + hi) / 2.0)
    return P


def joint_p(X, perplexity: float = 30.0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n = len(X)
    if not perplexity < n:
        raise ValueError(f"perplexity {perplexity} must be below the point count {n}")
    P = conditional_p(pairwise_sq_dists(X), perplexity)
    P = (P + P.T) / (2.0 * n)
    P = np.maximum(P, EPS)
    np.fill_diagonal(P, 0.0)
    return P / P.sum()


def kl_divergence(P, Y) -> float:
    num = 1.0 / (1.0 + pairwise_sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), EPS)
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / Q[mask])).sum())


@dataclass
class TSNEResult:
    Y: np.ndarray
    P: np.ndarray
    kl: dict  # iteration -> KL(P || Q)


def tsne(points, perplexity: float = 30.0, iterations: int = 1000, seed: int = 0,
         learning_rate: float = 200.0, early_exaggeration: float = 12.0,
         exaggeration_iters: int = 250, log_every: int = 50) -> TSNEResult:
    """Exact t-SNE to two dimensions with momentum and adaptive gains."""
    P = joint_p(points, perplexity)
    n = len(P)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-2, (n, 2))
    Y -= Y.mean(axis=0)
    step = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl = {}
    for it in range(1, iterations + 1):
        early = it <= exaggeration_iters
        P_eff = P * early_exaggeration if early else P
        momentum = 0.5 if early else 0.8
        num = 1.0 / (1.0 + pairwise_sq_dists(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), EPS)
        W = (P_eff - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = (grad > 0) == (step > 0)
        gains = np.maximum(np.where(same, gains * 0.8, gains + 0.2), 0.01)
        step = momentum * step - learning_rate * gains * grad
        Y = Y + step
        Y -= Y.mean(axis=0)
        if it % log_every == 0 or it in (exaggeration_iters, iterations):
            kl[it] = kl_divergence(P, Y)
    return TSNEResult(Y, P, kl)


# ---------------------------------------------------------------- profiles

def _top(counter: Counter, top_n: int):
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]


def profile_clusters(assignments, records, top_n: int = 4, vocab=None) -> list[dict]:
    """Most frequent cancer types, phenotypes and genetic features per cluster.

    With ``vocab`` only retained features are counted.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    assignments = np.asarray(assignments)
    profiles = []
    for c in np.unique(assignments):
        members = [r for r, a in zip(records, assignments) if a == c]
        cancer, pheno, gene = Counter(), Counter(), Counter()
        for r in members:
            cancer[r.label] += 1
            if vocab is None:
                pheno.update(r.phenotypes)
                gene.update(r.mutations)
            else:
                ph, ge = retained_features(r, vocab)
                pheno.update(t[2:] for t in ph)
                gene.update(t[2:] for t in ge)
        profiles.append({"cluster": int(c), "size": len(members),
                         "cancer_types": _top(cancer, top_n),
                         "phenotypes": _top(pheno, top_n),
                         "genetic": _top(gene, top_n)})
    return profiles


def write_profiles_json(profiles, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(profiles, fh, indent=2)
        fh.write("\n")


def write_scan_csv(table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "purity"])
        for k, p in table:
            w.writerow([k, f"{p:.6f}"])


def write_tsne_csv(ids, Y, labels, clusters, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "x", "y", "label", "cluster"])
        for pid, (x, y), lab, c in zip(ids, Y, labels, clusters):
            w.writerow([pid, f"{x:.6f}", f"{y:.6f}", lab, int(c)])
