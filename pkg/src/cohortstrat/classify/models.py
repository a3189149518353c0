"""From-scratch multi-class classifiers on dense numeric features.

Every model follows the same small protocol: ``fit(X, y)`` returns self,
``predict_proba(X)`` returns an ``(n, n_classes)`` array ordered as
``classes_``, and ``predict(X)`` returns labels drawn from ``classes_``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("logistic_regression", "gaussian_nb", "decision_tree", "random_forest", "feedforward_nn")

DEFAULTS = {
    "logistic_regression": {"lr": 0.5, "epochs": 300, "l2": 1e-3},
    "gaussian_nb": {"var_floor": 1e-9},
    "decision_tree": {"max_depth": 12, "min_leaf": 2, "max_features": None},
    "random_forest": {"trees": 100, "max_depth": 12, "min_leaf": 2, "max_features": "sqrt",
                      "bootstrap": True},
    "feedforward_nn": {"hidden": 64, "lr": 0.1, "epochs": 300, "l2": 1e-4},
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        p = self.resolved()
        for key in ("epochs", "trees", "max_depth", "hidden"):
            if key in p and (not isinstance(p[key], (int, np.integer)) or p[key] < (0 if key == "epochs" else 1)):
                raise ValueError(f"{self.kind}.{key} must be a positive integer")
        if "min_leaf" in p and p["min_leaf"] < 1:
            raise ValueError("min_leaf must be >= 1")
        for key in ("lr", "var_floor"):
            if key in p and not p[key] > 0:
                raise ValueError(f"{self.kind}.{key} must be positive")
        if "l2" in p and p["l2"] < 0:
            raise ValueError("l2 must be non-negative")
        mf = p.get("max_features")
        if mf is not None and mf != "sqrt" and not (isinstance(mf, (int, np.integer)) and mf >= 1):
            raise ValueError("max_features must be None, 'sqrt' or a positive integer")

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.params}

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))


def make_model(spec: ClassifierSpec, seed: int = 0):
    p = spec.resolved()
    if spec.kind == "logistic_regression":
        return LogisticRegression(**p)
    if spec.kind == "gaussian_nb":
        return GaussianNB(**p)
    if spec.kind == "decision_tree":
        return DecisionTree(seed=seed, **p)
    if spec.kind == "random_forest":
        return RandomForest(seed=seed, **p)
    return FeedforwardNN(seed=seed, **p)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class _Base:
    classes_: np.ndarray

    def _encode(self, y):
        self.classes_, codes = np.unique(np.asarray(y), return_inverse=True)
        return codes

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class LogisticRegression(_Base):
    """Multinomial logistic regression, full-batch gradient descent, L2 on weights."""

    def __init__(self, lr=0.5, epochs=300, l2=1e-3):
        self.lr, self.epochs, self.l2 = lr, epochs, l2

    def loss_and_grads(self, W, b, X, Y):
        n = len(X)
        logp = _log_softmax(X @ W + b)
        loss = -(Y * logp).sum() / n + 0.5 * self.l2 * (W * W).sum()
        d = (np.exp(logp) - Y) / n
        return loss, X.T @ d + self.l2 * W, d.sum(axis=0)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        codes = self._encode(y)
        Y = np.eye(len(self.classes_))[codes]
        self.W = np.zeros((X.shape[1], len(self.classes_)))
        self.b = np.zeros(len(self.classes_))
        self.history = []
        for _ in range(self.epochs):
            loss, gW, gb = self.loss_and_grads(self.W, self.b, X, Y)
            self.history.append(loss)
            self.W -= self.lr * gW
            self.b -= self.lr * gb
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.W + self.b

    def predict_proba(self, X):
        return softmax(self.decision_function(X))


class GaussianNB(_Base):
    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        codes = self._encode(y)
        C = len(self.classes_)
        self.theta = np.vstack([X[codes == c].mean(axis=0) for c in range(C)])
        self.var = np.maximum(np.vstack([X[codes == c].var(axis=0) for c in range(C)]),
                              self.var_floor)
        self.log_prior = np.log(np.bincount(codes, minlength=C) / len(codes))
        return self

    def joint_log_likelihood(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty((len(X), len(self.classes_)))
        for c in range(len(self.classes_)):
            out[:, c] = (self.log_prior[c] - 0.5 * np.log(2 * np.pi * self.var[c]).sum()
                         - 0.5 * (((X - self.theta[c]) ** 2) / self.var[c]).sum(axis=1))
        return out

    def predict_proba(self, X):
        return np.exp(_log_softmax(self.joint_log_likelihood(X)))


def _n_features(max_features, n):
    if max_features is None:
        return n
    if max_features == "sqrt":
        return max(1, int(np.sqrt(n)))
    return min(int(max_features), n)


class DecisionTree(_Base):
    """CART with Gini impurity; splits are ``x <= threshold`` go left."""

    def __init__(self, max_depth=12, min_leaf=2, max_features=None, seed=0):
        self.max_depth, self.min_leaf = max_depth, min_leaf
        self.max_features, self.seed = max_features, seed

    def fit(self, X, y):
        codes = self._encode(y)
        return self._fit_codes(np.asarray(X, dtype=float), codes, len(self.classes_),
                               np.random.default_rng(self.seed))

    def _fit_codes(self, X, codes, n_classes, rng):
        self.n_classes = n_classes
        Y = np.eye(n_classes)[codes]
        feat, thr, left, right, value = [], [], [], [], []

        def new_node(counts):
            feat.append(-1)
            thr.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(counts / counts.sum())
            return len(feat) - 1

        root = new_node(Y.sum(axis=0))
        stack = [(root, np.arange(len(X)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            split = self._best_split(X, Y, idx, depth, rng)
            if split is None:
                continue
            f, t = split
            mask = X[idx, f] <= t
            li, ri = idx[mask], idx[~mask]
            feat[node], thr[node] = f, t
            left[node] = new_node(Y[li].sum(axis=0))
            right[node] = new_node(Y[ri].sum(axis=0))
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))
        self.feature = np.array(feat)
        self.threshold = np.array(thr)
        self.left = np.array(left)
        self.right = np.array(right)
        self.value = np.array(value)
        return self

    def _best_split(self, X, Y, idx, depth, rng):
        n = len(idx)
        counts = Y[idx].sum(axis=0)
        if depth >= self.max_depth or n < 2 * self.min_leaf or counts.max() == n:
            return None
        varying = self._candidate_features(X, idx, rng)
        if len(varying) == 0:
            return None
        Xs = X[np.ix_(idx, varying)]
        order = np.argsort(Xs, axis=0)
        xs = np.take_along_axis(Xs, order, axis=0)
        left = np.cumsum(Y[idx][order], axis=0)[:-1]  # (n-1, m, C)
        nl = np.arange(1, n, dtype=float)[:, None]
        nr = n - nl
        right = counts - left
        impurity = (nl - (left ** 2).sum(axis=2) / nl) + (nr - (right ** 2).sum(axis=2) / nr)
        valid = (xs[1:] > xs[:-1]) & (nl >= self.min_leaf) & (nr >= self.min_leaf)
        if not valid.any():
            return None
        impurity = np.where(valid, impurity, np.inf)
        best = np.argmin(impurity)  # first minimum: lowest row, then lowest feature
        i, j = np.unravel_index(best, impurity.shape)
        parent = n - (counts ** 2).sum() / n
        if impurity[i, j] >= parent - 1e-12:
            return None
        return int(varying[j]), float((xs[i, j] + xs[i + 1, j]) / 2.0)

    def _candidate_features(self, X, idx, rng):
        """Up to ``max_features`` features that are non-constant on ``idx``,
        drawn in random order (all non-constant ones when unlimited)."""
        n_feat = X.shape[1]
        m = _n_features(self.max_features, n_feat)
        if m >= n_feat:
            Xn = X[idx]
            return np.flatnonzero(Xn.min(axis=0) < Xn.max(axis=0))
        order = rng.permutation(n_feat)
        chosen = []
        for start in range(0, n_feat, m):
            block = order[start:start + m]
            Xb = X[np.ix_(idx, block)]
            chosen.extend(block[Xb.min(axis=0) < Xb.max(axis=0)])
            if len(chosen) >= m:
                break
        return np.sort(np.array(chosen[:m], dtype=int))

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X):
        return self.value[self.apply(X)]

    @property
    def n_nodes(self):
        return len(self.feature)


class RandomForest(_Base):
    """Bagged CART trees with per-split feature subsampling."""

    def __init__(self, trees=100, max_depth=12, min_leaf=2, max_features="sqrt", bootstrap=True,
                 seed=0):
        self.trees, self.max_depth, self.min_leaf = trees, max_depth, min_leaf
        self.max_features, self.bootstrap, self.seed = max_features, bootstrap, seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        codes = self._encode(y)
        C = len(self.classes_)
        # one independent stream per tree, so results do not depend on tree order
        streams = np.random.SeedSequence(self.seed).spawn(self.trees)
        self.estimators, self.bootstrap_indices = [], []
        for ss in streams:
            rng = np.random.default_rng(ss)
            b = rng.integers(0, len(X), size=len(X)) if self.bootstrap else np.arange(len(X))
            tree = DecisionTree(self.max_depth, self.min_leaf, self.max_features)
            tree.classes_ = self.classes_
            tree._fit_codes(X[b], codes[b], C, rng)
            self.estimators.append(tree)
            self.bootstrap_indices.append(b)
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        return sum(t.predict_proba(X) for t in self.estimators) / len(self.estimators)


class FeedforwardNN(_Base):
    """One hidden ReLU layer, softmax output, full-batch gradient descent."""

    def __init__(self, hidden=64, lr=0.1, epochs=300, l2=1e-4, seed=0):
        self.hidden, self.lr, self.epochs, self.l2, self.seed = hidden, lr, epochs, l2, seed

    def init_params(self, n_in, n_out, rng):
        return {
            "W1": rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, self.hidden)),
            "b1": np.zeros(self.hidden),
            "W2": rng.normal(0.0, np.sqrt(1.0 / self.hidden), (self.hidden, n_out)),
            "b2": np.zeros(n_out),
        }

    def loss_and_grads(self, params, X, Y):
        n = len(X)
        h_pre = X @ params["W1"] + params["b1"]
        h = np.maximum(h_pre, 0.0)
        logp = _log_softmax(h @ params["W2"] + params["b2"])
        reg = 0.5 * self.l2 * ((params["W1"] ** 2).sum() + (params["W2"] ** 2).sum())
        loss = -(Y * logp).sum() / n + reg
        d2 = (np.exp(logp) - Y) / n
        dh = (d2 @ params["W2"].T) * (h_pre > 0)
        grads = {
            "W2": h.T @ d2 + self.l2 * params["W2"],
            "b2": d2.sum(axis=0),
            "W1": X.T @ dh + self.l2 * params["W1"],
            "b1": dh.sum(axis=0),
        }
        return loss, grads

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        codes = self._encode(y)
        Y = np.eye(len(self.classes_))[codes]
        self.params = self.init_params(X.shape[1], len(self.classes_),
                                       np.random.default_rng(self.seed))
        self.history = []
        for epoch in range(self.epochs):
            loss, grads = self.loss_and_grads(self.params, X, Y)
            if not np.isfinite(loss):
                raise FloatingPointError(f"feedforward loss became NaN/inf at epoch {epoch}")
            self.history.append(loss)
            for k in self.params:
                self.params[k] -= self.lr * grads[k]
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        h = np.maximum(X @ self.params["W1"] + self.params["b1"], 0.0)
        return softmax(h @ self.params["W2"] + self.params["b2"])
