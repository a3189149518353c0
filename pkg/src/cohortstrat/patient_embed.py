"""Patient vectors from feature-node embeddings, and supervised fine-tuning.

A patient is ``[R_p, R_g, R_d]``: the mean phenotype-node vector, the mean
genetic-node vector, and a gender part (a 0/1 bit by default, or the
gender node's own vector).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cohort import retained_features
from .embed.table import EmbeddingTable
from .feature_graph import gender_node

log = logging.getLogger(__name__)

GENDER_MODES = ("bit", "node")


def average_embedding(features, table: EmbeddingTable):
    """Mean vector of ``features`` found in ``table``.

    Returns ``(vector, n_missing)``; with no feature in the table the
    vector is zero and ``n_missing == len(features)``.
    """
    rows = [table.index[f] for f in features if f in table.index]
    missing = len(features) - len(rows)
    if not rows:
        return np.zeros(table.dim), missing
    return table.vectors[rows].mean(axis=0), missing


@dataclass
class PatientEmbeddings:
    ids: list
    vectors: np.ndarray
    labels: np.ndarray
    empty_pheno: list = field(default_factory=list)  # ids with zero R_p
    empty_gene: list = field(default_factory=list)  # ids with zero R_g
    missing: int = 0  # retained features absent from the node table

    def as_table(self) -> EmbeddingTable:
        return EmbeddingTable(self.ids, self.vectors)

    def with_vectors(self, vectors) -> PatientEmbeddings:
        return PatientEmbeddings(self.ids, np.asarray(vectors, dtype=float), self.labels,
                                 self.empty_pheno, self.empty_gene, self.missing)


def build_patient_embeddings(records, table: EmbeddingTable, vocab,
                             gender_mode: str = "bit") -> PatientEmbeddings:
    if gender_mode not in GENDER_MODES:
        raise ValueError(f"gender_mode must be one of {GENDER_MODES}")
    ids, rows, labels = [], [], []
    empty_p, empty_g, missing = [], [], 0
    for rec in records:
        ph, ge = retained_features(rec, vocab)
        r_p, m_p = average_embedding(ph, table)
        r_g, m_g = average_embedding(ge, table)
        missing += m_p + m_g
        if m_p == len(ph):
            empty_p.append(rec.patient_id)
        if m_g == len(ge):
            empty_g.append(rec.patient_id)
        if gender_mode == "bit":
            r_d = np.array([1.0 if rec.gender == "male" else 0.0])
        else:
            r_d = table.get(gender_node(rec.gender))
            if r_d is None:
                raise ValueError(f"table has no {gender_node(rec.gender)} vector")
        ids.append(rec.patient_id)
        rows.append(np.concatenate([r_p, r_g, r_d]))
        labels.append(rec.label)
    if empty_p or empty_g:
        log.warning("%d patient(s) without phenotype vectors, %d without genetic vectors",
                    len(empty_p), len(empty_g))
    return PatientEmbeddings(ids, np.vstack(rows), np.array(labels, dtype=object),
                             empty_p, empty_g, missing)


@dataclass(frozen=True)
class FineTuneConfig:
    hidden: int = 64
    epochs: int = 200
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.epochs < 0 or not self.learning_rate > 0:
            raise ValueError("epochs must be >= 0 and learning_rate > 0")


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def init_head(n_in, hidden, n_out, rng) -> dict:
    return {
        "W1": rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, np.sqrt(1.0 / hidden), (hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def head_loss_and_grads(E, head, Y):
    """Mean cross-entropy of the linear-ReLU-linear-softmax head over rows
    of ``E``, with gradients for the head parameters and for ``E``."""
    n = len(E)
    pre = E @ head["W1"] + head["b1"]
    h = np.maximum(pre, 0.0)
    logp = _log_softmax(h @ head["W2"] + head["b2"])
    loss = -(Y * logp).sum() / n
    d2 = (np.exp(logp) - Y) / n
    dh = (d2 @ head["W2"].T) * (pre > 0)
    grads = {"W2": h.T @ d2, "b2": d2.sum(axis=0), "W1": E.T @ dh, "b1": dh.sum(axis=0)}
    return loss, grads, dh @ head["W1"].T


@dataclass
class FineTuneResult:
    embeddings: np.ndarray
    head: dict
    classes: np.ndarray
    history: list

    def predict(self, E):
        h = np.maximum(E @ self.head["W1"] + self.head["b1"], 0.0)
        return self.classes[np.argmax(h @ self.head["W2"] + self.head["b2"], axis=1)]


def fine_tune(embeddings, labels, cfg: FineTuneConfig = FineTuneConfig()) -> FineTuneResult:
    """Full-batch gradient descent on the mean cross-entropy, updating the head
    and the patient matrix together.

    The head steps on the mean loss; each patient row steps on its own
    patient's loss (the mean-loss gradient times the cohort size), so rows
    move at a rate that does not shrink with cohort size.
    """
    E = np.array(embeddings, dtype=float, copy=True)
    classes, codes = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        raise ValueError("fine-tuning needs at least two classes")
    Y = np.eye(len(classes))[codes]
    head = init_head(E.shape[1], cfg.hidden, len(classes), np.random.default_rng(cfg.seed))
    history = []
    n = len(E)
    for epoch in range(cfg.epochs):
        loss, grads, dE = head_loss_and_grads(E, head, Y)
        if not np.isfinite(loss):
            raise FloatingPointError(f"fine-tuning loss became NaN/inf at epoch {epoch}")
        history.append(loss)
        for k in head:
            head[k] -= cfg.learning_rate * grads[k]
        E -= cfg.learning_rate * n * dE
    if cfg.epochs:
        history.append(head_loss_and_grads(E, head, Y)[0])
    return FineTuneResult(E, head, classes, history)
