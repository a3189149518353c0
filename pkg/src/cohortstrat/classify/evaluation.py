"""Stratified splitting, oversampling, cross-validation and P/R/F1 reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .. import CANCER_TYPES, DataError
from ..cohort import DEMOGRAPHIC, GENETIC, PHENOTYPE, LabeledMatrix
from .models import ClassifierSpec, make_model

log = logging.getLogger(__name__)

SUBSETS = {
    "joint": (PHENOTYPE, GENETIC, DEMOGRAPHIC),
    "phenotypic": (PHENOTYPE, DEMOGRAPHIC),
    "genetic": (GENETIC, DEMOGRAPHIC),
}


def _class_rows(labels):
    labels = np.asarray(labels)
    return {c: np.flatnonzero(labels == c) for c in np.unique(labels)}


def stratified_split_indices(labels, train_frac: float = 0.7, seed: int = 0):
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c, rows in _class_rows(labels).items():
        if len(rows) < 2:
            raise DataError(f"class {c!r} has fewer than 2 patients; cannot split")
        rows = rng.permutation(rows)
        k = min(max(int(round(len(rows) * train_frac)), 1), len(rows) - 1)
        train.extend(rows[:k])
        test.extend(rows[k:])
    return np.sort(train), np.sort(test)


def split_train_test(matrix: LabeledMatrix, train_frac: float = 0.7, seed: int = 0):
    tr, te = stratified_split_indices(matrix.labels, train_frac, seed)
    return matrix.take_rows(tr), matrix.take_rows(te)


def oversample_indices(labels, seed: int = 0) -> np.ndarray:
    """Original row indices plus minority-class rows drawn with replacement
    until every class reaches the majority count."""
    rng = np.random.default_rng(seed)
    groups = _class_rows(labels)
    if not groups:
        raise DataError("cannot oversample an empty training set")
    target = max(len(r) for r in groups.values())
    extra = [rng.choice(rows, size=target - len(rows), replace=True)
             for rows in groups.values() if len(rows) < target]
    return np.concatenate([np.arange(len(labels))] + extra).astype(int)


def oversample(train: LabeledMatrix, seed: int = 0) -> LabeledMatrix:
    return train.take_rows(oversample_indices(train.labels, seed))


def stratified_folds(labels, folds: int, seed: int = 0) -> np.ndarray:
    """Fold id per row; each class is dealt round-robin after shuffling."""
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=int)
    offset = 0
    for _, rows in sorted(_class_rows(labels).items()):
        rows = rng.permutation(rows)
        fold_of[rows] = (np.arange(len(rows)) + offset) % folds
        offset += len(rows)
    return fold_of


@dataclass
class EvalReport:
    classes: list
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray  # rows = true, cols = predicted
    subset: str = "joint"
    model: str = ""

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())

    @property
    def accuracy(self):
        return float(np.trace(self.confusion) / max(self.confusion.sum(), 1))

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "subset": self.subset,
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1},
            "accuracy": self.accuracy,
            "per_class": {c: {"precision": float(p), "recall": float(r), "f1": float(f),
                              "support": int(s)}
                          for c, p, r, f, s in zip(self.classes, self.precision, self.recall,
                                                   self.f1, self.support)},
            "confusion": self.confusion.tolist(),
        }


def evaluate(y_true, y_pred, classes=CANCER_TYPES, subset="joint", model="") -> EvalReport:
    """Per-class and macro precision/recall/F1 over the classes present in ``y_true``.

    The confusion matrix always spans ``classes``; classes absent from the
    test labels are excluded from the macro averages.
    """
    classes = list(classes)
    pos = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        cm[pos[t], pos[p]] += 1
    present = cm.sum(axis=1) > 0
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0).astype(float)
    true_tot = cm.sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        rec = np.where(true_tot > 0, tp / true_tot, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    keep = np.flatnonzero(present)
    return EvalReport([classes[i] for i in keep], prec[keep], rec[keep], f1[keep],
                      true_tot[keep].astype(int), cm, subset, model)


def fit_predict(spec: ClassifierSpec, X_train, y_train, X_test, seed: int = 0):
    model = make_model(spec, seed).fit(X_train, y_train)
    return model.predict(X_test)


def cross_validate(train: LabeledMatrix, spec_grid, folds: int = 10, seed: int = 0,
                   return_scores: bool = False):
    """Pick the grid entry with the best mean macro-F1 over stratified folds.

    Oversampling is applied to each fold's training part only. Ties go to
    the earlier entry in ``spec_grid``.
    """
    spec_grid = list(spec_grid)
    if not spec_grid:
        raise ValueError("empty hyperparameter grid")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    smallest = min(len(r) for r in _class_rows(train.labels).values())
    if smallest < folds:
        log.warning("smallest class has %d rows; reducing folds from %d", smallest, folds)
        folds = smallest
    if folds < 2:
        raise DataError("a class has a single training row; cross-validation impossible")
    fold_of = stratified_folds(train.labels, folds, seed)
    scores = np.zeros((len(spec_grid), folds))
    for f in range(folds):
        tr, va = np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)
        os = tr[oversample_indices(train.labels[tr], seed + f)]
        for s, spec in enumerate(spec_grid):
            pred = fit_predict(spec, train.X[os], train.labels[os], train.X[va], seed)
            scores[s, f] = evaluate(train.labels[va], pred).macro_f1
    means = scores.mean(axis=1)
    best = spec_grid[int(np.argmax(means))]
    return (best, means) if return_scores else best


def subset_columns(matrix: LabeledMatrix, subset: str) -> list[int]:
    kinds = SUBSETS[subset]
    return [j for j, k in enumerate(matrix.col_kinds) if k in kinds]


def run_pipeline(matrix: LabeledMatrix, spec_or_grid, train_idx, test_idx, seed=0,
                 folds=10, subset="joint") -> EvalReport:
    """Oversample the training rows, optionally tune by CV, fit, and score the test rows."""
    train, test = matrix.take_rows(train_idx), matrix.take_rows(test_idx)
    if isinstance(spec_or_grid, ClassifierSpec):
        spec = spec_or_grid
    elif len(spec_or_grid) == 1:
        spec = spec_or_grid[0]
    else:
        spec = cross_validate(train, spec_or_grid, folds, seed)
    os = oversample(train, seed)
    pred = fit_predict(spec, os.X, os.labels, test.X, seed)
    return evaluate(test.labels, pred, subset=subset, model=spec.kind)


def compare_feature_subsets(matrix: LabeledMatrix, spec_or_grid, seed: int = 0,
                            train_frac: float = 0.7, folds: int = 10) -> dict:
    """Joint, phenotypic(+gender) and genetic(+gender) runs on one shared row split."""
    train_idx, test_idx = stratified_split_indices(matrix.labels, train_frac, seed)
    reports = {}
    for name in SUBSETS:
        sub = matrix.take_cols(subset_columns(matrix, name))
        reports[name] = run_pipeline(sub, spec_or_grid, train_idx, test_idx, seed, folds, name)
        reports[name].train_idx, reports[name].test_idx = train_idx, test_idx
    return reports


def write_reports_json(reports, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_overall_table(reports, path) -> None:
    """Rows = model; columns = subset x {precision, recall, f1} (macro)."""
    models = list(dict.fromkeys(r.model for r in reports))
    by_key = {(r.model, r.subset): r for r in reports}
    header = ["model"] + [f"{s}_{m}" for s in SUBSETS for m in ("precision", "recall", "f1")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for model in models:
            row = [model]
            for s in SUBSETS:
                r = by_key.get((model, s))
                vals = (r.macro_precision, r.macro_recall, r.macro_f1) if r else ("", "", "")
                row.extend(f"{v:.4f}" if v != "" else "" for v in vals)
            w.writerow(row)


def write_per_class_table(reports, path, subset="joint") -> None:
    """Rows = model; columns = per-cancer F1 for one feature subset."""
    chosen = [r for r in reports if r.subset == subset]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model"] + list(CANCER_TYPES))
        for r in chosen:
            f1 = dict(zip(r.classes, r.f1))
            w.writerow([r.model] + [f"{f1[c]:.4f}" if c in f1 else "" for c in CANCER_TYPES])
