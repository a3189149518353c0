"""Cohort loading, feature filtering and the multi-hot patient-feature matrix."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import CANCER_TYPES, DataError

log = logging.getLogger(__name__)

PHENOTYPE, GENETIC, DEMOGRAPHIC = "phenotype", "genetic", "demographic"
KINDS = (PHENOTYPE, GENETIC, DEMOGRAPHIC)
MUTATION_CLASSES = ("PATH", "VUS")
GENDERS = ("male", "female")
GENDER_TOKEN = "D:gender"

DEFAULT_STOPLIST = frozenset(
    {
        "cyst",
        "pain",
        "carcinoma",
        "neoplasm",
        "symptoms",
        "disease",
        "minor (disease)",
        "sarcoma - cateogry (morphologic abnormality)",
    }
)


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    phenotypes: frozenset
    mutations: frozenset  # "GENE-PATH" / "GENE-VUS"
    gender: str
    label: str

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise DataError(f"unknown gender {self.gender!r}")
        if self.label not in CANCER_TYPES:
            raise DataError(f"unknown label {self.label!r}")
        for m in self.mutations:
            split_mutation(m)

    def feature_tokens(self) -> set:
        """Namespaced tokens (``P:``/``G:``) for this patient, without gender."""
        return {"P:" + p for p in self.phenotypes} | {"G:" + m for m in self.mutations}

    def to_json(self) -> dict:
        muts = []
        for m in sorted(self.mutations):
            gene, cls = split_mutation(m)
            muts.append({"gene": gene, "class": cls})
        return {
            "patient_id": self.patient_id,
            "phenotypes": sorted(self.phenotypes),
            "mutations": muts,
            "gender": self.gender,
            "label": self.label,
        }


def split_mutation(token: str) -> tuple[str, str]:
    gene, sep, cls = token.rpartition("-")
    if not sep or not gene or cls not in MUTATION_CLASSES:
        raise DataError(f"mutation token {token!r} lacks a -PATH/-VUS suffix")
    return gene, cls


def _record_from_obj(obj) -> PatientRecord:
    if not isinstance(obj, dict):
        raise DataError("record is not a JSON object")
    try:
        pid = obj["patient_id"]
        phenos = obj["phenotypes"]
        muts = obj["mutations"]
        gender = obj["gender"]
        label = obj["label"]
    except KeyError as exc:
        raise DataError(f"missing key {exc.args[0]!r}") from None
    if not isinstance(pid, str) or not isinstance(phenos, list) or not isinstance(muts, list):
        raise DataError("bad field types")
    tokens = []
    for m in muts:
        if not isinstance(m, dict) or "gene" not in m or "class" not in m:
            raise DataError(f"bad mutation entry {m!r}")
        if m["class"] not in MUTATION_CLASSES:
            raise DataError(f"mutation class must be PATH or VUS, got {m['class']!r}")
        tokens.append(f"{m['gene']}-{m['class']}")
    return PatientRecord(pid, frozenset(str(p) for p in phenos), frozenset(tokens), gender, label)


def load_cohort(path) -> list[PatientRecord]:
    records, seen = [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = _record_from_obj(json.loads(line))
            except (json.JSONDecodeError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if rec.patient_id in seen:
                raise DataError(
                    f"{path}:{lineno}: duplicate patient_id {rec.patient_id!r} "
                    f"(first seen on line {seen[rec.patient_id]})"
                )
            seen[rec.patient_id] = lineno
            records.append(rec)
    return records


def write_cohort(records: Iterable[PatientRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def apply_stoplist(records, stoplist=DEFAULT_STOPLIST) -> list[PatientRecord]:
    stop = {s.casefold() for s in stoplist}
    if not stop:
        return list(records)
    out = []
    for rec in records:
        kept = frozenset(p for p in rec.phenotypes if p.casefold() not in stop)
        out.append(PatientRecord(rec.patient_id, kept, rec.mutations, rec.gender, rec.label))
    return out


@dataclass
class FeatureVocabulary:
    tokens: list  # id -> token
    kinds: list  # id -> kind
    counts: dict = field(default_factory=dict)  # token -> distinct patients

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("duplicate tokens in vocabulary")
        order = [KINDS.index(k) for k in self.kinds]
        if order != sorted(order):
            raise DataError("vocabulary kinds must form contiguous phenotype/genetic/demographic blocks")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index[token]

    def ids_of_kind(self, *kinds) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k in kinds]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["token", "kind", "id", "count"])
            for i, (t, k) in enumerate(zip(self.tokens, self.kinds)):
                w.writerow([t, k, i, self.counts.get(t, 0)])

    @classmethod
    def read_csv(cls, path) -> FeatureVocabulary:
        tokens, kinds, counts = [], [], {}
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), 2):
                try:
                    if int(row["id"]) != len(tokens) or row["kind"] not in KINDS:
                        raise ValueError
                    tokens.append(row["token"])
                    kinds.append(row["kind"])
                    counts[row["token"]] = int(row["count"])
                except (KeyError, TypeError, ValueError):
                    raise DataError(f"{path}:{lineno}: malformed vocabulary row") from None
        return cls(tokens, kinds, counts)


def frequency_filter(records, pheno_min: int = 20, gene_min: int = 10) -> FeatureVocabulary:
    """Keep phenotypes seen in >= ``pheno_min`` patients and genetic tokens
    seen in strictly more than ``gene_min`` patients; gender is always kept."""
    if pheno_min < 0 or gene_min < 0:
        raise ValueError("thresholds must be non-negative")
    pheno = Counter(p for r in records for p in r.phenotypes)
    gene = Counter(m for r in records for m in r.mutations)
    p_keep = sorted(p for p, c in pheno.items() if c >= pheno_min)
    g_keep = sorted(m for m, c in gene.items() if c > gene_min)
    if not p_keep and not g_keep:
        raise DataError("no phenotype or genetic feature survives the frequency thresholds")
    tokens = ["P:" + p for p in p_keep] + ["G:" + m for m in g_keep] + [GENDER_TOKEN]
    kinds = [PHENOTYPE] * len(p_keep) + [GENETIC] * len(g_keep) + [DEMOGRAPHIC]
    counts = {"P:" + p: pheno[p] for p in p_keep}
    counts.update({"G:" + m: gene[m] for m in g_keep})
    counts[GENDER_TOKEN] = sum(r.gender == "male" for r in records)
    return FeatureVocabulary(tokens, kinds, counts)


@dataclass
class LabeledMatrix:
    X: np.ndarray  # (M, N) uint8
    labels: np.ndarray  # (M,) str
    row_ids: list
    columns: list
    col_kinds: list

    @property
    def shape(self):
        return self.X.shape

    def take_rows(self, idx) -> LabeledMatrix:
        idx = np.asarray(idx, dtype=int)
        return LabeledMatrix(self.X[idx], self.labels[idx], [self.row_ids[i] for i in idx],
                             self.columns, self.col_kinds)

    def take_cols(self, idx) -> LabeledMatrix:
        idx = list(idx)
        return LabeledMatrix(self.X[:, idx], self.labels, self.row_ids,
                             [self.columns[j] for j in idx], [self.col_kinds[j] for j in idx])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "label"] + self.columns)
            for pid, lab, row in zip(self.row_ids, self.labels, self.X):
                w.writerow([pid, lab] + row.tolist())

    @classmethod
    def read_csv(cls, path, vocab: FeatureVocabulary) -> LabeledMatrix:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[2:] != vocab.tokens:
                raise DataError(f"{path}: matrix columns do not match the vocabulary")
            ids, labels, rows = [], [], []
            for row in reader:
                ids.append(row[0])
                labels.append(row[1])
                rows.append([int(v) for v in row[2:]])
        X = np.array(rows, dtype=np.uint8).reshape(len(rows), len(vocab))
        return cls(X, np.array(labels, dtype=object), ids, list(vocab.tokens), list(vocab.kinds))


def build_matrix(records, vocab: FeatureVocabulary) -> tuple[LabeledMatrix, list[str]]:
    """Multi-hot encode ``records`` over ``vocab``.

    Returns the matrix and the ids of patients dropped because none of their
    phenotype/genetic features survived filtering.
    """
    gender_col = vocab.index.get(GENDER_TOKEN)
    rows, labels, ids, dropped = [], [], [], []
    for rec in records:
        cols = [vocab.index[t] for t in rec.feature_tokens() if t in vocab.index]
        if not cols:
            dropped.append(rec.patient_id)
            continue
        row = np.zeros(len(vocab), dtype=np.uint8)
        row[cols] = 1
        if gender_col is not None and rec.gender == "male":
            row[gender_col] = 1
        rows.append(row)
        labels.append(rec.label)
        ids.append(rec.patient_id)
    if dropped:
        log.warning("dropped %d patient(s) with no retained features", len(dropped))
    X = np.vstack(rows) if rows else np.zeros((0, len(vocab)), dtype=np.uint8)
    return LabeledMatrix(X, np.array(labels, dtype=object), ids, list(vocab.tokens),
                         list(vocab.kinds)), dropped


def retained_features(rec: PatientRecord, vocab: FeatureVocabulary) -> tuple[list, list]:
    """Phenotype and genetic tokens of ``rec`` that are in ``vocab``, sorted."""
    ph = sorted(t for t in ("P:" + p for p in rec.phenotypes) if t in vocab.index)
    ge = sorted(t for t in ("G:" + m for m in rec.mutations) if t in vocab.index)
    return ph, ge
