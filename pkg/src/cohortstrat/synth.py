"""Synthetic cohorts and graphs with planted class structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import CANCER_TYPES
from .cohort import DEFAULT_STOPLIST, PatientRecord
from .feature_graph import FeatureGraph

# lung, prostate, breast, ovarian, pancreas, colon_rectum, liver
DEFAULT_CLASS_COUNTS = (223, 66, 53, 91, 104, 140, 107)
MALE_ONLY = ("prostate",)
FEMALE_ONLY = ("breast", "ovarian")


@dataclass(frozen=True)
class SynthConfig:
    patients_per_class: tuple = DEFAULT_CLASS_COUNTS
    pheno_pool: int = 239
    gene_pool: int = 328
    signal_strength: float = 0.13
    noise_rate: float = 0.012
    general_term_rate: float = 0.2  # chance of each stoplist term per patient
    seed: int = 0

    def __post_init__(self):
        if len(self.patients_per_class) != len(CANCER_TYPES):
            raise ValueError("patients_per_class needs one count per cancer type")
        if any(c < 0 for c in self.patients_per_class):
            raise ValueError("class counts must be non-negative")
        if self.pheno_pool < len(CANCER_TYPES) or self.gene_pool < len(CANCER_TYPES):
            raise ValueError("feature pools must hold at least one feature per class")
        for r in (self.signal_strength, self.noise_rate, self.general_term_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


def phenotype_names(n: int) -> list[str]:
    return [f"phenotype {i:03d}" for i in range(n)]


def gene_tokens(n: int) -> list[str]:
    return [f"GENE{i:03d}-{'PATH' if i % 2 == 0 else 'VUS'}" for i in range(n)]


def signature_blocks(pool: int, n_classes: int = len(CANCER_TYPES)) -> list[np.ndarray]:
    """Split ``range(pool)`` into ``n_classes`` contiguous, disjoint blocks."""
    return np.array_split(np.arange(pool), n_classes)


def generate(cfg: SynthConfig = SynthConfig()) -> list[PatientRecord]:
    rng = np.random.default_rng(cfg.seed)
    phenos = phenotype_names(cfg.pheno_pool)
    genes = gene_tokens(cfg.gene_pool)
    p_blocks = signature_blocks(cfg.pheno_pool)
    g_blocks = signature_blocks(cfg.gene_pool)
    general = sorted(DEFAULT_STOPLIST)

    labels = [lab for lab, n in zip(CANCER_TYPES, cfg.patients_per_class) for _ in range(n)]
    labels = [labels[i] for i in rng.permutation(len(labels))]
    records = []
    for k, label in enumerate(labels):
        c = CANCER_TYPES.index(label)
        p_prob = np.full(cfg.pheno_pool, cfg.noise_rate)
        p_prob[p_blocks[c]] = cfg.signal_strength
        g_prob = np.full(cfg.gene_pool, cfg.noise_rate)
        g_prob[g_blocks[c]] = cfg.signal_strength
        ph = {phenos[i] for i in np.flatnonzero(rng.random(cfg.pheno_pool) < p_prob)}
        ge = {genes[i] for i in np.flatnonzero(rng.random(cfg.gene_pool) < g_prob)}
        # general terms get random capitalisation to exercise case-insensitive removal
        for term, u, up in zip(general, rng.random(len(general)), rng.random(len(general))):
            if u < cfg.general_term_rate:
                ph.add(term.capitalize() if up < 0.5 else term)
        if label in MALE_ONLY:
            gender = "male"
        elif label in FEMALE_ONLY:
            gender = "female"
        else:
            gender = "male" if rng.random() < 0.5 else "female"
        records.append(PatientRecord(f"P{k:04d}", frozenset(ph), frozenset(ge), gender, label))
    return records


def expected_feature_counts(cfg: SynthConfig):
    """Expected patient counts and binomial variances per phenotype / gene token."""
    out = {}
    for names, blocks in ((phenotype_names(cfg.pheno_pool), signature_blocks(cfg.pheno_pool)),
                          (gene_tokens(cfg.gene_pool), signature_blocks(cfg.gene_pool))):
        for c, block in enumerate(blocks):
            for i in block:
                mean = var = 0.0
                for c2, n in enumerate(cfg.patients_per_class):
                    pr = cfg.signal_strength if c2 == c else cfg.noise_rate
                    mean += n * pr
                    var += n * pr * (1 - pr)
                out[names[i]] = (mean, var)
    return out


def planted_block_graph(block_size: int = 20, blocks: int = 2, p_in: float = 0.9,
                        p_out: float = 0.02, seed: int = 0):
    """Bipartite graph with ``blocks`` phenotype blocks and ``blocks`` gene
    blocks of ``block_size`` nodes each; block b's phenotypes link to block
    b's genes with probability ``p_in``, to other blocks with ``p_out``.

    Returns ``(graph, membership)`` with membership mapping token -> block.
    """
    rng = np.random.default_rng(seed)
    membership = {}
    ph, ge = [], []
    for b in range(blocks):
        for i in range(block_size):
            a, g = f"P:b{b}_{i:02d}", f"G:B{b}_{i:02d}-PATH"
            membership[a] = membership[g] = b
            ph.append(a)
            ge.append(g)
    while True:
        edges = {}
        for a in ph:
            for g in ge:
                pr = p_in if membership[a] == membership[g] else p_out
                if rng.random() < pr:
                    edges[(a, g)] = 1.0
        graph = FeatureGraph(edges, ph + ge)
        if all(len(n) for n in graph.neighbors):
            return graph, membership
