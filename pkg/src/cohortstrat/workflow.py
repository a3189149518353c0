"""Stage runners, run configuration and manifests for the command-line workflow.

Every stage writes its artifacts under the work directory and a manifest
``manifests/<stage>.json`` recording its config hash, seed, input and
output file hashes, and the config hashes of the stages it consumed. A
stage's config hash covers its own settings and its upstream hashes, so
re-running an upstream stage with new settings invalidates everything
downstream of it.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np

from . import DataError
from .classify.evaluation import (compare_feature_subsets, write_overall_table,
                                  write_per_class_table, write_reports_json)
from .classify.models import ClassifierSpec
from .cluster import profile_clusters, scan_k, tsne, write_profiles_json, write_tsne_csv
from .cohort import (DEFAULT_STOPLIST, FeatureVocabulary, LabeledMatrix, apply_stoplist,
                     build_matrix, frequency_filter, load_cohort, write_cohort)
from .embed import (EmbeddingTable, TrainConfig, WalkConfig, read_emb, sample_walks,
                    train_skipgram, write_emb, write_walks)
from .feature_graph import build_graph, read_edge_list, write_edge_list
from .linkpred import OPERATORS, run_link_prediction, write_auc_json, write_roc_csv
from .patient_embed import FineTuneConfig, build_patient_embeddings, fine_tune
from .synth import SynthConfig, generate
from .textio import sha256_file

log = logging.getLogger(__name__)

WORKDIR_ENV = "COHORTSTRAT_WORKDIR"

DEFAULT_CONFIG = {
    "seed": 0,
    "synth": {
        "patients_per_class": list(SynthConfig.patients_per_class),
        "pheno_pool": SynthConfig.pheno_pool,
        "gene_pool": SynthConfig.gene_pool,
        "signal_strength": SynthConfig.signal_strength,
        "noise_rate": SynthConfig.noise_rate,
        "general_term_rate": SynthConfig.general_term_rate,
    },
    "preprocess": {"cohort": None, "stoplist": None, "pheno_min": 20, "gene_min": 10},
    "graph": {"weighted": False},
    "walk": {"p": 0.5, "q": 0.5, "walks_per_node": 5, "walk_length": 10},
    "train": {"dim": 100, "window": 10, "epochs": 5, "learning_rate": 0.025, "negative": 0,
              "dump_walks": False},
    "linkpred": {"operators": list(OPERATORS),
                 "classifiers": [{"kind": "random_forest",
                                  "params": {"trees": 30, "max_depth": 10}}]},
    "classify": {
        "models": ["logistic_regression", "gaussian_nb", "decision_tree", "random_forest",
                   "feedforward_nn"],
        "grids": {
            "logistic_regression": [{"l2": 1e-3}, {"l2": 1e-2}],
            "decision_tree": [{"max_depth": 6}, {"max_depth": 12}],
        },
        "train_frac": 0.7,
        "folds": 10,
    },
    "patient_embed": {"gender_mode": "bit"},
    "finetune": {"hidden": 64, "epochs": 200, "learning_rate": 0.05},
    "cluster": {"k_min": 2, "k_max": 20, "n_init": 10, "perplexity": 30.0,
                "iterations": 1000, "cluster_on": "embedding", "top_n": 4},
}

# stage -> (config sections it depends on, prerequisite stages)
STAGES = {
    "synth": (("synth",), ()),
    "preprocess": (("preprocess",), ("synth",)),
    "graph": (("graph",), ("preprocess",)),
    "embed": (("walk", "train"), ("graph",)),
    "linkpred": (("walk", "train", "linkpred"), ("graph",)),
    "classify": (("classify",), ("preprocess",)),
    "patient-embed": (("patient_embed",), ("preprocess", "embed")),
    "finetune": (("finetune",), ("preprocess", "patient-embed")),
    "cluster": (("cluster",), ("preprocess", "patient-embed", "finetune")),
    "report": ((), ("linkpred", "classify", "cluster")),
}
ORDER = list(STAGES)

PATHS = {
    "cohort": "cohort.jsonl",
    "records": "preprocess/records.jsonl",
    "vocab": "preprocess/vocab.csv",
    "matrix": "preprocess/matrix.csv",
    "dropped": "preprocess/dropped.txt",
    "graph": "graph/graph.txt",
    "features_emb": "embed/features.emb",
    "walks": "embed/walks.txt",
    "roc": "linkpred/roc.csv",
    "auc": "linkpred/auc.json",
    "split": "linkpred/split.json",
    "lp_emb": "linkpred/train_graph.emb",
    "cls_json": "classify/reports.json",
    "cls_overall": "classify/overall.csv",
    "cls_per_class": "classify/per_class.csv",
    "patients_emb": "patient_embed/patients.emb",
    "patients_ft_emb": "finetune/patients_finetuned.emb",
    "ft_history": "finetune/loss.csv",
    "scan": "cluster/scan.csv",
    "purity": "cluster/purity.csv",
    "tsne_cfemb": "cluster/tsne_cfemb.csv",
    "tsne_cfemb_plus": "cluster/tsne_cfemb_plus.csv",
    "tsne_kl": "cluster/tsne_kl.json",
    "profiles": "cluster/profiles.json",
}


class PrerequisiteError(DataError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "grids":
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise DataError(f"unknown config sections: {sorted(unknown)}")
        cfg = deep_merge(cfg, user)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    return cfg


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


class Workdir:
    def __init__(self, root, cfg: dict):
        self.root = Path(root)
        self.cfg = cfg
        self.seed = int(cfg["seed"])

    def path(self, key: str) -> Path:
        return self.root / PATHS[key]

    def rel(self, p: Path) -> str:
        return Path(p).relative_to(self.root).as_posix()

    def manifest_path(self, stage: str) -> Path:
        return self.root / "manifests" / f"{stage}.json"

    def read_manifest(self, stage: str):
        p = self.manifest_path(stage)
        if not p.exists():
            return None
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)

    def prerequisites(self, stage: str) -> list[str]:
        pre = list(STAGES[stage][1])
        if stage == "preprocess" and self.cfg["preprocess"].get("cohort"):
            pre.remove("synth")
        return pre

    def check_upstream(self, stage: str) -> dict:
        """Validate prerequisite manifests; returns ``{stage: config_hash}``."""
        upstream = {}
        for pre in self.prerequisites(stage):
            man = self.read_manifest(pre)
            if man is None:
                raise PrerequisiteError(
                    f"`{stage}` needs the outputs of `{pre}`; run `cohortstrat {pre}` first")
            for rel, digest in man["outputs"].items():
                f = self.root / rel
                if not f.exists():
                    raise PrerequisiteError(f"{rel} listed by `{pre}` is missing; rerun `{pre}`")
                if sha256_file(f) != digest:
                    raise DataError(f"{rel} was modified after `{pre}` wrote it; rerun `{pre}`")
            for up, h in man.get("upstream", {}).items():
                cur = self.read_manifest(up)
                if cur is None or cur["config_hash"] != h:
                    raise DataError(
                        f"config-hash mismatch: `{pre}` was built from a different `{up}` run; "
                        f"rerun `{pre}`")
            upstream[pre] = man["config_hash"]
        return upstream

    def stage_config(self, stage: str) -> dict:
        sections = STAGES[stage][0]
        return {s: self.cfg[s] for s in sections}

    def write_manifest(self, stage: str, upstream: dict, outputs, inputs=(), extra_inputs=None):
        config = self.stage_config(stage)
        ext = extra_inputs or {}
        config_hash = _hash_obj({"stage": stage, "config": config, "seed": self.seed,
                                 "upstream": upstream, "external": ext})
        man = {
            "stage": stage,
            "config_hash": config_hash,
            "seed": self.seed,
            "config": config,
            "upstream": upstream,
            "inputs": {**{self.rel(p): sha256_file(p) for p in inputs}, **ext},
            "outputs": {self.rel(p): sha256_file(p) for p in outputs},
        }
        p = self.manifest_path(stage)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return man

    def mkdirs(self, *keys):
        for k in keys:
            self.path(k).parent.mkdir(parents=True, exist_ok=True)


# ------------------------------------------------------------------ stages

def _records_for(wd: Workdir):
    return load_cohort(wd.path("records"))


def run_synth(wd: Workdir):
    up = wd.check_upstream("synth")
    c = wd.cfg["synth"]
    cfg = SynthConfig(patients_per_class=tuple(c["patients_per_class"]), pheno_pool=c["pheno_pool"],
                      gene_pool=c["gene_pool"], signal_strength=c["signal_strength"],
                      noise_rate=c["noise_rate"], general_term_rate=c["general_term_rate"],
                      seed=wd.seed)
    wd.mkdirs("cohort")
    write_cohort(generate(cfg), wd.path("cohort"))
    return wd.write_manifest("synth", up, [wd.path("cohort")])


def _read_stoplist(path):
    if path is None:
        return DEFAULT_STOPLIST
    with open(path, encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip()}


def run_preprocess(wd: Workdir):
    up = wd.check_upstream("preprocess")
    c = wd.cfg["preprocess"]
    src = Path(c["cohort"]) if c.get("cohort") else wd.path("cohort")
    if not src.exists():
        raise DataError(f"cohort file {src} does not exist")
    extra = {f"external:{src}": sha256_file(src)} if c.get("cohort") else {}
    if c.get("stoplist"):
        extra[f"external:{c['stoplist']}"] = sha256_file(c["stoplist"])
    records = apply_stoplist(load_cohort(src), _read_stoplist(c.get("stoplist")))
    vocab = frequency_filter(records, c["pheno_min"], c["gene_min"])
    matrix, dropped = build_matrix(records, vocab)
    keep = set(matrix.row_ids)
    wd.mkdirs("records")
    write_cohort([r for r in records if r.patient_id in keep], wd.path("records"))
    vocab.write_csv(wd.path("vocab"))
    matrix.write_csv(wd.path("matrix"))
    with open(wd.path("dropped"), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(pid + "\n" for pid in dropped)
    inputs = [] if c.get("cohort") else [src]
    return wd.write_manifest("preprocess", up,
                             [wd.path(k) for k in ("records", "vocab", "matrix", "dropped")],
                             inputs, extra)


def run_graph(wd: Workdir):
    up = wd.check_upstream("graph")
    vocab = FeatureVocabulary.read_csv(wd.path("vocab"))
    graph = build_graph(_records_for(wd), vocab, weighted=wd.cfg["graph"]["weighted"])
    wd.mkdirs("graph")
    write_edge_list(graph, wd.path("graph"))
    log.info("feature graph: %d nodes, %d edges", len(graph), graph.n_edges)
    return wd.write_manifest("graph", up, [wd.path("graph")], [wd.path("records"), wd.path("vocab")])


def walk_config(wd: Workdir) -> WalkConfig:
    w = wd.cfg["walk"]
    return WalkConfig(w["p"], w["q"], w["walks_per_node"], w["walk_length"], wd.seed)


def train_config(wd: Workdir) -> TrainConfig:
    t = wd.cfg["train"]
    return TrainConfig(t["dim"], t["window"], t["epochs"], t["learning_rate"], wd.seed,
                       t["negative"])


def run_embed(wd: Workdir):
    up = wd.check_upstream("embed")
    graph = read_edge_list(wd.path("graph"))
    walks = sample_walks(graph, walk_config(wd))
    table = train_skipgram(walks, train_config(wd), graph.nodes)
    wd.mkdirs("features_emb")
    write_emb(table, wd.path("features_emb"))
    outputs = [wd.path("features_emb")]
    if wd.cfg["train"].get("dump_walks"):
        write_walks(walks, wd.path("walks"))
        outputs.append(wd.path("walks"))
    return wd.write_manifest("embed", up, outputs, [wd.path("graph")])


def run_linkpred(wd: Workdir):
    up = wd.check_upstream("linkpred")
    c = wd.cfg["linkpred"]
    specs = [ClassifierSpec(s["kind"], s.get("params", {})) for s in c["classifiers"]]
    graph = read_edge_list(wd.path("graph"))
    split, table, results = run_link_prediction(graph, walk_config(wd), train_config(wd), wd.seed,
                                                c["operators"], specs)
    wd.mkdirs("roc")
    write_roc_csv(results, wd.path("roc"))
    write_auc_json(results, wd.path("auc"))
    write_emb(table, wd.path("lp_emb"))
    with open(wd.path("split"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(split.to_json(), fh)
        fh.write("\n")
    for op, r in results.items():
        log.info("link prediction %-8s valid AUC %.3f  test AUC %.3f", op, r.valid_auc, r.test_auc)
    return wd.write_manifest("linkpred", up,
                             [wd.path(k) for k in ("roc", "auc", "lp_emb", "split")],
                             [wd.path("graph")])


def run_classify(wd: Workdir):
    up = wd.check_upstream("classify")
    c = wd.cfg["classify"]
    vocab = FeatureVocabulary.read_csv(wd.path("vocab"))
    matrix = LabeledMatrix.read_csv(wd.path("matrix"), vocab)
    reports = []
    for kind in c["models"]:
        grid = [ClassifierSpec(kind, p) for p in c["grids"].get(kind, [{}])]
        res = compare_feature_subsets(matrix, grid, wd.seed, c["train_frac"], c["folds"])
        for subset, rep in res.items():
            log.info("%-20s %-10s macro-F1 %.3f", kind, subset, rep.macro_f1)
        reports.extend(res.values())
    wd.mkdirs("cls_json")
    write_reports_json(reports, wd.path("cls_json"))
    write_overall_table(reports, wd.path("cls_overall"))
    write_per_class_table(reports, wd.path("cls_per_class"))
    return wd.write_manifest("classify", up,
                             [wd.path(k) for k in ("cls_json", "cls_overall", "cls_per_class")],
                             [wd.path("vocab"), wd.path("matrix")])


def run_patient_embed(wd: Workdir):
    up = wd.check_upstream("patient-embed")
    vocab = FeatureVocabulary.read_csv(wd.path("vocab"))
    table = read_emb(wd.path("features_emb"))
    pe = build_patient_embeddings(_records_for(wd), table, vocab,
                                  wd.cfg["patient_embed"]["gender_mode"])
    wd.mkdirs("patients_emb")
    write_emb(pe.as_table(), wd.path("patients_emb"))
    return wd.write_manifest("patient-embed", up, [wd.path("patients_emb")],
                             [wd.path("records"), wd.path("vocab"), wd.path("features_emb")])


def _labels_by_id(wd: Workdir):
    return {r.patient_id: r.label for r in _records_for(wd)}


def run_finetune(wd: Workdir):
    up = wd.check_upstream("finetune")
    c = wd.cfg["finetune"]
    table = read_emb(wd.path("patients_emb"))
    labels = _labels_by_id(wd)
    y = np.array([labels[t] for t in table.tokens], dtype=object)
    res = fine_tune(table.vectors, y, FineTuneConfig(c["hidden"], c["epochs"], c["learning_rate"],
                                                     wd.seed))
    wd.mkdirs("patients_ft_emb")
    write_emb(EmbeddingTable(table.tokens, res.embeddings), wd.path("patients_ft_emb"))
    with open(wd.path("ft_history"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "cross_entropy"])
        for i, loss in enumerate(res.history):
            w.writerow([i, f"{loss:.8f}"])
    return wd.write_manifest("finetune", up, [wd.path("patients_ft_emb"), wd.path("ft_history")],
                             [wd.path("patients_emb"), wd.path("records")])


def run_cluster(wd: Workdir):
    up = wd.check_upstream("cluster")
    c = wd.cfg["cluster"]
    if c["cluster_on"] not in ("embedding", "tsne"):
        raise DataError("cluster.cluster_on must be 'embedding' or 'tsne'")
    records = {r.patient_id: r for r in _records_for(wd)}
    vocab = FeatureVocabulary.read_csv(wd.path("vocab"))
    methods = {"CFEmb": (wd.path("patients_emb"), "tsne_cfemb"),
               "CFEmb+": (wd.path("patients_ft_emb"), "tsne_cfemb_plus")}
    scans, best, kl = {}, {}, {}
    for name, (emb_path, tsne_key) in methods.items():
        table = read_emb(emb_path)
        labels = np.array([records[t].label for t in table.tokens], dtype=object)
        perplexity = min(c["perplexity"], (len(table) - 1) / 3.0)
        ts = tsne(table.vectors, perplexity, c["iterations"], wd.seed)
        kl[name] = {str(k): v for k, v in ts.kl.items()}
        points = table.vectors if c["cluster_on"] == "embedding" else ts.Y
        k_hi = min(c["k_max"], len(table))
        bk, bp, scan, fits = scan_k(points, labels, (c["k_min"], k_hi), wd.seed, c["n_init"])
        scans[name], best[name] = scan, (bk, bp)
        wd.mkdirs(tsne_key)
        write_tsne_csv(table.tokens, ts.Y, labels, fits[bk].assignments, wd.path(tsne_key))
        if name == "CFEmb+":
            members = [records[t] for t in table.tokens]
            write_profiles_json(profile_clusters(fits[bk].assignments, members, c["top_n"], vocab),
                                wd.path("profiles"))
    with open(wd.path("scan"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "k", "purity"])
        for name, scan in scans.items():
            for k, p in scan:
                w.writerow([name, k, f"{p:.6f}"])
    with open(wd.path("purity"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "k", "purity"])
        for name, (k, p) in best.items():
            w.writerow([name, k, f"{p:.6f}"])
    with open(wd.path("tsne_kl"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(kl, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = [wd.path(k) for k in ("scan", "purity", "tsne_cfemb", "tsne_cfemb_plus",
                                    "tsne_kl", "profiles")]
    return wd.write_manifest("cluster", up, outputs,
                             [wd.path("patients_emb"), wd.path("patients_ft_emb"),
                              wd.path("records")])


REPORT_FILES = ("table1_overall.csv", "table2_per_class.csv", "roc.csv", "auc.json",
                "purity.csv", "purity_scan.csv", "profiles.json", "tsne.csv", "tsne_cfemb.csv",
                "roc.svg", "purity_scan.svg", "tsne.svg", "tsne_cfemb.svg")


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _write_rows(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def run_report(wd: Workdir):
    from . import plotting

    up = wd.check_upstream("report")
    out = wd.root / "report"
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(_read_csv(wd.path("cls_overall")), out / "table1_overall.csv")
    _write_rows(_read_csv(wd.path("cls_per_class")), out / "table2_per_class.csv")
    _write_rows(_read_csv(wd.path("roc")), out / "roc.csv")
    with open(wd.path("auc"), encoding="utf-8") as fh:
        auc = json.load(fh)
    with open(out / "auc.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(auc["test_auc"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_rows(_read_csv(wd.path("purity")), out / "purity.csv")
    scan_rows = _read_csv(wd.path("scan"))
    _write_rows(scan_rows, out / "purity_scan.csv")
    with open(wd.path("profiles"), encoding="utf-8") as fh:
        profiles = json.load(fh)
    with open(out / "profiles.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(profiles, fh, indent=2)
        fh.write("\n")
    tsne_plus = _read_csv(wd.path("tsne_cfemb_plus"))
    tsne_base = _read_csv(wd.path("tsne_cfemb"))
    _write_rows(tsne_plus, out / "tsne.csv")
    _write_rows(tsne_base, out / "tsne_cfemb.csv")

    roc_rows = _read_csv(wd.path("roc"))[1:]
    curves = {}
    for op, f, t in roc_rows:
        curves.setdefault(op, {"fpr": [], "tpr": [], "auc": auc["test_auc"][op]})
        curves[op]["fpr"].append(float(f))
        curves[op]["tpr"].append(float(t))
    plotting.plot_roc(curves, out / "roc.svg")
    scans = {}
    for method, k, p in scan_rows[1:]:
        scans.setdefault(method, []).append((int(k), float(p)))
    plotting.plot_purity_scan(scans, out / "purity_scan.svg")
    for rows, name, title in ((tsne_plus, "tsne.svg", "CFEmb+"), (tsne_base, "tsne_cfemb.svg", "CFEmb")):
        xy = np.array([[float(r[1]), float(r[2])] for r in rows[1:]])
        plotting.plot_tsne(xy, [r[3] for r in rows[1:]], out / name, title)
    outputs = [out / f for f in REPORT_FILES]
    inputs = [wd.path(k) for k in ("cls_overall", "cls_per_class", "roc", "auc", "purity", "scan",
                                   "profiles", "tsne_cfemb", "tsne_cfemb_plus")]
    return wd.write_manifest("report", up, outputs, inputs)


RUNNERS = {
    "synth": run_synth,
    "preprocess": run_preprocess,
    "graph": run_graph,
    "embed": run_embed,
    "linkpred": run_linkpred,
    "classify": run_classify,
    "patient-embed": run_patient_embed,
    "finetune": run_finetune,
    "cluster": run_cluster,
    "report": run_report,
}


def run_pipeline(wd: Workdir):
    stages = [s for s in ORDER if not (s == "synth" and wd.cfg["preprocess"].get("cohort"))]
    for stage in stages:
        log.info("== %s", stage)
        RUNNERS[stage](wd)


def resolve_workdir(flag_value=None) -> Path:
    return Path(flag_value or os.environ.get(WORKDIR_ENV) or "work")
