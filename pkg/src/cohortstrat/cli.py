"""Command-line entry point: ``cohortstrat <stage> [options]``.

Settings resolve as flags > ``--config`` JSON > built-in defaults. The work
directory comes from ``--workdir``, else ``$COHORTSTRAT_WORKDIR``, else ``./work``.

Exit codes: 0 success, 1 usage error, 2 data or prerequisite error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from filelock import FileLock, Timeout

from . import DataError, __version__
from . import workflow as wf


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list: {text!r}") from None
    return parse


# (flag, config section, config key, argparse kwargs)
WALK_FLAGS = [
    ("--p", "walk", "p", {"type": float, "help": "return parameter"}),
    ("--q", "walk", "q", {"type": float, "help": "in-out parameter"}),
    ("--walks-per-node", "walk", "walks_per_node", {"type": int}),
    ("--walk-length", "walk", "walk_length", {"type": int}),
    ("--dim", "train", "dim", {"type": int, "help": "embedding dimension"}),
    ("--window", "train", "window", {"type": int}),
    ("--epochs", "train", "epochs", {"type": int}),
    ("--learning-rate", "train", "learning_rate", {"type": float}),
    ("--negative", "train", "negative", {"type": int,
                                         "help": "noise samples per pair (0 = full softmax)"}),
]

FLAGS = {
    "synth": [
        ("--patients-per-class", "synth", "patients_per_class",
         {"type": _csv_list(int), "help": "comma-separated counts, one per cancer type"}),
        ("--signal-strength", "synth", "signal_strength", {"type": float}),
        ("--noise-rate", "synth", "noise_rate", {"type": float}),
    ],
    "preprocess": [
        ("--cohort", "preprocess", "cohort", {"help": "JSONL cohort (default: synth output)"}),
        ("--stoplist", "preprocess", "stoplist", {"help": "file with one excluded term per line"}),
        ("--pheno-min", "preprocess", "pheno_min", {"type": int}),
        ("--gene-min", "preprocess", "gene_min", {"type": int}),
    ],
    "graph": [
        ("--weighted", "graph", "weighted", {"action": "store_const", "const": True,
                                             "help": "weight edges by co-occurrence count"}),
    ],
    "embed": WALK_FLAGS + [
        ("--dump-walks", "train", "dump_walks", {"action": "store_const", "const": True}),
    ],
    "linkpred": WALK_FLAGS + [
        ("--operators", "linkpred", "operators", {"type": _csv_list(str)}),
    ],
    "classify": [
        ("--models", "classify", "models", {"type": _csv_list(str)}),
        ("--train-frac", "classify", "train_frac", {"type": float}),
        ("--folds", "classify", "folds", {"type": int}),
    ],
    "patient-embed": [
        ("--gender-mode", "patient_embed", "gender_mode", {"choices": ["bit", "node"]}),
    ],
    "finetune": [
        ("--hidden", "finetune", "hidden", {"type": int}),
        ("--epochs", "finetune", "epochs", {"type": int}),
        ("--learning-rate", "finetune", "learning_rate", {"type": float}),
    ],
    "cluster": [
        ("--k-min", "cluster", "k_min", {"type": int}),
        ("--k-max", "cluster", "k_max", {"type": int}),
        ("--n-init", "cluster", "n_init", {"type": int}),
        ("--perplexity", "cluster", "perplexity", {"type": float}),
        ("--iterations", "cluster", "iterations", {"type": int, "help": "t-SNE iterations"}),
        ("--cluster-on", "cluster", "cluster_on", {"choices": ["embedding", "tsne"]}),
        ("--top-n", "cluster", "top_n", {"type": int}),
    ],
    "report": [],
}
FLAGS["pipeline"] = [
    FLAGS["preprocess"][0],
    FLAGS["graph"][0],
    ("--dim", "train", "dim", {"type": int, "help": "embedding dimension"}),
    FLAGS["cluster"][5],
]

HELP = {
    "synth": "generate a synthetic cohort",
    "preprocess": "stoplist, frequency filter and binary feature matrix",
    "graph": "build the phenotype-gene feature graph",
    "embed": "random walks and skip-gram feature embeddings",
    "linkpred": "held-out link prediction per edge operator",
    "classify": "cancer-type classifiers on joint/phenotypic/genetic features",
    "patient-embed": "patient vectors from feature embeddings",
    "finetune": "supervised refinement of patient vectors",
    "cluster": "k-means purity scan, t-SNE and cluster profiles",
    "report": "tables and figures from the stage outputs",
    "pipeline": "run every stage in order",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", help=f"work directory (env {wf.WORKDIR_ENV})")
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="cohortstrat", description="Cancer cohort stratification from "
                     "phenotype-gene feature embeddings.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, flags in FLAGS.items():
        p = sub.add_parser(name, parents=[common], help=HELP[name])
        for flag, section, key, kw in flags:
            p.add_argument(flag, dest=f"{section}.{key}", default=None, **kw)
    return parser


def overrides_from(args) -> dict:
    out = {}
    for dest, value in vars(args).items():
        if "." in dest and value is not None:
            section, key = dest.split(".", 1)
            out.setdefault(section, {})[key] = value
    if args.seed is not None:
        out["seed"] = args.seed
    return out


def run(args) -> None:
    cfg = wf.load_config(args.config, overrides_from(args))
    root = wf.resolve_workdir(args.workdir)
    root.mkdir(parents=True, exist_ok=True)
    wd = wf.Workdir(root, cfg)
    lock = FileLock(str(root / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise DataError(f"work directory {root} is locked by another run") from None
    try:
        if args.command == "pipeline":
            wf.run_pipeline(wd)
        else:
            wf.RUNNERS[args.command](wd)
    finally:
        lock.release()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (DataError, FileNotFoundError) as exc:
        print(f"cohortstrat {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as exc:
        # bad configuration values surface as ValueError from the dataclasses
        print(f"cohortstrat {args.command}: invalid setting: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("internal error", exc_info=True)
        print(f"cohortstrat {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
