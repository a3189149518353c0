"""Static report figures (ROC curves, purity scans, t-SNE scatter)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import CANCER_TYPES  # noqa: E402

# fixed ids and no timestamp, so identical data give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "cohortstrat"
plt.rcParams["svg.fonttype"] = "none"

_SAVE_KW = {"metadata": {"Date": None, "Creator": None}}


def report_style(ax):
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    ax.tick_params(labelsize=9)


def _save(fig, path):
    kw = _SAVE_KW if str(path).endswith(".svg") else {}
    fig.savefig(path, bbox_inches="tight", **kw)
    plt.close(fig)


def plot_roc(results: dict, path):
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for op, r in results.items():
        ax.plot(r["fpr"], r["tpr"], lw=1.5, label=f"{op} (area = {r['auc']:.2f})")
    ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(frameon=False, fontsize=8, loc="lower right")
    report_style(ax)
    _save(fig, path)


def plot_purity_scan(scans: dict, path):
    """``scans`` maps method name -> list of (k, purity)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, table in scans.items():
        ks, ps = zip(*table)
        ax.plot(ks, ps, marker="o", ms=3, lw=1.2, label=name)
    ax.set_xlabel("number of clusters k")
    ax.set_ylabel("purity")
    ax.set_ylim(0, 1.02)
    ax.legend(frameon=False, fontsize=8)
    report_style(ax)
    _save(fig, path)


def plot_tsne(xy, labels, path, title=None):
    fig, ax = plt.subplots(figsize=(5.5, 5))
    cmap = plt.get_cmap("tab10")
    for c, name in enumerate(CANCER_TYPES):
        sel = [i for i, lab in enumerate(labels) if lab == name]
        if sel:
            ax.scatter(xy[sel, 0], xy[sel, 1], s=6, color=cmap(c), label=name, linewidths=0)
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=7, markerscale=2, loc="center left",
              bbox_to_anchor=(1.0, 0.5))
    _save(fig, path)
