"""Static plot emission (CMC curves, cluster-count sweeps)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def cmc_curve(report, path, title="CMC"):
    ranks = range(1, len(report.cmc) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ranks, report.cmc, marker="o", ms=3)
    ax.set_xlabel("rank")
    ax.set_ylabel("matching rate")
    ax.set_ylim(0, 1.02)
    ax.set_title(f"{title} (mAP {report.map:.3f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_curve(ks, rank1s, maps, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, rank1s, marker="o", label="Rank-1")
    ax.plot(ks, maps, marker="s", label="mAP")
    ax.set_xlabel("cluster count k")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
