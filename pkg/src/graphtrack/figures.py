"""Matplotlib figure rendering for report outputs (headless backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curve(losses, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(range(len(losses)), losses, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("association loss")
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metric_sweep(settings, reports, path, xlabel="setting"):
    """MOTA/IDF1 across ablation settings, with FP/FN on a second axis."""
    xs = range(len(settings))
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax0.plot(xs, [r.mota for r in reports], marker="o", label="MOTA")
    ax0.plot(xs, [r.idf1 for r in reports], marker="s", label="IDF1")
    ax0.set_xticks(list(xs), [str(s) for s in settings])
    ax0.set_xlabel(xlabel)
    ax0.set_ylabel("score")
    ax0.grid(alpha=0.3)
    ax0.legend()
    ax1.plot(xs, [r.fp for r in reports], marker="o", label="FP")
    ax1.plot(xs, [r.fn for r in reports], marker="s", label="FN")
    ax1.plot(xs, [r.ids for r in reports], marker="^", label="IDS")
    ax1.set_xticks(list(xs), [str(s) for s in settings])
    ax1.set_xlabel(xlabel)
    ax1.set_ylabel("count")
    ax1.grid(alpha=0.3)
    ax1.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_recall_by_visibility(report, path):
    buckets = list(report.recall_by_visibility)
    values = [report.recall_by_visibility[b] or 0.0 for b in buckets]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.bar(range(len(buckets)), values, width=0.6)
    ax.set_xticks(range(len(buckets)), buckets)
    ax.set_xlabel("visibility")
    ax.set_ylabel("recall")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
