"""Comparison and evaluation report rendering.

Every report path emits the same three artifacts side by side: delimited
rows (TSV), a formatted text table, and a matplotlib figure rendered to a
file. Percentages are shown to one decimal.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .classify import Metrics
from .stats import ComparisonResult

TSV_COLUMNS = ("theme", "k1", "n1", "k2", "n2", "pct1", "pct2", "z", "p_z", "p_fisher")


def _fmt_p(p: float | None) -> str:
    return "na" if p is None else f"{p:.3g}"


def _fmt_z(z: float) -> str:
    return "na" if z != z else f"{z:.3f}"  # nan check without importing math


def comparison_tsv(results: list[ComparisonResult]) -> str:
    lines = ["\t".join(TSV_COLUMNS)]
    for r in results:
        lines.append("\t".join([
            r.theme_id, str(r.k1), str(r.n1), str(r.k2), str(r.n2),
            f"{100.0 * r.p1:.1f}", f"{100.0 * r.p2:.1f}",
            _fmt_z(r.z), _fmt_p(r.p_z), _fmt_p(r.p_fisher),
        ]))
    return "\n".join(lines) + "\n"


def comparison_table(results: list[ComparisonResult], corpus_a: str = "A", corpus_b: str = "B",
                     alpha: float = 0.01) -> str:
    """Formatted prevalence table: one row per theme, both p-values, and a
    significance marker at the given alpha."""
    header = f"{'theme':<24} {corpus_a + ' %':>10} {corpus_b + ' %':>10} {'z':>8} {'p(z)':>10} {'p(exact)':>10}  sig@{alpha:g}"
    lines = [header, "-" * len(header)]
    for r in results:
        sig = "*" if r.significant(alpha) else ""
        lines.append(
            f"{r.theme_id:<24} {100.0 * r.p1:>10.1f} {100.0 * r.p2:>10.1f} "
            f"{_fmt_z(r.z):>8} {_fmt_p(r.p_z):>10} {_fmt_p(r.p_fisher):>10}  {sig}"
        )
        if r.method_note:
            lines.append(f"{'':<24} note: {r.method_note}")
    return "\n".join(lines) + "\n"


def render_comparison_figure(results: list[ComparisonResult], path: str | Path,
                             corpus_a: str = "A", corpus_b: str = "B", alpha: float = 0.01) -> Path:
    """Grouped bar chart of theme prevalence in the two corpora; themes
    significant at alpha get a star above their bars."""
    path = Path(path)
    themes = [r.theme_id for r in results]
    pct_a = [100.0 * r.p1 for r in results]
    pct_b = [100.0 * r.p2 for r in results]
    x = range(len(results))
    width = 0.38

    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(results) + 2.0), 3.6))
    ax.bar([i - width / 2 for i in x], pct_a, width, label=corpus_a, color="#c23b22")
    ax.bar([i + width / 2 for i in x], pct_b, width, label=corpus_b, color="#6b7a8f")
    for i, r in enumerate(results):
        if r.significant(alpha):
            top = max(100.0 * r.p1, 100.0 * r.p2)
            ax.annotate("*", (i, top), textcoords="offset points", xytext=(0, 2),
                        ha="center", fontsize=14)
    ax.set_xticks(list(x))
    ax.set_xticklabels(themes, rotation=20, ha="right")
    ax.set_ylabel("reviewed matches (%)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def metrics_tsv(metrics: Metrics) -> str:
    c = metrics.confusion
    header = "accuracy\tprecision\trecall\tf1\tn\ttp\tfp\tfn\ttn"
    row = (
        f"{metrics.accuracy:.4f}\t{metrics.precision:.4f}\t{metrics.recall:.4f}\t{metrics.f1:.4f}\t"
        f"{metrics.n}\t{c['tp']}\t{c['fp']}\t{c['fn']}\t{c['tn']}"
    )
    return header + "\n" + row + "\n"


def render_confusion_figure(metrics: Metrics, path: str | Path) -> Path:
    path = Path(path)
    c = metrics.confusion
    grid = [[c["tn"], c["fp"]], [c["fn"], c["tp"]]]
    fig, ax = plt.subplots(figsize=(3.2, 3.0))
    ax.imshow(grid, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center")
    ax.set_xticks([0, 1], ["pred 0", "pred 1"])
    ax.set_yticks([0, 1], ["label 0", "label 1"])
    ax.set_title(f"acc {metrics.accuracy:.3f} / f1 {metrics.f1:.3f}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
