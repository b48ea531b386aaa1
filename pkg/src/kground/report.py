"""Rendering of metric reports and build audits: text table, TSV, figures."""

from __future__ import annotations

from .metrics import MetricReport

METRIC_LABELS = (
    ("bleu4", "BLEU-4"),
    ("rouge_l", "ROUGE-L"),
    ("f1", "F1"),
    ("kf1", "KF1"),
    ("dist2", "Dist-2"),
    ("dist4", "Dist-4"),
    ("rec", "Rec"),
)


def _present(report: MetricReport) -> list[tuple[str, float]]:
    return [
        (label, getattr(report, name))
        for name, label in METRIC_LABELS
        if getattr(report, name) is not None
    ]


def render_table(report: MetricReport) -> str:
    """Aligned two-column table of the metrics present in the report."""
    rows = _present(report) + [("records", float(report.n_records))]
    width = max(len(label) for label, _ in rows)
    lines = []
    for label, value in rows:
        if label == "records":
            lines.append(f"{label:<{width}}  {report.n_records}")
        else:
            lines.append(f"{label:<{width}}  {value:.6f}")
    return "\n".join(lines)


def write_tsv(report: MetricReport, path) -> None:
    """Delimited form: one ``metric<TAB>value`` row per present metric."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric\tvalue\n")
        for label, value in _present(report):
            fh.write(f"{label}\t{value:.10f}\n")
        fh.write(f"records\t{report.n_records}\n")


def render_metrics_figure(report: MetricReport, path) -> None:
    """Bar chart of the present metric values, written to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _present(report)
    labels = [label for label, _ in rows]
    values = [value for _, value in rows]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    bars = ax.bar(labels, values, color="#4878a8")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"generation metrics over {report.n_records} records")
    for bar, value in zip(bars, values):
        ax.annotate(
            f"{value:.3f}",
            (bar.get_x() + bar.get_width() / 2, value),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_audit_figure(stage_histograms: dict, path) -> None:
    """Candidate-count histograms after each cascade stage, one panel per stage."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stages = list(stage_histograms)
    fig, axes = plt.subplots(1, len(stages), figsize=(4.0 * len(stages), 3.2))
    if len(stages) == 1:
        axes = [axes]
    for ax, stage in zip(axes, stages):
        hist = stage_histograms[stage]
        counts = sorted(int(k) for k in hist)
        ax.bar([str(c) for c in counts], [hist[str(c)] for c in counts], color="#4878a8")
        ax.set_title(stage)
        ax.set_xlabel("candidates")
        ax.set_ylabel("turns")
        ax.tick_params(axis="x", labelrotation=90, labelsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
