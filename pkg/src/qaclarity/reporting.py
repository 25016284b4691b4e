"""Rendering of reports: aligned text tables, CSV emission, histogram chart."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .chunking import expected_chunk_count
from .dataset import ClarityLabel, DatasetSummary, EvasionLabel
from .evaluation import EvalReport


def _fmt(value, digits: int = 3) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def render_eval_text(report: EvalReport) -> str:
    lines = []
    lines.append(f"scored instances: {report.scored_instances}"
                 + ("  (annotated gold, any-annotator rule)" if report.annotated else ""))
    lines.append(f"clarity macro-F1: {report.clarity_macro_f1:.4f}")
    lines.append(f"evasion macro-F1: {report.evasion_macro_f1:.4f}")
    lines.append(f"combined F1:      {report.combined_f1:.4f}")
    lines.append(f"clarity accuracy: {report.clarity_accuracy:.4f}")
    lines.append(f"evasion accuracy: {report.evasion_accuracy:.4f}")
    lines.append(f"note: {report.convention}")

    for title, stats in (("clarity", report.clarity_per_class),
                         ("evasion", report.evasion_per_class)):
        lines.append("")
        lines.append(f"per-class stats ({title}): "
                     "n / accuracy / mean conf / mean conf on errors")
        width = max(len(s.name) for s in stats)
        for s in stats:
            lines.append(
                f"  {s.name:<{width}}  {s.count:>6}  {_fmt(s.accuracy)}"
                f"  {_fmt(s.mean_confidence)}  {_fmt(s.mean_confidence_misclassified)}"
            )

    if report.strata is not None:
        lines.append("")
        lines.append("agreement strata (by evasion annotations): "
                     "n / majority-vote / any-annotator / clarity acc")
        for s in report.strata:
            lines.append(
                f"  {s.name:<9}  {s.count:>6}  {_fmt(s.majority_vote_agreement)}"
                f"  {_fmt(s.any_annotator_agreement)}  {_fmt(s.clarity_accuracy)}"
            )
    if report.clarity_kappa is not None or report.evasion_kappa is not None:
        lines.append("")
        lines.append(f"Fleiss kappa: clarity={_fmt(report.clarity_kappa)}"
                     f"  evasion={_fmt(report.evasion_kappa)}")
    return "\n".join(lines) + "\n"


def _class_names(taxonomy: str) -> list[str]:
    labels = ClarityLabel if taxonomy == "clarity" else EvasionLabel
    return [l.display_name for l in labels]


def write_confusion_csvs(report: EvalReport, out_dir, prefix: str = "") -> list[Path]:
    """Counts and row-normalized CSVs for both taxonomies (gold rows,
    predicted columns)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for taxonomy, matrix in (("clarity", report.clarity_confusion),
                             ("evasion", report.evasion_confusion)):
        names = _class_names(taxonomy)
        normalized, _ = matrix.row_normalized()
        for suffix, rows in (("", matrix.counts), ("_row_normalized", normalized)):
            path = out_dir / f"{prefix}confusion_{taxonomy}{suffix}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["gold\\pred"] + names)
                for name, row in zip(names, rows):
                    writer.writerow([name] + [
                        (int(x) if suffix == "" else f"{x:.6f}") for x in row
                    ])
            written.append(path)
    return written


def write_per_class_csv(report: EvalReport, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["taxonomy", "class", "n", "accuracy",
                         "mean_confidence", "mean_confidence_misclassified"])
        for taxonomy, stats in (("clarity", report.clarity_per_class),
                                ("evasion", report.evasion_per_class)):
            for s in stats:
                writer.writerow([taxonomy, s.name, s.count,
                                 _fmt(s.accuracy, 6), _fmt(s.mean_confidence, 6),
                                 _fmt(s.mean_confidence_misclassified, 6)])


def write_strata_csv(report: EvalReport, path) -> None:
    if report.strata is None:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stratum", "n", "majority_vote_agreement",
                         "any_annotator_agreement", "clarity_accuracy"])
        for s in report.strata:
            writer.writerow([s.name, s.count, _fmt(s.majority_vote_agreement, 6),
                             _fmt(s.any_annotator_agreement, 6),
                             _fmt(s.clarity_accuracy, 6)])


def write_histogram_csv(summary: DatasetSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi_exclusive", "count"])
        for lo, hi, count in summary.token_histogram:
            writer.writerow([lo, hi, count])


def render_histogram_svg(summary: DatasetSummary, path) -> None:
    """Static bar chart of the token-length distribution with the budget
    marked; rendered with a fixed hash salt so output bytes are stable."""
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "qaclarity"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    if summary.token_histogram:
        lows = [lo for lo, _, _ in summary.token_histogram]
        counts = [c for _, _, c in summary.token_histogram]
        width = summary.token_histogram[0][1] - summary.token_histogram[0][0]
        ax.bar(lows, counts, width=width, align="edge", color="#4878a8",
               edgecolor="white")
    ax.axvline(summary.token_budget, color="red", linestyle="--",
               label=f"budget = {summary.token_budget}")
    ax.set_xlabel("token count of formatted question-answer input")
    ax.set_ylabel("instances")
    title = f"token-length distribution ({summary.split})" if summary.split \
        else "token-length distribution"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_chunk_counts_csv(instances, preprocessor, path) -> None:
    """Per-instance diagnostics: token count and resulting chunk count."""
    from .tokenization import format_input, tokenize

    cfg = preprocessor.chunking
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "tokens", "chunks"])
        for inst in instances:
            seq = tokenize(format_input(inst.question, inst.answer),
                           preprocessor.tokenizer, inst.id)
            writer.writerow([inst.id, len(seq.ids),
                             expected_chunk_count(len(seq.ids), cfg)])


# ---------------------------
# Ablation tables
# ---------------------------

def render_ablation_table(axis: str, rows: Sequence[dict]) -> str:
    """Rows carry: variant, clarity mean/std, evasion mean/std, optional
    cost columns. Mean +/- std mirrors the cross-validation reporting."""
    headers = ["variant", "clarity F1", "evasion F1"]
    has_cost = any("nominal_cost" in r for r in rows)
    if has_cost:
        headers += ["rel. cost (nominal)", "rel. cost (measured)"]

    def cell(mean, std):
        if mean is None:
            return "--"
        return f"{mean:.3f} +/- {std:.3f}"

    table = [headers]
    for r in rows:
        line = [r["variant"],
                cell(r.get("clarity_mean"), r.get("clarity_std")),
                cell(r.get("evasion_mean"), r.get("evasion_std"))]
        if has_cost:
            line += [f"{r['nominal_cost']:.1f}x", f"{r['measured_cost']:.2f}x"]
        table.append(line)

    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return f"ablation axis: {axis}\n" + "\n".join(lines) + "\n"


def write_ablation_csv(rows: Sequence[dict], path) -> None:
    fields = ["variant", "clarity_mean", "clarity_std", "evasion_mean", "evasion_std"]
    if any("nominal_cost" in r for r in rows):
        fields += ["nominal_cost", "measured_cost"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n",
                                extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
