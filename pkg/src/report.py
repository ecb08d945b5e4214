"""
Result tables and plots from registered runs.

The CSV has one row per run: method, dataset, SA, TA, OA, then for every
attack label seen across the runs "<label> SA", "<label> ΔSA",
"<label> TA", "<label> ΔTA". Deltas are post - pre, recomputed from the
stored metrics and rendered like "(+34.4)" / "(−2.2)".
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import RunRecord  # noqa: E402

logger = logging.getLogger(__name__)

BASE_COLUMNS = ["method", "dataset", "SA", "TA", "OA"]
MINUS = "−"


def format_delta(delta: float) -> str:
    text = f"{delta:+.1f}"
    return f"({text.replace('-', MINUS)})"


def attack_labels(records: Sequence[RunRecord]) -> List[str]:
    """Attack labels in first-seen order."""
    labels: List[str] = []
    for record in records:
        for attack in record.attacks:
            if attack.label not in labels:
                labels.append(attack.label)
    return labels


def report_table(records: Sequence[RunRecord]) -> Tuple[List[str], List[List[str]]]:
    """Header and string rows shared by every output format."""
    labels = attack_labels(records)
    header = list(BASE_COLUMNS)
    for label in labels:
        header += [f"{label} SA", f"{label} ΔSA", f"{label} TA", f"{label} ΔTA"]

    rows = []
    for record in records:
        m = record.pretrain
        row = [record.method, record.dataset_desc, f"{m.SA:.1f}", f"{m.TA:.1f}", f"{m.OA:.1f}"]
        by_label = {a.label: a for a in record.attacks}
        for label in labels:
            attack = by_label.get(label)
            if attack is None:
                row += ["", "", "", ""]
                continue
            d_sa, d_ta, _ = attack.deltas()
            row += [f"{attack.post.SA:.1f}", format_delta(d_sa), f"{attack.post.TA:.1f}", format_delta(d_ta)]
        rows.append(row)
    return header, rows


def write_csv(records: Sequence[RunRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header, rows = report_table(records)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def render_markdown(records: Sequence[RunRecord]) -> str:
    header, rows = report_table(records)
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def plot_report(records: Sequence[RunRecord], path: str | Path) -> Path:
    """Grouped bars of SA / TA / OA: pre-training and after every attack, per run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = attack_labels(records)
    stages = ["pretrain"] + labels
    fig, axes = plt.subplots(1, 3, figsize=(5 * 3, 4), sharey=True)
    width = 0.8 / max(len(records), 1)
    x = np.arange(len(stages))
    for ax, metric in zip(axes, ("SA", "TA", "OA")):
        for i, record in enumerate(records):
            by_label = {a.label: a.post for a in record.attacks}
            values = [getattr(record.pretrain, metric)]
            values += [getattr(by_label[lab], metric) if lab in by_label else np.nan for lab in labels]
            ax.bar(x + i * width, values, width, label=f"{record.method} ({record.run_id[:6]})")
        ax.set_title(metric)
        ax.set_xticks(x + width * (len(records) - 1) / 2)
        ax.set_xticklabels(stages, rotation=30, ha="right", fontsize=8)
        ax.set_ylim(0, 100)
    axes[0].set_ylabel("accuracy / score (%)")
    if records:
        axes[-1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def emit_report(records: Sequence[RunRecord], out_dir: str | Path, plot: bool = False) -> Dict[str, Path]:
    """Write report.csv and report.md (and report.png when plot is set) into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {"csv": write_csv(records, out_dir / "report.csv")}
    md = out_dir / "report.md"
    md.write_text(render_markdown(records), encoding="utf-8")
    outputs["markdown"] = md
    if plot:
        outputs["plot"] = plot_report(records, out_dir / "report.png")
    logger.info("report for %d runs written to %s", len(records), out_dir)
    return outputs
