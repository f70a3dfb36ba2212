"""Evaluation metrics: top-k accuracy, confusion, recall, F1, false-negative rate.

Ties in top-k ranking break toward the lower class index (all-zero logits
are reachable, so the rule is load-bearing and documented here).  A class
absent from the ground truth has recall 1.0 by convention and is excluded
from the FNR mean; such classes are flagged on the report.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .data import ABBREVIATIONS, NUM_CLASSES
from .errors import InputError


@dataclass
class EvalReport:
    top1: float
    top5: float
    per_class_recall: list[float]
    per_class_f1: list[float]
    per_class_fnr: list[float]
    mean_fnr: float
    confusion: list[list[int]]
    n_samples: int
    absent_classes: list[int] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InputError(
            f"labels must be in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels


def rank_classes(logits):
    """Class indices by descending logit; equal logits keep lower index first."""
    logits = np.asarray(logits)
    return np.argsort(-logits, axis=-1, kind="stable")


def topk_accuracy(logits, labels, k: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    num_classes = logits.shape[1]
    if not 1 <= k <= num_classes:
        raise InputError(f"k must be in [1, {num_classes}], got {k}")
    labels = _check_labels(labels, num_classes)
    ranked = rank_classes(logits)[:, :k]
    hits = (ranked == labels[:, None]).any(axis=1)
    return float(hits.mean())


def confusion_and_recall(preds, labels, num_classes: int = NUM_CLASSES):
    """(confusion[true][pred] counts, per-class recall).

    recall_c = confusion[c][c] / row_sum(c), defined as 1.0 for empty rows.
    """
    preds = _check_labels(preds, num_classes)
    labels = _check_labels(labels, num_classes)
    if len(preds) != len(labels):
        raise InputError(f"{len(preds)} predictions vs {len(labels)} labels")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(labels, preds):
        confusion[t, p] += 1
    row_sums = confusion.sum(axis=1)
    recall = np.where(row_sums > 0,
                      confusion.diagonal() / np.maximum(row_sums, 1), 1.0)
    return confusion, recall


def fnr(per_class_recall, present=None):
    """(per-class fnr = 1 - recall, mean over present classes)."""
    recall = np.asarray(per_class_recall, dtype=np.float64)
    if recall.size and (recall.min() < 0 or recall.max() > 1):
        raise InputError("recalls must lie in [0, 1]")
    per_class = 1.0 - recall
    if present is None:
        present = np.ones(recall.shape, dtype=bool)
    present = np.asarray(present, dtype=bool)
    mean = float(per_class[present].mean()) if present.any() else 0.0
    return per_class, mean


def _per_class_f1(confusion):
    diag = confusion.diagonal().astype(np.float64)
    row = confusion.sum(axis=1)
    col = confusion.sum(axis=0)
    denom = row + col
    return np.where(denom > 0, 2 * diag / np.maximum(denom, 1), 1.0)


def compute_report(logits, labels, num_classes: int = NUM_CLASSES) -> EvalReport:
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(labels, num_classes)
    preds = rank_classes(logits)[:, 0]
    confusion, recall = confusion_and_recall(preds, labels, num_classes)
    present = confusion.sum(axis=1) > 0
    per_fnr, mean = fnr(recall, present)
    return EvalReport(
        top1=topk_accuracy(logits, labels, 1),
        top5=topk_accuracy(logits, labels, min(5, num_classes)),
        per_class_recall=[float(r) for r in recall],
        per_class_f1=[float(v) for v in _per_class_f1(confusion)],
        per_class_fnr=[float(v) for v in per_fnr],
        mean_fnr=mean,
        confusion=confusion.tolist(),
        n_samples=len(labels),
        absent_classes=[int(i) for i in np.flatnonzero(~present)],
    )


CSV_HEADER = ["class", "recall", "f1", "fnr", "support"]


def report_to_csv(report: EvalReport) -> str:
    lines = [",".join(CSV_HEADER)]
    confusion = np.asarray(report.confusion)
    for c, abbrev in enumerate(ABBREVIATIONS[: len(report.per_class_recall)]):
        lines.append(
            f"{abbrev},{report.per_class_recall[c]!r},"
            f"{report.per_class_f1[c]!r},{report.per_class_fnr[c]!r},"
            f"{int(confusion[c].sum())}"
        )
    lines.append(
        f"SUMMARY,{report.top1!r},{report.top5!r},{report.mean_fnr!r},"
        f"{report.n_samples}"
    )
    return "\n".join(lines) + "\n"


def report_to_text(report: EvalReport) -> str:
    lines = [f"{'class':>8}  {'recall':>8}  {'f1':>8}  {'fnr':>8}"]
    for c, abbrev in enumerate(ABBREVIATIONS[: len(report.per_class_recall)]):
        flag = "  (absent)" if c in report.absent_classes else ""
        lines.append(
            f"{abbrev:>8}  {report.per_class_recall[c]:8.4f}  "
            f"{report.per_class_f1[c]:8.4f}  {report.per_class_fnr[c]:8.4f}{flag}"
        )
    lines.append(
        f"top1={report.top1:.4f} top5={report.top5:.4f} "
        f"mean_fnr={report.mean_fnr:.4f} n={report.n_samples}"
    )
    return "\n".join(lines) + "\n"


def report_to_svg(report: EvalReport, width=840, height=240) -> str:
    """Bar chart of per-class FNR, one bar per class."""
    n = len(report.per_class_fnr)
    bar_w = width / max(n, 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}">'
    ]
    for c, v in enumerate(report.per_class_fnr):
        h = v * (height - 30)
        x = c * bar_w + 2
        y = (height - 20) - h
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w - 4:.1f}" '
            f'height="{h:.1f}" fill="#4878a8"><title>'
            f"{ABBREVIATIONS[c]}: {v:.4f}</title></rect>"
        )
        parts.append(
            f'<text x="{x + bar_w / 2 - 2:.1f}" y="{height - 6}" '
            f'font-size="8" text-anchor="middle">{ABBREVIATIONS[c]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: EvalReport, fmt: str, path=None) -> str:
    renderers = {
        "text": report_to_text,
        "csv": report_to_csv,
        "svg": report_to_svg,
    }
    if fmt not in renderers:
        raise InputError(f"unknown report format {fmt!r}")
    out = renderers[fmt](report)
    if path is not None:
        with open(path, "w") as f:
            f.write(out)
    return out


def parse_report_csv(text: str):
    """Re-parse the CSV emitted above into (per-class rows, summary row)."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    rows = []
    summary = None
    for line in lines[1:]:
        cells = line.split(",")
        row = (cells[0], float(cells[1]), float(cells[2]), float(cells[3]),
               int(cells[4]))
        if cells[0] == "SUMMARY":
            summary = row
        else:
            rows.append(row)
    return rows, summary
