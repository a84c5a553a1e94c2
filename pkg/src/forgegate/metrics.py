"""Accuracy/precision accounting, loss-curve CSVs, and the grouped text table.

The positive class is "edited" throughout. Precision over an empty
positive-prediction set is reported as absent ("n/a"), never as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .curves import GAN_COLUMNS, VALIDATION_COLUMNS, LossCurve
from .errors import ContractError
from .ioutils import atomic_write_text


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    model_name: str
    dataset_name: str
    accuracy: float
    precision: float | None
    counts: ConfusionCounts


def compute_metrics(
    predictions,
    labels,
    model_name: str = "model",
    dataset_name: str = "dataset",
) -> MetricsReport:
    """Confusion counts plus accuracy and precision, with edited = positive = 1."""
    predictions = [int(p) for p in predictions]
    labels = [int(y) for y in labels]
    if len(predictions) != len(labels):
        raise ContractError(
            f"{len(predictions)} predictions against {len(labels)} labels"
        )
    if not predictions:
        raise ContractError("cannot compute metrics over zero samples")
    for value in predictions + labels:
        if value not in (0, 1):
            raise ContractError(f"labels and predictions must be 0 or 1, got {value}")
    tp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 0)
    tn = sum(1 for p, y in zip(predictions, labels) if p == 0 and y == 0)
    fn = sum(1 for p, y in zip(predictions, labels) if p == 0 and y == 1)
    counts = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
    accuracy = (tp + tn) / counts.total
    precision = tp / (tp + fp) if tp + fp > 0 else None
    return MetricsReport(
        model_name=model_name,
        dataset_name=dataset_name,
        accuracy=accuracy,
        precision=precision,
        counts=counts,
    )


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "model_name": report.model_name,
        "dataset_name": report.dataset_name,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "counts": {
            "tp": report.counts.tp,
            "fp": report.counts.fp,
            "tn": report.counts.tn,
            "fn": report.counts.fn,
        },
    }


def report_from_dict(payload: dict) -> MetricsReport:
    counts = payload["counts"]
    return MetricsReport(
        model_name=payload["model_name"],
        dataset_name=payload["dataset_name"],
        accuracy=float(payload["accuracy"]),
        precision=None if payload["precision"] is None else float(payload["precision"]),
        counts=ConfusionCounts(
            tp=int(counts["tp"]), fp=int(counts["fp"]), tn=int(counts["tn"]), fn=int(counts["fn"])
        ),
    )


def save_report(report: MetricsReport, path: str) -> None:
    atomic_write_text(path, json.dumps(report_to_dict(report), indent=2) + "\n")


def load_report(path: str) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# loss-curve CSVs


def emit_curves(curve: LossCurve, path: str) -> None:
    """CSV with one row per epoch; losses carry 9 significant digits so a
    reparse reproduces the emitted values exactly."""
    if len(curve) == 0:
        raise ContractError("cannot emit an empty curve")
    lines = [",".join(curve.columns)]
    for row in curve.rows:
        epoch, *losses = row
        lines.append(",".join([str(epoch)] + [format(v, ".9g") for v in losses]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_curve(path: str) -> LossCurve:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ContractError(f"curve file {path} is empty")
    columns = tuple(lines[0].split(","))
    if columns not in (GAN_COLUMNS, VALIDATION_COLUMNS):
        raise ContractError(f"unrecognized curve header {columns}")
    rows = lines[1:]
    curve = LossCurve(columns=columns, origin=int(rows[0].split(",")[0]) if rows else None)
    for line in rows:
        cells = line.split(",")
        curve.append(int(cells[0]), *[float(v) for v in cells[1:]])
    return curve


# ---------------------------------------------------------------------------
# grouped text table


def _format_metric(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def emit_table(reports: list[MetricsReport], path: str | None = None) -> str:
    """Aligned Model/Accuracy/Precision columns, grouped by dataset name in
    first-appearance order; 4-decimal values."""
    if not reports:
        raise ContractError("cannot build a table from zero reports")
    width = max(len("Model"), *(len(r.model_name) for r in reports))
    groups: dict[str, list[MetricsReport]] = {}
    for report in reports:
        groups.setdefault(report.dataset_name, []).append(report)
    lines = [f"{'Model':<{width}}  Accuracy  Precision"]
    for dataset_name, members in groups.items():
        lines.append(f"[{dataset_name}]")
        for report in members:
            lines.append(
                f"{report.model_name:<{width}}  {report.accuracy:.4f}  "
                f"{_format_metric(report.precision)}"
            )
    text = "\n".join(lines) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text
