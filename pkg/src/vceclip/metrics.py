"""Confusion matrix, precision/recall/F1, one-vs-rest ROC AUC and report rendering.

Undefined ratios (zero denominators, classes without both positives and
negatives for AUC) are reported as 0.0 with a flag set and are left out of
the macro averages.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [C, C], rows = true class, columns = predicted
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, predicted_labels, num_classes: int, class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValidationError(f"{t.size} true labels but {p.size} predictions")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValidationError(f"{name} label outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    names = list(class_names) if class_names is not None else [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts, names)


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=~undefined)
    return out, undefined


def _macro(values: np.ndarray, undefined: np.ndarray) -> float:
    ok = ~undefined
    return float(values[ok].mean()) if ok.any() else 0.0


def prf1(cm: ConfusionMatrix) -> dict:
    """Per-class and macro precision, recall, F1 plus overall accuracy."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValidationError("cannot compute metrics from an empty confusion matrix")
    tp = np.diag(counts)
    precision, p_undef = _ratio(tp, counts.sum(axis=0))
    recall, r_undef = _ratio(tp, counts.sum(axis=1))
    f1, _ = _ratio(2 * precision * recall, precision + recall)
    f1_undef = p_undef & r_undef
    return {
        "accuracy": float(tp.sum() / total),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "precision_undefined": p_undef,
        "recall_undefined": r_undef,
        "f1_undefined": f1_undef,
        "macro_precision": _macro(precision, p_undef),
        "macro_recall": _macro(recall, r_undef),
        "macro_f1": _macro(f1, f1_undef),
        "support": cm.counts.sum(axis=1),
    }


def binary_auc(is_positive: np.ndarray, scores: np.ndarray) -> float | None:
    """Mann-Whitney AUC with midranks for ties; None without both classes."""
    is_positive = np.asarray(is_positive, dtype=bool)
    n_pos = int(is_positive.sum())
    n_neg = is_positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    return float((ranks[is_positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_auc_ovr(true_labels, probabilities) -> dict:
    """One-vs-rest AUC of each probability column against its class."""
    y = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != y.size:
        raise ValidationError(f"probability matrix {probs.shape} does not match {y.size} labels")
    if y.size and not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-6):
        raise ValidationError("probability rows must sum to 1 within 1e-6")
    c = probs.shape[1]
    aucs = np.zeros(c)
    undefined = np.zeros(c, dtype=bool)
    for k in range(c):
        value = binary_auc(y == k, probs[:, k])
        if value is None:
            undefined[k] = True
        else:
            aucs[k] = value
    if undefined.all():
        raise ValidationError("AUC undefined: no class has both positive and negative samples")
    return {"auc": aucs, "auc_undefined": undefined, "macro_auc": _macro(aucs, undefined)}


@dataclass
class MetricsReport:
    class_names: list[str]
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    auc: list[float]
    support: list[int]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_auc: float
    precision_undefined: list[bool]
    recall_undefined: list[bool]
    f1_undefined: list[bool]
    auc_undefined: list[bool]
    confusion: list[list[int]]

    @property
    def num_samples(self) -> int:
        return int(sum(self.support))


def build_report(true_labels, predicted_labels, probabilities, class_names: Sequence[str]) -> MetricsReport:
    c = len(class_names)
    cm = confusion(true_labels, predicted_labels, c, class_names)
    base = prf1(cm)
    if probabilities is not None:
        try:
            auc = roc_auc_ovr(true_labels, probabilities)
        except ValidationError as e:
            if "AUC undefined" not in str(e):
                raise
            auc = None
    else:
        auc = None
    if auc is None:
        auc = {"auc": np.zeros(c), "auc_undefined": np.ones(c, dtype=bool), "macro_auc": 0.0}

    def floats(a):
        return [float(v) for v in a]

    def bools(a):
        return [bool(v) for v in a]

    return MetricsReport(
        class_names=list(class_names),
        accuracy=base["accuracy"],
        precision=floats(base["precision"]),
        recall=floats(base["recall"]),
        f1=floats(base["f1"]),
        auc=floats(auc["auc"]),
        support=[int(v) for v in base["support"]],
        macro_precision=base["macro_precision"],
        macro_recall=base["macro_recall"],
        macro_f1=base["macro_f1"],
        macro_auc=auc["macro_auc"],
        precision_undefined=bools(base["precision_undefined"]),
        recall_undefined=bools(base["recall_undefined"]),
        f1_undefined=bools(base["f1_undefined"]),
        auc_undefined=bools(auc["auc_undefined"]),
        confusion=cm.counts.tolist(),
    )


def _text(report: MetricsReport) -> str:
    width = max(12, *(len(n) for n in report.class_names)) + 2

    def cell(value: float, undefined: bool) -> str:
        return f"{value:9.4f}{'*' if undefined else ' '}"

    lines = [
        f"samples  {report.num_samples}",
        f"accuracy {report.accuracy:.4f}",
        "",
        f"{'class':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'auc':>10}{'support':>9}",
    ]
    for i, name in enumerate(report.class_names):
        lines.append(
            f"{name:<{width}}"
            + cell(report.precision[i], report.precision_undefined[i])
            + cell(report.recall[i], report.recall_undefined[i])
            + cell(report.f1[i], report.f1_undefined[i])
            + cell(report.auc[i], report.auc_undefined[i])
            + f"{report.support[i]:>9}"
        )
    lines.append(
        f"{'macro':<{width}}"
        + cell(report.macro_precision, False)
        + cell(report.macro_recall, False)
        + cell(report.macro_f1, False)
        + cell(report.macro_auc, False)
    )
    lines += ["", "* undefined (reported as 0, excluded from macro)", "", "confusion (rows=true, cols=predicted)"]
    for name, row in zip(report.class_names, report.confusion):
        lines.append(f"{name:<{width}}" + "".join(f"{v:>6}" for v in row))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def render_report(report: MetricsReport, format: str = "text") -> str:
    if format == "text":
        return _text(report)
    if format == "json":
        return json.dumps(asdict(report), indent=2) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def parse_report(text: str) -> MetricsReport:
    data = json.loads(text)
    names = [f.name for f in fields(MetricsReport)]
    if list(data) != names:
        raise ValidationError("report fields do not match the expected layout")
    return MetricsReport(**data)
