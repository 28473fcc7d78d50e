"""Accuracy reporting over in/out-of-domain splits, masked-test evaluation,
and prompt-holdout split construction."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, mask_top_k
from .confounds import LogOddsTable
from .training import TrainState, predict_docs


@dataclass
class EvalReport:
    classes: list[str]
    accuracy_in: float | None = None
    accuracy_out: float | None = None
    per_class_accuracy: dict[str, float] = field(default_factory=dict)
    confusion_in: np.ndarray | None = None  # rows: gold, cols: predicted
    confusion_out: np.ndarray | None = None
    mask_k: int | None = None
    num_examples: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "accuracy_in": self.accuracy_in,
            "accuracy_out": self.accuracy_out,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion_in": None if self.confusion_in is None else self.confusion_in.tolist(),
            "confusion_out": None if self.confusion_out is None else self.confusion_out.tolist(),
            "mask_k": self.mask_k,
            "num_examples": self.num_examples,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            classes=list(data["classes"]),
            accuracy_in=data.get("accuracy_in"),
            accuracy_out=data.get("accuracy_out"),
            per_class_accuracy=dict(data.get("per_class_accuracy", {})),
            confusion_in=None
            if data.get("confusion_in") is None
            else np.asarray(data["confusion_in"], dtype=np.int64),
            confusion_out=None
            if data.get("confusion_out") is None
            else np.asarray(data["confusion_out"], dtype=np.int64),
            mask_k=data.get("mask_k"),
            num_examples=dict(data.get("num_examples", {})),
            warnings=list(data.get("warnings", [])),
        )

    def to_text(self) -> str:
        lines = []
        if self.mask_k is not None:
            lines.append(f"mask_k: {self.mask_k}")
        for name, value in (("accuracy_in", self.accuracy_in), ("accuracy_out", self.accuracy_out)):
            lines.append(f"{name}: {'n/a' if value is None else f'{value:.4f}'}")
        for lab in self.classes:
            if lab in self.per_class_accuracy:
                lines.append(f"accuracy[{lab}]: {self.per_class_accuracy[lab]:.4f}")
        for split, n in self.num_examples.items():
            lines.append(f"num_examples[{split}]: {n}")
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        return "\n".join(lines) + "\n"


def _confusion(gold: np.ndarray, pred: np.ndarray, m: int) -> np.ndarray:
    matrix = np.zeros((m, m), dtype=np.int64)
    np.add.at(matrix, (gold, pred), 1)
    return matrix


def evaluate_accuracy(
    state: TrainState, test_in: Sequence[Document], test_out: Sequence[Document]
) -> EvalReport:
    """Argmax predictions per document (ties go to the lowest class index)."""
    report = EvalReport(classes=list(state.classes))
    index = {lab: i for i, lab in enumerate(state.classes)}
    m = len(state.classes)
    for split, docs in (("in", test_in), ("out", test_out)):
        if not docs:
            report.warnings.append(f"empty {split}-domain split")
            continue
        gold = np.asarray([index[d.label] for d in docs])
        pred = predict_docs(state, docs)
        confusion = _confusion(gold, pred, m)
        acc = float(np.trace(confusion) / confusion.sum())
        report.num_examples[split] = len(docs)
        if split == "in":
            report.accuracy_in = acc
            report.confusion_in = confusion
            row_totals = confusion.sum(axis=1)
            report.per_class_accuracy = {
                lab: float(confusion[i, i] / row_totals[i])
                for i, lab in enumerate(state.classes)
                if row_totals[i] > 0
            }
        else:
            report.accuracy_out = acc
            report.confusion_out = confusion
    return report


def masked_evaluation(
    state: TrainState,
    table: LogOddsTable,
    test_in: Sequence[Document],
    test_out: Sequence[Document],
    ks: Sequence[int],
) -> list[EvalReport]:
    """Evaluate on masked copies of the test splits, one report per k.

    The model is not retrained and the source documents are not modified.
    """
    reports = []
    for k in ks:
        masked_in = [mask_top_k(d, table, k) for d in test_in]
        masked_out = [mask_top_k(d, table, k) for d in test_out]
        report = evaluate_accuracy(state, masked_in, masked_out)
        report.mask_k = k
        reports.append(report)
    return reports


def prompt_holdout_splits(
    train: Sequence[Document], dev: Sequence[Document], prompt_id: str
) -> tuple[list[Document], list[Document], list[Document]]:
    """Hold one prompt out of train and dev; the removed dev documents become
    the out-of-domain test set for that configuration."""
    prompts = {d.prompt for d in train} | {d.prompt for d in dev}
    if prompt_id not in prompts:
        raise ValueError(f"unknown prompt id {prompt_id!r}")
    train_k = [d for d in train if d.prompt != prompt_id]
    dev_k = [d for d in dev if d.prompt != prompt_id]
    test_out = [d for d in dev if d.prompt == prompt_id]
    return train_k, dev_k, test_out


def save_reports(reports: Sequence[EvalReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict()) + "\n")


def load_reports(path: str | Path) -> list[EvalReport]:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                reports.append(EvalReport.from_dict(json.loads(line)))
    return reports


def confusion_to_csv(report: EvalReport, path: str | Path, split: str = "in") -> None:
    confusion = report.confusion_in if split == "in" else report.confusion_out
    if confusion is None:
        raise ValueError(f"no confusion matrix for split {split!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gold\\predicted"] + report.classes)
        for lab, row in zip(report.classes, confusion):
            writer.writerow([lab] + [int(v) for v in row])
