"""Threshold-free evaluation, stratified k-fold cross-validation, reports."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .cohort import StratificationError


class UndefinedMetricError(ValueError):
    pass


def _scored(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError("need at least one positive and one negative")
    return s, y


def auc_roc(scores, labels) -> float:
    """P(random positive outscores random negative), ties worth one half."""
    s, y = _scored(scores, labels)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    ranks = rankdata(s)  # average ranks give the half credit for ties
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    """Step-interpolated area under precision-recall, tied scores entering together."""
    s, y = _scored(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last]
    seen = np.flatnonzero(last) + 1
    recall = tp / y.sum()
    precision = tp / seen
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def stratified_folds(labels: Sequence[int], k: int, seed: int) -> np.ndarray:
    """Fold number per example; each label is dealt round-robin after a seeded shuffle."""
    if k < 2:
        raise ValueError("k must be >= 2")
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold = np.empty(y.size, dtype=np.int64)
    for lab in (0, 1):
        idx = np.flatnonzero(y == lab)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % k
    for f in range(k):
        if len(set(y[fold == f].tolist())) < 2:
            raise StratificationError(f"fold {f} holds a single class")
    return fold


@dataclass
class CVResult:
    auc_pr: list[float]
    auc_roc: list[float]

    @property
    def auc_pr_mean(self) -> float:
        return float(np.mean(self.auc_pr))

    @property
    def auc_pr_std(self) -> float:
        return float(np.std(self.auc_pr))

    @property
    def auc_roc_mean(self) -> float:
        return float(np.mean(self.auc_roc))

    @property
    def auc_roc_std(self) -> float:
        return float(np.std(self.auc_roc))


def cross_validate(model_factory: Callable, cohort: Sequence, k: int = 3, seed: int = 0) -> CVResult:
    """``model_factory(train_items)`` must return an object with ``predict_proba``."""
    labels = np.array([t.label for t in cohort])
    fold = stratified_folds(labels, k, seed)
    prs, rocs = [], []
    for f in range(k):
        train = [t for t, g in zip(cohort, fold) if g != f]
        held = [t for t, g in zip(cohort, fold) if g == f]
        scores = model_factory(train).predict_proba(held)
        y = labels[fold == f]
        prs.append(auc_pr(scores, y))
        rocs.append(auc_roc(scores, y))
    return CVResult(prs, rocs)


@dataclass
class EvalRow:
    model: str
    condition: str
    population: str
    split: str
    auc_pr: float
    auc_roc: float
    n_case: int
    n_control: int
    auc_pr_std: float | None = None
    auc_roc_std: float | None = None
    n_folds: int | None = None


def evaluate(model_name: str, condition: str, population: str, split: str, scores, labels) -> EvalRow:
    y = np.asarray(labels)
    return EvalRow(
        model_name, condition, population, split,
        auc_pr(scores, y), auc_roc(scores, y), int(y.sum()), int(y.size - y.sum()),
    )


def write_report(rows: Sequence[EvalRow], jsonl_path, csv_path) -> None:
    """One JSON object per row, plus a wide CSV: model rows by population/condition columns."""
    Path(jsonl_path).write_text("".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in rows))
    columns = sorted({(r.population, r.condition) for r in rows})
    models = list(dict.fromkeys(r.model for r in rows))
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "model", *[f"{p}:{c}" for p, c in columns]])
        for metric in ("auc_pr", "auc_roc"):
            for m in models:
                cell = {(r.population, r.condition): getattr(r, metric) for r in rows if r.model == m}
                w.writerow([metric, m, *[repr(cell[col]) if col in cell else "" for col in columns]])


def read_report_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
