"""Pairwise token importance from hop attention, and quarter-attention summaries.

For quarter ``t`` with hop distributions ``a_1..a_r`` and quarter weight
``alpha_t`` the importance of a token pair is

    M_t(i, j) = alpha_t / r * sum_k a_k[i] a_k[j]

symmetrised.  Every ``a_k`` sums to one, so ``M_t`` carries mass ``alpha_t``
and the four quarters together carry mass one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cohort import DEMO_DIM, PatientTensor
from .model import N_QUARTERS, ForwardTrace, SavehrModel, token_labels


@dataclass
class PairwiseImportance:
    labels: list[str]
    matrix: np.ndarray
    patient_id: str = ""
    risk: float = float("nan")
    token_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        n = len(self.labels)
        if self.matrix.shape != (n, n):
            raise ValueError(f"{n} labels for a matrix of shape {self.matrix.shape}")

    def top_pairs(self, k: int) -> list[tuple[str, str, float]]:
        """The ``k`` largest off-diagonal cells, each unordered pair once."""
        iu, ju = np.triu_indices(len(self.labels), k=1)
        vals = self.matrix[iu, ju]
        order = np.argsort(-vals, kind="stable")[:k]
        return [(self.labels[iu[o]], self.labels[ju[o]], float(vals[o])) for o in order]


def quarter_matrix(A: np.ndarray, alpha_t: float) -> np.ndarray:
    """``alpha_t`` times the hop-averaged outer product of the rows of ``A``."""
    A = np.asarray(A, dtype=np.float64)
    M = alpha_t * (A.T @ A) / A.shape[0]
    return 0.5 * (M + M.T)


def pairwise_from_trace(
    trace: ForwardTrace,
    labels: Sequence[str],
    aggregation: str = "averaged",
    patient_id: str = "",
) -> PairwiseImportance | list[PairwiseImportance]:
    """``labels`` maps global token ids (as from ``token_labels``) to names.

    ``per_quarter`` gives one matrix per quarter over that quarter's tokens;
    ``averaged`` sums the alpha-weighted quarter matrices over the union of
    tokens, absent tokens contributing zero.
    """
    risk = float(trace.y_hat[1])
    mats = [quarter_matrix(A, a) for A, a in zip(trace.A, trace.alpha)]
    if aggregation == "per_quarter":
        return [
            PairwiseImportance([labels[i] for i in qt.ids], M, patient_id, risk, np.asarray(qt.ids))
            for qt, M in zip(trace.tokens, mats)
        ]
    if aggregation != "averaged":
        raise ValueError(f"aggregation must be 'per_quarter' or 'averaged', not {aggregation!r}")
    union = np.unique(np.concatenate([np.asarray(qt.ids) for qt in trace.tokens]))
    pos = {int(t): k for k, t in enumerate(union)}
    total = np.zeros((union.size, union.size))
    for qt, M in zip(trace.tokens, mats):
        idx = np.array([pos[int(t)] for t in qt.ids])
        total[np.ix_(idx, idx)] += M
    return PairwiseImportance([labels[i] for i in union], total, patient_id, risk, union)


def patient_importance(model: SavehrModel, tensor: PatientTensor, aggregation: str = "averaged"):
    return pairwise_from_trace(model.trace(tensor), token_labels(model.vocab), aggregation, tensor.patient_id)


def dense_importance(model: SavehrModel, tensor: PatientTensor) -> tuple[np.ndarray, float]:
    """Averaged matrix laid out over every token id of the model, plus the risk."""
    imp = patient_importance(model, tensor)
    n = DEMO_DIM + len(model.vocab)
    out = np.zeros((n, n))
    out[np.ix_(imp.token_ids, imp.token_ids)] = imp.matrix
    return out, imp.risk


def population_heatmap(model: SavehrModel, patients: Sequence[PatientTensor], top_k: int = 20) -> PairwiseImportance:
    """Mean averaged matrix over ``patients``, cut to the ``top_k`` tokens of largest diagonal mass."""
    if not patients:
        raise ValueError("population heatmap needs at least one patient")
    total, risk = None, 0.0
    for t in patients:
        M, r = dense_importance(model, t)
        total = M if total is None else total + M
        risk += r
    total /= len(patients)
    keep = np.argsort(-np.diag(total), kind="stable")[:top_k]
    labels = token_labels(model.vocab)
    return PairwiseImportance(
        [labels[i] for i in keep], total[np.ix_(keep, keep)], "population", risk / len(patients), keep
    )


@dataclass
class QuarterAttentionSummary:
    mean_alpha: np.ndarray                 # (4,) over all patients
    alpha_by_label: dict[int, np.ndarray]  # predicted label -> (4,) mean alpha
    count_mean: dict[int, np.ndarray]      # predicted label -> (4,) mean diagnosis count
    count_std: dict[int, np.ndarray]
    n_by_label: dict[int, int]
    threshold: float = 0.5

    def to_text(self) -> str:
        head = "group\t" + "\t".join(f"t{q}" for q in range(1, N_QUARTERS + 1))
        rows = [head, "alpha\t" + "\t".join(f"{a:.4f}" for a in self.mean_alpha)]
        for lab, name in ((1, "case"), (0, "control")):
            if self.n_by_label.get(lab, 0) == 0:
                continue
            n = self.n_by_label[lab]
            rows.append(f"alpha_{name}(n={n})\t" + "\t".join(f"{a:.4f}" for a in self.alpha_by_label[lab]))
            rows.append(
                f"count_{name}(n={n})\t"
                + "\t".join(f"{m:.3f}+-{s:.3f}" for m, s in zip(self.count_mean[lab], self.count_std[lab]))
            )
        return "\n".join(rows) + "\n"


def quarter_attention_summary(
    model: SavehrModel, patients: Sequence[PatientTensor], threshold: float = 0.5
) -> QuarterAttentionSummary:
    """Mean quarter weights, and per-quarter diagnosis counts grouped by predicted label."""
    if not patients:
        raise ValueError("quarter attention summary needs at least one patient")
    probs, alphas = model.predict_details(patients)
    counts = np.array([t.quarter_counts.sum(axis=1) for t in patients], dtype=np.float64)
    pred = (probs >= threshold).astype(int)
    by_alpha, c_mean, c_std, n_by = {}, {}, {}, {}
    for lab in (0, 1):
        sel = pred == lab
        n_by[lab] = int(sel.sum())
        if n_by[lab]:
            by_alpha[lab] = alphas[sel].mean(axis=0)
            c_mean[lab] = counts[sel].mean(axis=0)
            c_std[lab] = counts[sel].std(axis=0)
    return QuarterAttentionSummary(alphas.mean(axis=0), by_alpha, c_mean, c_std, n_by, threshold)


def export_heatmap(p: PairwiseImportance, path) -> None:
    """CSV with a label header row and a label first column; values written with ``repr``."""
    if len(p.labels) == 0:
        raise ValueError("refusing to export an empty heatmap")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *p.labels])
        for lab, row in zip(p.labels, p.matrix):
            w.writerow([lab, *(repr(float(v)) for v in row)])


def read_heatmap(path) -> PairwiseImportance:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no heatmap rows")
    labels = rows[0][1:]
    if [r[0] for r in rows[1:]] != labels:
        raise ValueError(f"{path}: row labels do not match column labels")
    return PairwiseImportance(labels, np.array([[float(v) for v in r[1:]] for r in rows[1:]]))
