"""Minibatch Adam training with early stopping, shared by SAVEHR and baselines.

A trainable model exposes ``param_list``, ``encode(tensors)``,
``collate(encoded, labels)``, ``forward(batch, rng)`` returning an object
with ``logits`` (B x 2) and ``penalty`` (scalar Tensor or None), and
``predict_proba(tensors)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .metrics import UndefinedMetricError, auc_pr, auc_roc

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-3
    epochs: int = 30
    batch: int = 32
    patience: int = 5
    class_weighting: bool = True
    grad_clip: float = 5.0
    penalty_coeff: float = 0.0
    seed: int = 0


class Adam:
    def __init__(self, params: Sequence[nx.Param], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(params: Sequence[nx.Param], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))
    if max_norm and norm > max_norm:
        for p in params:
            p.grad *= max_norm / norm
    return norm


def class_weights(labels: np.ndarray, enabled: bool) -> tuple[float, float]:
    """Weights for (control, case); cases get N_control / N_case."""
    n_case = int(labels.sum())
    if not enabled or n_case == 0:
        return 1.0, 1.0
    return 1.0, (labels.size - n_case) / n_case


def _validation_score(model, val) -> tuple[float, float]:
    if not val:
        return float("nan"), float("nan")
    scores = model.predict_proba(val)
    y = np.array([t.label for t in val])
    try:
        return auc_pr(scores, y), auc_roc(scores, y)
    except UndefinedMetricError:
        return float("nan"), float("nan")


def fit(model, train_set, val_set, hyper: TrainHyper) -> list[dict]:
    """Train in place and restore the parameters with the best validation AUC-PR.

    Returns one log record per epoch.  Without a usable validation set the
    final parameters are kept.
    """
    if not train_set:
        raise TrainingError("empty training set")
    params = model.param_list
    labels = np.array([t.label for t in train_set])
    w_control, w_case = class_weights(labels, hyper.class_weighting)
    encoded = model.encode(train_set)
    shuffle_seed, dropout_seed = np.random.SeedSequence(hyper.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    opt = Adam(params, hyper.lr)

    history: list[dict] = []
    best_score, best_values, stale = -np.inf, None, 0
    for epoch in range(1, hyper.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for s in range(0, len(order), hyper.batch):
            idx = order[s:s + hyper.batch]
            y = labels[idx]
            batch = model.collate([encoded[i] for i in idx], y)
            nx.zero_grads(params)
            with nx.Tape() as tape:
                out = model.forward(batch, dropout_rng)
                weights = np.where(y == 1, w_case, w_control)
                loss = nx.weighted_cross_entropy(out.logits, y, weights)
                if out.penalty is not None and hyper.penalty_coeff:
                    loss = loss + nx.mul(out.penalty, hyper.penalty_coeff)
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingError(f"loss became {value} in epoch {epoch}")
            tape.backward(loss)
            clip_global_norm(params, hyper.grad_clip)
            opt.step()
            total += value * len(idx)
            seen += len(idx)
        val_pr, val_roc = _validation_score(model, val_set)
        history.append({"epoch": epoch, "train_loss": total / seen, "val_auc_pr": val_pr, "val_auc_roc": val_roc})
        log.info("epoch %d loss %.5f val AUC-PR %.4f", epoch, total / seen, val_pr)
        if np.isnan(val_pr):
            continue
        if val_pr > best_score:
            best_score, stale = val_pr, 0
            best_values = [p.value.copy() for p in params]
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    if best_values is not None:
        for p, v in zip(params, best_values):
            p.value[...] = v
    return history


def mean_cross_entropy(model, tensors) -> float:
    """Unweighted mean cross-entropy of ``model`` on ``tensors``."""
    p = model.predict_proba(tensors)
    y = np.array([t.label for t in tensors])
    return float(-np.mean(np.log(np.maximum(np.where(y == 1, p, 1.0 - p), 1e-300))))
