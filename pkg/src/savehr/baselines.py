"""Comparison models: LR, MLP and the Bi-GRU sequence family.

Sequence baselines embed the code tokens of each quarter (demographics are
left out of the tokens and concatenated after the recurrent layer), reduce
each quarter to a vector, run the shared Bi-GRU, and read out either the
last state ``h_4`` or an MLP-attention average of all four.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics as nx
from .cohort import DEMO_DIM, PatientTensor
from .model import (
    N_QUARTERS,
    Forward,
    VocabularyError,
    _softmax_np,
    embed,
    glorot,
    gru_quarters,
    init_params as _savehr_init,
    mlp_attention,
    ModelConfig,
)
from .numerics import Param
from .training import TrainHyper, fit

log = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    LR = "LR"
    MLP = "MLP"
    BG = "BG"
    BG_A = "BG_A"
    CNN1G = "CNN1G"
    CNN1G_A = "CNN1G_A"
    CNNLK = "CNNLK"
    CNNLK_A = "CNNLK_A"
    DENSE_A = "DENSE_A"

    @property
    def attentive(self) -> bool:
        return self.value.endswith("_A")

    @property
    def encoder(self) -> str:
        return self.value.removesuffix("_A")


SEQUENCE_KINDS = tuple(k for k in BaselineKind if k not in (BaselineKind.LR, BaselineKind.MLP))


def flat_features(tensors: Sequence[PatientTensor]) -> np.ndarray:
    """Demographic one-hots followed by the four quarterly count vectors."""
    return np.stack([np.concatenate([t.demo_onehots, t.quarter_counts.reshape(-1)]) for t in tensors])


def _check_width(tensors, n_codes: int) -> None:
    for t in tensors:
        if t.quarter_counts.shape[-1] != n_codes:
            raise VocabularyError(f"patient {t.patient_id}: {t.quarter_counts.shape[-1]} codes, expected {n_codes}")


# -- logistic regression -----------------------------------------------------


@dataclass(frozen=True)
class LogisticHyper:
    lr: float = 0.5
    max_epochs: int = 3000
    tol: float = 1e-7


class LogisticModel:
    """Unregularised logistic regression on :func:`flat_features`."""

    kind = BaselineKind.LR

    def __init__(self, cfg: LogisticHyper, vocab: Sequence[str], params=None):
        self.config = cfg
        self.vocab = list(vocab)
        dim = DEMO_DIM + N_QUARTERS * len(self.vocab)
        self.params = params or {"w": Param(np.zeros((dim, 1)), "w"), "b": Param(np.zeros((1, 1)), "b")}
        self.converged = False

    @property
    def param_list(self) -> list[Param]:
        return list(self.params.values())

    def decision(self, X: np.ndarray) -> np.ndarray:
        return (X @ self.params["w"].value + self.params["b"].value)[:, 0]

    def predict_proba(self, tensors: Sequence[PatientTensor]) -> np.ndarray:
        _check_width(tensors, len(self.vocab))
        return _softmax_np(np.stack([np.zeros(len(tensors)), self.decision(flat_features(tensors))], 1))[:, 1]


def _logistic_loss(Xs: nx.Tensor, y: np.ndarray, w: nx.Tensor, b: nx.Tensor) -> nx.Tensor:
    z = nx.matmul(Xs, w) + b
    logits = nx.concat([nx.Tensor(np.zeros(z.shape)), z], axis=-1)
    return nx.weighted_cross_entropy(logits, y)


def fit_logistic_arrays(X: np.ndarray, y: np.ndarray, hyper: LogisticHyper = LogisticHyper()):
    """Full-batch gradient descent on standardised columns.

    Returns raw-scale ``(w, b, converged, losses)``; constant columns keep a
    zero weight.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Xs = nx.Tensor((X - mu) / sd)
    w = Param(np.zeros((X.shape[1], 1)), "w")
    b = Param(np.zeros((1, 1)), "b")
    prev = np.inf
    best = (np.inf, w.value.copy(), b.value.copy())
    converged = False
    losses = []
    for _ in range(hyper.max_epochs):
        nx.zero_grads((w, b))
        with nx.Tape() as tape:
            loss = _logistic_loss(Xs, y, w, b)
        value = float(loss.value)
        losses.append(value)
        if value < best[0]:
            best = (value, w.value.copy(), b.value.copy())
        if abs(prev - value) < hyper.tol:
            converged = True
            break
        prev = value
        tape.backward(loss)
        w.value -= hyper.lr * w.grad
        b.value -= hyper.lr * b.grad
    if not converged:
        log.warning("logistic regression stopped after %d epochs without converging", hyper.max_epochs)
    _, ws, bs = best
    w_raw = ws / sd[:, None]
    b_raw = bs - (mu[:, None] * w_raw).sum()
    return w_raw, b_raw.reshape(1, 1), converged, losses


def fit_logistic(train: Sequence[PatientTensor], val=None, hyper: LogisticHyper = LogisticHyper(), vocab=None):
    """Returns ``(model, log)``; ``val`` is accepted for a uniform signature but unused."""
    n_codes = train[0].quarter_counts.shape[-1]
    vocab = vocab or [f"c{i}" for i in range(n_codes)]
    model = LogisticModel(hyper, vocab)
    _check_width(train, len(model.vocab))
    w, b, converged, losses = fit_logistic_arrays(flat_features(train), [t.label for t in train], hyper)
    model.params["w"].value[...] = w
    model.params["b"].value[...] = b
    model.converged = converged
    return model, [{"epoch": i + 1, "train_loss": v} for i, v in enumerate(losses)]


# -- multi-layer perceptron --------------------------------------------------


@dataclass(frozen=True)
class MLPConfig:
    hidden: int = 64
    dropout: float = 0.3
    seed: int = 0


class FlatBatch(NamedTuple):
    x: np.ndarray
    labels: np.ndarray


class MLPModel:
    """One relu hidden layer over ``log1p`` flat features, inverted dropout while training."""

    kind = BaselineKind.MLP

    def __init__(self, cfg: MLPConfig, vocab: Sequence[str], params=None):
        self.config = cfg
        self.vocab = list(vocab)
        dim = DEMO_DIM + N_QUARTERS * len(self.vocab)
        if params is None:
            rng = np.random.default_rng(cfg.seed)
            params = {
                "W1": Param(glorot(rng, cfg.hidden, dim), "W1"),
                "b1": Param(np.zeros((1, cfg.hidden)), "b1"),
                "W2": Param(glorot(rng, 2, cfg.hidden), "W2"),
                "b2": Param(np.zeros((1, 2)), "b2"),
            }
        self.params = params

    @property
    def param_list(self) -> list[Param]:
        return list(self.params.values())

    def encode(self, tensors):
        _check_width(tensors, len(self.vocab))
        return list(np.log1p(flat_features(tensors)))

    def collate(self, encoded, labels) -> FlatBatch:
        return FlatBatch(np.stack(encoded), np.asarray(labels))

    def forward(self, batch: FlatBatch, rng: np.random.Generator | None = None) -> Forward:
        p = self.params
        hidden = nx.relu_elem(nx.matmul(batch.x, nx.transpose(p["W1"])) + p["b1"])
        rate = self.config.dropout
        if rng is not None and rate > 0:
            keep = rng.random(hidden.shape) >= rate
            hidden = nx.mul(hidden, keep / (1.0 - rate))
        return Forward(nx.matmul(hidden, nx.transpose(p["W2"])) + p["b2"], None)

    def predict_proba(self, tensors) -> np.ndarray:
        out = self.forward(self.collate(self.encode(tensors), np.zeros(len(tensors))))
        return _softmax_np(out.logits.value)[:, 1]


def fit_mlp(train, val, hyper: TrainHyper = TrainHyper(), cfg: MLPConfig | None = None, vocab=None) -> tuple[MLPModel, list]:
    cfg = cfg or MLPConfig(seed=hyper.seed)
    vocab = vocab or [f"c{i}" for i in range(train[0].quarter_counts.shape[-1])]
    model = MLPModel(cfg, vocab)
    return model, fit(model, train, val, hyper)


# -- sequence baselines ------------------------------------------------------


@dataclass(frozen=True)
class BaselineConfig:
    e: int = 16
    d_h: int = 32
    d_att: int = 32
    filters: int = 64
    lk_filters: int = 4
    max_tokens: int = 64
    seed: int = 0


class SeqBatch(NamedTuple):
    ids: np.ndarray       # (B, 4, L) code indices
    counts: np.ndarray    # (B, 4, L)
    mask: np.ndarray      # (B, 4, L)
    raw: np.ndarray       # (B, 4, V) quarter count vectors
    demo: np.ndarray      # (B, DEMO_DIM)
    labels: np.ndarray


def code_slots(counts: np.ndarray, max_tokens: int) -> np.ndarray:
    """Active code indices of one quarter in vocabulary order, highest counts kept on overflow."""
    active = np.flatnonzero(counts)
    if active.size > max_tokens:
        keep = np.lexsort((active, -counts[active]))[:max_tokens]
        active = np.sort(active[keep])
    return active


def cnn1g_pool(E: nx.Tensor, mask: np.ndarray, W: nx.Tensor, b: nx.Tensor) -> nx.Tensor:
    """Width-1 convolution (shared linear map per token), relu, sum over real tokens."""
    z = nx.relu_elem(nx.matmul(E, nx.transpose(W)) + b)
    return nx.sum_axis(nx.mul(z, mask[..., None]), axis=-2)


def large_kernel(E: nx.Tensor, S: nx.Tensor, b: nx.Tensor) -> nx.Tensor:
    """Kernel spanning every token slot: each filter is a weighted sum of slot rows, then relu."""
    z = nx.relu_elem(nx.matmul(S, E) + b)
    return nx.reshape(z, z.shape[:-2] + (z.shape[-2] * z.shape[-1],))


def dense_quarter(E: nx.Tensor, W: nx.Tensor, b: nx.Tensor) -> nx.Tensor:
    """Fully connected layer over the flattened padded quarter, then relu."""
    flat = nx.reshape(E, E.shape[:-2] + (E.shape[-2] * E.shape[-1],))
    return nx.relu_elem(nx.matmul(flat, nx.transpose(W)) + b)


class SequenceBaseline:
    def __init__(self, kind: BaselineKind | str, cfg: BaselineConfig, vocab: Sequence[str], params=None):
        self.kind = BaselineKind(kind)
        if self.kind not in SEQUENCE_KINDS:
            raise ValueError(f"{self.kind.value} is not a sequence baseline")
        self.config = cfg
        self.vocab = list(vocab)
        self.params = params if params is not None else self._init()

    def _init(self) -> dict[str, Param]:
        cfg, V = self.config, len(self.vocab)
        rng = np.random.default_rng(cfg.seed)
        width, L = cfg.e + 1, cfg.max_tokens
        arrays = []
        enc = self.kind.encoder
        if enc == "BG":
            arrays += [("W_proj", glorot(rng, cfg.e, V)), ("b_proj", np.zeros((1, cfg.e)))]
            d_in = cfg.e
        else:
            arrays.append(("embedding", glorot(rng, V, cfg.e)))
            if enc == "CNN1G":
                arrays += [("W_conv", glorot(rng, cfg.filters, width)), ("b_conv", np.zeros((1, cfg.filters)))]
                d_in = cfg.filters
            elif enc == "CNNLK":
                arrays += [("S_slots", glorot(rng, cfg.lk_filters, L)), ("b_slots", np.zeros((cfg.lk_filters, 1)))]
                d_in = cfg.lk_filters * width
            else:
                d_in = cfg.lk_filters * width
                arrays += [("W_dense", glorot(rng, d_in, L * width)), ("b_dense", np.zeros((1, d_in)))]
        # reuse SAVEHR's GRU / attention initialisation for identical layouts
        gru_cfg = ModelConfig(e=d_in - 1, d_a=1, r=1, d_h=cfg.d_h, d_att=cfg.d_att, seed=cfg.seed + 1)
        shared = _savehr_init(gru_cfg, 0)
        for name, p in shared.items():
            if name.startswith("gru_") or (self.kind.attentive and name in ("W_att", "b_att", "v_att")):
                arrays.append((name, p.value))
        arrays += [("W_head", glorot(rng, 2, 2 * cfg.d_h + DEMO_DIM)), ("b_head", np.zeros((1, 2)))]
        return {name: Param(a, name) for name, a in arrays}

    @property
    def param_list(self) -> list[Param]:
        return list(self.params.values())

    @property
    def padded(self) -> bool:
        return self.kind.encoder in ("CNNLK", "DENSE")

    def encode(self, tensors):
        _check_width(tensors, len(self.vocab))
        out = []
        for t in tensors:
            slots = [code_slots(q, self.config.max_tokens) for q in t.quarter_counts]
            out.append((t.quarter_counts, slots, t.demo_onehots))
        return out

    def collate(self, encoded, labels) -> SeqBatch:
        B = len(encoded)
        L = self.config.max_tokens if self.padded else max(1, max(len(s) for _, sl, _ in encoded for s in sl))
        ids = np.zeros((B, N_QUARTERS, L), dtype=np.int64)
        counts = np.zeros((B, N_QUARTERS, L), dtype=np.int64)
        mask = np.zeros((B, N_QUARTERS, L), dtype=bool)
        for b, (raw, slots, _) in enumerate(encoded):
            for t, s in enumerate(slots):
                ids[b, t, : s.size] = s
                counts[b, t, : s.size] = raw[t, s]
                mask[b, t, : s.size] = True
        raw = np.stack([e[0] for e in encoded]).astype(np.float64)
        demo = np.stack([e[2] for e in encoded])
        return SeqBatch(ids, counts, mask, raw, demo, np.asarray(labels))

    def quarter_vectors(self, batch: SeqBatch) -> nx.Tensor:
        p, enc = self.params, self.kind.encoder
        if enc == "BG":
            return nx.matmul(np.log1p(batch.raw), nx.transpose(p["W_proj"])) + p["b_proj"]
        E = nx.mul(embed(batch.ids, batch.counts, p["embedding"]), batch.mask[..., None])
        if enc == "CNN1G":
            return cnn1g_pool(E, batch.mask, p["W_conv"], p["b_conv"])
        if enc == "CNNLK":
            return large_kernel(E, p["S_slots"], p["b_slots"])
        return dense_quarter(E, p["W_dense"], p["b_dense"])

    def forward(self, batch: SeqBatch, rng=None) -> Forward:
        p = self.params
        hs = gru_quarters(self.quarter_vectors(batch), p)
        alpha = None
        if self.kind.attentive:
            alpha, rep = mlp_attention(hs, p["W_att"], p["b_att"], p["v_att"])
        else:
            rep = hs[-1]
        final = nx.concat([rep, batch.demo], axis=-1)
        logits = nx.matmul(final, nx.transpose(p["W_head"])) + p["b_head"]
        return Forward(logits, None, alpha=alpha, hs=hs)

    def predict_proba(self, tensors, batch_size: int = 256) -> np.ndarray:
        enc = self.encode(tensors)
        out = []
        for s in range(0, len(enc), batch_size):
            chunk = enc[s:s + batch_size]
            out.append(_softmax_np(self.forward(self.collate(chunk, np.zeros(len(chunk)))).logits.value)[:, 1])
        return np.concatenate(out) if out else np.zeros(0)


def fit_sequence_baseline(kind, train, val, hyper: TrainHyper = TrainHyper(), cfg: BaselineConfig | None = None, vocab=None):
    cfg = cfg or BaselineConfig(seed=hyper.seed)
    vocab = vocab or [f"c{i}" for i in range(train[0].quarter_counts.shape[-1])]
    model = SequenceBaseline(kind, cfg, vocab)
    return model, fit(model, train, val, hyper)
