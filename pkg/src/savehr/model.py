"""SAVEHR: token self-attention per quarter, Bi-GRU over quarters, MLP attention.

Every building block accepts arbitrary leading (batch) axes, so the same code
serves single-patient traces and padded minibatches.  Padding is handled by a
boolean token mask that gives padded slots exactly zero attention.

Token table layout: the 17 demographic tokens (2 gender, 5 race, 10 age bins)
occupy rows ``0..16``; vocabulary code ``j`` is row ``17 + j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics as nx
from .cohort import DEMO_DIM, N_AGE_BINS, N_GENDER, N_RACE, ConfigError, PatientTensor
from .numerics import Param, Tensor

N_DEMO_TOKENS = 3
N_QUARTERS = 4


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    e: int = 16
    d_a: int = 16
    r: int = 4
    d_h: int = 32
    d_att: int = 32
    max_tokens: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("e", "d_a", "r", "d_h", "d_att"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_tokens < N_DEMO_TOKENS + 1:
            raise ConfigError(f"max_tokens must be >= {N_DEMO_TOKENS + 1}")


def token_labels(vocab: Sequence[str]) -> list[str]:
    demo = [f"gender={g}" for g in range(N_GENDER)] + [f"race={r}" for r in range(N_RACE)]
    demo += [f"age={30 + 5 * b}-{34 + 5 * b}" for b in range(N_AGE_BINS)]
    return demo + list(vocab)


@dataclass
class QuarterTokens:
    ids: np.ndarray
    counts: np.ndarray

    @property
    def n_t(self) -> int:
        return int(self.ids.size)


def tokenize_quarter(tensor: PatientTensor, q: int, cfg: ModelConfig) -> QuarterTokens:
    """Demographic tokens (count 1) then the quarter's active codes in vocabulary order.

    If more codes are active than fit, the highest counts win, ties going to
    the earlier vocabulary index.
    """
    if q not in (1, 2, 3, 4):
        raise ValueError(f"quarter must be 1..4, got {q}")
    counts = tensor.quarter_counts[q - 1]
    active = np.flatnonzero(counts)
    room = cfg.max_tokens - N_DEMO_TOKENS
    if active.size > room:
        keep = np.lexsort((active, -counts[active]))[:room]
        active = np.sort(active[keep])
    ids = np.concatenate([np.asarray(tensor.demo_indices), DEMO_DIM + active])
    cnt = np.concatenate([np.ones(N_DEMO_TOKENS, dtype=np.int64), counts[active]])
    return QuarterTokens(ids.astype(np.int64), cnt.astype(np.int64))


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _gru_params(rng, prefix: str, d_in: int, d_h: int) -> list[tuple[str, np.ndarray]]:
    out = []
    for gate in ("z", "r", "n"):
        out.append((f"{prefix}.W_{gate}", glorot(rng, d_h, d_in)))
        out.append((f"{prefix}.U_{gate}", glorot(rng, d_h, d_h)))
        out.append((f"{prefix}.b_{gate}", np.zeros((1, d_h))))
    return out


def init_params(cfg: ModelConfig, n_codes: int) -> dict[str, Param]:
    rng = np.random.default_rng(cfg.seed)
    width = cfg.e + 1
    d_in = cfg.r * width
    arrays = [
        ("embedding", glorot(rng, DEMO_DIM + n_codes, cfg.e)),
        ("w_s1", glorot(rng, cfg.d_a, width)),
        ("W_s2", glorot(rng, cfg.r, cfg.d_a)),
        *_gru_params(rng, "gru_fwd", d_in, cfg.d_h),
        *_gru_params(rng, "gru_bwd", d_in, cfg.d_h),
        ("W_att", glorot(rng, cfg.d_att, 2 * cfg.d_h)),
        ("b_att", np.zeros((1, cfg.d_att))),
        ("v_att", glorot(rng, cfg.d_att, 1)),
        ("W_savehr", glorot(rng, 2, 2 * cfg.d_h)),
        ("b_savehr", np.zeros((1, 2))),
    ]
    return {name: Param(a, name) for name, a in arrays}


# -- building blocks ---------------------------------------------------------


def embed(ids: np.ndarray, counts: np.ndarray, table: Tensor) -> Tensor:
    """Rows ``[embedding(id) | log(1 + count)]``; the count channel is a constant."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise VocabularyError(f"token id outside embedding table of {table.shape[0]} rows")
    channel = np.log1p(np.asarray(counts, dtype=np.float64))[..., None]
    return nx.concat([nx.gather_rows(table, ids), channel], axis=-1)


def self_attend(E: Tensor, w_s1: Tensor, W_s2: Tensor, mask: np.ndarray | None = None):
    """``A = softmax(W_s2 tanh(w_s1 E^T))`` over tokens and ``Q = A E``.

    ``E`` is ``(..., n, e+1)``; ``mask`` is ``(..., n)`` with True for real tokens.
    """
    hidden = nx.tanh_elem(nx.matmul(w_s1, nx.transpose(E)))
    logits = nx.matmul(W_s2, hidden)
    A = nx.row_softmax(logits, None if mask is None else mask[..., None, :])
    return A, nx.matmul(A, E)


def single_hop_attend(E: Tensor, w_s1: Tensor, w_s2: Tensor):
    """One attention distribution ``a`` over tokens and its weighted sum ``q``."""
    w_s2 = nx.reshape(w_s2, (1, -1))
    A, Q = self_attend(E, w_s1, w_s2)
    return nx.reshape(A, A.shape[:-2] + A.shape[-1:]), nx.reshape(Q, Q.shape[:-2] + Q.shape[-1:])


def _gru_direction(xs: Tensor, p: dict[str, Param], prefix: str, steps: Sequence[int]) -> dict[int, Tensor]:
    d_h = p[f"{prefix}.U_z"].shape[0]
    W = nx.concat([p[f"{prefix}.W_{g}"] for g in "zrn"], axis=0)
    U_zr = nx.concat([p[f"{prefix}.U_z"], p[f"{prefix}.U_r"]], axis=0)
    b_zr = nx.concat([p[f"{prefix}.b_z"], p[f"{prefix}.b_r"]], axis=-1)
    U_n, b_n = p[f"{prefix}.U_n"], p[f"{prefix}.b_n"]
    gx = nx.matmul(xs, nx.transpose(W))
    lead = xs.shape[:-2]
    h = Tensor(np.zeros(lead + (d_h,)))
    out = {}
    for t in steps:
        g = nx.getitem(gx, (Ellipsis, t, slice(None)))
        zr = nx.sigmoid_elem(g[..., : 2 * d_h] + nx.matmul(h, nx.transpose(U_zr)) + b_zr)
        z, r = zr[..., :d_h], zr[..., d_h:]
        cand = nx.tanh_elem(g[..., 2 * d_h:] + nx.matmul(r * h, nx.transpose(U_n)) + b_n)
        h = cand + z * (h - cand)
        out[t] = h
    return out


def gru_quarters(xs: Tensor, params: dict[str, Param]) -> list[Tensor]:
    """Bidirectional GRU over ``xs`` of shape ``(..., 4, d_in)``; zero initial states.

    Gates: ``z = s(W_z x + U_z h + b_z)``, ``r = s(W_r x + U_r h + b_r)``,
    ``n = tanh(W_n x + U_n (r*h) + b_n)``, ``h' = (1-z) n + z h``.
    Returns ``[fwd_q | bwd_q]`` for q = 1..4.
    """
    single = xs.ndim == 2
    if single:
        xs = nx.reshape(xs, (1,) + xs.shape)
    n = xs.shape[-2]
    fwd = _gru_direction(xs, params, "gru_fwd", range(n))
    bwd = _gru_direction(xs, params, "gru_bwd", range(n - 1, -1, -1))
    out = [nx.concat([fwd[t], bwd[t]], axis=-1) for t in range(n)]
    return [nx.reshape(h, h.shape[1:]) for h in out] if single else out


def mlp_attention(hs: Sequence[Tensor], W_att: Tensor, b_att: Tensor, v_att: Tensor):
    """Scores ``v^T tanh(W h_t + b)``, softmax over quarters, weighted sum of ``h_t``."""
    H = nx.stack(hs, axis=-2)
    scores = nx.matmul(nx.tanh_elem(nx.matmul(H, nx.transpose(W_att)) + b_att), v_att)
    alpha = nx.row_softmax(nx.reshape(scores, scores.shape[:-1]))
    V = nx.matmul(nx.reshape(alpha, alpha.shape[:-1] + (1, len(hs))), H)
    return alpha, nx.reshape(V, V.shape[:-2] + V.shape[-1:])


# -- batched forward ---------------------------------------------------------


class TokenBatch(NamedTuple):
    ids: np.ndarray       # (B, 4, N)
    counts: np.ndarray    # (B, 4, N)
    mask: np.ndarray      # (B, 4, N), True for real tokens
    labels: np.ndarray    # (B,)


def collate_tokens(items: Sequence[list[QuarterTokens]], labels: Sequence[int]) -> TokenBatch:
    n = max(qt.n_t for quarters in items for qt in quarters)
    B = len(items)
    ids = np.zeros((B, N_QUARTERS, n), dtype=np.int64)
    counts = np.zeros((B, N_QUARTERS, n), dtype=np.int64)
    mask = np.zeros((B, N_QUARTERS, n), dtype=bool)
    for b, quarters in enumerate(items):
        for t, qt in enumerate(quarters):
            ids[b, t, : qt.n_t] = qt.ids
            counts[b, t, : qt.n_t] = qt.counts
            mask[b, t, : qt.n_t] = True
    return TokenBatch(ids, counts, mask, np.asarray(labels, dtype=np.int64))


class Forward(NamedTuple):
    logits: Tensor
    penalty: Tensor | None
    A: Tensor | None = None
    alpha: Tensor | None = None
    V: Tensor | None = None
    E: Tensor | None = None
    Q: Tensor | None = None
    hs: list | None = None


def savehr_forward(params: dict[str, Param], batch: TokenBatch, with_penalty: bool = False) -> Forward:
    B, T, n = batch.ids.shape
    E = embed(batch.ids, batch.counts, params["embedding"])
    A, Q = self_attend(E, params["w_s1"], params["W_s2"], batch.mask)
    xs = nx.reshape(Q, (B, T, -1))
    hs = gru_quarters(xs, params)
    alpha, V = mlp_attention(hs, params["W_att"], params["b_att"], params["v_att"])
    logits = nx.matmul(V, nx.transpose(params["W_savehr"])) + params["b_savehr"]
    penalty = None
    if with_penalty:
        r = A.shape[-2]
        gram = nx.matmul(A, nx.transpose(A)) - np.eye(r)
        penalty = nx.mul(nx.sum_all(gram * gram), 1.0 / B)
    return Forward(logits, penalty, A, alpha, V, E, Q, hs)


def _softmax_np(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass
class ForwardTrace:
    tokens: list[QuarterTokens]
    A: list[np.ndarray]
    E: list[np.ndarray]
    Q: list[np.ndarray]
    h: list[np.ndarray]
    alpha: np.ndarray
    V: np.ndarray
    y_hat: np.ndarray


class SavehrModel:
    kind = "SAVEHR"

    def __init__(self, cfg: ModelConfig, vocab: Sequence[str], params: dict[str, Param] | None = None):
        self.cfg = cfg
        self.vocab = list(vocab)
        self.params = params if params is not None else init_params(cfg, len(self.vocab))
        self.penalty_coeff = 0.0

    @property
    def config(self) -> ModelConfig:
        return self.cfg

    @property
    def param_list(self) -> list[Param]:
        return list(self.params.values())

    def _check(self, t: PatientTensor) -> None:
        if t.quarter_counts.shape != (N_QUARTERS, len(self.vocab)):
            raise VocabularyError(
                f"patient {t.patient_id}: counts of shape {t.quarter_counts.shape}, "
                f"model expects ({N_QUARTERS}, {len(self.vocab)})"
            )

    def encode(self, tensors: Sequence[PatientTensor]) -> list:
        out = []
        for t in tensors:
            self._check(t)
            out.append([tokenize_quarter(t, q, self.cfg) for q in range(1, N_QUARTERS + 1)])
        return out

    def collate(self, encoded: Sequence, labels: Sequence[int]) -> TokenBatch:
        return collate_tokens(encoded, labels)

    def forward(self, batch: TokenBatch, rng: np.random.Generator | None = None) -> Forward:
        return savehr_forward(self.params, batch, with_penalty=self.penalty_coeff > 0)

    def predict_proba(self, tensors: Sequence[PatientTensor], batch_size: int = 256) -> np.ndarray:
        return self.predict_details(tensors, batch_size)[0]

    def predict_details(self, tensors: Sequence[PatientTensor], batch_size: int = 256):
        """Case probabilities and quarter weights alpha, shape ``(n,)`` and ``(n, 4)``."""
        enc = self.encode(tensors)
        probs, alphas = [], []
        for s in range(0, len(enc), batch_size):
            chunk = enc[s:s + batch_size]
            out = savehr_forward(self.params, collate_tokens(chunk, np.zeros(len(chunk))))
            probs.append(_softmax_np(out.logits.value)[:, 1])
            alphas.append(out.alpha.value)
        if not probs:
            return np.zeros(0), np.zeros((0, N_QUARTERS))
        return np.concatenate(probs), np.concatenate(alphas)

    def trace(self, tensor: PatientTensor) -> ForwardTrace:
        (quarters,) = self.encode([tensor])
        out = savehr_forward(self.params, collate_tokens([quarters], [tensor.label]))
        return ForwardTrace(
            tokens=quarters,
            A=[out.A.value[0, t][:, : qt.n_t] for t, qt in enumerate(quarters)],
            E=[out.E.value[0, t][: qt.n_t] for t, qt in enumerate(quarters)],
            Q=[out.Q.value[0, t] for t in range(N_QUARTERS)],
            h=[h.value[0] for h in out.hs],
            alpha=out.alpha.value[0],
            V=out.V.value[0],
            y_hat=_softmax_np(out.logits.value[0]),
        )


def predict(tensor: PatientTensor, params: dict[str, Param], cfg: ModelConfig, vocab: Sequence[str]):
    """``(y_hat, trace)`` for one patient; ``y_hat = (P(control), P(case))``."""
    trace = SavehrModel(cfg, vocab, params).trace(tensor)
    return trace.y_hat, trace


def train(train_set, val_set, cfg: ModelConfig, vocab: Sequence[str], hyper=None):
    """Fit a fresh SAVEHR model; returns ``(model, log)`` with best-validation parameters."""
    from .training import TrainHyper, fit

    hyper = hyper or TrainHyper(seed=cfg.seed)
    model = SavehrModel(cfg, vocab)
    model.penalty_coeff = hyper.penalty_coeff
    log = fit(model, train_set, val_set, hyper)
    return model, log
