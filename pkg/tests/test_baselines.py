import numpy as np
import numpy.testing as npt
import pytest

from savehr import numerics as nx
from savehr.baselines import (
    SEQUENCE_KINDS,
    BaselineConfig,
    BaselineKind,
    LogisticHyper,
    MLPConfig,
    MLPModel,
    SequenceBaseline,
    cnn1g_pool,
    dense_quarter,
    fit_logistic,
    fit_logistic_arrays,
    fit_mlp,
    flat_features,
    large_kernel,
)
from savehr.cohort import DEMO_DIM, PatientTensor
from savehr.metrics import auc_roc
from savehr.numerics import Param, Tensor
from savehr.training import TrainHyper, fit

from conftest import random_tensors

TOY = BaselineConfig(e=8, d_h=8, d_att=5, filters=6, lk_filters=3, max_tokens=8, seed=0)


def test_kind_enumeration_is_closed():
    assert [k.value for k in BaselineKind] == ["LR", "MLP", "BG", "BG_A", "CNN1G", "CNN1G_A", "CNNLK", "CNNLK_A", "DENSE_A"]
    assert BaselineKind.CNNLK_A.attentive and BaselineKind.CNNLK_A.encoder == "CNNLK"
    with pytest.raises(ValueError):
        BaselineKind("RF")


def test_flat_features_layout(toy_tensors):
    X = flat_features(toy_tensors)
    assert X.shape == (len(toy_tensors), DEMO_DIM + 4 * 12)
    npt.assert_array_equal(X[0, DEMO_DIM:], toy_tensors[0].quarter_counts.reshape(-1))
    assert np.all(X >= 0)


# -- logistic regression ----------------------------------------------------------


def test_logistic_separable_toy():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 2.0], [2.0, 3.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    w, b, _, _ = fit_logistic_arrays(X, y, LogisticHyper(max_epochs=500))
    assert np.array_equal((X @ w + b).ravel() > 0, y == 1)


def test_logistic_slope_matches_grid_mle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5000)
    y = (rng.random(5000) < 1 / (1 + np.exp(-(1.5 * x - 0.5)))).astype(int)
    w, b, converged, _ = fit_logistic_arrays(x[:, None], y)
    assert converged

    # maximum likelihood by brute-force grid search, coarse then fine
    def grid(w_lo, w_hi, b_lo, b_hi):
        ws, bs = np.linspace(w_lo, w_hi, 81), np.linspace(b_lo, b_hi, 81)
        nll = np.empty((81, 81))
        for i, wv in enumerate(ws):
            z = wv * x[None, :] + bs[:, None]
            nll[i] = (np.logaddexp(0, z) - y * z).sum(-1)
        i, j = np.unravel_index(np.argmin(nll), nll.shape)
        return ws[i], bs[j]

    w0, b0 = grid(0.0, 4.0, -2.0, 2.0)
    w_mle, _ = grid(w0 - 0.1, w0 + 0.1, b0 - 0.1, b0 + 0.1)
    assert abs(w[0, 0] - w_mle) <= 0.1 * w_mle
    assert abs(w[0, 0] - 1.5) <= 0.15


def test_logistic_constant_feature_stays_finite():
    rng = np.random.default_rng(1)
    X = np.c_[rng.normal(size=200), np.full(200, 7.0)]
    y = (X[:, 0] > 0).astype(int)
    w, b, _, _ = fit_logistic_arrays(X, y, LogisticHyper(max_epochs=300))
    assert np.all(np.isfinite(w)) and np.isfinite(b).all()
    assert w[1, 0] == 0.0


def test_logistic_nonconvergence_warns(caplog):
    X = np.array([[0.0], [1.0]])
    with caplog.at_level("WARNING"):
        fit_logistic_arrays(X, np.array([0, 1]), LogisticHyper(max_epochs=5))
    assert "without converging" in caplog.text


def xor_tensors(reps):
    # each of the four (a, b) cells equally often, so the best linear fit is flat
    out = []
    for i in range(4 * reps):
        a, b = (i % 4) // 2, i % 2
        counts = np.zeros((4, 4), dtype=np.int64)
        counts[0, 0], counts[0, 1] = a, b
        out.append(PatientTensor(f"X{i}", a ^ b, 0, 0, 0, counts))
    return out


def test_mlp_learns_xor_where_logistic_cannot():
    train, test = xor_tensors(100), xor_tensors(25)
    y = np.array([t.label for t in test])
    lr, _ = fit_logistic(train)
    assert abs(auc_roc(lr.predict_proba(test), y) - 0.5) < 0.05
    mlp, _ = fit_mlp(train, [], TrainHyper(lr=1e-2, epochs=150, batch=64), MLPConfig(hidden=16, dropout=0.0))
    assert np.mean((mlp.predict_proba(test) >= 0.5) == y) > 0.9


class PlainMLP(MLPModel):
    def forward(self, batch, rng=None):
        return super().forward(batch, None)


def test_zero_dropout_is_plain_mlp(toy_tensors, toy_vocab):
    cfg = MLPConfig(hidden=5, dropout=0.0, seed=2)
    hyper = TrainHyper(lr=1e-2, epochs=4, batch=3, seed=2)
    a, b = MLPModel(cfg, toy_vocab), PlainMLP(cfg, toy_vocab)
    fit(a, toy_tensors, toy_tensors, hyper)
    fit(b, toy_tensors, toy_tensors, hyper)
    for x, y in zip(a.param_list, b.param_list):
        assert np.array_equal(x.value, y.value)


def test_dropout_only_while_training(toy_tensors, toy_vocab):
    m = MLPModel(MLPConfig(hidden=8, dropout=0.5), toy_vocab)
    npt.assert_array_equal(m.predict_proba(toy_tensors), m.predict_proba(toy_tensors))
    batch = m.collate(m.encode(toy_tensors), np.zeros(len(toy_tensors)))
    drop = m.forward(batch, np.random.default_rng(0)).logits.value
    assert not np.allclose(drop, m.forward(batch).logits.value)


def test_mlp_grad_check(toy_tensors, toy_vocab):
    m = MLPModel(MLPConfig(hidden=6, dropout=0.0), toy_vocab)
    batch = m.collate(m.encode(toy_tensors), [t.label for t in toy_tensors])
    rep = nx.grad_check(lambda: nx.weighted_cross_entropy(m.forward(batch).logits, batch.labels), m.param_list)
    assert rep.passed, rep.worst()


# -- sequence baselines ------------------------------------------------------------


@pytest.mark.parametrize("kind", [k.value for k in SEQUENCE_KINDS])
def test_sequence_baseline_grad_check(kind, toy_tensors, toy_vocab):
    m = SequenceBaseline(kind, TOY, toy_vocab)
    batch = m.collate(m.encode(toy_tensors), [t.label for t in toy_tensors])
    rep = nx.grad_check(lambda: nx.weighted_cross_entropy(m.forward(batch).logits, batch.labels), m.param_list)
    assert rep.passed, rep.worst()


@pytest.mark.parametrize("kind", [k.value for k in SEQUENCE_KINDS])
def test_sequence_baseline_probabilities(kind, toy_tensors, toy_vocab):
    m = SequenceBaseline(kind, TOY, toy_vocab)
    p = m.predict_proba(toy_tensors)
    assert p.shape == (len(toy_tensors),) and np.all((p > 0) & (p < 1))


def test_cnn1g_identity_single_token():
    emb = np.array([[0.5, 1.0, 0.0]])
    E = Tensor(emb[None])
    pooled = cnn1g_pool(E, np.array([[True]]), Tensor(np.eye(3)), Tensor(np.zeros((1, 3))))
    npt.assert_array_equal(pooled.value, emb)


def test_cnn1g_is_token_permutation_invariant():
    rng = np.random.default_rng(3)
    E = rng.normal(size=(5, 4))
    mask = np.array([True, True, True, True, False])
    W, b = Tensor(rng.normal(size=(6, 4))), Tensor(rng.normal(size=(1, 6)))
    perm = np.array([3, 0, 2, 1, 4])
    a = cnn1g_pool(Tensor(E), mask, W, b).value
    c = cnn1g_pool(Tensor(E[perm]), mask[perm], W, b).value
    npt.assert_allclose(a, c, atol=1e-13)


def test_large_kernel_and_dense_are_order_sensitive():
    rng = np.random.default_rng(4)
    E = rng.normal(size=(5, 4))
    perm = np.array([1, 0, 2, 3, 4])
    S, bs = Tensor(rng.normal(size=(3, 5))), Tensor(rng.normal(size=(3, 1)) + 3.0)
    assert not np.allclose(large_kernel(Tensor(E), S, bs).value, large_kernel(Tensor(E[perm]), S, bs).value)
    W, bd = Tensor(rng.normal(size=(3, 20))), Tensor(np.full((1, 3), 3.0))
    d = dense_quarter(Tensor(E[None]), W, bd).value
    assert not np.allclose(d, dense_quarter(Tensor(E[perm][None]), W, bd).value)


def test_bg_attention_starts_uniform(toy_tensors, toy_vocab):
    bg = SequenceBaseline("BG", TOY, toy_vocab)
    bga = SequenceBaseline("BG_A", TOY, toy_vocab)
    bga.params["v_att"].value[...] = 0.0
    batch = bg.collate(bg.encode(toy_tensors), np.zeros(len(toy_tensors)))
    out = bga.forward(batch)
    npt.assert_allclose(out.alpha.value, 0.25, atol=1e-15)
    H = np.stack([h.value for h in out.hs], axis=1)
    h4 = out.hs[-1].value
    assert not np.allclose(H.mean(axis=1), h4)
    # shared GRU weights, so BG reads h_4 of the same states
    npt.assert_allclose(bg.forward(batch).hs[-1].value, h4, atol=1e-14)


def test_width_mismatch_rejected(toy_tensors):
    m = SequenceBaseline("CNN1G", TOY, ["a", "b"])
    with pytest.raises(Exception, match="vocab|codes|width"):
        m.predict_proba(toy_tensors)
