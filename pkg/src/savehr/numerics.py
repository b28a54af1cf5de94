"""Dense float64 arrays with define-by-run reverse-mode gradients.

Operations executed while a :class:`Tape` is active append a backward rule to
it; ``Tape.backward`` replays those rules in reverse insertion order.  Outside
a tape the same functions just compute values, which is what inference and
finite-difference probing use.

Arrays are plain numpy arrays of any rank; model code works with 2-D matrices
and, for minibatches, stacks of them along a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

DTYPE = np.float64


class DimensionError(ValueError):
    pass


class DeterminismError(RuntimeError):
    pass


class Tensor:
    """A value, optionally tracked for gradients."""

    __slots__ = ("value", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


class Param(Tensor):
    """A learnable leaf: value plus a gradient buffer of the same shape."""

    __slots__ = ()

    def __init__(self, value, name: str):
        super().__init__(np.array(value, dtype=DTYPE), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


# -- recording ---------------------------------------------------------------

_TAPES: list["Tape"] = []


class Tape:
    """Records backward rules of operations run inside ``with Tape():``."""

    def __init__(self):
        self.entries: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.pop()

    def __len__(self) -> int:
        return len(self.entries)

    def backward(self, loss: Tensor) -> None:
        if loss.value.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.value)
        for out, rule in reversed(self.entries):
            if out.grad is not None:
                rule(out.grad)


def _active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(value: np.ndarray, parents: Sequence[Tensor], rule: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap ``value`` as an op output; ``rule(g)`` must push ``g`` into parents.

    Public so that callers can define their own operations.
    """
    out = Tensor(value)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.entries.append((out, rule))
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if isinstance(t, Param):
        t.grad += g
    elif t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- arithmetic --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def rule(g):
        accumulate(a, _unbroadcast(g, a.shape))
        accumulate(b, _unbroadcast(g, b.shape))

    return record(a.value + b.value, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def rule(g):
        accumulate(a, _unbroadcast(g, a.shape))
        accumulate(b, _unbroadcast(-g, b.shape))

    return record(a.value - b.value, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def rule(g):
        if a.requires_grad:
            accumulate(a, _unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            accumulate(b, _unbroadcast(g * a.value, b.shape))

    return record(a.value * b.value, (a, b), rule)


def matmul(a, b) -> Tensor:
    """Matrix product; leading axes broadcast as in ``numpy.matmul``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def rule(g):
        if a.requires_grad:
            accumulate(a, _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape))
        if b.requires_grad:
            accumulate(b, _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape))

    return record(a.value @ b.value, (a, b), rule)


# -- elementwise nonlinearities ----------------------------------------------


def tanh_elem(m) -> Tensor:
    m = as_tensor(m)
    t = np.tanh(m.value)
    return record(t, (m,), lambda g: accumulate(m, g * (1.0 - t * t)))


def sigmoid_elem(m) -> Tensor:
    m = as_tensor(m)
    s = expit(m.value)
    return record(s, (m,), lambda g: accumulate(m, g * s * (1.0 - s)))


def relu_elem(m) -> Tensor:
    m = as_tensor(m)
    on = m.value > 0
    return record(np.where(on, m.value, 0.0), (m,), lambda g: accumulate(m, g * on))


# -- normalisation -----------------------------------------------------------


def row_softmax(m, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along the last axis.

    ``mask`` (broadcastable boolean, True = keep) gives excluded entries an
    exact zero probability; every row must keep at least one entry.
    """
    m = as_tensor(m)
    if m.value.size == 0:
        raise DimensionError("row_softmax of an empty matrix")
    x = m.value if mask is None else np.where(mask, m.value, -np.inf)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    s = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        accumulate(m, s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return record(s, (m,), rule)


def weighted_cross_entropy(logits, labels: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Mean over rows of ``-w[y] * log softmax(logits)[y]``, fused for stability."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    x = logits.value - logits.value.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(x).sum(axis=-1, keepdims=True))
    logp = x - logz
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=DTYPE)
    rows = np.arange(n)
    loss = -(w * logp[rows, labels]).sum() / n

    def rule(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        accumulate(logits, g * d * (w / n)[:, None])

    return record(np.asarray(loss), (logits,), rule)


# -- reductions and reshaping ------------------------------------------------


def sum_all(m) -> Tensor:
    m = as_tensor(m)
    return record(np.asarray(m.value.sum()), (m,), lambda g: accumulate(m, np.broadcast_to(g, m.shape)))


def sum_axis(m, axis: int) -> Tensor:
    m = as_tensor(m)

    def rule(g):
        accumulate(m, np.broadcast_to(np.expand_dims(g, axis), m.shape))

    return record(m.value.sum(axis=axis), (m,), rule)


def reshape(m, shape) -> Tensor:
    m = as_tensor(m)
    return record(m.value.reshape(shape), (m,), lambda g: accumulate(m, g.reshape(m.shape)))


def transpose(m) -> Tensor:
    """Swap the last two axes."""
    m = as_tensor(m)
    return record(np.swapaxes(m.value, -1, -2), (m,), lambda g: accumulate(m, np.swapaxes(g, -1, -2)))


def getitem(m, key) -> Tensor:
    """Basic (non-fancy) indexing and slicing."""
    m = as_tensor(m)

    def rule(g):
        full = np.zeros_like(m.value)
        full[key] = g
        accumulate(m, full)

    return record(m.value[key], (m,), rule)


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def rule(g):
        for p, piece in zip(parts, np.split(g, cuts, axis=axis)):
            accumulate(p, piece)

    return record(np.concatenate([p.value for p in parts], axis=axis), parts, rule)


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]

    def rule(g):
        for i, p in enumerate(parts):
            accumulate(p, np.take(g, i, axis=axis))

    return record(np.stack([p.value for p in parts], axis=axis), parts, rule)


def gather_rows(table, ids: np.ndarray) -> Tensor:
    """``table[ids]`` for an integer array of any shape (embedding lookup)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def rule(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        accumulate(table, full)

    return record(table.value[ids], (table,), rule)


# -- gradient checking -------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    n_checked: int
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(err <= self.tolerance for err in self.max_rel_error.values())

    def worst(self) -> tuple[str, float]:
        name = max(self.max_rel_error, key=self.max_rel_error.get)
        return name, self.max_rel_error[name]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Param],
    entries_per_param: int = 20,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` closes over ``params`` and must return a scalar Tensor.  A
    random sample of at most ``entries_per_param`` entries is probed per
    parameter.
    """
    first = float(loss_fn().value)
    second = float(loss_fn().value)
    if first != second:
        raise DeterminismError(f"loss changed between identical forward passes: {first!r} vs {second!r}")

    zero_grads(params)
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = {id(p): p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    n_checked = 0
    for k, p in enumerate(params):
        flat = p.value.reshape(-1)
        take = min(entries_per_param, flat.size)
        worst = 0.0
        for idx in rng.choice(flat.size, size=take, replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up = float(loss_fn().value)
            flat[idx] = orig - h
            down = float(loss_fn().value)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            worst = max(worst, relative_error(float(analytic[id(p)].reshape(-1)[idx]), numeric))
            n_checked += 1
        errors[p.name or f"param{k}"] = worst
    return GradCheckReport(errors, n_checked, tolerance)
