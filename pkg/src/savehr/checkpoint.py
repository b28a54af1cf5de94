"""Plain-text model checkpoints.

Layout::

    savehr-model/1
    kind SAVEHR
    config {"d_a": 16, ...}
    vocab_hash 0123456789abcdef
    vocab ["C000", ...]
    param embedding 67 16
    <one line of repr floats per row>
    ...

Loading rebuilds an untrained model from ``kind``, ``config`` and
``vocab`` and refuses files whose parameter table differs from it.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .baselines import (
    SEQUENCE_KINDS,
    BaselineConfig,
    LogisticHyper,
    LogisticModel,
    MLPConfig,
    MLPModel,
    SequenceBaseline,
)
from .cohort import FormatError, vocab_hash
from .model import ModelConfig, SavehrModel

MAGIC = "savehr-model/1"


def _registry() -> dict[str, tuple[type, object]]:
    reg: dict[str, tuple[type, object]] = {
        "SAVEHR": (ModelConfig, SavehrModel),
        "LR": (LogisticHyper, LogisticModel),
        "MLP": (MLPConfig, MLPModel),
    }
    for k in SEQUENCE_KINDS:
        reg[k.value] = (BaselineConfig, lambda cfg, vocab, kind=k: SequenceBaseline(kind, cfg, vocab))
    return reg


MODEL_KINDS = tuple(_registry())


def model_kind(model) -> str:
    kind = model.kind
    return getattr(kind, "value", kind)


def build_model(kind: str, config: dict, vocab):
    """Fresh model of ``kind`` from a config mapping; unknown fields are rejected."""
    reg = _registry()
    if kind not in reg:
        raise FormatError(f"unknown model kind {kind!r}; expected one of {', '.join(reg)}")
    cfg_cls, factory = reg[kind]
    names = {f.name for f in dataclasses.fields(cfg_cls)}
    unknown = set(config) - names
    if unknown:
        raise FormatError(f"{kind} config has unknown fields {sorted(unknown)}")
    return factory(cfg_cls(**config), list(vocab))


def _fmt_row(row: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in row)


def save_model(model, path) -> None:
    lines = [
        MAGIC,
        f"kind {model_kind(model)}",
        "config " + json.dumps(dataclasses.asdict(model.config), sort_keys=True),
        f"vocab_hash {vocab_hash(model.vocab)}",
        "vocab " + json.dumps(model.vocab),
    ]
    for name, p in model.params.items():
        value = np.atleast_2d(p.value)
        lines.append(f"param {name} {value.shape[0]} {value.shape[1]}")
        lines.extend(_fmt_row(r) for r in value)
    Path(path).write_text("\n".join(lines) + "\n")


def _field(line: str, key: str, path) -> str:
    head, _, rest = line.partition(" ")
    if head != key:
        raise FormatError(f"{path}: expected '{key}' line, found {line[:40]!r}")
    return rest


def load_model(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MAGIC:
        raise FormatError(f"{path}: not a {MAGIC} checkpoint")
    if len(lines) < 5:
        raise FormatError(f"{path}: truncated header")
    kind = _field(lines[1], "kind", path)
    config = json.loads(_field(lines[2], "config", path))
    digest = _field(lines[3], "vocab_hash", path)
    vocab = json.loads(_field(lines[4], "vocab", path))
    if vocab_hash(vocab) != digest:
        raise FormatError(f"{path}: vocabulary does not match its recorded hash")
    model = build_model(kind, config, vocab)
    expected = {name: np.atleast_2d(p.value).shape for name, p in model.params.items()}
    seen = set()
    i = 5
    while i < len(lines):
        parts = _field(lines[i], "param", path).split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{i + 1}: malformed param line")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        if expected.get(name) != (rows, cols):
            raise FormatError(f"{path}: parameter {name} has shape {(rows, cols)}, model expects {expected.get(name)}")
        body = lines[i + 1:i + 1 + rows]
        if len(body) != rows:
            raise FormatError(f"{path}: parameter {name} is truncated")
        arr = np.array([[float(v) for v in r.split()] for r in body], dtype=np.float64).reshape(rows, cols)
        target = model.params[name].value
        target[...] = arr.reshape(target.shape)
        seen.add(name)
        i += 1 + rows
    missing = set(expected) - seen
    if missing:
        raise FormatError(f"{path}: missing parameters {sorted(missing)}")
    return model
