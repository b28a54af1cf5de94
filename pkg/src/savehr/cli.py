"""Command-line pipeline: gen -> cohort -> train -> eval -> explain.

Every command works inside one run directory and records its resolved
settings in ``manifest.json`` there; ``replay`` re-executes the recorded
steps into a fresh directory.  Settings come from defaults, then an
optional ``key=value`` file (``--config``), then ``--set key=value`` flags.

Exit status: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import cohort as co
from .baselines import (
    SEQUENCE_KINDS,
    BaselineConfig,
    LogisticHyper,
    MLPConfig,
    fit_logistic,
    fit_mlp,
    fit_sequence_baseline,
)
from .checkpoint import MODEL_KINDS, FormatError, load_model, save_model
from .interpret import export_heatmap, patient_importance, population_heatmap, quarter_attention_summary
from .metrics import EvalRow, cross_validate, evaluate, write_report
from .model import ModelConfig, VocabularyError
from .model import train as train_savehr
from .training import TrainHyper, TrainingError

log = logging.getLogger("savehr")

MANIFEST = "manifest.json"
MANIFEST_FORMAT = "savehr-run/1"
COMMANDS = ("gen", "cohort", "train", "eval", "explain")


class DataError(RuntimeError):
    pass


# -- settings ----------------------------------------------------------------

# key -> (type, default).  One flat namespace shared by every command so a
# single file can drive the whole pipeline.
SETTINGS: dict[str, tuple[type, object]] = {
    "seed": (int, 0),
    # gen
    "patients": (int, 2000),
    "vocab_size": (int, 50),
    "pairs": (str, "1-2:3.0,3-4:3.0,5-6:3.0"),
    "profile": (str, "1,1,1,1"),
    "conditions": (int, 4),
    "shift": (str, "default"),
    "shift_prevalence": (str, "C007:2.0,C009:2.0,C011:0.5"),
    "shift_alias": (str, ""),
    "shift_gender": (str, ""),
    "shift_race": (str, ""),
    "shift_age_years": (float, 0.0),
    "base_rate": (float, co.GeneratorConfig.base_rate),
    "age_coef": (float, co.GeneratorConfig.age_coef),
    "visits_per_quarter": (float, co.GeneratorConfig.visits_per_quarter),
    "codes_per_visit": (float, co.GeneratorConfig.codes_per_visit),
    "zipf_exponent": (float, co.GeneratorConfig.zipf_exponent),
    "pair_carrier_rate": (float, co.GeneratorConfig.pair_carrier_rate),
    "pair_quarter_prob": (float, co.GeneratorConfig.pair_quarter_prob),
    # cohort
    "min_code_occurrences": (int, 50),
    "split": (str, "0.7,0.15,0.15"),
    # train / eval / explain
    "condition": (str, "all"),
    "kind": (str, "SAVEHR"),
    "e": (int, 16),
    "d_a": (int, 16),
    "r": (int, 4),
    "d_h": (int, 32),
    "d_att": (int, 32),
    "max_tokens": (int, 64),
    "lr": (float, 1e-3),
    "epochs": (int, 30),
    "batch": (int, 32),
    "patience": (int, 5),
    "class_weighting": (bool, True),
    "grad_clip": (float, 5.0),
    "penalty_coeff": (float, 0.0),
    "hidden": (int, 64),
    "dropout": (float, 0.3),
    "filters": (int, 64),
    "lk_filters": (int, 4),
    "logit_lr": (float, 0.5),
    "logit_max_epochs": (int, 3000),
    "logit_tol": (float, 1e-7),
    "kinds": (str, "SAVEHR"),
    "cv": (int, 0),
    "patient_ids": (str, ""),
    "top_k": (int, 20),
}


def _coerce(key: str, raw) -> object:
    typ = SETTINGS[key][0]
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        return typ(text)
    except ValueError:
        raise co.ConfigError(f"setting {key}={text!r} is not a valid {typ.__name__}") from None


def parse_pairs(text: str) -> list[str]:
    return [p for p in (s.strip() for s in text.split(",")) if p]


def resolve_settings(config_file=None, overrides=()) -> dict[str, object]:
    """Defaults, then the config file, then overrides; unknown keys raise ``ConfigError``."""
    out = {k: d for k, (_, d) in SETTINGS.items()}
    items: list[tuple[str, str, str]] = []
    if config_file is not None:
        try:
            text = Path(config_file).read_text()
        except OSError as exc:
            raise co.ConfigError(f"cannot read config file: {exc}") from None
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise co.ConfigError(f"{config_file}:{n}: expected key=value")
            k, v = line.split("=", 1)
            items.append((k.strip(), v, f"{config_file}:{n}"))
    for ov in overrides:
        if "=" not in ov:
            raise co.ConfigError(f"--set expects key=value, got {ov!r}")
        k, v = ov.split("=", 1)
        items.append((k.strip(), v, "--set"))
    for k, v, where in items:
        if k not in SETTINGS:
            raise co.ConfigError(f"{where}: unknown setting {k!r}")
        out[k] = _coerce(k, v)
    return out


def _floats(text: str, key: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(x) for x in parse_pairs(text)]
    except ValueError:
        raise co.ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise co.ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def planted_pairs(s) -> list[tuple[int, int, float]]:
    out = []
    for item in parse_pairs(s["pairs"]):
        try:
            codes, w = item.split(":")
            i, j = codes.split("-")
            out.append((int(i), int(j), float(w)))
        except ValueError:
            raise co.ConfigError(f"pairs: cannot parse {item!r}; expected i-j:weight") from None
    return out


def generator_config(s) -> co.GeneratorConfig:
    fields = {f.name for f in dataclasses.fields(co.GeneratorConfig)}
    kw = {k: s[k] for k in SETTINGS if k in fields}
    return co.GeneratorConfig(n_conditions=s["conditions"], **kw)


def population_shift(s) -> co.PopulationShift | None:
    if s["shift"] == "none":
        return None
    if s["shift"] != "default":
        raise co.ConfigError(f"shift must be 'none' or 'default', got {s['shift']!r}")
    scale = {}
    for item in parse_pairs(s["shift_prevalence"]):
        code, _, f = item.partition(":")
        try:
            scale[code] = float(f)
        except ValueError:
            raise co.ConfigError(f"shift_prevalence: cannot parse {item!r}") from None
    alias = {}
    for item in parse_pairs(s["shift_alias"]):
        src, sep, dst = item.partition(">")
        if not sep:
            raise co.ConfigError(f"shift_alias: cannot parse {item!r}; expected CODE>ALIAS")
        alias[src] = dst
    demo: dict[str, object] = {}
    if s["shift_gender"]:
        demo["gender"] = _floats(s["shift_gender"], "shift_gender", co.N_GENDER)
    if s["shift_race"]:
        demo["race"] = _floats(s["shift_race"], "shift_race", co.N_RACE)
    if s["shift_age_years"]:
        demo["age_years"] = s["shift_age_years"]
    return co.PopulationShift(scale, alias, demo)


def conditions(s) -> list[int]:
    if s["condition"] == "all":
        return list(range(s["conditions"]))
    out = [int(c) for c in parse_pairs(s["condition"])] if s["condition"].replace(",", "").isdigit() else None
    if not out or any(c >= s["conditions"] for c in out):
        raise co.ConfigError(f"condition must be 'all' or indices below {s['conditions']}, got {s['condition']!r}")
    return out


def condition_name(c: int) -> str:
    return f"dx{c}"


def model_kinds(text: str) -> list[str]:
    kinds = parse_pairs(text)
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad or not kinds:
        raise co.ConfigError(f"unknown model kind(s) {bad}; choose from {', '.join(MODEL_KINDS)}")
    return kinds


def cohort_spec(s, condition: int) -> co.CohortSpec:
    base = co.CohortSpec(co.target_codes(0), min_code_occurrences=s["min_code_occurrences"])
    return co.with_targets(base, condition, generator_config(s))


def split_fractions(s) -> tuple[float, float, float]:
    f = _floats(s["split"], "split", 3)
    if abs(sum(f) - 1.0) > 1e-9 or min(f) < 0:
        raise co.ConfigError(f"split must be three nonnegative fractions summing to 1, got {s['split']}")
    return tuple(f)


def train_hyper(s) -> TrainHyper:
    names = {f.name for f in dataclasses.fields(TrainHyper)}
    return TrainHyper(**{k: s[k] for k in names})


def validate(command: str, s) -> None:
    """Fail on bad settings before anything touches the filesystem.

    Every setting is checked whatever the command, so a typo surfaces on
    the first step that sees it.
    """
    for key in ("patients", "vocab_size", "conditions", "top_k"):
        if s[key] < 1:
            raise co.ConfigError(f"{key} must be >= 1")
    generator_config(s)
    planted_pairs(s)
    _floats(s["profile"], "profile", 4)
    population_shift(s)
    split_fractions(s)
    conditions(s)
    model_kinds(s["kind"])
    model_kinds(s["kinds"])
    _model_config(s["kind"], s)
    train_hyper(s)
    if s["cv"] == 1 or s["cv"] < 0:
        raise co.ConfigError("cv must be 0 (off) or >= 2")


# -- run directory -----------------------------------------------------------


def _versions() -> dict[str, str]:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"savehr": own, "numpy": np.__version__, "scipy": scipy.__version__, "python": sys.version.split()[0]}


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_manifest(run: Path) -> dict:
    path = run / MANIFEST
    if not path.exists():
        return {"format": MANIFEST_FORMAT, "versions": _versions(), "steps": []}
    m = json.loads(path.read_text())
    if m.get("format") != MANIFEST_FORMAT:
        raise co.ConfigError(f"{path}: not a {MANIFEST_FORMAT} manifest")
    return m


def record_step(run: Path, command: str, settings: dict, outputs: list[Path]) -> None:
    m = load_manifest(run)
    m["versions"] = _versions()
    rel = sorted(str(p.relative_to(run)) for p in outputs)
    step = {
        "command": command,
        "settings": settings,
        "outputs": {r: _digest(run / r) for r in rel},
    }
    # a forced rerun replaces the earlier record in place, keeping step order
    same = [i for i, st in enumerate(m["steps"]) if st["command"] == command and sorted(st["outputs"]) == rel]
    if same:
        m["steps"][same[0]] = step
    else:
        m["steps"].append(step)
    (run / MANIFEST).write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")


def guard_outputs(paths, force: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise co.ConfigError(f"refusing to overwrite {existing[0]} (and {len(existing) - 1} more); pass --force")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"{path} not found; run '{hint}' first")
    return path


def pop_path(run: Path, name: str) -> Path:
    return run / "populations" / f"{name}.tsv"


def cohort_dir(run: Path, c: int) -> Path:
    return run / "cohorts" / condition_name(c)


def model_path(run: Path, kind: str, c: int) -> Path:
    return run / "models" / f"{kind}_{condition_name(c)}.ckpt"


# -- commands ----------------------------------------------------------------


def cmd_gen(run: Path, s, force: bool) -> list[Path]:
    outs = [pop_path(run, "P1"), pop_path(run, "P2")]
    guard_outputs(outs, force)
    cfg = generator_config(s)
    pairs = planted_pairs(s)
    profile = tuple(_floats(s["profile"], "profile", 4))
    p2_seed = s["seed"] + 1
    p1 = co.generate_population(s["seed"], s["patients"], s["vocab_size"], pairs, profile, config=cfg, id_prefix="A")
    p2 = co.generate_population(
        p2_seed, s["patients"], s["vocab_size"], pairs, profile, population_shift(s), config=cfg, id_prefix="B"
    )
    outs[0].parent.mkdir(parents=True, exist_ok=True)
    co.write_population(p1, outs[0])
    co.write_population(p2, outs[1])
    print(f"P1: {len(p1)} patients (seed {s['seed']}), P2: {len(p2)} patients (seed {p2_seed}, shift {s['shift']})")
    return outs


def _table2_line(name: str, sets) -> str:
    cells = []
    for items in sets:
        n_case = sum(t.label for t in items)
        cells.append(f"{n_case} : {len(items) - n_case}")
    return f"{name}\t" + "\t".join(cells)


def cmd_cohort(run: Path, s, force: bool) -> list[Path]:
    conds = conditions(s)
    names = ("P1_train", "P1_val", "P1_test", "P2")
    outs = [cohort_dir(run, c) / f"{n}.tsv" for c in conds for n in names]
    guard_outputs(outs, force)
    p1 = co.read_population(_require(pop_path(run, "P1"), "gen"))
    p2 = co.read_population(_require(pop_path(run, "P2"), "gen"))
    fractions = split_fractions(s)
    print("condition\t" + "\t".join(f"{n} (case : control)" for n in ("train P1", "val P1", "test P1", "external P2")))
    for c in conds:
        spec = cohort_spec(s, c)
        e1, st1 = co.enroll(p1, spec)
        e2, st2 = co.enroll(p2, spec)
        if st1.cases == 0:
            raise DataError(f"{condition_name(c)}: no cases in P1 (enrollment counts {st1.as_dict()})")
        tr, va, te = co.split_cohort(e1, s["seed"], fractions)
        vocab = co.build_vocab(tr, spec)
        sets = [co.extract_all(x, spec, vocab) for x in (tr, va, te, e2)]
        d = cohort_dir(run, c)
        d.mkdir(parents=True, exist_ok=True)
        for n, items in zip(names, sets):
            co.write_cohort(items, vocab, d / f"{n}.tsv")
        print(_table2_line(condition_name(c), sets))
        log.info("%s: P1 %s, P2 %s, vocab %d", condition_name(c), st1.as_dict(), st2.as_dict(), len(vocab))
    return outs


def read_split(run: Path, c: int, name: str):
    return co.read_cohort(_require(cohort_dir(run, c) / f"{name}.tsv", "cohort"))


def _model_config(kind: str, s):
    if kind == "SAVEHR":
        return ModelConfig(**{k: s[k] for k in ("e", "d_a", "r", "d_h", "d_att", "max_tokens", "seed")})
    if kind == "LR":
        return LogisticHyper(s["logit_lr"], s["logit_max_epochs"], s["logit_tol"])
    if kind == "MLP":
        return MLPConfig(s["hidden"], s["dropout"], s["seed"])
    return BaselineConfig(s["e"], s["d_h"], s["d_att"], s["filters"], s["lk_filters"], s["max_tokens"], s["seed"])


def fit_kind(kind: str, train, val, vocab, s):
    """Train a model of ``kind``; returns ``(model, log)``."""
    cfg = _model_config(kind, s)
    hyper = train_hyper(s)
    if kind == "SAVEHR":
        return train_savehr(train, val, cfg, vocab, hyper)
    if kind == "LR":
        return fit_logistic(train, val, cfg, vocab)
    if kind == "MLP":
        return fit_mlp(train, val, hyper, cfg, vocab)
    if kind in {k.value for k in SEQUENCE_KINDS}:
        return fit_sequence_baseline(kind, train, val, hyper, cfg, vocab)
    raise co.ConfigError(f"unknown model kind {kind!r}")


def cmd_train(run: Path, s, force: bool) -> list[Path]:
    kind = s["kind"]
    conds = conditions(s)
    outs = []
    for c in conds:
        ck = model_path(run, kind, c)
        outs += [ck, ck.with_suffix(".log.jsonl")]
    guard_outputs(outs, force)
    for c in conds:
        train, vocab = read_split(run, c, "P1_train")
        val, _ = read_split(run, c, "P1_val")
        model, history = fit_kind(kind, train, val, vocab, s)
        ck = model_path(run, kind, c)
        ck.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, ck)
        ck.with_suffix(".log.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in history))
        last = history[-1] if history else {}
        print(f"{kind} {condition_name(c)}: {len(history)} epochs, final train loss {last.get('train_loss', float('nan')):.5f}")
    return outs


def _check_vocab(model, vocab, where: str) -> None:
    if list(model.vocab) != list(vocab):
        raise VocabularyError(
            f"{where}: cohort vocabulary hash {co.vocab_hash(vocab)} does not match "
            f"checkpoint vocabulary hash {co.vocab_hash(model.vocab)}"
        )


def cmd_eval(run: Path, s, force: bool) -> list[Path]:
    outs = [run / "reports" / "eval.jsonl", run / "reports" / "eval.csv"]
    guard_outputs(outs, force)
    rows: list[EvalRow] = []
    for kind in model_kinds(s["kinds"]):
        for c in conditions(s):
            model = load_model(_require(model_path(run, kind, c), f"train --set kind={kind}"))
            name = condition_name(c)
            test, vocab = read_split(run, c, "P1_test")
            ext, vocab2 = read_split(run, c, "P2")
            _check_vocab(model, vocab, f"{name} P1_test")
            _check_vocab(model, vocab2, f"{name} P2")
            for pop, items in (("P1", test), ("P2", ext)):
                rows.append(evaluate(kind, name, pop, "test", model.predict_proba(items), [t.label for t in items]))
            if s["cv"] >= 2:
                rows.append(_cv_row(kind, name, run, c, vocab, s))
    outs[0].parent.mkdir(parents=True, exist_ok=True)
    write_report(rows, *outs)
    for r in rows:
        extra = f" (+-{r.auc_pr_std:.4f} over {r.n_folds} folds)" if r.n_folds else ""
        print(f"{r.model}\t{r.condition}\t{r.population}:{r.split}\tAUC-PR {r.auc_pr:.4f}{extra}\tAUC-ROC {r.auc_roc:.4f}\t{r.n_case} : {r.n_control}")
    return outs


def _cv_row(kind: str, name: str, run: Path, c: int, vocab, s) -> EvalRow:
    everything = []
    for split in ("P1_train", "P1_val", "P1_test"):
        everything += read_split(run, c, split)[0]

    def factory(items):
        # each fold trains on its own stratified train/val carve-out
        tr, va, _ = co.split_cohort(items, s["seed"], (0.85, 0.15, 0.0))
        return fit_kind(kind, tr, va, vocab, s)[0]

    res = cross_validate(factory, everything, k=s["cv"], seed=s["seed"])
    y = np.array([t.label for t in everything])
    return EvalRow(
        kind, name, "P1", f"cv{s['cv']}", res.auc_pr_mean, res.auc_roc_mean,
        int(y.sum()), int(y.size - y.sum()), res.auc_pr_std, res.auc_roc_std, s["cv"],
    )


def cmd_explain(run: Path, s, force: bool) -> list[Path]:
    conds = conditions(s)
    wanted = parse_pairs(s["patient_ids"])
    outs = []
    for c in conds:
        d = run / "explain" / condition_name(c)
        outs += [d / "population.csv", d / "quarters.txt"] + [d / f"patient_{pid}.csv" for pid in wanted]
        outs += [d / f"patient_{pid}_q{q}.csv" for pid in wanted for q in range(1, 5)]
    guard_outputs(outs, force)
    for c in conds:
        model = load_model(_require(model_path(run, "SAVEHR", c), "train"))
        test, vocab = read_split(run, c, "P1_test")
        ext, vocab2 = read_split(run, c, "P2")
        _check_vocab(model, vocab, condition_name(c))
        _check_vocab(model, vocab2, condition_name(c))
        by_id = {t.patient_id: t for t in [*test, *ext]}
        missing = [pid for pid in wanted if pid not in by_id]
        if missing:
            raise LookupError(f"{condition_name(c)}: unknown patient id(s) {missing} in P1_test/P2")
        d = run / "explain" / condition_name(c)
        d.mkdir(parents=True, exist_ok=True)
        for pid in wanted:
            export_heatmap(patient_importance(model, by_id[pid]), d / f"patient_{pid}.csv")
            for q, imp in enumerate(patient_importance(model, by_id[pid], "per_quarter"), 1):
                export_heatmap(imp, d / f"patient_{pid}_q{q}.csv")
        probs = model.predict_proba(test)
        cases = [t for t, p in zip(test, probs) if p >= 0.5] or [t for t in test if t.label == 1]
        export_heatmap(population_heatmap(model, cases, s["top_k"]), d / "population.csv")
        summary = quarter_attention_summary(model, test)
        (d / "quarters.txt").write_text(summary.to_text())
        print(f"{condition_name(c)}: mean quarter attention " + " ".join(f"{a:.3f}" for a in summary.mean_alpha))
    return outs


HANDLERS = {"gen": cmd_gen, "cohort": cmd_cohort, "train": cmd_train, "eval": cmd_eval, "explain": cmd_explain}


def run_command(command: str, run: Path, settings: dict, force: bool = False) -> list[Path]:
    validate(command, settings)
    run.mkdir(parents=True, exist_ok=True)
    outs = HANDLERS[command](run, settings, force)
    record_step(run, command, settings, outs)
    return outs


def replay(manifest_path: Path, run: Path, force: bool = False) -> list[Path]:
    """Re-run every recorded step into ``run``; returns all outputs."""
    m = json.loads(Path(manifest_path).read_text())
    if m.get("format") != MANIFEST_FORMAT:
        raise co.ConfigError(f"{manifest_path}: not a {MANIFEST_FORMAT} manifest")
    outs = []
    for step in m["steps"]:
        settings = {k: _coerce(k, v) for k, v in step["settings"].items() if k in SETTINGS}
        unknown = set(step["settings"]) - set(SETTINGS)
        if unknown:
            raise co.ConfigError(f"{manifest_path}: unknown settings {sorted(unknown)}")
        outs += run_command(step["command"], run, settings, force)
    return outs


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="savehr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--run-dir", default="run", type=Path)
        p.add_argument("--config", type=Path, help="key=value settings file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "gen":
            p.add_argument("--shift", choices=("none", "default"))
        if name in ("train", "eval", "explain"):
            p.add_argument("--condition")
        if name == "train":
            p.add_argument("--kind", choices=MODEL_KINDS)
        if name == "eval":
            p.add_argument("--cv", type=int)
        if name == "explain":
            p.add_argument("--patients", help="comma-separated patient ids")
    p = sub.add_parser("replay", help="re-run the steps recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--run-dir", required=True, type=Path)
    p.add_argument("--force", action="store_true")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _flag_overrides(args) -> list[str]:
    out = list(args.overrides)
    for flag, key in (("shift", "shift"), ("condition", "condition"), ("kind", "kind"), ("cv", "cv"), ("patients", "patient_ids")):
        val = getattr(args, flag, None)
        if val is not None:
            out.append(f"{key}={val}")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "replay":
            replay(args.manifest, args.run_dir, args.force)
        else:
            settings = resolve_settings(args.config, _flag_overrides(args))
            run_command(args.command, args.run_dir, settings, args.force)
    except co.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FormatError, VocabularyError, co.StratificationError, TrainingError, LookupError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
