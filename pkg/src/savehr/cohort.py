"""Synthetic encounter streams and case-control cohort construction.

Time is measured in integer days from each stream's origin; a month is a
fixed 30-day block.  With the default :class:`CohortSpec` a patient's
features come from the half-open window ``[index - 27m, index - 15m)`` split
into four 3-month quarters, quarter 4 being the one nearest the index date.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, logit

SCHEMA = "savehr-cohort/1"
MONTH_DAYS = 30
YEAR_DAYS = 365.25

N_GENDER = 2
N_RACE = 5
N_AGE_BINS = 10
AGE_BIN_YEARS = 5
DEMO_DIM = N_GENDER + N_RACE + N_AGE_BINS


class ConfigError(ValueError):
    pass


class StratificationError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Encounter:
    day: int
    codes: tuple[str, ...]

    def __post_init__(self):
        if self.day < 0:
            raise ValueError(f"encounter day must be >= 0, got {self.day}")
        if not self.codes:
            raise ValueError("encounter without codes")


@dataclass(frozen=True)
class EncounterStream:
    patient_id: str
    gender: int
    race: int
    birth_offset: int
    encounters: tuple[Encounter, ...]

    def age_at(self, day: int) -> int:
        return int(np.floor((day - self.birth_offset) / YEAR_DAYS))


@dataclass(frozen=True)
class CohortSpec:
    target_codes: frozenset[str]
    case_min_hits: int = 3
    case_window_months: int = 6
    buffer_months: int = 3
    observation_span_months: int = 12
    observation_end_months_before_index: int = 15
    prediction_window_months: int = 15
    control_min_encounters: int = 5
    control_span_months: int = 24
    age_bounds: tuple[int, int] = (30, 80)
    min_code_occurrences: int = 50
    quarter_months: int = 3

    def __post_init__(self):
        object.__setattr__(self, "target_codes", frozenset(self.target_codes))
        if self.observation_span_months % self.quarter_months:
            raise ConfigError("observation span must be a whole number of quarters")

    @property
    def n_quarters(self) -> int:
        return self.observation_span_months // self.quarter_months

    def observation_window(self, index_day: int) -> tuple[int, int]:
        """Half-open ``[start, end)`` day range feeding the features."""
        end = index_day - self.observation_end_months_before_index * MONTH_DAYS
        return end - self.observation_span_months * MONTH_DAYS, end

    def quarter_of(self, day: int, index_day: int) -> int | None:
        """0-based quarter slot of ``day`` (0 = earliest), or None outside the window."""
        start, end = self.observation_window(index_day)
        if not start <= day < end:
            return None
        return (day - start) // (self.quarter_months * MONTH_DAYS)


def age_bin(age_years: int, spec: CohortSpec | None = None) -> int:
    lo = spec.age_bounds[0] if spec else 30
    return int(np.clip((age_years - lo) // AGE_BIN_YEARS, 0, N_AGE_BINS - 1))


# -- index dates -------------------------------------------------------------


def _first_dense_run(days: Sequence[int], need: int, span_days: int) -> int | None:
    """Position of the first run of ``need`` days fitting strictly inside ``span_days``."""
    for k in range(len(days) - need + 1):
        if days[k + need - 1] - days[k] < span_days:
            return k
    return None


def find_index_date(stream: EncounterStream, spec: CohortSpec) -> tuple[int, bool] | None:
    """Return ``(index_day, is_case)`` or None when the patient is not enrolled."""
    targets = spec.target_codes
    hit_days = [e.day for e in stream.encounters if targets.intersection(e.codes)]
    if hit_days:
        k = _first_dense_run(hit_days, spec.case_min_hits, spec.case_window_months * MONTH_DAYS)
        # k > 0 means an earlier, non-qualifying diagnosis exists
        if k != 0:
            return None
        index_day, is_case = hit_days[0], True
    else:
        days = [e.day for e in stream.encounters]
        if _first_dense_run(days, spec.control_min_encounters, spec.control_span_months * MONTH_DAYS) is None:
            return None
        index_day, is_case = days[-1], False
    lo, hi = spec.age_bounds
    if not lo <= stream.age_at(index_day) < hi:
        return None
    return index_day, is_case


def has_full_history(stream: EncounterStream, index_day: int, spec: CohortSpec) -> bool:
    return bool(stream.encounters) and stream.encounters[0].day <= spec.observation_window(index_day)[0]


@dataclass(frozen=True)
class Enrollment:
    stream: EncounterStream
    index_day: int
    label: int


@dataclass
class EnrollmentStats:
    cases: int = 0
    controls: int = 0
    not_qualifying: int = 0
    short_history: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(vars(self))


def enroll(streams: Iterable[EncounterStream], spec: CohortSpec) -> tuple[list[Enrollment], EnrollmentStats]:
    """Apply the index-date rules; patients lacking history before the window are skipped."""
    out, stats = [], EnrollmentStats()
    for s in streams:
        found = find_index_date(s, spec)
        if found is None:
            stats.not_qualifying += 1
            continue
        day, is_case = found
        if not has_full_history(s, day, spec):
            stats.short_history += 1
            continue
        out.append(Enrollment(s, day, int(is_case)))
        if is_case:
            stats.cases += 1
        else:
            stats.controls += 1
    return out, stats


# -- vocabulary and tensors --------------------------------------------------


def _window_code_counts(stream: EncounterStream, index_day: int, spec: CohortSpec):
    for e in stream.encounters:
        q = spec.quarter_of(e.day, index_day)
        if q is not None:
            for c in e.codes:
                yield q, c


def build_vocab(streams: Sequence[EncounterStream | Enrollment], spec: CohortSpec) -> list[str]:
    """Codes seen at least ``min_code_occurrences`` times inside observation windows.

    Accepts raw streams (enrolled on the fly) or existing enrollments.
    Sorted lexicographically.
    """
    if not streams:
        raise ConfigError("build_vocab needs at least one stream")
    if isinstance(streams[0], Enrollment):
        enrolled = list(streams)
    else:
        enrolled, _ = enroll(streams, spec)
    totals: dict[str, int] = {}
    for en in enrolled:
        for _, c in _window_code_counts(en.stream, en.index_day, spec):
            totals[c] = totals.get(c, 0) + 1
    vocab = sorted(c for c, n in totals.items() if n >= spec.min_code_occurrences)
    if not vocab:
        raise ConfigError(
            f"no code reaches {spec.min_code_occurrences} occurrences; lower min_code_occurrences"
        )
    return vocab


def vocab_hash(vocab: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(vocab).encode()).hexdigest()[:16]


@dataclass
class PatientTensor:
    """One supervised example.

    ``quarter_counts[q - 1]`` holds quarter ``q`` (q = 4 nearest the index
    date) as a dense count vector over the vocabulary.
    """

    patient_id: str
    label: int
    gender: int
    race: int
    age_bin: int
    quarter_counts: np.ndarray

    @property
    def demo_indices(self) -> tuple[int, int, int]:
        """Hot positions in the concatenated gender|race|age-bin one-hot."""
        return self.gender, N_GENDER + self.race, N_GENDER + N_RACE + self.age_bin

    @property
    def demo_onehots(self) -> np.ndarray:
        v = np.zeros(DEMO_DIM)
        v[list(self.demo_indices)] = 1.0
        return v

    def __eq__(self, other):
        if not isinstance(other, PatientTensor):
            return NotImplemented
        return (
            (self.patient_id, self.label, self.gender, self.race, self.age_bin)
            == (other.patient_id, other.label, other.gender, other.race, other.age_bin)
            and np.array_equal(self.quarter_counts, other.quarter_counts)
        )


def extract_tensor(
    stream: EncounterStream, index_day: int, label: int, spec: CohortSpec, vocab: Sequence[str]
) -> PatientTensor:
    if not vocab:
        raise ConfigError("empty vocabulary")
    position = {c: i for i, c in enumerate(vocab)}
    counts = np.zeros((spec.n_quarters, len(vocab)), dtype=np.int64)
    for q, c in _window_code_counts(stream, index_day, spec):
        j = position.get(c)
        if j is not None:
            counts[q, j] += 1
    return PatientTensor(
        patient_id=stream.patient_id,
        label=int(label),
        gender=stream.gender,
        race=stream.race,
        age_bin=age_bin(stream.age_at(index_day), spec),
        quarter_counts=counts,
    )


def extract_all(enrolled: Iterable[Enrollment], spec: CohortSpec, vocab: Sequence[str]) -> list[PatientTensor]:
    return [extract_tensor(e.stream, e.index_day, e.label, spec, vocab) for e in enrolled]


def split_cohort(items: Sequence, seed: int, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)):
    """Stratified, seeded three-way split of objects carrying a ``label``.

    Each split keeps the input order of its members.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError(f"fractions must be nonnegative and sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    labels = np.array([it.label for it in items])
    assign = np.empty(len(items), dtype=np.int64)
    for lab in (0, 1):
        idx = np.flatnonzero(labels == lab)
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(fractions[0] * len(idx)))
        n_val = int(round(fractions[1] * len(idx)))
        assign[idx[:n_train]] = 0
        assign[idx[n_train:n_train + n_val]] = 1
        assign[idx[n_train + n_val:]] = 2
    parts = tuple([items[i] for i in np.flatnonzero(assign == k)] for k in range(3))
    for name, part, frac in zip(("train", "val", "test"), parts, fractions):
        if frac > 0 and not any(it.label == 1 for it in part):
            raise StratificationError(f"{name} split received no cases")
    return parts


# -- synthetic populations ---------------------------------------------------


@dataclass(frozen=True)
class PopulationShift:
    """How a second population differs from the development one."""

    prevalence_scale: dict[str, float] = field(default_factory=dict)
    code_alias_map: dict[str, str] = field(default_factory=dict)
    demographic_mix_delta: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        targets = list(self.code_alias_map.values())
        if len(set(targets)) != len(targets):
            raise ConfigError("code_alias_map must be injective")
        unknown = set(self.demographic_mix_delta) - {"gender", "race", "age_years"}
        if unknown:
            raise ConfigError(f"unknown demographic_mix_delta keys: {sorted(unknown)}")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic risk model; defaults are tuned for desk scale."""

    base_rate: float = 0.01
    age_coef: float = 0.25
    n_conditions: int = 1
    visits_per_quarter: float = 1.5
    codes_per_visit: float = 1.0
    zipf_exponent: float = 0.8
    pair_carrier_rate: float = 0.15
    pair_quarter_prob: float = 0.4
    history_quarters: tuple[int, int] = (10, 13)
    target_codes_per_condition: int = 2
    gender_probs: tuple[float, ...] = (0.5, 0.5)
    race_probs: tuple[float, ...] = (0.6, 0.15, 0.12, 0.08, 0.05)
    age_range: tuple[float, float] = (30.0, 80.0)


def code_name(i: int) -> str:
    return f"C{i:03d}"


def target_codes(condition: int = 0, config: GeneratorConfig = GeneratorConfig()) -> frozenset[str]:
    return frozenset(f"T{condition}{chr(ord('a') + k)}" for k in range(config.target_codes_per_condition))


def condition_pairs(planted_pairs, condition: int, vocab_size: int) -> list[tuple[int, int, float]]:
    """Planted pairs used by ``condition``; later conditions shift code indices."""
    shift = 2 * len(planted_pairs) * condition
    out = []
    for i, j, w in planted_pairs:
        i, j = (_code_index(x) for x in (i, j))
        out.append(((i + shift) % vocab_size, (j + shift) % vocab_size, float(w)))
    return out


def _code_index(c) -> int:
    return int(c[1:]) if isinstance(c, str) else int(c)


def _mix(base: Sequence[float], delta) -> np.ndarray:
    p = np.asarray(base, dtype=float)
    if delta is not None:
        p = np.clip(p + np.asarray(delta, dtype=float), 0.0, None)
    if p.sum() <= 0:
        raise ConfigError("demographic mix has no mass")
    return p / p.sum()


def generate_population(
    seed: int,
    n_patients: int,
    vocab_size: int,
    planted_pairs: Sequence[tuple] = (),
    temporal_profile: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
    shift: PopulationShift | None = None,
    *,
    config: GeneratorConfig = GeneratorConfig(),
    id_prefix: str = "P",
) -> list[EncounterStream]:
    """Emit synthetic encounter streams with a known onset risk model.

    Each patient gets an intended index day ``T``.  For condition ``c`` the
    onset log-odds are ``logit(base_rate) + age_coef * (age - 55) / 10 +
    sum_pairs w * sum_q profile[q] * both_codes_in_quarter(q)``, evaluated on
    the four quarters that later form the observation window; the profile is
    rescaled so its largest entry is 1.  In a quarter, a pair carrier shows
    both codes with probability ``pair_quarter_prob`` and anyone else shows
    exactly one of them with twice that probability, so each code keeps the
    same marginal rate and only co-occurrence is informative.  Cases receive ``case_min_hits`` target-code visits within
    6 months starting at ``T``; controls get their last visit at ``T``.
    """
    if vocab_size < 10:
        raise ConfigError(f"vocab_size must be >= 10, got {vocab_size}")
    profile = np.asarray(temporal_profile, dtype=float)
    if profile.shape != (4,) or not np.all(np.isfinite(profile)) or np.any(profile < 0):
        raise ConfigError("temporal_profile needs 4 finite nonnegative weights")
    if not profile.any():
        raise ConfigError("temporal_profile is all zero")
    profile = profile / profile.max()
    if any(not np.isfinite(float(w)) for *_, w in planted_pairs):
        raise ConfigError("planted pair weights must be finite")
    shift = shift or PopulationShift()
    cfg = config

    names = [code_name(i) for i in range(vocab_size)]
    weights = 1.0 / np.arange(1, vocab_size + 1) ** cfg.zipf_exponent
    for c, f in shift.prevalence_scale.items():
        k = _code_index(c)
        if not 0 <= k < vocab_size or f < 0:
            raise ConfigError(f"prevalence_scale entry {c}:{f} is outside the vocabulary or negative")
        weights[k] *= f
    pairs = [condition_pairs(planted_pairs, c, vocab_size) for c in range(cfg.n_conditions)]
    # planted codes are emitted only by the pair mechanism
    for i, j, _ in (p for ps in pairs for p in ps):
        weights[[i, j]] = 0.0
    if weights.sum() <= 0:
        raise ConfigError("no background codes left after reserving planted codes")
    weights /= weights.sum()
    alias = shift.code_alias_map

    demo = shift.demographic_mix_delta
    p_gender = _mix(cfg.gender_probs, demo.get("gender"))
    p_race = _mix(cfg.race_probs, demo.get("race"))
    age_shift = float(demo.get("age_years", 0.0))

    targets = [sorted(target_codes(c, cfg)) for c in range(cfg.n_conditions)]
    intercept = logit(cfg.base_rate)
    width = len(str(max(n_patients - 1, 0)))
    quarter = 3 * MONTH_DAYS

    root = np.random.SeedSequence(seed)
    streams = []
    for pid, child in enumerate(root.spawn(n_patients)):
        rng = np.random.default_rng(child)
        gender = int(rng.choice(N_GENDER, p=p_gender))
        race = int(rng.choice(N_RACE, p=p_race))
        lo, hi = cfg.age_range
        age_years = int(np.clip(np.floor(rng.uniform(lo, hi) + age_shift), lo, hi - 1))
        n_slots = int(rng.integers(cfg.history_quarters[0], cfg.history_quarters[1] + 1))
        T = n_slots * quarter + int(rng.integers(0, quarter))
        birth = T - int(round((age_years + 0.5) * YEAR_DAYS))

        visits: dict[int, list[str]] = {}

        def visit(day: int, codes) -> None:
            visits.setdefault(day, []).extend(codes)

        # slot k covers [T - 90(k+1), T - 90k); slots 8..5 are quarters 1..4
        slot_days = []
        for k in range(n_slots):
            start = T - quarter * (k + 1)
            days = sorted(int(d) for d in rng.integers(start, start + quarter, size=1 + rng.poisson(cfg.visits_per_quarter)))
            slot_days.append(days)
            for d in days:
                n_codes = 1 + rng.poisson(cfg.codes_per_visit)
                visit(d, [names[i] for i in rng.choice(vocab_size, size=n_codes, p=weights)])

        onset = []
        for c in range(cfg.n_conditions):
            score = intercept + cfg.age_coef * (age_years - 55) / 10.0
            for i, j, w in pairs[c]:
                carrier = rng.random() < cfg.pair_carrier_rate
                for k in range(n_slots):
                    p = cfg.pair_quarter_prob
                    u = rng.random()
                    if carrier:
                        has_i = has_j = u < p
                    else:
                        # exactly one of the two codes, same marginal rate p
                        has_i, has_j = u < p, p <= u < 2 * p
                    days = slot_days[k]
                    if has_i:
                        visit(days[int(rng.integers(len(days)))], [names[i]])
                    if has_j:
                        visit(days[int(rng.integers(len(days)))], [names[j]])
                    if has_i and has_j and 5 <= k <= 8:
                        score += w * profile[8 - k]
            onset.append(rng.random() < expit(score))

        visit(T, [names[int(rng.choice(vocab_size, p=weights))]])
        for c, is_case in enumerate(onset):
            if is_case:
                later = sorted(int(d) for d in rng.choice(np.arange(1, 6 * MONTH_DAYS), size=2, replace=False))
                for d in (T, T + later[0], T + later[1]):
                    visit(d, [targets[c][int(rng.integers(len(targets[c])))]])

        encounters = tuple(
            Encounter(d, tuple(dict.fromkeys(alias.get(c, c) for c in visits[d]))) for d in sorted(visits)
        )
        streams.append(EncounterStream(f"{id_prefix}{pid:0{width}d}", gender, race, birth, encounters))
    return streams


# -- files -------------------------------------------------------------------


def _check_header(lines: list[str], path) -> None:
    if not lines or lines[0].strip() != SCHEMA:
        raise FormatError(f"{path}: missing schema tag {SCHEMA!r}")


def write_population(streams: Iterable[EncounterStream], path) -> None:
    """One patient per line: id, gender, race, birth_offset, then ``day,code,...`` groups."""
    rows = [SCHEMA]
    for s in streams:
        groups = [",".join([str(e.day), *e.codes]) for e in s.encounters]
        rows.append("\t".join([s.patient_id, str(s.gender), str(s.race), str(s.birth_offset), *groups]))
    Path(path).write_text("\n".join(rows) + "\n")


def read_population(path) -> list[EncounterStream]:
    lines = Path(path).read_text().splitlines()
    _check_header(lines, path)
    out = []
    for ln in lines[1:]:
        if not ln:
            continue
        pid, g, r, b, *groups = ln.split("\t")
        encs = []
        for grp in groups:
            day, *codes = grp.split(",")
            encs.append(Encounter(int(day), tuple(codes)))
        out.append(EncounterStream(pid, int(g), int(r), int(b), tuple(encs)))
    return out


def write_cohort(tensors: Iterable[PatientTensor], vocab: Sequence[str], path) -> None:
    """Vocabulary header, then id, label, demo one-hot indices and 4 quarter groups."""
    rows = [SCHEMA, "\t".join(["vocab", *vocab])]
    for t in tensors:
        demo = ",".join(str(i) for i in t.demo_indices)
        quarters = [
            ",".join(f"{j}:{int(q[j])}" for j in np.flatnonzero(q)) for q in t.quarter_counts
        ]
        rows.append("\t".join([t.patient_id, str(t.label), demo, *quarters]))
    Path(path).write_text("\n".join(rows) + "\n")


def read_cohort(path) -> tuple[list[PatientTensor], list[str]]:
    lines = Path(path).read_text().splitlines()
    _check_header(lines, path)
    head = lines[1].split("\t")
    if head[0] != "vocab":
        raise FormatError(f"{path}: second line must carry the vocabulary")
    vocab = head[1:]
    out = []
    for ln in lines[2:]:
        if not ln:
            continue
        pid, label, demo, *quarters = ln.split("\t")
        g, r, a = (int(x) for x in demo.split(","))
        counts = np.zeros((len(quarters), len(vocab)), dtype=np.int64)
        for q, grp in enumerate(quarters):
            for item in filter(None, grp.split(",")):
                j, n = item.split(":")
                counts[q, int(j)] = int(n)
        out.append(PatientTensor(pid, int(label), g, r - N_GENDER, a - N_GENDER - N_RACE, counts))
    return out, vocab


def with_targets(spec: CohortSpec, condition: int, config: GeneratorConfig = GeneratorConfig()) -> CohortSpec:
    return replace(spec, target_codes=target_codes(condition, config))
