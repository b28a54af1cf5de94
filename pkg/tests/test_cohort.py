import itertools

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit, logit
from scipy.stats import norm

from savehr import cohort as co
from savehr.cohort import CohortSpec, Encounter, EncounterStream, MONTH_DAYS, YEAR_DAYS

SPEC = CohortSpec(frozenset({"T"}))


def stream(days_codes, age=50, first_day=None, pid="X"):
    """Stream whose owner is ``age`` years old at ``first_day`` (default: last day)."""
    encs = tuple(Encounter(d, tuple(c)) for d, c in sorted(days_codes))
    ref = encs[-1].day if first_day is None else first_day
    return EncounterStream(pid, 0, 0, ref - int((age + 0.5) * YEAR_DAYS), encs)


# -- index dates ---------------------------------------------------------------


def test_three_hits_within_six_months_is_case_indexed_at_first_hit():
    s = stream([(100, ["T"]), (160, ["T", "A"]), (250, ["T"])], first_day=100)
    assert co.find_index_date(s, SPEC) == (100, True)


def test_two_hits_only_is_neither():
    s = stream([(d, ["A"]) for d in range(0, 300, 30)] + [(100, ["T"]), (160, ["T"])])
    assert co.find_index_date(s, SPEC) is None


def test_six_encounters_over_twenty_months_is_control_at_last_day():
    days = [0, 120, 240, 360, 480, 600]
    s = stream([(d, ["A"]) for d in days])
    assert co.find_index_date(s, SPEC) == (600, False)


def test_hits_spanning_exactly_six_months_do_not_qualify():
    s = stream([(0, ["T"]), (90, ["T"]), (180, ["T"])], first_day=0)
    assert co.find_index_date(s, SPEC) is None
    s = stream([(0, ["T"]), (90, ["T"]), (179, ["T"])], first_day=0)
    assert co.find_index_date(s, SPEC) == (0, True)


def test_prior_isolated_diagnosis_disqualifies_case():
    s = stream([(0, ["T"]), (400, ["T"]), (420, ["T"]), (440, ["T"])], first_day=400)
    assert co.find_index_date(s, SPEC) is None


def test_control_needs_five_encounters_strictly_inside_two_years():
    assert co.find_index_date(stream([(d, ["A"]) for d in (0, 100, 200, 300, 720)]), SPEC) is None
    assert co.find_index_date(stream([(d, ["A"]) for d in (0, 100, 200, 300, 719)]), SPEC) == (719, False)


def test_age_bounds_are_half_open():
    days = [(d, ["A"]) for d in (0, 100, 200, 300, 400)]
    assert co.find_index_date(stream(days, age=30), SPEC) == (400, False)
    assert co.find_index_date(stream(days, age=79), SPEC) == (400, False)
    assert co.find_index_date(stream(days, age=80), SPEC) is None
    assert co.find_index_date(stream(days, age=29), SPEC) is None


def brute_force_index(s, spec):
    hits = [e.day for e in s.encounters if spec.target_codes & set(e.codes)]
    span = spec.case_window_months * MONTH_DAYS
    if hits:
        runs = [c for c in itertools.combinations(hits, spec.case_min_hits) if c[-1] - c[0] < span]
        if not runs or min(r[0] for r in runs) != hits[0]:
            return None
        day, case = hits[0], True
    else:
        days = [e.day for e in s.encounters]
        cspan = spec.control_span_months * MONTH_DAYS
        if not any(c[-1] - c[0] < cspan for c in itertools.combinations(days, spec.control_min_encounters)):
            return None
        day, case = days[-1], False
    lo, hi = spec.age_bounds
    return (day, case) if lo <= s.age_at(day) < hi else None


@st.composite
def streams(draw):
    days = sorted(draw(st.sets(st.integers(0, 1500), min_size=1, max_size=12)))
    encs = []
    for d in days:
        codes = ["T"] if draw(st.integers(0, 3)) == 0 else ["A"]
        encs.append((d, codes))
    age = draw(st.integers(25, 85))
    return stream(encs, age=age, first_day=days[0])


@settings(max_examples=300, deadline=None)
@given(streams())
def test_index_rules_match_brute_force(s):
    assert co.find_index_date(s, SPEC) == brute_force_index(s, SPEC)


@settings(max_examples=200, deadline=None)
@given(streams())
def test_labels_are_consistent_with_definitions(s):
    found = co.find_index_date(s, SPEC)
    if found is None:
        return
    day, is_case = found
    hits = [e.day for e in s.encounters if "T" in e.codes]
    if is_case:
        assert hits[0] == day
        assert sum(1 for h in hits if h - day < 180) >= 3
    else:
        assert hits == []


# -- windows and extraction ------------------------------------------------------

INDEX = 2000


def window_stream(extra):
    base = [(d, ["A"]) for d in range(INDEX - 900, INDEX + 1, 60)]
    return stream(base + extra, first_day=INDEX)


def test_window_is_half_open():
    start, end = SPEC.observation_window(INDEX)
    assert (start, end) == (INDEX - 27 * MONTH_DAYS, INDEX - 15 * MONTH_DAYS)
    assert SPEC.quarter_of(end, INDEX) is None
    assert SPEC.quarter_of(end - 1, INDEX) == 3
    assert SPEC.quarter_of(start, INDEX) == 0
    assert SPEC.quarter_of(start - 1, INDEX) is None


def test_boundary_and_buffer_encounters_excluded():
    vocab = ["A", "B"]
    s = window_stream([(INDEX - 450, ["B"]), (INDEX - 30, ["B"])])
    t = co.extract_tensor(s, INDEX, 0, SPEC, vocab)
    assert t.quarter_counts[:, 1].sum() == 0


def test_code_twice_in_quarter_two_counts_two():
    start, _ = SPEC.observation_window(INDEX)
    s = window_stream([(start + 95, ["B"]), (start + 150, ["B"])])
    t = co.extract_tensor(s, INDEX, 0, SPEC, ["A", "B"])
    npt.assert_array_equal(t.quarter_counts[:, 1], [0, 2, 0, 0])


def test_quarters_partition_window_counts():
    rng = np.random.default_rng(0)
    start, end = SPEC.observation_window(INDEX)
    days = rng.integers(0, INDEX, size=200)
    s = stream([(int(d), ["A"]) for d in set(days.tolist())], first_day=INDEX)
    t = co.extract_tensor(s, INDEX, 0, SPEC, ["A"])
    in_window = sum(1 for e in s.encounters if start <= e.day < end)
    assert t.quarter_counts.sum() == in_window


def test_empty_vocab_rejected():
    with pytest.raises(co.ConfigError):
        co.extract_tensor(window_stream([]), INDEX, 0, SPEC, [])


def test_age_binning_at_index():
    s = window_stream([])
    t = co.extract_tensor(s, INDEX, 0, SPEC, ["A"])
    assert t.age_bin == (50 - 30) // 5
    npt.assert_array_equal(np.flatnonzero(t.demo_onehots), t.demo_indices)


def test_leakage_deleting_prediction_window_changes_nothing():
    pop = co.generate_population(3, 200, 20)
    enrolled, _ = co.enroll(pop, SPEC_T0)
    vocab = co.build_vocab(enrolled, SPEC_T0_LOW)
    for en in enrolled[:60]:
        cut = en.index_day - SPEC_T0.observation_end_months_before_index * MONTH_DAYS
        kept = tuple(e for e in en.stream.encounters if e.day < cut)
        trimmed = EncounterStream(en.stream.patient_id, en.stream.gender, en.stream.race, en.stream.birth_offset, kept)
        assert co.extract_tensor(trimmed, en.index_day, en.label, SPEC_T0, vocab) == co.extract_tensor(
            en.stream, en.index_day, en.label, SPEC_T0, vocab
        )


SPEC_T0 = CohortSpec(co.target_codes(0))
SPEC_T0_LOW = CohortSpec(co.target_codes(0), min_code_occurrences=5)


def test_short_history_is_skipped_by_enroll_and_counted():
    # 6 encounters over 20 months: a control by the index rule, without 27 months of history
    s = stream([(d, ["A"]) for d in (0, 120, 240, 360, 480, 600)])
    enrolled, stats = co.enroll([s], SPEC)
    assert enrolled == [] and stats.short_history == 1


# -- vocabulary --------------------------------------------------------------------


def test_vocab_threshold_boundary():
    start, _ = SPEC.observation_window(INDEX)
    spec = CohortSpec(frozenset({"T"}), min_code_occurrences=50)
    extra = [(start + k, ["X49"]) for k in range(49)] + [(start + 100 + k, ["X50"]) for k in range(50)]
    s = stream([(d, ["A"]) for d in range(INDEX - 900, INDEX + 1, 60)] + extra, first_day=INDEX)
    # merge same-day encounters into one
    by_day = {}
    for e in s.encounters:
        by_day.setdefault(e.day, []).extend(e.codes)
    s = EncounterStream("V", 0, 0, s.birth_offset, tuple(Encounter(d, tuple(dict.fromkeys(c))) for d, c in sorted(by_day.items())))
    vocab = co.build_vocab([s], spec)
    assert "X50" in vocab and "X49" not in vocab
    assert vocab == co.build_vocab([s], spec) == sorted(vocab)


def test_vocab_empty_result_raises():
    with pytest.raises(co.ConfigError, match="lower"):
        co.build_vocab([window_stream([])], CohortSpec(frozenset({"T"}), min_code_occurrences=10**6))


# -- splits ------------------------------------------------------------------------


class Item:
    def __init__(self, i, label):
        self.i, self.label = i, label


def test_split_stratified_partition_deterministic():
    items = [Item(i, int(i < 100)) for i in range(1000)]
    parts = co.split_cohort(items, 7, (0.8, 0.1, 0.1))
    for part in parts:
        cases = sum(x.label for x in part)
        assert abs(cases - 0.1 * len(part)) <= 1
    assert sorted(x.i for p in parts for x in p) == list(range(1000))
    again = co.split_cohort(items, 7, (0.8, 0.1, 0.1))
    assert [[x.i for x in p] for p in parts] == [[x.i for x in p] for p in again]


def test_split_without_cases_raises():
    items = [Item(i, int(i == 0)) for i in range(50)]
    with pytest.raises(co.StratificationError):
        co.split_cohort(items, 0, (0.8, 0.1, 0.1))


def test_split_fractions_validated():
    with pytest.raises(co.ConfigError):
        co.split_cohort([Item(0, 1)], 0, (0.5, 0.1, 0.1))


# -- generator ---------------------------------------------------------------------


def test_generator_base_rate_binomial():
    cfg = co.GeneratorConfig(age_coef=0.0, base_rate=0.05)
    pop = co.generate_population(11, 5000, 20, config=cfg)
    enrolled, stats = co.enroll(pop, SPEC_T0)
    assert stats.not_qualifying == 0 and stats.short_history == 0
    rate = stats.cases / len(enrolled)
    se = np.sqrt(0.05 * 0.95 / len(enrolled))
    assert abs(rate - 0.05) < 2 * se


def test_generator_age_effect_matches_logistic_mix():
    cfg = co.GeneratorConfig()
    pop = co.generate_population(12, 5000, 20, config=cfg)
    enrolled, stats = co.enroll(pop, SPEC_T0)
    ages = np.array([en.stream.age_at(en.index_day) for en in enrolled])
    p = expit(logit(cfg.base_rate) + cfg.age_coef * (ages - 55) / 10)
    se = np.sqrt((p * (1 - p)).sum()) / len(p)
    assert abs(stats.cases / len(enrolled) - p.mean()) < 2 * se


def test_generator_is_deterministic(tmp_path):
    a = co.generate_population(5, 50, 15, [(1, 2, 3.0)])
    b = co.generate_population(5, 50, 15, [(1, 2, 3.0)])
    co.write_population(a, tmp_path / "a.tsv")
    co.write_population(b, tmp_path / "b.tsv")
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()


def test_planted_pair_raises_case_rate():
    pop = co.generate_population(13, 5000, 20, [(1, 2, 3.0)])
    enrolled, _ = co.enroll(pop, SPEC_T0)
    both, neither = [], []
    for en in enrolled:
        start, end = SPEC_T0.observation_window(en.index_day)
        qs = [set() for _ in range(4)]
        for e in en.stream.encounters:
            q = SPEC_T0.quarter_of(e.day, en.index_day)
            if q is not None:
                qs[q].update(e.codes)
        has = any({"C001", "C002"} <= q for q in qs)
        none = not any(q & {"C001", "C002"} for q in qs)
        (both if has else neither if none else []).append(en.label)
    p1, p0 = np.mean(both), np.mean(neither)
    pooled = np.mean(both + neither)
    z = (p1 - p0) / np.sqrt(pooled * (1 - pooled) * (1 / len(both) + 1 / len(neither)))
    assert z > norm.ppf(0.99)


def test_planted_codes_keep_their_marginal_rate():
    cfg = co.GeneratorConfig(pair_carrier_rate=0.5)
    pop = co.generate_population(14, 3000, 20, [(1, 2, 0.0)], config=cfg)
    n1 = sum("C001" in e.codes for s in pop for e in s.encounters)
    n2 = sum("C002" in e.codes for s in pop for e in s.encounters)
    assert abs(n1 - n2) / (n1 + n2) < 0.05


def test_generator_config_errors():
    with pytest.raises(co.ConfigError):
        co.generate_population(0, 5, 20, temporal_profile=(0, 0, 0, 0))
    with pytest.raises(co.ConfigError):
        co.generate_population(0, 5, 5)
    with pytest.raises(co.ConfigError):
        co.generate_population(0, 5, 20, [(1, 2, float("nan"))])


def test_shift_alias_must_be_injective():
    with pytest.raises(co.ConfigError):
        co.PopulationShift(code_alias_map={"C001": "Z", "C002": "Z"})


def test_alias_shift_renames_codes():
    shift = co.PopulationShift(code_alias_map={"C003": "Z003"})
    pop = co.generate_population(1, 100, 20, shift=shift)
    codes = {c for s in pop for e in s.encounters for c in e.codes}
    assert "Z003" in codes and "C003" not in codes


def test_prevalence_scale_changes_code_rate():
    base = co.generate_population(2, 500, 20)
    shifted = co.generate_population(2, 500, 20, shift=co.PopulationShift(prevalence_scale={"C010": 4.0}))
    count = lambda pop: sum("C010" in e.codes for s in pop for e in s.encounters)
    assert count(shifted) > 2 * count(base)


# -- files -------------------------------------------------------------------------


def test_population_and_cohort_round_trip(tmp_path):
    pop = co.generate_population(4, 80, 20, [(1, 2, 3.0)])
    co.write_population(pop, tmp_path / "p.tsv")
    assert co.read_population(tmp_path / "p.tsv") == pop
    enrolled, _ = co.enroll(pop, SPEC_T0)
    vocab = co.build_vocab(enrolled, SPEC_T0_LOW)
    tensors = co.extract_all(enrolled, SPEC_T0, vocab)
    co.write_cohort(tensors, vocab, tmp_path / "c.tsv")
    back, v2 = co.read_cohort(tmp_path / "c.tsv")
    assert v2 == vocab and back == tensors
    assert (tmp_path / "c.tsv").read_text().splitlines()[0] == "savehr-cohort/1"


def test_missing_schema_tag_rejected(tmp_path):
    (tmp_path / "bad.tsv").write_text("nope\n")
    with pytest.raises(co.FormatError):
        co.read_population(tmp_path / "bad.tsv")
