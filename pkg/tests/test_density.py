import json

import pytest
from sympy import Rational, simplify

from density import (
    BOUND_NAMES,
    CensusRecord,
    bound_calculator,
    census,
    census_path,
    classify,
    estimate_sphere_density,
    even_exponent_words,
    load_census_records,
    net_coverage_audit,
    verify_covering_chain,
    vetted_net_outputs,
)
from surface_core import SurfacePresentation
from testel import (
    Status,
    endo_fixer_search,
    is_conjugate_of_commutator_product,
    positive_certificate,
    power_exponents,
    turner_power_criterion,
)
from word_core import InvariantViolation, Word, enumerate_ball, parse_word


def w(text, rank=2):
    return parse_word(text, rank)


def translates(text="1;x1;x2;x1 x2", rank=2):
    return [parse_word(part, rank) for part in text.split(";")]


# --- Bounds ---

def test_free_bounds_rank_two():
    c = bound_calculator("freeC", {"n": 2})
    assert c.exact == Rational(1, 4025)
    assert float(c.decimal) == pytest.approx(1 / 4025)
    assert bound_calculator("freeD", {"n": 2}).exact == Rational(4024, 4025)
    assert bound_calculator("freeNet", {"n": 2}).exact == 4


def test_surface_net_bounds():
    assert bound_calculator("orNet", {"genus": 2}).exact == 165355
    assert bound_calculator("nonorNet", {"genus": 3}).exact == 10
    assert bound_calculator("nonorC", {"genus": 3}).exact.p == 1


def test_orientable_density_reports_digit_count():
    report = bound_calculator("orC", {"genus": 2})
    record = report.to_record()
    assert "exact" not in record
    assert record["denominator_digits"] > 200
    assert record["decimal"]


def test_krss_pair_sums_to_one():
    krss = bound_calculator("krss", {"n": 2})
    retract = bound_calculator("krssRetract", {"n": 2})
    assert simplify(krss.exact + retract.exact) == 1
    assert float(krss.exact) == pytest.approx(0.7298102, abs=1e-6)
    assert "exact" in krss.to_record()


def test_bound_names_are_case_insensitive():
    assert bound_calculator("FREEC", {"n": 2}).name == "freeC"
    assert len(BOUND_NAMES) == 11


@pytest.mark.parametrize("name, params", [
    ("nope", {"n": 2}),
    ("freeC", {"n": 1}),
    ("nonorC", {"genus": 2}),
    ("orNet", {}),
])
def test_bound_calculator_rejects_bad_input(name, params):
    with pytest.raises(ValueError):
        bound_calculator(name, params)


# --- Covering chain ---

def test_covering_chain_even_set():
    report = verify_covering_chain(even_exponent_words, translates(), 2, 2)
    assert report.passed
    record = report.to_record()
    assert record["in_S"] == 5
    assert record["ball_size"] == 17
    assert record["C"] == 2
    assert record["chain_value"] == "20"


def test_covering_chain_even_set_larger_radius():
    assert verify_covering_chain(even_exponent_words, translates(), 2, 5).passed


def test_covering_chain_reports_failures():
    report = verify_covering_chain(lambda x: x.is_identity, translates(), 2, 2)
    assert not report.covering
    assert not report.passed
    assert "uncovered" in report.to_record()


def test_covering_chain_rejects_small_radius():
    with pytest.raises(ValueError):
        verify_covering_chain(even_exponent_words, translates(), 2, 1)
    with pytest.raises(ValueError):
        verify_covering_chain(even_exponent_words, [], 2, 3)


# --- Classification and census ---

@pytest.mark.parametrize("text, L, expected", [
    ("x1^2 x2^2", 2, Status.POSITIVE),
    ("x1 x2 x1^-1 x2^-1", 3, Status.POSITIVE),
    ("x1", 1, Status.NEGATIVE),
    ("x1 x2", 2, Status.NEGATIVE),
    ("1", 0, Status.NEGATIVE),
])
def test_classify_examples(text, L, expected):
    assert classify(w(text), L) is expected


def test_classify_uses_net_outputs():
    word = w("x1^2 x2 x1 x2^-1")
    assert classify(word, 0) is Status.UNKNOWN
    assert classify(word, 0, frozenset({word})) is Status.POSITIVE


def test_census_radius_zero_identity_is_negative():
    record = census(2, 0, 1)
    assert (record.positive, record.negative, record.unknown) == (0, 1, 0)
    assert record.ball_size == 1
    assert not record.partial


def test_census_radius_one():
    record = census(2, 1, 1)
    assert record.negative == 5
    assert record.positive + record.negative + record.unknown == record.ball_size == 5
    assert record.growth["ball"] == 5.0


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4, 5, pytest.param(6, marks=pytest.mark.slow),
                               pytest.param(7, marks=pytest.mark.slow), pytest.param(8, marks=pytest.mark.slow)])
def test_census_buckets_fill_the_ball(k):
    record = census(2, k, 0, L0=0)
    assert not record.partial
    assert record.positive + record.negative + record.unknown == record.ball_size == 2 * 3 ** k - 1


def test_raising_the_bound_keeps_negatives():
    for word in enumerate_ball(2, 3):
        for L in range(2):
            if classify(word, L) is Status.NEGATIVE:
                assert classify(word, L + 1) is Status.NEGATIVE
    assert census(2, 3, 1).negative <= census(2, 3, 2).negative


@pytest.mark.slow
def test_positive_buckets_rederive_their_certificate():
    outputs = vetted_net_outputs(2, 4)
    positives = 0
    for word in enumerate_ball(2, 4):
        if classify(word, 2, outputs) is not Status.POSITIVE:
            continue
        positives += 1
        certificate = positive_certificate(word)
        if certificate is None:
            assert word in outputs
            assert endo_fixer_search(word, 2).status is not Status.NEGATIVE
        elif certificate.reason == "turner-power":
            assert turner_power_criterion(power_exponents(word))
        else:
            assert is_conjugate_of_commutator_product(word)
    assert positives > 0


def test_census_surface_is_rejected():
    with pytest.raises(ValueError):
        census(4, 1, 1, pres=SurfacePresentation("orientable", 2))


def test_census_workers_agree():
    single = census(2, 2, 1)
    sharded = census(2, 2, 1, workers=2)
    assert single.body() == sharded.body()
    assert single.checksum() == sharded.checksum()


def test_census_budget_flags_partial():
    record = census(2, 1, 1, budget=2)
    assert record.partial
    assert record.positive + record.negative + record.unknown == 2


def test_census_log_resumes(tmp_path):
    path = census_path(str(tmp_path))
    first = census(2, 1, 1, path=path)
    second = census(2, 1, 1, path=path)
    assert second.timestamp == first.timestamp
    with open(path, encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 1
    loaded = load_census_records(path)
    assert loaded[0].checksum() == first.checksum()


def test_census_log_skips_tampered_lines(tmp_path):
    path = census_path(str(tmp_path))
    census(2, 0, 1, path=path)
    with open(path, encoding="utf-8") as f:
        record = json.loads(f.readline())
    record["positive"] += 1
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record) + "\n")
        f.write("not json\n")
    assert len(load_census_records(path)) == 1
    with pytest.raises(InvariantViolation):
        CensusRecord.from_record(record)


def test_census_record_checksum_ignores_timestamp():
    a = CensusRecord(2, 1, 1, 0, 5, 0, 5, 0, 2, timestamp="2024-01-01T00:00:00")
    b = CensusRecord(2, 1, 1, 0, 5, 0, 5, 0, 2, timestamp="2025-06-30T12:00:00")
    assert a.checksum() == b.checksum()
    assert "timestamp" not in a.to_record(include_timestamp=False)


# --- Audits ---

def test_net_coverage_audit_small_ball():
    audit = net_coverage_audit(2, 2)
    assert audit["elements"] == 17
    assert audit["max_distance"] <= audit["bound"] == 4
    assert sum(audit["histogram"].values()) == 17
    assert 1 <= audit["vetted"] <= 17


@pytest.mark.slow
def test_net_coverage_audit_radius_six():
    audit = net_coverage_audit(2, 6)
    assert audit["elements"] == 1457
    assert audit["max_distance"] <= 4
    assert audit["vetted"] == audit["elements"]


def test_estimate_sphere_density_shares():
    estimate = estimate_sphere_density(2, 2, 20, 1, seed=3)
    assert sum(estimate["shares"].values()) == pytest.approx(1.0)
    assert set(estimate["shares"]) == {"positive", "negative", "unknown"}
    assert estimate_sphere_density(2, 2, 20, 1, seed=3) == estimate


def test_identity_word_is_even():
    assert even_exponent_words(Word.identity(2))
    assert not even_exponent_words(w("x1 x2"))


@pytest.mark.slow
@pytest.mark.parametrize("k", [6, 7])
def test_covering_chain_even_set_acceptance_radii(k):
    assert verify_covering_chain(even_exponent_words, translates(), 2, k).passed


@pytest.mark.slow
def test_census_ball_four_witnesses_reverify():
    record = census(2, 4, 2)
    assert record.positive + record.negative + record.unknown == 161
    assert record.negative > 0
