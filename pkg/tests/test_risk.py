import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dasaudit.bisg import PosteriorRecord, PosteriorSet, load_posteriors, run_bisg, save_posteriors
from dasaudit.dp_das import PrivacyBudget, apply_dp_das
from dasaudit.errors import ContractError, ReportError, UndefinedStatisticError
from dasaudit.risk import (
    INFINITE_RISK,
    PUBLISHED_REFERENCE,
    TinyInstance,
    absolute_risk,
    build_risk_report,
    dp_bound,
    exhaustive_bound,
    geometric_mean,
    mean_relative_risk_by_race,
    mechanism_aware_bound,
    mechanism_aware_posterior,
    relative_risk,
)
from dasaudit.synth_pop import N_RACES, Race, extract_voter_file, generate_population
from dasaudit.tabulate import tabulate

from conftest import small_config

UNIFORM = np.full(N_RACES, 0.2)


def rec(prior, post, true=0):
    return PosteriorRecord(0, np.asarray(prior, float), np.asarray(post, float), true)


def test_absolute_risk_cases():
    assert absolute_risk(rec(UNIFORM, np.eye(N_RACES)[3], 3)) == 1.0
    assert absolute_risk(rec(UNIFORM, UNIFORM, 4)) == pytest.approx(0.2, abs=1e-15)
    assert absolute_risk(rec(UNIFORM, [0.9, 0.1, 0, 0, 0], 0)) == 0.9
    with pytest.raises(ContractError):
        absolute_risk(rec(UNIFORM, UNIFORM, None))


def test_relative_risk_cases():
    assert relative_risk(rec([0.1, 0.9, 0, 0, 0], [0.9, 0.1, 0, 0, 0], 0)) == pytest.approx(9.0, rel=1e-15)
    assert relative_risk(rec([0.9, 0.1, 0, 0, 0], [0.1, 0.9, 0, 0, 0], 0)) == pytest.approx(9.0, rel=1e-15)
    assert relative_risk(rec(UNIFORM, UNIFORM, 2)) == 1.0
    assert relative_risk(rec([0, 1, 0, 0, 0], [0.5, 0.5, 0, 0, 0], 0)) == INFINITE_RISK


@given(st.floats(1e-9, 1), st.floats(1e-9, 1))
def test_relative_risk_at_least_one(p, q):
    r = relative_risk(rec([p, 1 - p, 0, 0, 0], [q, 1 - q, 0, 0, 0], 0))
    assert r >= 1.0
    if p == q:
        assert r == 1.0
    else:
        assert r > 1.0


def test_geometric_means_by_race():
    recs = [rec([0.5, 0.5, 0, 0, 0], [1.0, 0, 0, 0, 0], 0),     # risk 2
            rec([0.1, 0.9, 0, 0, 0], [0.8, 0.2, 0, 0, 0], 0),   # risk 8
            rec(UNIFORM, UNIFORM, 3)]
    groups = mean_relative_risk_by_race(recs)
    assert groups[Race.WHITE].geometric_mean == pytest.approx(4.0, rel=1e-12)
    assert groups[Race.ASIAN].geometric_mean == 1.0
    assert Race.BLACK not in groups


def test_infinite_member_flags_group():
    recs = [rec([0.5, 0.5, 0, 0, 0], [1.0, 0, 0, 0, 0], 0), rec([0, 1, 0, 0, 0], [1, 0, 0, 0, 0], 0)]
    g = mean_relative_risk_by_race(recs)[Race.WHITE]
    assert g.flagged and g.n_infinite == 1
    assert g.geometric_mean == pytest.approx(2.0)


@given(st.lists(st.floats(1, 1e6), min_size=1, max_size=20), st.lists(st.floats(1, 1e6), min_size=1, max_size=20),
       st.randoms())
def test_geometric_mean_order_and_union(a, b, rnd):
    shuffled = list(a)
    rnd.shuffle(shuffled)
    assert geometric_mean(shuffled) == pytest.approx(geometric_mean(a), rel=1e-12)
    b = (b * len(a))[:len(a)]
    # equal-size disjoint union: mean of the union is the geometric mean of the two means
    assert geometric_mean(a + b) == pytest.approx(math.sqrt(geometric_mean(a) * geometric_mean(b)), rel=1e-12)


def test_dp_bound():
    assert dp_bound(0) == 1.0
    assert abs(dp_bound(1) - 2.718281828459045) < 1e-12
    assert dp_bound(19.61) > 3.28e8
    with pytest.raises(ValueError):
        dp_bound(-1)


def test_published_reference_constants():
    rows = PUBLISHED_REFERENCE["rows"]
    assert rows["last"]["error_rate_without_data"] == 0.409
    assert rows["last"]["error_rate_with_data"] == 0.155
    assert [rows[m]["max_individual_relative_risk"] for m in ("last", "first+last", "first+middle+last")] \
        == [796.9, 969.6, 1077.8]
    assert PUBLISHED_REFERENCE["mean_relative_risk_by_race"] == {"White": 1.96, "Asian": 14.0, "Other": 21.5}


def _set(prior, post, true):
    n = len(true)
    return PosteriorSet(np.arange(n), np.zeros(n, dtype=np.int64), np.asarray(prior, float),
                        np.asarray(post, float), np.asarray(true), np.zeros(n, dtype=bool))


def test_degenerate_report():
    eye = np.eye(N_RACES)
    ps = _set(eye, eye, np.arange(N_RACES))
    report = build_risk_report({"last": {"without": ps, "with": ps}})
    row = report.rows[0]
    assert (row.error_rate_without_data, row.error_rate_with_data) == (0.0, 0.0)
    assert row.max_individual_relative_risk == 1.0
    assert report.to_dict()["as_is_posterior_dp_guarantee"] is False


def test_missing_condition_is_named():
    ps = _set(np.eye(N_RACES), np.eye(N_RACES), np.arange(N_RACES))
    with pytest.raises(ReportError, match="with"):
        build_risk_report({"last": {"without": ps}})


def test_empty_posteriors_are_undefined():
    empty = _set(np.zeros((0, N_RACES)), np.zeros((0, N_RACES)), np.zeros(0, dtype=np.int64))
    with pytest.raises(UndefinedStatisticError):
        build_risk_report({"last": {"without": empty, "with": empty}})


def test_report_rows_match_recomputation(tmp_path):
    md = generate_population(small_config(counties_per_state=1, tracts_per_county=1, blocks_per_tract=10), seed=6)
    vf = extract_voter_file(md, 0.8, seed=6)
    noised = apply_dp_das(tabulate(md), PrivacyBudget(1.0), seed=6)
    save_posteriors(run_bisg(vf, md.name_model, None, "first+last"), tmp_path / "without.csv")
    save_posteriors(run_bisg(vf, md.name_model, noised, "first+last"), tmp_path / "with.csv")

    report = build_risk_report({"first+last": {"without": load_posteriors(tmp_path / "without.csv"),
                                               "with": load_posteriors(tmp_path / "with.csv")}}, epsilon=1.0)

    # straight-line recomputation from the CSV text
    def read(path):
        with open(path) as fh:
            return list(csv.DictReader(fh))

    races = ("white", "black", "hispanic", "asian", "other")

    def err(rows):
        wrong = 0
        for row in rows:
            post = [float(row[f"posterior_{r}"]) for r in races]
            wrong += post.index(max(post)) != int(row["true_race"])
        return wrong / len(rows)

    worst = 0.0
    for row in read(tmp_path / "with.csv"):
        t = races[int(row["true_race"])]
        a, b = float(row[f"posterior_{t}"]), float(row[f"prior_{t}"])
        worst = max(worst, a / b, b / a)

    r = report.rows[0]
    assert r.error_rate_without_data == err(read(tmp_path / "without.csv"))
    assert r.error_rate_with_data == err(read(tmp_path / "with.csv"))
    assert r.max_individual_relative_risk == pytest.approx(worst, rel=1e-15)


def test_render_has_table_columns():
    ps = _set(np.eye(N_RACES), np.eye(N_RACES), np.arange(N_RACES))
    text = build_risk_report({"last": {"without": ps, "with": ps}}, condition="DAS-19.61").render()
    header = text.splitlines()[0].split(" | ")
    assert header == ["BISG Method", "Error rate without Census data", "Error rate with DAS-19.61 data",
                      "Maximum individual relative disclosure risk"]
    assert text.splitlines()[2].startswith("Only last names | 0.0% | 0.0% | 1.0")


def test_symmetric_release_leaves_prior():
    inst = TinyInstance(n_blocks=2, n_races=2, max_count=2, budget=PrivacyBudget(1.0))
    post = mechanism_aware_posterior(inst, [[1, 1], [0, 2]], [[1, 1], [0, 1]])
    assert np.allclose(post, [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("adult", [True, False])
@pytest.mark.parametrize("eps", [0.5, 1.0])
def test_factorized_bound_matches_enumeration(adult, eps):
    inst = TinyInstance(n_blocks=1, n_races=2, max_count=2, target_adult=adult, budget=PrivacyBudget(eps))
    fast, slow = mechanism_aware_bound(inst), exhaustive_bound(inst)
    assert fast.max_ratio == pytest.approx(slow.max_ratio, rel=1e-9)
    assert fast.max_inverse_ratio == pytest.approx(slow.max_inverse_ratio, rel=1e-9)


@pytest.mark.parametrize("n_races", [2, 3])
@pytest.mark.parametrize("adult", [True, False])
@pytest.mark.parametrize("eps", [0.5, 1.0])
def test_bound_holds_at_attribute_epsilon(n_races, adult, eps):
    # changing one person's race moves two cells in each table they appear in
    inst = TinyInstance(n_blocks=1, n_races=n_races, max_count=5, target_adult=adult, budget=PrivacyBudget(eps))
    check = mechanism_aware_bound(inst)
    limit = math.exp(inst.attribute_epsilon) * (1 + 1e-6)
    assert check.max_ratio <= limit
    assert check.max_inverse_ratio <= limit


def test_brute_force_posterior_stays_within_bound_on_sampled_releases():
    inst = TinyInstance(n_blocks=2, n_races=2, max_count=1, budget=PrivacyBudget(1.0))
    rng = np.random.default_rng(0)
    bound = mechanism_aware_bound(inst)
    for _ in range(20):
        post = mechanism_aware_posterior(inst, rng.integers(-2, 4, (2, 2)), rng.integers(-2, 4, (2, 2)))
        assert np.max(post / 0.5) <= bound.max_ratio * (1 + 1e-9)
        assert np.max(0.5 / post) <= bound.max_inverse_ratio * (1 + 1e-9)
