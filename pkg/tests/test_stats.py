import logging

import numpy as np
import pytest
from scipy import special
from scipy import stats as scipy_stats
from sklearn.feature_selection import f_classif

from lib.errors import DataValidationError, NumericalError
from lib.stats import (
    agreement_score,
    analyze_dataset,
    cohens_d,
    derive_relation,
    f_survival,
    format_ordering,
    magnitude_label,
    normality_diagnostic,
    one_way_anova,
    parse_ordering,
    rank_selected,
    regularized_incomplete_beta,
    universal_features,
)
from lib.types import (
    AnalysisConfig,
    Category,
    ClassLabel,
    ClassPair,
    FeatureMatrix,
    FeatureVector,
    OrderingTable,
    Relation,
)

from tests.conftest import load_ordering, synthetic_matrix

logger = logging.getLogger(__name__)

R, U, S = ClassLabel.RELIABLE, ClassLabel.UNRELIABLE, ClassLabel.SATIRE
FIRST, SECOND, EQUAL = Relation.FIRST_GREATER, Relation.SECOND_GREATER, Relation.EQUAL


# ===== SPECIAL FUNCTIONS =====


def test_incomplete_beta_matches_scipy():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        x = rng.uniform(0, 1)
        a = rng.uniform(0.5, 60)
        b = rng.uniform(0.5, 60)
        ours = regularized_incomplete_beta(x, a, b)
        expected = special.betainc(a, b, x)
        worst = max(worst, abs(ours - expected))
        assert ours == pytest.approx(expected, rel=1e-8, abs=1e-12)
        # symmetry identity
        assert ours + regularized_incomplete_beta(1 - x, b, a) == pytest.approx(1.0, abs=1e-10)
    logger.info(f"max abs deviation from scipy: {worst:.3e}")


def test_incomplete_beta_edges_and_domain():
    assert regularized_incomplete_beta(0.0, 2, 3) == 0.0
    assert regularized_incomplete_beta(1.0, 2, 3) == 1.0
    with pytest.raises(NumericalError):
        regularized_incomplete_beta(0.5, 0, 1)
    with pytest.raises(NumericalError):
        regularized_incomplete_beta(1.5, 1, 1)


def test_f_survival_matches_scipy():
    for f_stat, d1, d2 in [(6.0, 1, 4), (0.5, 2, 30), (3.2, 2, 597), (25.0, 1, 1998)]:
        assert f_survival(f_stat, d1, d2) == pytest.approx(scipy_stats.f.sf(f_stat, d1, d2), rel=1e-8, abs=1e-14)
    assert f_survival(0.0, 1, 4) == 1.0
    assert f_survival(float("inf"), 1, 4) == 0.0


# ===== ANOVA =====


def test_anova_worked_example():
    result = one_way_anova([[1, 2, 3], [3, 4, 5]])
    assert result.f_stat == pytest.approx(6.0)
    assert result.p_value == pytest.approx(0.0705, abs=1e-4)
    assert not result.degenerate


def test_two_group_anova_equals_squared_t_test():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = rng.normal(0, 1, rng.integers(3, 40))
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), rng.integers(3, 40))
        t = scipy_stats.ttest_ind(a, b, equal_var=True)
        result = one_way_anova([a, b])
        assert result.f_stat == pytest.approx(t.statistic**2, rel=1e-9)
        assert result.p_value == pytest.approx(t.pvalue, rel=1e-7, abs=1e-14)


def test_anova_agrees_with_sklearn_f_classif():
    rng = np.random.default_rng(3)
    groups = [rng.normal(loc, 1, size) for loc, size in [(0, 30), (0.4, 25), (0.8, 40)]]
    values = np.concatenate(groups)
    labels = np.repeat([0, 1, 2], [30, 25, 40])
    f_expected, p_expected = f_classif(values.reshape(-1, 1), labels)

    result = one_way_anova(groups)
    assert result.f_stat == pytest.approx(f_expected[0], rel=1e-9)
    assert result.p_value == pytest.approx(p_expected[0], rel=1e-7, abs=1e-14)


def test_anova_invariances():
    rng = np.random.default_rng(5)
    a, b, c = rng.normal(0, 1, 20), rng.normal(0.5, 1, 15), rng.normal(1, 1, 10)
    base = one_way_anova([a, b, c])
    assert one_way_anova([c, a, b]).f_stat == pytest.approx(base.f_stat)
    transformed = one_way_anova([3 * g - 7 for g in (a, b, c)])
    assert transformed.f_stat == pytest.approx(base.f_stat)
    assert transformed.p_value == pytest.approx(base.p_value)


def test_anova_degenerate_and_constant():
    result = one_way_anova([[1, 1, 1], [2, 2]])
    assert result.degenerate
    assert result.f_stat == float("inf")
    assert result.p_value == 0.0

    with pytest.raises(NumericalError, match="no variance"):
        one_way_anova([[4, 4], [4, 4, 4]])


def test_anova_input_checks():
    with pytest.raises(DataValidationError):
        one_way_anova([[1, 2, 3]])
    with pytest.raises(DataValidationError, match="group 2"):
        one_way_anova([[1, 2, 3], [4]])
    with pytest.raises(DataValidationError, match="non-finite"):
        one_way_anova([[1, 2, np.nan], [4, 5]])


# ===== EFFECT SIZES =====


def test_cohens_d():
    assert cohens_d([1, 2, 3], [3, 4, 5]) == pytest.approx(-2.0)
    assert cohens_d([3, 4, 5], [1, 2, 3]) == pytest.approx(2.0)
    # one constant sample still has a pooled variance
    assert cohens_d([1, 1, 1], [1, 2, 3]) == pytest.approx(-1 / np.sqrt(0.5))
    with pytest.raises(NumericalError):
        cohens_d([2, 2], [5, 5, 5])
    with pytest.raises(DataValidationError):
        cohens_d([1], [1, 2])


@pytest.mark.parametrize(
    "d, label",
    [(0.0, "negligible"), (-0.19, "negligible"), (0.2, "small"), (-0.49, "small"),
     (0.5, "medium"), (0.79, "medium"), (-0.8, "large"), (3.0, "large")],
)
def test_magnitude_label(d, label):
    assert magnitude_label(d) == label


def test_derive_relation_thresholds():
    assert derive_relation(0.19) == EQUAL
    assert derive_relation(-0.19) == EQUAL
    assert derive_relation(0.2) == FIRST  # equality is strict
    assert derive_relation(-0.3) == SECOND
    loose = AnalysisConfig(d_select_threshold=0.8, d_equality_threshold=0.5)
    assert derive_relation(0.4, loose) == EQUAL


def test_normality_diagnostic():
    flat = normality_diagnostic(range(1, 9))
    assert flat.skewness == pytest.approx(0.0, abs=1e-12)
    assert flat.excess_kurtosis == pytest.approx(-1.2381, abs=1e-4)
    assert flat.flag == "pass"

    skewed = normality_diagnostic([0.0] * 19 + [100.0])
    logger.info(f"skewed sample: {skewed}")
    assert skewed.skewness == pytest.approx(18 / np.sqrt(19))
    assert skewed.flag == "warn"

    with pytest.raises(DataValidationError, match="at least 8"):
        normality_diagnostic(range(7))
    with pytest.raises(NumericalError):
        normality_diagnostic([1.0] * 10)


def test_normality_diagnostic_on_large_and_tiny_samples():
    normal = normality_diagnostic(np.random.default_rng(0).standard_normal(10_000))
    logger.info(f"normal sample: {normal}")
    assert normal.flag == "pass"

    # one outlier among eight: skew 6 / sqrt(7) > 2
    spike = normality_diagnostic([0.0] * 7 + [100.0])
    assert spike.skewness == pytest.approx(6 / np.sqrt(7))
    assert spike.flag == "warn"


def test_cohens_d_magnitude_invariant_under_shift_and_scale():
    rng = np.random.default_rng(17)
    for _ in range(200):
        a = rng.normal(size=int(rng.integers(2, 40)))
        b = rng.normal(0.5, 2.0, size=int(rng.integers(2, 40)))
        d = cohens_d(a, b)
        shift = rng.uniform(-100, 100)
        scale = rng.uniform(0.01, 100) * rng.choice([-1.0, 1.0])
        assert abs(cohens_d(a * scale + shift, b * scale + shift)) == pytest.approx(abs(d), rel=1e-9)
        assert cohens_d(b, a) == pytest.approx(-d)


def test_derive_relation_mirrors_with_sign():
    for d in np.linspace(-2.0, 2.0, 81):
        assert derive_relation(-d) == derive_relation(d).mirrored()


# ===== DATASET ANALYSIS =====

FEATURES = ["TTL_GI", "TTL_WC", "TXT_GI", "TXT_WC", "TXT_Comma", "TXT_Posemo", "TXT_Feel"]


def test_analyze_finds_planted_features():
    matrix = synthetic_matrix(
        {R: 1000, U: 1000, S: 1000},
        planted=["TXT_GI", "TXT_WC"],
        shift=1.0,
        features=FEATURES,
        constant=["TXT_Feel"],
        seed=1,
    )
    result = analyze_dataset(matrix)
    logger.info(f"selected={result.selected}")

    assert set(result.selected) == set(ClassPair)
    assert result.selected[ClassPair.RU] == ["TXT_GI", "TXT_WC"]
    assert result.selected[ClassPair.RS] == ["TXT_GI", "TXT_WC"]
    assert result.selected[ClassPair.US] == []

    assert result.excluded == {"TXT_Feel": "no variance"}
    assert "TXT_Feel" not in result.ordering.entries
    assert result.ordering.entries["TXT_GI"] == {ClassPair.RU: FIRST, ClassPair.RS: FIRST, ClassPair.US: EQUAL}
    # six analyzed features, three pairs each
    assert len(result.stats) == 18
    assert set(result.diagnostics["TXT_GI"]) == {R, U, S}


def test_selection_needs_effect_size_not_just_significance():
    matrix = synthetic_matrix({R: 2000, U: 2000}, planted=["TXT_WC"], shift=0.35, features=["TXT_WC", "TXT_GI"], seed=2)
    result = analyze_dataset(matrix)
    stat = next(s for s in result.stats if s.feature == "TXT_WC")
    logger.info(f"p={stat.p_value:.3e} d={stat.cohens_d:.3f}")

    assert stat.p_value < 1e-6
    assert 0.2 < stat.cohens_d < 0.5
    assert stat.relation == FIRST
    assert stat.magnitude == "small"
    assert result.selected == {ClassPair.RU: []}
    assert any("pair R-S skipped" in w for w in result.warnings)
    assert any("pair U-S skipped" in w for w in result.warnings)


def test_analyze_treats_singleton_class_as_absent():
    matrix = synthetic_matrix({R: 10, U: 10, S: 1}, planted=["TXT_WC"], features=["TXT_WC", "TXT_GI"])
    result = analyze_dataset(matrix)
    assert "class S has 1 row; treated as absent" in result.warnings
    assert set(result.selected) == {ClassPair.RU}


def test_analyze_needs_two_classes():
    matrix = synthetic_matrix({R: 10}, features=["TXT_WC"])
    with pytest.raises(DataValidationError, match="at least 2 classes"):
        analyze_dataset(matrix)


def test_pair_with_constant_groups_is_ordered_by_value():
    rng = np.random.default_rng(0)
    rows = []
    for label, base in ((R, 1.0), (U, 2.0)):
        for i in range(5):
            rows.append(FeatureVector(article_id=f"{label.value}{i}", label=label, values={"TXT_WC": base}))
    for i in range(5):
        rows.append(FeatureVector(article_id=f"S{i}", label=S, values={"TXT_WC": float(rng.normal())}))
    matrix = FeatureMatrix(corpus_name="m", feature_ids=["TXT_WC"], rows=rows)

    result = analyze_dataset(matrix)
    assert result.excluded["TXT_WC"] == (
        "degenerate R-U: zero within-class variance, relation from class means"
    )
    assert set(result.ordering.entries["TXT_WC"]) == set(ClassPair)
    assert result.ordering.entries["TXT_WC"][ClassPair.RU] == Relation.SECOND_GREATER
    assert "TXT_WC" not in result.selected[ClassPair.RU]
    assert all(stat.pair != ClassPair.RU for stat in result.stats)


def test_constant_groups_with_equal_values_are_equal():
    rows = [
        FeatureVector(article_id=f"{label.value}{i}", label=label, values={"TXT_WC": value})
        for label, value in ((R, 3.0), (U, 3.0), (S, 0.0))
        for i in range(4)
    ]
    rows.append(FeatureVector(article_id="S9", label=S, values={"TXT_WC": 1.0}))
    result = analyze_dataset(FeatureMatrix(corpus_name="m", feature_ids=["TXT_WC"], rows=rows))
    assert result.ordering.entries["TXT_WC"][ClassPair.RU] == Relation.EQUAL


def test_rank_selected():
    matrix = synthetic_matrix({R: 300, U: 300}, planted=["TTL_GI", "TXT_GI", "TXT_WC"], features=FEATURES, seed=4)
    result = analyze_dataset(matrix)
    ranked = rank_selected(result, ClassPair.RU)
    effect = {s.feature: abs(s.cohens_d) for s in result.stats}

    assert sorted(ranked) == sorted(result.selected[ClassPair.RU])
    assert [effect[f] for f in ranked] == sorted((effect[f] for f in ranked), reverse=True)
    assert rank_selected(result, "R-U", limit=1) == ranked[:1]
    with pytest.raises(DataValidationError, match="not analyzed"):
        rank_selected(result, ClassPair.US)
    with pytest.raises(DataValidationError):
        rank_selected(result, ClassPair.RU, limit=0)


# ===== ORDERING NOTATION =====


def test_parse_ordering():
    assert parse_ordering("U > R > S") == {ClassPair.RU: SECOND, ClassPair.RS: FIRST, ClassPair.US: FIRST}
    assert parse_ordering("R = U = S") == {ClassPair.RU: EQUAL, ClassPair.RS: EQUAL, ClassPair.US: EQUAL}
    assert parse_ordering("S = R > U") == {ClassPair.RU: FIRST, ClassPair.RS: EQUAL, ClassPair.US: SECOND}
    assert parse_ordering("u>r") == {ClassPair.RU: SECOND}


@pytest.mark.parametrize("text", ["R > X", "R > R", "R", ""])
def test_parse_ordering_rejects(text):
    with pytest.raises(DataValidationError, match="bad ordering"):
        parse_ordering(text)


def test_format_ordering():
    assert format_ordering({ClassPair.RU: FIRST, ClassPair.RS: FIRST, ClassPair.US: EQUAL}) == "R > U = S"
    assert format_ordering(parse_ordering("U > R > S")) == "U > R > S"
    # not a chain: R > U, U > S, S > R
    assert format_ordering({ClassPair.RU: FIRST, ClassPair.US: FIRST, ClassPair.RS: SECOND}) == "R>U, R<S, U>S"
    assert format_ordering({}) == ""

    for chain in ["S > R > U", "U = S > R", "R > S = U", "R = U = S"]:
        assert parse_ordering(format_ordering(parse_ordering(chain))) == parse_ordering(chain)


# ===== AGREEMENT =====


def test_agreement_on_complexity_orderings():
    br, us = load_ordering("table4a_br.json"), load_ordering("table4a_us.json")
    features = list(br.entries)
    report = agreement_score(br, us, features)
    logger.info(f"overall={report.overall} per_pair={report.per_pair}")

    assert report.overall == pytest.approx(14 / 30)
    assert report.per_pair[ClassPair.RU] == pytest.approx(0.8)
    assert report.agreements == 22
    assert report.disagreements == 8
    assert report.per_category == {Category.COMPLEXITY: pytest.approx(14 / 30)}


def test_agreement_on_stylistic_orderings():
    br, us = load_ordering("table4b_br.json"), load_ordering("table4b_us.json")
    report = agreement_score(br, us, list(br.entries))
    assert report.overall == pytest.approx(-2 / 36)
    assert report.agreements + report.disagreements == 36


def test_skip_policy_drops_mixed_ties():
    br, us = load_ordering("table4b_br.json"), load_ordering("table4b_us.json")
    features = list(br.entries)
    strict = agreement_score(br, us, features)
    skipping = agreement_score(br, us, features, tie_policy="skip")

    assert skipping.skipped > 0
    assert skipping.agreements == strict.agreements
    assert skipping.disagreements + skipping.skipped == strict.disagreements
    assert skipping.overall == pytest.approx(
        (skipping.agreements - skipping.disagreements) / (skipping.agreements + skipping.disagreements)
    )


def test_agreement_identity_reversal_and_symmetry():
    br, us = load_ordering("table4a_br.json"), load_ordering("table4a_us.json")
    features = list(br.entries)
    assert agreement_score(br, br, features).overall == 1.0

    reversed_br = OrderingTable(
        dataset_name="BR-reversed",
        entries={
            feature: {pair: relation.mirrored() if relation != EQUAL else FIRST for pair, relation in relations.items()}
            for feature, relations in br.entries.items()
        },
    )
    assert agreement_score(br, reversed_br, features).overall == -1.0
    assert agreement_score(br, us, features).overall == agreement_score(us, br, features).overall


def test_agreement_requires_complete_relations():
    br = load_ordering("table4a_br.json")
    partial = OrderingTable(dataset_name="P", entries={"TXT_GI": "U > R"})
    with pytest.raises(DataValidationError, match="lacks relations"):
        agreement_score(br, partial, ["TXT_GI"])
    with pytest.raises(DataValidationError):
        agreement_score(br, br, ["TXT_Feel"])


def test_agreement_over_nothing():
    br = load_ordering("table4a_br.json")
    report = agreement_score(br, br, [])
    assert report.overall is None
    assert report.per_pair == {}


# ===== UNIVERSAL FEATURES =====


def test_universal_features(caplog):
    first = {ClassPair.RU: ["TXT_WC", "TTL_GI"], ClassPair.RS: ["TXT_Sad"]}
    second = {"R-U": ["TXT_Sad", "TXT_WC", "TTL_GI"], "R-S": []}
    assert universal_features(first, second, ClassPair.RU) == ["TTL_GI", "TXT_WC"]

    with caplog.at_level(logging.WARNING):
        assert universal_features(first, second, "R-S") == []
    assert "0 universal features for R-S" in caplog.text

    with pytest.raises(DataValidationError, match="absent from the second selection"):
        universal_features(first, {ClassPair.RU: []}, ClassPair.RS)
