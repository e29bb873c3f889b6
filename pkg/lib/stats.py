# lib/stats.py

"""
Per-pair significance testing, effect sizes, feature selection, class
orderings and cross-dataset ordering agreement
"""

import itertools
import logging
import math
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from lib.corpus import format_counts
from lib.errors import DataValidationError, NumericalError
from lib.features import FEATURES_BY_NAME, registry_order
from lib.types import (
    AgreementReport,
    AnalysisConfig,
    AnalysisResult,
    AnovaResult,
    ClassLabel,
    ClassPair,
    FeatureMatrix,
    NormalityDiagnostic,
    OrderingTable,
    PairwiseStat,
    Relation,
    TiePolicy,
)

logger = logging.getLogger(__name__)

_CF_EPS = 1e-15
_CF_FPMIN = 1e-300
_CF_MAX_ITER = 10_000

MIN_NORMALITY_SAMPLES = 8
SKEW_WARN = 2.0
EXCESS_KURTOSIS_WARN = 7.0

# ===== SPECIAL FUNCTIONS =====


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """
    I_x(a, b) by Lentz's continued fraction

    The fraction converges fast for x < (a+1)/(a+b+2); above that point the
    symmetry I_x(a, b) = 1 - I_{1-x}(b, a) is used.
    """
    if not (a > 0 and b > 0):
        raise NumericalError(f"incomplete beta needs a, b > 0 (got a={a}, b={b})")
    if not 0.0 <= x <= 1.0:
        raise NumericalError(f"incomplete beta needs 0 <= x <= 1 (got x={x})")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0

    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)

    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(x, a, b) / a
    return 1.0 - front * _beta_continued_fraction(1.0 - x, b, a) / b


def _beta_continued_fraction(x: float, a: float, b: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_FPMIN:
        d = _CF_FPMIN
    d = 1.0 / d
    h = d

    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h

    raise NumericalError(
        f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )


def f_survival(f_stat: float, df_between: float, df_within: float) -> float:
    """Upper tail P(F > f_stat) of the F distribution"""
    if not (df_between > 0 and df_within > 0):
        raise NumericalError(
            f"F distribution needs positive degrees of freedom (got {df_between}, {df_within})"
        )
    if f_stat <= 0:
        return 1.0
    if math.isinf(f_stat):
        return 0.0
    x = df_within / (df_within + df_between * f_stat)
    return min(1.0, max(0.0, regularized_incomplete_beta(x, df_within / 2.0, df_between / 2.0)))


# ===== TESTS AND EFFECT SIZES =====


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """
    One-way ANOVA F test

    Zero within-group variance with separated group means is reported as
    F = inf, p = 0 and the degenerate flag; zero variance overall is an error.
    """
    if len(groups) < 2:
        raise DataValidationError(f"ANOVA needs at least 2 groups, got {len(groups)}")
    arrays = [_as_values(group, f"group {i + 1}") for i, group in enumerate(groups)]
    for i, values in enumerate(arrays, start=1):
        if values.size < 2:
            raise DataValidationError(f"ANOVA group {i} has {values.size} value(s); at least 2 needed")

    pooled = np.concatenate(arrays)
    if np.ptp(pooled) == 0:
        raise NumericalError("no variance")

    k = len(arrays)
    n_total = pooled.size
    grand_mean = pooled.mean()
    means = [values.mean() for values in arrays]

    ss_between = float(sum(values.size * (mean - grand_mean) ** 2 for values, mean in zip(arrays, means)))
    if all(np.ptp(values) == 0 for values in arrays):
        return AnovaResult(f_stat=math.inf, p_value=0.0, degenerate=True)
    ss_within = float(sum(((values - mean) ** 2).sum() for values, mean in zip(arrays, means)))

    df_between = k - 1
    df_within = n_total - k
    f_stat = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(f_stat=f_stat, p_value=f_survival(f_stat, df_between, df_within))


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference (mean(a) - mean(b)) over the pooled sample sd"""
    first = _as_values(a, "first sample")
    second = _as_values(b, "second sample")
    if first.size < 2 or second.size < 2:
        raise DataValidationError(
            f"Cohen's d needs at least 2 values per sample (got {first.size} and {second.size})"
        )
    if np.ptp(first) == 0 and np.ptp(second) == 0:
        raise NumericalError("Cohen's d undefined: zero pooled variance")

    n_a, n_b = first.size, second.size
    pooled_var = (
        (n_a - 1) * first.var(ddof=1) + (n_b - 1) * second.var(ddof=1)
    ) / (n_a + n_b - 2)
    return float((first.mean() - second.mean()) / math.sqrt(pooled_var))


def magnitude_label(d: float) -> str:
    """Conventional descriptor of |d|"""
    size = abs(d)
    if size < 0.2:
        return "negligible"
    if size < 0.5:
        return "small"
    if size < 0.8:
        return "medium"
    return "large"


def derive_relation(d: float, config: Optional[AnalysisConfig] = None) -> Relation:
    """Class ordering implied by an effect size; equality only strictly below the threshold"""
    config = config or AnalysisConfig()
    if abs(d) < config.d_equality_threshold:
        return Relation.EQUAL
    return Relation.FIRST_GREATER if d > 0 else Relation.SECOND_GREATER


def normality_diagnostic(values: Sequence[float]) -> NormalityDiagnostic:
    """
    Moment-based normality check (advisory only)

    Uses the biased sample skewness g1 and excess kurtosis g2; flags "warn"
    when |g1| > 2 or |g2| > 7.
    """
    data = _as_values(values, "sample")
    if data.size < MIN_NORMALITY_SAMPLES:
        raise DataValidationError(
            f"normality diagnostic needs at least {MIN_NORMALITY_SAMPLES} values, got {data.size}"
        )
    if np.ptp(data) == 0:
        raise NumericalError("normality diagnostic undefined: zero variance")

    centered = data - data.mean()
    m2 = float(np.mean(centered**2))
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    skewness = m3 / m2**1.5
    excess_kurtosis = m4 / m2**2 - 3.0

    flag = "warn" if abs(skewness) > SKEW_WARN or abs(excess_kurtosis) > EXCESS_KURTOSIS_WARN else "pass"
    return NormalityDiagnostic(skewness=skewness, excess_kurtosis=excess_kurtosis, flag=flag)


def _as_values(values: Sequence[float], what: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(array)):
        raise DataValidationError(f"{what} contains non-finite values")
    return array


# ===== DATASET ANALYSIS =====


def analyze_dataset(matrix: FeatureMatrix, config: Optional[AnalysisConfig] = None) -> AnalysisResult:
    """
    Test every feature on every class pair present in the matrix

    For each feature and canonical pair a two-group ANOVA and Cohen's d are
    computed; a feature is selected for the pair when p < p_threshold and
    |d| >= d_select_threshold. Features constant over all rows are excluded
    with a "no variance" note. A pair whose two classes are each constant
    gets its relation from the class values and a "degenerate" note, and is
    never selected.
    """
    config = config or AnalysisConfig()
    warnings: List[str] = []

    counts = matrix.class_counts
    populated = [label for label in ClassLabel if counts.get(label, 0) >= 2]
    for label, count in counts.items():
        if count < 2:
            message = f"class {label.value} has {count} row; treated as absent"
            logger.warning(f"[ANALYZE] {message}")
            warnings.append(message)
    if len(populated) < 2:
        raise DataValidationError(
            f"{matrix.corpus_name}: analysis needs at least 2 classes with 2+ rows "
            f"(class counts {format_counts(counts)})"
        )

    pairs: List[ClassPair] = []
    for pair in ClassPair:
        missing = [label.value for label in (pair.first, pair.second) if label not in populated]
        if missing:
            message = f"pair {pair.value} skipped: class {', '.join(missing)} absent"
            logger.warning(f"[ANALYZE] {message}")
            warnings.append(message)
        else:
            pairs.append(pair)

    logger.info("=" * 60)
    logger.info(
        f"[ANALYZE] {matrix.corpus_name}: {len(matrix.rows)} rows, "
        f"{len(matrix.feature_ids)} features, pairs {[pair.value for pair in pairs]}"
    )

    features = registry_order(matrix.feature_ids)
    labels = np.array([row.label.value for row in matrix.rows])
    in_scope = np.isin(labels, [label.value for label in populated])
    columns = np.array(
        [[row.values[name] for name in features] for row in matrix.rows], dtype=float
    ).reshape(len(matrix.rows), len(features))
    if not np.all(np.isfinite(columns)):
        raise DataValidationError(f"{matrix.corpus_name}: feature matrix contains non-finite values")

    stats: List[PairwiseStat] = []
    entries: Dict[str, Dict[ClassPair, Relation]] = {}
    selected: Dict[ClassPair, List[str]] = {pair: [] for pair in pairs}
    excluded: Dict[str, str] = {}
    diagnostics = {}
    normality_warnings = 0

    for j, feature in enumerate(features):
        column = columns[:, j]
        if np.ptp(column[in_scope]) == 0:
            excluded[feature] = "no variance"
            continue

        relations: Dict[ClassPair, Relation] = {}
        notes: List[str] = []
        for pair in pairs:
            first = column[labels == pair.first.value]
            second = column[labels == pair.second.value]
            if np.ptp(first) == 0 and np.ptp(second) == 0:
                # d is undefined: order by the class values, never select
                relations[pair] = _relation_from_means(first[0], second[0])
                notes.append(
                    f"degenerate {pair.value}: zero within-class variance, relation from class means"
                )
                continue

            anova = one_way_anova([first, second])
            d = cohens_d(first, second)
            relation = derive_relation(d, config)
            stats.append(
                PairwiseStat(
                    feature=feature,
                    pair=pair,
                    n_first=int(first.size),
                    n_second=int(second.size),
                    mean_first=float(first.mean()),
                    mean_second=float(second.mean()),
                    f_stat=anova.f_stat,
                    p_value=anova.p_value,
                    cohens_d=d,
                    magnitude=magnitude_label(d),
                    relation=relation,
                )
            )
            relations[pair] = relation
            if anova.p_value < config.p_threshold and abs(d) >= config.d_select_threshold:
                selected[pair].append(feature)

        if notes:
            excluded[feature] = "; ".join(notes)
        if relations:
            entries[feature] = relations

        per_class = {}
        for label in populated:
            values = column[labels == label.value]
            if values.size >= MIN_NORMALITY_SAMPLES and np.ptp(values) > 0:
                diagnostic = normality_diagnostic(values)
                per_class[label] = diagnostic
                if diagnostic.flag == "warn":
                    normality_warnings += 1
                    logger.debug(
                        f"[ANALYZE] {feature} class {label.value}: skew {diagnostic.skewness:.2f}, "
                        f"excess kurtosis {diagnostic.excess_kurtosis:.2f}"
                    )
        if per_class:
            diagnostics[feature] = per_class

    if normality_warnings:
        message = f"{normality_warnings} feature/class distributions flagged as far from normal"
        logger.warning(f"[ANALYZE] {message}")
        warnings.append(message)

    for pair in pairs:
        logger.info(f"[ANALYZE] {pair.value}: {len(selected[pair])} selected features")
    if excluded:
        logger.info(f"[ANALYZE] {len(excluded)} features with exclusion notes")
    logger.info("=" * 60)

    return AnalysisResult(
        stats=stats,
        ordering=OrderingTable(dataset_name=matrix.corpus_name, entries=entries),
        selected=selected,
        excluded=excluded,
        diagnostics=diagnostics,
        warnings=warnings,
    )


def _relation_from_means(first: float, second: float) -> Relation:
    if first == second:
        return Relation.EQUAL
    return Relation.FIRST_GREATER if first > second else Relation.SECOND_GREATER


def rank_selected(result: AnalysisResult, pair: ClassPair | str, limit: Optional[int] = None) -> List[str]:
    """Selected features of a pair by |d| descending (registry order breaks ties), top `limit`"""
    pair = ClassPair(pair)
    if pair not in result.selected:
        raise DataValidationError(f"pair {pair.value} was not analyzed")
    if limit is not None and limit < 1:
        raise DataValidationError(f"limit must be >= 1, got {limit}")

    effect = {stat.feature: abs(stat.cohens_d) for stat in result.stats if stat.pair == pair}
    ordered = registry_order(result.selected[pair])
    ranked = sorted(ordered, key=lambda feature: -effect[feature])
    return ranked if limit is None else ranked[:limit]


# ===== ORDERING NOTATION =====


def parse_ordering(text: str) -> Dict[ClassPair, Relation]:
    """
    Pair relations from chain notation such as "U > R = S"

    Groups separated by `>` are in decreasing order; classes joined by `=`
    are equal. Pairs involving a class absent from the chain are omitted.
    """
    rank: Dict[ClassLabel, int] = {}
    for position, group in enumerate(text.split(">")):
        members = [member.strip() for member in group.split("=")]
        for member in members:
            try:
                label = ClassLabel(member.upper())
            except ValueError:
                raise DataValidationError(f"bad ordering {text!r}: unknown class {member!r}") from None
            if label in rank:
                raise DataValidationError(f"bad ordering {text!r}: class {label.value} repeated")
            rank[label] = position
    if len(rank) < 2:
        raise DataValidationError(f"bad ordering {text!r}: at least two classes needed")

    relations: Dict[ClassPair, Relation] = {}
    for pair in ClassPair:
        if pair.first in rank and pair.second in rank:
            first, second = rank[pair.first], rank[pair.second]
            if first == second:
                relations[pair] = Relation.EQUAL
            elif first < second:
                relations[pair] = Relation.FIRST_GREATER
            else:
                relations[pair] = Relation.SECOND_GREATER
    return relations


def format_ordering(relations: Mapping[ClassPair, Relation]) -> str:
    """
    Chain notation for a set of pair relations

    Falls back to pairwise notation ("R>U, R<S, U=S") when the relations do
    not form a consistent chain.
    """
    relations = {ClassPair(pair): Relation(relation) for pair, relation in relations.items()}
    if not relations:
        return ""
    classes = [
        label for label in ClassLabel
        if any(label in (pair.first, pair.second) for pair in relations)
    ]

    for order in itertools.permutations(classes):
        for separators in itertools.product((">", "="), repeat=len(order) - 1):
            chain = order[0].value + "".join(
                f" {separator} {label.value}" for separator, label in zip(separators, order[1:])
            )
            implied = parse_ordering(chain)
            if all(implied.get(pair) == relation for pair, relation in relations.items()):
                return chain

    symbols = {Relation.FIRST_GREATER: ">", Relation.SECOND_GREATER: "<", Relation.EQUAL: "="}
    return ", ".join(
        f"{pair.first.value}{symbols[relation]}{pair.second.value}"
        for pair, relation in sorted(relations.items(), key=lambda item: list(ClassPair).index(item[0]))
    )


# ===== CROSS-DATASET AGREEMENT =====


def agreement_score(
    a: OrderingTable,
    b: OrderingTable,
    features: Sequence[str],
    tie_policy: TiePolicy = "disagree",
) -> AgreementReport:
    """
    Ordering agreement between two datasets

    Each feature x pair comparison scores +1 when both tables hold the same
    relation and -1 otherwise. With tie_policy "skip", an equal-vs-strict
    comparison is left out of both numerator and denominator.
    """
    for table in (a, b):
        for feature in features:
            held = table.entries.get(feature, {})
            missing = [pair.value for pair in ClassPair if pair not in held]
            if missing:
                raise DataValidationError(
                    f"feature {feature} lacks relations {missing} in {table.dataset_name}"
                )

    per_pair: Dict[ClassPair, List[int]] = defaultdict(list)
    per_category: Dict = defaultdict(list)
    per_category_pair: Dict = defaultdict(lambda: defaultdict(list))
    skipped = 0

    for feature in features:
        category = FEATURES_BY_NAME[feature].category if feature in FEATURES_BY_NAME else None
        for pair in ClassPair:
            first, second = a.entries[feature][pair], b.entries[feature][pair]
            if first == second:
                score = 1
            elif tie_policy == "skip" and (first == Relation.EQUAL) != (second == Relation.EQUAL):
                skipped += 1
                continue
            else:
                score = -1
            per_pair[pair].append(score)
            if category is not None:
                per_category[category].append(score)
                per_category_pair[category][pair].append(score)

    scores = [score for pair in ClassPair for score in per_pair.get(pair, [])]
    report = AgreementReport(
        overall=_mean(scores) if scores else None,
        per_pair={pair: _mean(values) for pair, values in per_pair.items() if values},
        per_category={category: _mean(values) for category, values in per_category.items()},
        per_category_pair={
            category: {pair: _mean(values) for pair, values in by_pair.items()}
            for category, by_pair in per_category_pair.items()
        },
        compared_features=list(features),
        agreements=sum(1 for score in scores if score > 0),
        disagreements=sum(1 for score in scores if score < 0),
        skipped=skipped,
    )

    overall = "n/a" if report.overall is None else f"{report.overall:.4f}"
    logger.info(
        f"[AGREEMENT] {a.dataset_name} vs {b.dataset_name}: {len(features)} features, "
        f"+{report.agreements} / -{report.disagreements} (skipped {skipped}) → {overall}"
    )
    return report


def universal_features(
    selected_a: Mapping[ClassPair, Sequence[str]],
    selected_b: Mapping[ClassPair, Sequence[str]],
    pair: ClassPair | str,
) -> List[str]:
    """Features selected for `pair` in both datasets, in registry order"""
    pair = ClassPair(pair)
    for name, selected in (("first", selected_a), ("second", selected_b)):
        if pair not in {ClassPair(key) for key in selected}:
            raise DataValidationError(f"pair {pair.value} absent from the {name} selection")

    def _lookup(selected: Mapping[ClassPair, Sequence[str]]) -> set:
        return next(set(features) for key, features in selected.items() if ClassPair(key) == pair)

    shared = _lookup(selected_a) & _lookup(selected_b)
    universal = registry_order(shared)
    if not universal:
        logger.warning(f"[AGREEMENT] 0 universal features for {pair.value}")
    return universal


def _mean(values: Sequence[int]) -> float:
    return sum(values) / len(values)
