# lib/reports.py

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, Field, ValidationError

from lib.errors import DataValidationError
from lib.features import FEATURES_BY_NAME
from lib.stats import format_ordering
from lib.types import (
    AgreementReport,
    AnalysisConfig,
    AnalysisResult,
    Category,
    ClassLabel,
    ClassPair,
    EvalReport,
    OrderingTable,
    Relation,
    TiePolicy,
)

logger = logging.getLogger(__name__)

PER_PAIR_FOOTNOTE = (
    "Per-pair scores are recomputed from the feature rows listed here. For the published "
    "BR vs US tables they differ from the printed per-pair figures: the complexity rows "
    "give Unreliable vs Reliable 0.8 where 0.9 is printed, and the printed 0.58 and 0.11 "
    "of the other panels are not reproducible from their rows either. The printed "
    "figures appear to cover the full selected feature sets, which are not listed."
)

# ===== REPORT MODELS =====


class InputFile(BaseModel):
    path: str
    sha256: str


class AnalysisReport(BaseModel):
    kind: Literal["analysis"] = "analysis"
    dataset: str
    n_rows: int
    class_counts: Dict[ClassLabel, int]
    thresholds: AnalysisConfig
    config: Dict[str, Any] = Field(default_factory=dict)
    config_hash: str = ""
    inputs: List[InputFile] = Field(default_factory=list)
    result: AnalysisResult


class ComparisonRow(BaseModel):
    feature: str
    ordering_a: str
    ordering_b: str
    score: int  # sum of +1/-1 over the class pairs


class ComparisonReport(BaseModel):
    kind: Literal["comparison"] = "comparison"
    dataset_a: str
    dataset_b: str
    tie_policy: TiePolicy
    all_features: bool = False
    config: Dict[str, Any] = Field(default_factory=dict)
    config_hash: str = ""
    inputs: List[InputFile] = Field(default_factory=list)
    rows: List[ComparisonRow] = Field(default_factory=list)
    agreement: AgreementReport
    universal: Dict[ClassPair, List[str]] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)


class EvaluationReport(BaseModel):
    kind: Literal["evaluation"] = "evaluation"
    dataset: str
    model_path: str
    split: Literal["all", "test"]
    selection: str = ""
    config: Dict[str, Any] = Field(default_factory=dict)
    config_hash: str = ""
    inputs: List[InputFile] = Field(default_factory=list)
    evaluation: EvalReport
    warnings: List[str] = Field(default_factory=list)


Report = Union[AnalysisReport, ComparisonReport, EvaluationReport]

# ===== FILES =====


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def input_files(paths: Sequence[str | Path]) -> List[InputFile]:
    return [InputFile(path=str(path), sha256=file_sha256(path)) for path in paths]


def write_report(
    report: Report, out_dir: str | Path, stem: str, report_format: str = "both"
) -> List[Path]:
    """Write `<stem>.json` and/or `<stem>.md` under out_dir"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    if report_format in ("json", "both"):
        path = out_dir / f"{stem}.json"
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        written.append(path)
    if report_format in ("table", "both"):
        path = out_dir / f"{stem}.md"
        path.write_text(render_report(report), encoding="utf-8")
        written.append(path)

    for path in written:
        logger.info(f"[REPORT] Wrote {path}")
    return written


def load_report(path: str | Path, expected: Optional[str] = None) -> Report:
    """Read a JSON report written by write_report"""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"report file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DataValidationError(f"{path}: unreadable report ({e})") from e

    kind = payload.get("kind") if isinstance(payload, dict) else None
    models = {"analysis": AnalysisReport, "comparison": ComparisonReport, "evaluation": EvaluationReport}
    if kind not in models:
        raise DataValidationError(f"{path}: unknown report kind {kind!r}")
    if expected is not None and kind != expected:
        raise DataValidationError(f"{path}: expected a {expected} report, found {kind}")

    try:
        return models[kind].model_validate(payload)
    except ValidationError as e:
        raise DataValidationError(f"{path}: invalid {kind} report ({e.error_count()} errors)") from e


# ===== COMPARISON ROWS =====


def comparison_rows(
    a: OrderingTable, b: OrderingTable, features: Sequence[str], tie_policy: TiePolicy = "disagree"
) -> List[ComparisonRow]:
    rows = []
    for feature in features:
        score = 0
        for pair in ClassPair:
            first, second = a.entries[feature][pair], b.entries[feature][pair]
            if first == second:
                score += 1
            elif not (tie_policy == "skip" and (first == Relation.EQUAL) != (second == Relation.EQUAL)):
                score -= 1
        rows.append(
            ComparisonRow(
                feature=feature,
                ordering_a=format_ordering(a.entries[feature]),
                ordering_b=format_ordering(b.entries[feature]),
                score=score,
            )
        )
    return rows


# ===== RENDERING =====


def render_report(report: Report) -> str:
    if isinstance(report, AnalysisReport):
        return render_analysis(report)
    if isinstance(report, ComparisonReport):
        return render_comparison(report)
    return render_evaluation(report)


def render_analysis(report: AnalysisReport) -> str:
    """Per-category tables of class orderings and effect sizes"""
    result = report.result
    thresholds = report.thresholds
    counts = ", ".join(f"{label.value}:{count}" for label, count in report.class_counts.items())
    lines = [
        f"# Analysis: {report.dataset}",
        "",
        f"Rows: {report.n_rows} ({counts})",
        f"Thresholds: p < {thresholds.p_threshold:g}, |d| >= {thresholds.d_select_threshold:g} "
        f"selects, |d| < {thresholds.d_equality_threshold:g} counts as equal",
        "",
    ]

    effect = {(stat.feature, stat.pair): stat.cohens_d for stat in result.stats}
    selected_in = {}
    for pair, features in result.selected.items():
        for feature in features:
            selected_in.setdefault(feature, []).append(pair.value)

    for category, features in _by_category(result.ordering.entries).items():
        lines.append(f"## {category.value.capitalize()}")
        lines.append("")
        rows = []
        for feature in features:
            d_cells = [
                f"{effect[(feature, pair)]:+.3f}" if (feature, pair) in effect else "-"
                for pair in ClassPair
            ]
            rows.append(
                [_display_name(feature), format_ordering(result.ordering.entries[feature]), *d_cells,
                 ", ".join(selected_in.get(feature, []))]
            )
        lines.extend(_table(["Feature", "Ordering", "d R-U", "d R-S", "d U-S", "Selected"], rows))
        lines.append("")

    lines.append("## Selected features")
    lines.append("")
    for pair, features in result.selected.items():
        lines.append(f"- {pair.value} ({pair.description}): {len(features)}")
    lines.append("")

    if result.excluded:
        lines.append("## Excluded")
        lines.append("")
        lines.extend(f"- {feature}: {reason}" for feature, reason in result.excluded.items())
        lines.append("")
    if result.warnings:
        lines.append("## Warnings")
        lines.append("")
        lines.extend(f"- {warning}" for warning in result.warnings)
        lines.append("")
    return "\n".join(lines)


def render_comparison(report: ComparisonReport) -> str:
    """One panel per feature category, each with overall and per-pair agreement"""
    agreement = report.agreement
    lines = [
        f"# Agreement: {report.dataset_a} vs {report.dataset_b}",
        "",
        f"Compared features: {len(agreement.compared_features)} (tie policy: {report.tie_policy})",
        f"Overall agreement: {_score(agreement.overall)} "
        f"(+{agreement.agreements} / -{agreement.disagreements}, skipped {agreement.skipped})",
        "",
    ]
    lines.extend(
        _table(
            ["Pair", "Agreement"],
            [[pair.description, _score(agreement.per_pair.get(pair))] for pair in ClassPair],
        )
    )
    lines.append("")

    rows_by_feature = {row.feature: row for row in report.rows}
    for category, features in _by_category(rows_by_feature).items():
        lines.append(f"## {category.value.capitalize()}")
        lines.append("")
        lines.extend(
            _table(
                ["Feature", report.dataset_a, report.dataset_b, "Score"],
                [
                    [
                        _display_name(feature),
                        rows_by_feature[feature].ordering_a,
                        rows_by_feature[feature].ordering_b,
                        f"{rows_by_feature[feature].score:+d}",
                    ]
                    for feature in features
                ],
            )
        )
        lines.append("")
        lines.append(f"Overall agreement: {_score(agreement.per_category.get(category))}")
        by_pair = agreement.per_category_pair.get(category, {})
        for pair in ClassPair:
            lines.append(f"{pair.description} agreement: {_score(by_pair.get(pair))}")
        lines.append("")

    lines.append("## Universal features")
    lines.append("")
    for pair, features in report.universal.items():
        listed = ", ".join(features) if features else "none"
        lines.append(f"- {pair.value} ({pair.description}): {len(features)} universal features: {listed}")
    lines.append("")

    if report.warnings:
        lines.append("## Warnings")
        lines.append("")
        lines.extend(f"- {warning}" for warning in report.warnings)
        lines.append("")

    lines.append(f"_Note: {PER_PAIR_FOOTNOTE}_")
    lines.append("")
    return "\n".join(lines)


def render_evaluation(report: EvaluationReport) -> str:
    evaluation = report.evaluation
    positive, negative = evaluation.task.first.value, evaluation.task.second.value
    (tp, fn), (fp, tn) = evaluation.confusion
    lines = [
        f"# Evaluation: {evaluation.task.value} on {report.dataset}",
        "",
        f"Model: {report.model_path} (split: {report.split})",
    ]
    if report.selection:
        lines.append(f"Features: {report.selection}")
    lines.append("")
    lines.extend(
        _table(
            ["Metric", "Value"],
            [
                ["Features used", str(evaluation.n_features)],
                ["Test rows", str(evaluation.n_test)],
                ["Accuracy", f"{evaluation.accuracy:.4f}"],
                ["Baseline", f"{evaluation.baseline:.4f}"],
                ["Majority rate", f"{evaluation.majority_rate:.4f}"],
            ],
        )
    )
    lines.append("")
    lines.append("Confusion (rows actual, columns predicted):")
    lines.append("")
    lines.extend(
        _table(
            ["", f"pred {positive}", f"pred {negative}"],
            [[positive, str(tp), str(fn)], [negative, str(fp), str(tn)]],
        )
    )
    lines.append("")
    if report.warnings:
        lines.extend(f"- {warning}" for warning in report.warnings)
        lines.append("")
    return "\n".join(lines)


def _by_category(features: Dict[str, Any]) -> Dict[Category, List[str]]:
    grouped: Dict[Category, List[str]] = {category: [] for category in Category}
    for feature in features:
        if feature in FEATURES_BY_NAME:
            grouped[FEATURES_BY_NAME[feature].category].append(feature)
    return {category: names for category, names in grouped.items() if names}


def _display_name(feature: str) -> str:
    return feature.replace("_", " ", 1)


def _score(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _table(headers: List[str], rows: List[List[str]]) -> List[str]:
    widths = [len(header) for header in headers]
    for row in rows:
        widths = [max(width, len(cell)) for width, cell in zip(widths, row)]

    def _line(cells: List[str]) -> str:
        return "| " + " | ".join(f"{cell:<{width}}" for cell, width in zip(cells, widths)) + " |"

    return [_line(headers), "|" + "|".join("-" * (width + 2) for width in widths) + "|"] + [
        _line(row) for row in rows
    ]
