import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from lib.classifier import evaluate, load_model, save_model, train
from lib.config import RunConfig, load_run_config
from lib.corpus import load_corpus
from lib.errors import DataValidationError, NumericalError
from lib.features import (
    extract_corpus,
    feature_id,
    filter_classes,
    load_matrix,
    merge_matrices,
    restrict_matrix,
    save_matrix,
    split_matrix,
    upsample_matrix,
)
from lib.lexicon import load_lexicon
from lib.reports import (
    AnalysisReport,
    ComparisonReport,
    EvaluationReport,
    comparison_rows,
    input_files,
    load_report,
    render_report,
    write_report,
)
from lib.stats import agreement_score, analyze_dataset, rank_selected, universal_features
from lib.types import ClassPair, Language

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


# ===== LOGGING SETUP =====
class FlushingStreamHandler(logging.StreamHandler):
    """Stream handler that flushes after every log"""

    def emit(self, record):
        super().emit(record)
        self.flush()


class FlushingFileHandler(logging.FileHandler):
    """File handler that flushes after every log"""

    def emit(self, record):
        super().emit(record)
        self.flush()


def setup_logging(verbose: bool = False) -> Optional[Path]:
    """
    Install the console handler and, unless NEWSSTYLE_LOG_DIR is set empty,
    a per-run log file

    Returns:
        Path of the log file, or None when file logging is disabled
    """
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if isinstance(handler, (FlushingStreamHandler, FlushingFileHandler)):
            root_logger.removeHandler(handler)
            handler.close()

    handler = FlushingStreamHandler(sys.stderr)
    handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    handler.setFormatter(logging.Formatter("[%(name)s] %(levelname)s: %(message)s"))
    root_logger.addHandler(handler)
    root_logger.setLevel(logging.DEBUG)

    log_dir = os.getenv("NEWSSTYLE_LOG_DIR", "logs")
    if not log_dir:
        return None

    os.makedirs(log_dir, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = Path(log_dir) / f"newsstyle_{timestamp}.log"
    file_handler = FlushingFileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(
        logging.Formatter("[%(asctime)s] [%(name)s] %(levelname)s: %(message)s")
    )
    root_logger.addHandler(file_handler)
    return log_file


# ===== COMMANDS =====


def cmd_extract(args: argparse.Namespace, config: RunConfig) -> int:
    """Corpus JSONL -> feature CSV"""
    corpus = load_corpus(args.corpus, expected_language=args.language)
    if not corpus.articles:
        raise DataValidationError(f"{args.corpus}: corpus is empty")

    language = Language(args.language) if args.language else corpus.articles[0].language
    lexicon_path = args.lexicon or (
        config.lexicon_en if language == Language.EN else config.lexicon_pt
    )
    if not lexicon_path:
        raise DataValidationError(
            f"no lexicon for language {language.value}; pass --lexicon or set "
            f"LEXICON_{language.value.upper()}="
        )
    lexicon = load_lexicon(lexicon_path, language)

    matrix = extract_corpus(corpus, lexicon, workers=config.workers)
    output = Path(args.output) if args.output else Path(config.out_dir) / f"{corpus.name}.features.csv"
    save_matrix(matrix, output)
    logger.info(f"[EXTRACT] Wrote {len(matrix.rows)} rows x {len(matrix.feature_ids)} features to {output}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> int:
    """Feature CSV -> analysis report"""
    matrix = load_matrix(args.features, name=args.name)
    thresholds = config.analysis()
    result = analyze_dataset(matrix, thresholds)

    report = AnalysisReport(
        dataset=matrix.corpus_name,
        n_rows=len(matrix.rows),
        class_counts=matrix.class_counts,
        thresholds=thresholds,
        config=config.model_dump(mode="json"),
        config_hash=config.config_hash,
        inputs=input_files([args.features]),
        result=result,
    )
    write_report(report, config.out_dir, "analysis", config.report_format)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, config: RunConfig) -> int:
    """Two analysis reports -> agreement report and universal features"""
    report_a = load_report(args.a, expected="analysis")
    report_b = load_report(args.b, expected="analysis")
    table_a, table_b = report_a.result.ordering, report_b.result.ordering
    warnings: List[str] = []

    complete_a = {f for f, relations in table_a.entries.items() if len(relations) == len(ClassPair)}
    complete_b = {f for f, relations in table_b.entries.items() if len(relations) == len(ClassPair)}
    if args.all_features:
        candidates = complete_a & complete_b
    else:
        selected_a = {f for features in report_a.result.selected.values() for f in features}
        selected_b = {f for features in report_b.result.selected.values() for f in features}
        candidates = (selected_a & selected_b) & complete_a & complete_b
    features = [f for f in table_a.entries if f in candidates]

    if not features:
        message = "no shared features with all three class relations; nothing to compare"
        logger.warning(f"[AGREEMENT] {message}")
        warnings.append(message)

    tie_policy = config.mixed_tie_policy
    agreement = agreement_score(table_a, table_b, features, tie_policy)

    universal: Dict[ClassPair, List[str]] = {}
    for pair in ClassPair:
        if pair in report_a.result.selected and pair in report_b.result.selected:
            universal[pair] = universal_features(
                report_a.result.selected, report_b.result.selected, pair
            )
            if not universal[pair]:
                warnings.append(f"0 universal features for {pair.value}")

    report = ComparisonReport(
        dataset_a=report_a.dataset,
        dataset_b=report_b.dataset,
        tie_policy=tie_policy,
        all_features=args.all_features,
        config=config.model_dump(mode="json"),
        config_hash=config.config_hash,
        inputs=input_files([args.a, args.b]),
        rows=comparison_rows(table_a, table_b, features, tie_policy),
        agreement=agreement,
        universal=universal,
        warnings=warnings,
    )
    write_report(report, config.out_dir, "comparison", config.report_format)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    """Feature CSV(s) -> model file + evaluation report on the held-out split"""
    seed = config.require_seed()
    task = _parse_task(args.task)
    classes = (task.first, task.second)

    matrix = merge_matrices([load_matrix(path) for path in args.features])
    features, selection = _training_features(args, task, config)
    absent = [name for name in features if name not in matrix.feature_ids]
    if absent:
        raise DataValidationError(f"selected features absent from the feature CSV: {absent}")

    logger.info("=" * 60)
    logger.info(f"[PIPELINE] train {task.value} on {matrix.corpus_name}: {selection}")
    logger.info("=" * 60)

    train_rows, test_rows = split_matrix(filter_classes(matrix, classes), config.test_fraction, seed)
    balanced = upsample_matrix(train_rows, classes, seed)

    model = train(
        restrict_matrix(balanced, features),
        task,
        config.hyperparams(),
        config_hash=config.config_hash,
        created_at=_input_timestamp(args.features),
    )
    model_path = save_model(model, Path(config.out_dir) / "model.json")

    evaluation = evaluate(model, restrict_matrix(test_rows, features))
    report = EvaluationReport(
        dataset=matrix.corpus_name,
        model_path=str(model_path),
        split="test",
        selection=selection,
        config=config.model_dump(mode="json"),
        config_hash=config.config_hash,
        inputs=input_files(list(args.features) + _selection_inputs(args)),
        evaluation=evaluation,
    )
    write_report(report, config.out_dir, "evaluation", config.report_format)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    """Model file + feature CSV -> evaluation report"""
    model = load_model(args.model)
    task = model.task
    matrix = filter_classes(load_matrix(args.features), (task.first, task.second))

    if args.split == "test":
        _, rows = split_matrix(matrix, config.test_fraction, config.require_seed())
    else:
        rows = matrix

    evaluation = evaluate(model, rows)
    report = EvaluationReport(
        dataset=matrix.corpus_name,
        model_path=str(args.model),
        split=args.split,
        config=config.model_dump(mode="json"),
        config_hash=config.config_hash,
        inputs=input_files([args.model, args.features]),
        evaluation=evaluation,
    )
    write_report(report, config.out_dir, "evaluation", config.report_format)
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    """Print the table rendering of a saved report"""
    path = args.analysis or args.comparison or args.evaluation
    expected = "analysis" if args.analysis else "comparison" if args.comparison else "evaluation"
    print(render_report(load_report(path, expected=expected)))
    return EXIT_OK


def _parse_task(text: str) -> ClassPair:
    try:
        return ClassPair.parse(text)
    except ValueError as e:
        raise DataValidationError(str(e)) from e


def _training_features(args: argparse.Namespace, task: ClassPair, config: RunConfig):
    if args.selection:
        report = load_report(args.selection, expected="analysis")
        features = rank_selected(report.result, task, config.max_features)
        selection = f"top {len(features)} selected for {task.value} in {report.dataset}"
    elif args.universal:
        first = load_report(args.universal[0], expected="analysis")
        second = load_report(args.universal[1], expected="analysis")
        features = universal_features(first.result.selected, second.result.selected, task)
        if config.max_features is not None:
            features = _rank_by_mean_effect(features, task, [first, second])[: config.max_features]
        selection = f"{len(features)} universal features of {first.dataset} and {second.dataset}"
    else:
        features = _read_feature_list(args.feature_list)
        if config.max_features is not None:
            features = features[: config.max_features]
        selection = f"{len(features)} features listed in {args.feature_list}"

    if not features:
        raise DataValidationError(f"empty feature list ({selection})")
    return features, selection


def _rank_by_mean_effect(features: List[str], task: ClassPair, reports: List[AnalysisReport]) -> List[str]:
    effect: Dict[str, float] = {feature: 0.0 for feature in features}
    for report in reports:
        for stat in report.result.stats:
            if stat.pair == task and stat.feature in effect:
                effect[stat.feature] += abs(stat.cohens_d) / len(reports)
    return sorted(features, key=lambda feature: -effect[feature])


def _read_feature_list(path: str) -> List[str]:
    file = Path(path)
    if not file.exists():
        raise DataValidationError(f"feature list not found: {path}")
    names = []
    for line in file.read_text(encoding="utf-8").splitlines():
        name = line.split("#", 1)[0].strip()
        if name:
            feature_id(name)
            names.append(name)
    return list(dict.fromkeys(names))


def _selection_inputs(args: argparse.Namespace) -> List[str]:
    if args.selection:
        return [args.selection]
    if args.universal:
        return list(args.universal)
    return [args.feature_list]


def _input_timestamp(paths: List[str]) -> str:
    # newest input mtime keeps reruns on unchanged inputs byte-identical
    latest = max(Path(path).stat().st_mtime for path in paths)
    return datetime.fromtimestamp(latest, tz=timezone.utc).isoformat()


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "extract": cmd_extract,
    "analyze": cmd_analyze,
    "compare": cmd_compare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


# ===== ARGUMENTS =====


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newsstyle",
        description="Stylometric credibility analysis of news corpora",
    )
    parser.add_argument("--seed", type=int, help="Seed for splitting, upsampling and training")
    parser.add_argument("--config", help="KEY=value configuration file")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--format", choices=["json", "table", "both"], help="Report format")
    parser.add_argument("--workers", type=int, help="Extraction worker processes")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging on the console")

    sub = parser.add_subparsers(dest="command", required=True)

    extract = sub.add_parser("extract", help="Extract the feature matrix of a corpus")
    extract.add_argument("--corpus", required=True, help="Corpus JSONL")
    extract.add_argument("--lexicon", help="Lexicon file (defaults to LEXICON_EN / LEXICON_PT)")
    extract.add_argument("--language", choices=[language.value for language in Language])
    extract.add_argument("--output", help="Feature CSV path")

    analyze = sub.add_parser("analyze", help="Significance, effect sizes and orderings")
    analyze.add_argument("--features", required=True, help="Feature CSV")
    analyze.add_argument("--name", help="Dataset name (defaults to the file stem)")

    compare = sub.add_parser("compare", help="Ordering agreement between two analyses")
    compare.add_argument("--a", required=True, help="First analysis report (JSON)")
    compare.add_argument("--b", required=True, help="Second analysis report (JSON)")
    compare.add_argument(
        "--all-features", action="store_true",
        help="Compare every feature ordered in both reports, not only selected ones",
    )

    train_parser = sub.add_parser("train", help="Train and test a linear SVM")
    train_parser.add_argument("--features", required=True, nargs="+", help="Feature CSV(s); several are merged")
    train_parser.add_argument("--task", default="R-U", help="Class pair, positive class first")
    source = train_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--selection", help="Analysis report whose selected features are used")
    source.add_argument("--universal", nargs=2, metavar=("A", "B"), help="Two analysis reports; use their shared selection")
    source.add_argument("--feature-list", help="File with one feature name per line")
    train_parser.add_argument("--max-features", type=int, help="Keep the N features with the largest |d|")
    train_parser.add_argument("--lambda", dest="svm_lambda", type=float, help="Regularization strength")
    train_parser.add_argument("--epochs", type=int, help="Training epochs")
    train_parser.add_argument("--test-fraction", type=float, help="Held-out share per class")

    evaluate_parser = sub.add_parser("evaluate", help="Score a saved model")
    evaluate_parser.add_argument("--model", required=True, help="Model file")
    evaluate_parser.add_argument("--features", required=True, help="Feature CSV")
    evaluate_parser.add_argument(
        "--split", choices=["all", "test"], default="test",
        help="Evaluate on every row or on the held-out split (same seed and fraction as training)",
    )
    evaluate_parser.add_argument("--test-fraction", type=float, help="Held-out share per class")

    report = sub.add_parser("report", help="Render a saved report as a table")
    kinds = report.add_mutually_exclusive_group(required=True)
    kinds.add_argument("--analysis", help="Analysis report (JSON)")
    kinds.add_argument("--comparison", help="Comparison report (JSON)")
    kinds.add_argument("--evaluation", help="Evaluation report (JSON)")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    return {
        "seed": args.seed,
        "out_dir": args.out,
        "report_format": args.format,
        "workers": args.workers,
        "max_features": getattr(args, "max_features", None),
        "svm_lambda": getattr(args, "svm_lambda", None),
        "epochs": getattr(args, "epochs", None),
        "test_fraction": getattr(args, "test_fraction", None),
    }


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_file = setup_logging(args.verbose)
    if log_file is not None:
        logger.debug(f"Log file: {log_file}")

    try:
        config = load_run_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, config)
    except NumericalError as e:
        logger.error(f"[ERROR] numerical failure: {e}")
        return EXIT_NUMERICAL
    except (DataValidationError, ValidationError, OSError) as e:
        logger.error(f"[ERROR] {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
