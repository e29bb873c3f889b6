# lib/corpus.py

import json
import logging
import math
import unicodedata
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from lib.errors import DataValidationError
from lib.types import Article, ClassLabel, Corpus, Language

logger = logging.getLogger(__name__)

ARTICLE_FIELDS = ("id", "source", "language", "label", "title", "body")

DEFAULT_TEST_FRACTION = 0.2


def load_corpus(
    path: str | Path, expected_language: Optional[Language | str] = None
) -> Corpus:
    """
    Load a JSONL corpus, one article per line

    Args:
        path: JSONL file, UTF-8
        expected_language: If given, every article must carry this language tag

    Returns:
        Validated Corpus with articles in file order
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"corpus file not found: {path}")

    expected = None
    if expected_language is not None:
        expected = _parse_language(expected_language, "expected language")
    labels = {label.value for label in ClassLabel}
    languages = {language.value for language in Language}

    logger.info(f"[LOAD] Reading corpus {path}")

    articles: List[Article] = []
    seen_ids: Dict[str, int] = {}

    try:
        # split on "\n" only; U+2028 may legally appear inside JSON strings
        lines = path.read_text(encoding="utf-8").split("\n")
    except UnicodeDecodeError as e:
        raise DataValidationError(f"{path}: not valid UTF-8 ({e})") from e

    for line_num, line in enumerate(lines, start=1):
        if not line.strip():
            continue

        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"malformed line {line_num}: {e.msg}") from e

        if not isinstance(record, dict):
            raise DataValidationError(f"malformed line {line_num}: expected a JSON object")

        unknown = sorted(set(record) - set(ARTICLE_FIELDS))
        if unknown:
            raise DataValidationError(f"unknown field(s) {unknown} at line {line_num}")
        missing = [field for field in ARTICLE_FIELDS if field not in record]
        if missing:
            raise DataValidationError(f"missing field(s) {missing} at line {line_num}")

        if record["label"] not in labels:
            raise DataValidationError(
                f"unknown label {record['label']!r} at line {line_num}"
            )
        if record["language"] not in languages:
            raise DataValidationError(
                f"unknown language {record['language']!r} at line {line_num}"
            )
        if expected is not None and record["language"] != expected.value:
            raise DataValidationError(
                f"language mismatch at line {line_num}: "
                f"{record['language']!r} but expected {expected.value!r}"
            )

        record = {
            key: unicodedata.normalize("NFC", value) if isinstance(value, str) else value
            for key, value in record.items()
        }

        if record["id"] in seen_ids:
            raise DataValidationError(
                f"duplicate id {record['id']!r} at line {line_num} "
                f"(first seen at line {seen_ids[record['id']]})"
            )

        try:
            article = Article(**record)
        except ValidationError as e:
            reason = "; ".join(_clean_error(err["msg"]) for err in e.errors())
            raise DataValidationError(f"invalid article at line {line_num}: {reason}") from e

        seen_ids[article.id] = line_num
        articles.append(article)

    corpus = Corpus(name=path.stem, articles=articles)
    logger.info(
        f"[LOAD] {len(articles)} articles, class counts "
        f"{format_counts(corpus.class_counts)}"
    )
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    """Write a corpus back to the JSONL schema it was loaded from"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for article in corpus.articles:
            record = article.model_dump(mode="json")
            handle.write(json.dumps({key: record[key] for key in ARTICLE_FIELDS}, ensure_ascii=False))
            handle.write("\n")
    return path


def stratified_split(
    corpus: Corpus, test_fraction: float = DEFAULT_TEST_FRACTION, seed: int = 0
) -> Tuple[Corpus, Corpus]:
    """
    Split a corpus into train and test portions class by class

    Per class, round(count * test_fraction) articles (at least 1) go to the
    test portion after a seeded shuffle. Both portions keep corpus order.
    """
    labels = [article.label for article in corpus.articles]
    train_idx, test_idx = stratified_indices(labels, test_fraction, seed)

    train = Corpus(name=f"{corpus.name}-train", articles=[corpus.articles[i] for i in train_idx])
    test = Corpus(name=f"{corpus.name}-test", articles=[corpus.articles[i] for i in test_idx])

    logger.info(
        f"[SPLIT] {len(corpus.articles)} → train {len(train.articles)} "
        f"{format_counts(train.class_counts)} / test {len(test.articles)} "
        f"{format_counts(test.class_counts)}"
    )
    return train, test


def upsample_minority(
    corpus: Corpus, classes: Tuple[ClassLabel, ClassLabel], seed: int = 0
) -> Corpus:
    """
    Duplicate articles of the smaller of two classes until both counts match

    Only existing articles are repeated (sampling with replacement); the
    larger class and any other class are left untouched.
    """
    labels = [article.label for article in corpus.articles]
    indices = upsample_indices(labels, classes, seed)

    balanced = Corpus(name=corpus.name, articles=[corpus.articles[i] for i in indices])
    logger.info(
        f"[UPSAMPLE] {format_counts(corpus.class_counts)} → "
        f"{format_counts(balanced.class_counts)}"
    )
    return balanced


# ===== INDEX-LEVEL HELPERS (shared with feature matrices) =====


def stratified_indices(
    labels: Sequence[ClassLabel], test_fraction: float, seed: int
) -> Tuple[List[int], List[int]]:
    """Row indices of the train and test portions, each in input order"""
    if not 0 < test_fraction < 1:
        raise DataValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")

    by_class = _indices_by_class(labels)
    for label, members in by_class.items():
        if len(members) < 2:
            raise DataValidationError(
                f"class {label.value} has {len(members)} article(s); at least 2 are needed to split"
            )

    rng = np.random.default_rng(seed)
    test: List[int] = []
    for label in ClassLabel:
        members = by_class.get(label)
        if not members:
            continue
        n_test = max(1, _round_half_up(len(members) * test_fraction))
        n_test = min(n_test, len(members) - 1)  # train keeps every class
        shuffled = rng.permutation(len(members))
        test.extend(members[i] for i in shuffled[:n_test])

    test_set = set(test)
    train_idx = [i for i in range(len(labels)) if i not in test_set]
    return train_idx, sorted(test_set)


def upsample_indices(
    labels: Sequence[ClassLabel], classes: Tuple[ClassLabel, ClassLabel], seed: int
) -> List[int]:
    """All input indices followed by the sampled duplicates of the minority class"""
    first, second = (ClassLabel(c) for c in classes)
    if first == second:
        raise DataValidationError("upsampling needs two different classes")

    by_class = _indices_by_class(labels)
    for label in (first, second):
        if not by_class.get(label):
            raise DataValidationError(f"class {label.value} is absent; cannot upsample")

    if len(by_class[first]) < len(by_class[second]):
        small, large = first, second
    else:
        small, large = second, first
    deficit = len(by_class[large]) - len(by_class[small])
    if deficit == 0:
        return list(range(len(labels)))

    rng = np.random.default_rng(seed)
    extra = rng.choice(np.asarray(by_class[small]), size=deficit, replace=True)
    return list(range(len(labels))) + [int(i) for i in extra]


def _indices_by_class(labels: Iterable[ClassLabel]) -> Dict[ClassLabel, List[int]]:
    by_class: Dict[ClassLabel, List[int]] = {}
    for index, label in enumerate(labels):
        by_class.setdefault(ClassLabel(label), []).append(index)
    return by_class


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _parse_language(value: Language | str, what: str) -> Language:
    try:
        return Language(value)
    except ValueError as e:
        raise DataValidationError(f"unknown {what} {value!r}") from e


def _clean_error(message: str) -> str:
    return message.removeprefix("Value error, ")


def format_counts(counts: Dict[ClassLabel, int]) -> str:
    return "{" + ", ".join(f"{label.value}:{count}" for label, count in counts.items()) + "}"
