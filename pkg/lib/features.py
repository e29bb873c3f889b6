# lib/features.py

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lib.corpus import format_counts, stratified_indices, upsample_indices
from lib.errors import DataValidationError
from lib.lexicon import category_frequencies
from lib.textproc import analyze
from lib.types import (
    Article,
    Category,
    ClassLabel,
    Corpus,
    FeatureId,
    FeatureMatrix,
    FeatureVector,
    Lexicon,
    Scope,
    TokenizedText,
    TokenKind,
)

logger = logging.getLogger(__name__)

# ===== REGISTRY =====

REGISTRY_ABBRS: Dict[Category, List[str]] = {
    Category.COMPLEXITY: ["GI", "SMOG", "FK-RE", "FK-GL", "TTR", "WC", "WPS", "AVG_WLEN", "SixLtr"],
    Category.STYLISTIC: [
        "Comma", "Period", "Colon", "SemiC", "QMark", "Exclam",
        "Dash", "Quote", "Parenth", "OtherP", "AllPunc", "AllCaps",
    ],
    Category.LINGUISTIC: [
        "Funct", "Pronoun", "PPronoun", "IPron", "You", "SheHe", "We", "Negate", "Compare",
        "Preps", "Article", "Verb", "AuxVerb", "Quant", "Number", "Adjective", "Conj",
    ],
    Category.PSYCHOLOGICAL: [
        "Insight", "Percept", "Posemo", "Negemo", "Tentat", "Certain", "Sad",
        "Achieve", "Anger", "Anx", "Cause", "Discrep", "Feel",
    ],
}

REGISTRY: List[FeatureId] = [
    FeatureId(scope=scope, abbr=abbr, category=category)
    for scope in (Scope.TITLE, Scope.BODY)
    for category, abbrs in REGISTRY_ABBRS.items()
    for abbr in abbrs
]

FEATURE_NAMES: List[str] = [feature.name for feature in REGISTRY]
FEATURES_BY_NAME: Dict[str, FeatureId] = {feature.name: feature for feature in REGISTRY}
_REGISTRY_POSITION: Dict[str, int] = {name: i for i, name in enumerate(FEATURE_NAMES)}

# lexicon category names accepted for each dictionary-backed feature, first match wins
LEXICON_ALIASES: Dict[str, Tuple[str, ...]] = {
    "Funct": ("funct", "function"),
    "Pronoun": ("pronoun",),
    "PPronoun": ("ppronoun", "ppron"),
    "IPron": ("ipron",),
    "You": ("you",),
    "SheHe": ("shehe",),
    "We": ("we",),
    "Negate": ("negate",),
    "Compare": ("compare",),
    "Preps": ("preps", "prep"),
    "Article": ("article",),
    "Verb": ("verb",),
    "AuxVerb": ("auxverb",),
    "Quant": ("quant",),
    "Adjective": ("adjective", "adj"),
    "Conj": ("conj",),
    "Insight": ("insight",),
    "Percept": ("percept",),
    "Posemo": ("posemo",),
    "Negemo": ("negemo",),
    "Tentat": ("tentat",),
    "Certain": ("certain",),
    "Sad": ("sad",),
    "Achieve": ("achieve", "achiev"),
    "Anger": ("anger",),
    "Anx": ("anx",),
    "Cause": ("cause",),
    "Discrep": ("discrep",),
    "Feel": ("feel",),
}

PUNCT_CLASSES: Dict[str, str] = {
    ",": "Comma",
    ".": "Period",
    ":": "Colon",
    ";": "SemiC",
    "?": "QMark",
    "!": "Exclam",
    "-": "Dash", "‐": "Dash", "–": "Dash", "—": "Dash",
    '"': "Quote", "“": "Quote", "”": "Quote", "'": "Quote", "‘": "Quote", "’": "Quote",
    "«": "Quote", "»": "Quote",
    "(": "Parenth", ")": "Parenth",
}

PUNCT_FEATURES = [
    "Comma", "Period", "Colon", "SemiC", "QMark", "Exclam", "Dash", "Quote", "Parenth", "OtherP",
]


def feature_id(name: str) -> FeatureId:
    """Registry entry for a `<scope>_<abbr>` name"""
    try:
        return FEATURES_BY_NAME[name]
    except KeyError:
        raise DataValidationError(f"unknown feature {name!r}") from None


def registry_order(names: Iterable[str]) -> List[str]:
    """Names sorted by registry position (unknown names rejected)"""
    names = list(dict.fromkeys(names))
    for name in names:
        feature_id(name)
    return sorted(names, key=_REGISTRY_POSITION.__getitem__)


# ===== PER-TEXT MEASURES =====


def readability_from_counts(
    words: int, sentences: int, syllables: int, polysyllables: int
) -> Dict[str, float]:
    """Gunning fog, SMOG, Flesch reading ease and Flesch-Kincaid grade from raw counts"""
    if words < 1 or sentences < 1:
        raise DataValidationError(
            f"readability needs at least one word and one sentence (got W={words}, S={sentences})"
        )
    words_per_sentence = words / sentences
    syllables_per_word = syllables / words
    return {
        "GI": 0.4 * (words_per_sentence + 100.0 * polysyllables / words),
        "SMOG": 1.0430 * math.sqrt(polysyllables * 30.0 / sentences) + 3.1291,
        "FK-RE": 206.835 - 1.015 * words_per_sentence - 84.6 * syllables_per_word,
        "FK-GL": 0.39 * words_per_sentence + 11.8 * syllables_per_word - 15.59,
    }


def readability_indices(tok: TokenizedText) -> Dict[str, float]:
    """Readability indices of an analyzed text; no clamping"""
    return readability_from_counts(
        tok.word_count, tok.sentence_count, tok.syllable_total, tok.polysyllable_count
    )


def lexical_stats(tok: TokenizedText) -> Dict[str, float]:
    """TTR, word count, words per sentence, mean word length and six-letter share"""
    words = tok.words
    if not words:
        raise DataValidationError("lexical statistics need at least one word token")
    n = len(words)
    return {
        "TTR": len({token.surface.casefold() for token in words}) / n,
        "WC": float(n),
        "WPS": n / tok.sentence_count,
        "AVG_WLEN": sum(token.letter_count for token in words) / n,
        # LIWC "Sixltr": strictly more than six letters
        "SixLtr": 100.0 * sum(1 for token in words if token.letter_count > 6) / n,
    }


def stylistic_profile(tok: TokenizedText) -> Dict[str, float]:
    """
    Punctuation and all-caps frequencies as percent of words

    Punctuation marks are counted per 100 words, so these values are
    non-negative but not bounded by 100 ("Wow!!!" has Exclam = 300).
    """
    if tok.word_count < 1:
        raise DataValidationError("stylistic profile needs at least one word token")

    counts = {abbr: 0 for abbr in PUNCT_FEATURES}
    total_punct = 0
    all_caps = 0
    for token in tok.tokens:
        if token.kind == TokenKind.PUNCT:
            counts[PUNCT_CLASSES.get(token.surface, "OtherP")] += 1
            total_punct += 1
        elif token.kind == TokenKind.WORD and token.is_all_caps:
            all_caps += 1

    scale = 100.0 / tok.word_count
    profile = {abbr: count * scale for abbr, count in counts.items()}
    profile["AllPunc"] = total_punct * scale
    profile["AllCaps"] = all_caps * scale
    return profile


def resolve_lexicon_categories(lexicon: Lexicon) -> Dict[str, Optional[str]]:
    """Lexicon category backing each dictionary feature, None when the lexicon lacks it"""
    available = set(lexicon.categories)
    resolved: Dict[str, Optional[str]] = {}
    for abbr, aliases in LEXICON_ALIASES.items():
        resolved[abbr] = next((alias for alias in aliases if alias in available), None)
    return resolved


def _scope_features(tok: TokenizedText, lexicon: Lexicon) -> Dict[str, float]:
    values: Dict[str, float] = {}
    values.update(readability_indices(tok))
    values.update(lexical_stats(tok))
    values.update(stylistic_profile(tok))

    # numbers per 100 words; may exceed 100
    numbers = sum(1 for token in tok.tokens if token.kind == TokenKind.NUMBER)
    values["Number"] = 100.0 * numbers / tok.word_count

    frequencies = category_frequencies(lexicon, tok)
    for abbr, category in resolve_lexicon_categories(lexicon).items():
        values[abbr] = frequencies[category] if category is not None else 0.0
    return values


# ===== EXTRACTION =====


def extract_article(article: Article, lexicon: Lexicon) -> FeatureVector:
    """
    Compute all registry features for one article

    Title and body are analyzed independently; every feature is emitted once
    per scope.
    """
    if lexicon.language != article.language:
        raise DataValidationError(
            f"article {article.id}: language {article.language.value} does not match "
            f"lexicon language {lexicon.language.value}"
        )

    values: Dict[str, float] = {}
    for scope, part, text in (
        (Scope.TITLE, "title", article.title),
        (Scope.BODY, "body", article.body),
    ):
        try:
            tok = analyze(text, article.language)
        except DataValidationError as e:
            raise DataValidationError(f"article {article.id}: {part}: {e}") from e
        if tok.word_count == 0:
            raise DataValidationError(f"article {article.id}: {part} has no word tokens")

        for abbr, value in _scope_features(tok, lexicon).items():
            values[f"{scope.value}_{abbr}"] = value

    return FeatureVector(
        article_id=article.id,
        label=article.label,
        values={name: values[name] for name in FEATURE_NAMES},
    )


def extract_corpus(corpus: Corpus, lexicon: Lexicon, workers: int = 1) -> FeatureMatrix:
    """
    Feature matrix of a corpus, one row per article in corpus order

    With workers > 1 articles are processed in a process pool; order and
    values are identical to a sequential run.
    """
    languages = sorted({article.language.value for article in corpus.articles})
    if any(language != lexicon.language.value for language in languages):
        raise DataValidationError(
            f"corpus {corpus.name} has languages {languages} but the lexicon is "
            f"{lexicon.language.value}"
        )

    missing = [abbr for abbr, category in resolve_lexicon_categories(lexicon).items() if category is None]
    if missing:
        logger.warning(
            f"[EXTRACT] Lexicon lacks categories for {missing}; those features will be 0.0"
        )

    logger.info(
        f"[EXTRACT] {len(corpus.articles)} articles from {corpus.name} "
        f"({len(FEATURE_NAMES)} features, workers={workers})"
    )

    if workers > 1 and len(corpus.articles) > 1:
        chunksize = max(1, len(corpus.articles) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(
                executor.map(extract_article, corpus.articles, repeat(lexicon), chunksize=chunksize)
            )
    else:
        rows = [extract_article(article, lexicon) for article in corpus.articles]

    logger.info(f"[EXTRACT] Done: {len(rows)} rows")
    return FeatureMatrix(corpus_name=corpus.name, feature_ids=list(FEATURE_NAMES), rows=rows)


# ===== CSV =====


def save_matrix(matrix: FeatureMatrix, path: str | Path) -> Path:
    """Write the feature CSV: article_id, label, then features in matrix order (6 significant digits)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    frame = pd.DataFrame(
        [[row.values[name] for name in matrix.feature_ids] for row in matrix.rows],
        columns=matrix.feature_ids,
        dtype=float,
    )
    frame.insert(0, "label", [row.label.value for row in matrix.rows])
    frame.insert(0, "article_id", [row.article_id for row in matrix.rows])
    frame.to_csv(path, index=False, float_format="%.6g", lineterminator="\n", encoding="utf-8")
    return path


def load_matrix(path: str | Path, name: Optional[str] = None) -> FeatureMatrix:
    """Read a feature CSV written by save_matrix"""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"feature file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(f"{path}: unreadable feature CSV ({e})") from e

    columns = list(frame.columns)
    if columns[:2] != ["article_id", "label"]:
        raise DataValidationError(f"{path}: header must start with 'article_id,label'")
    feature_names = columns[2:]
    unknown = [column for column in feature_names if column not in FEATURES_BY_NAME]
    if unknown:
        raise DataValidationError(f"{path}: unknown feature columns {unknown}")

    labels = {label.value for label in ClassLabel}
    bad = sorted(set(frame["label"]) - labels)
    if bad:
        raise DataValidationError(f"{path}: unknown label(s) {bad}")

    try:
        numeric = frame[feature_names].apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except ValueError as e:
        raise DataValidationError(f"{path}: non-numeric feature value ({e})") from e

    rows = [
        FeatureVector(
            article_id=article_id,
            label=ClassLabel(label),
            values=dict(zip(feature_names, map(float, numeric[i]))),
        )
        for i, (article_id, label) in enumerate(zip(frame["article_id"], frame["label"]))
    ]
    return FeatureMatrix(corpus_name=name or path.stem, feature_ids=feature_names, rows=rows)


# ===== MATRIX HELPERS =====


def feature_array(matrix: FeatureMatrix, names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Rows x features array in the given (or matrix) feature order"""
    names = list(names) if names is not None else matrix.feature_ids
    if not matrix.rows:
        return np.empty((0, len(names)))
    return np.array([[row.values[name] for name in names] for row in matrix.rows], dtype=float)


def restrict_matrix(matrix: FeatureMatrix, names: Sequence[str]) -> FeatureMatrix:
    """Keep only the named features, in the given order"""
    absent = [name for name in names if name not in matrix.feature_ids]
    if absent:
        raise DataValidationError(f"features absent from {matrix.corpus_name}: {absent}")
    names = list(names)
    return FeatureMatrix(
        corpus_name=matrix.corpus_name,
        feature_ids=names,
        rows=[
            FeatureVector(
                article_id=row.article_id,
                label=row.label,
                values={name: row.values[name] for name in names},
            )
            for row in matrix.rows
        ],
    )


def filter_classes(matrix: FeatureMatrix, labels: Iterable[ClassLabel]) -> FeatureMatrix:
    """Keep only rows of the given classes"""
    keep = {ClassLabel(label) for label in labels}
    return _take(matrix, [i for i, row in enumerate(matrix.rows) if row.label in keep])


def split_matrix(
    matrix: FeatureMatrix, test_fraction: float, seed: int
) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """Stratified train/test split of matrix rows, same rule as corpus splitting"""
    train_idx, test_idx = stratified_indices([row.label for row in matrix.rows], test_fraction, seed)
    train = _take(matrix, train_idx, suffix="-train")
    test = _take(matrix, test_idx, suffix="-test")
    logger.info(f"[SPLIT] {len(matrix.rows)} rows → train {len(train.rows)} / test {len(test.rows)}")
    return train, test


def upsample_matrix(
    matrix: FeatureMatrix, classes: Tuple[ClassLabel, ClassLabel], seed: int
) -> FeatureMatrix:
    """Duplicate minority-class rows until the two classes are balanced"""
    before = matrix.class_counts
    balanced = _take(matrix, upsample_indices([row.label for row in matrix.rows], classes, seed))
    logger.info(
        f"[UPSAMPLE] {format_counts(before)} → {format_counts(balanced.class_counts)}"
    )
    return balanced


def merge_matrices(matrices: Sequence[FeatureMatrix], name: Optional[str] = None) -> FeatureMatrix:
    """Concatenate matrices that share a feature set (article ids must stay unique)"""
    if not matrices:
        raise DataValidationError("nothing to merge")
    if len(matrices) == 1:
        return matrices[0]

    shared = [feature for feature in matrices[0].feature_ids if all(feature in m.feature_ids for m in matrices[1:])]
    for matrix in matrices:
        if set(matrix.feature_ids) != set(shared):
            logger.warning(
                f"[MERGE] {matrix.corpus_name}: dropping columns not shared by every matrix"
            )

    rows: List[FeatureVector] = []
    seen = set()
    for matrix in matrices:
        for row in matrix.rows:
            if row.article_id in seen:
                raise DataValidationError(
                    f"article id {row.article_id!r} appears in more than one matrix"
                )
            seen.add(row.article_id)
            rows.append(
                FeatureVector(
                    article_id=row.article_id,
                    label=row.label,
                    values={feature: row.values[feature] for feature in shared},
                )
            )

    merged_name = name or "+".join(matrix.corpus_name for matrix in matrices)
    logger.info(f"[MERGE] {len(matrices)} matrices → {len(rows)} rows, {len(shared)} features")
    return FeatureMatrix(corpus_name=merged_name, feature_ids=shared, rows=rows)


def _take(matrix: FeatureMatrix, indices: Sequence[int], suffix: str = "") -> FeatureMatrix:
    return FeatureMatrix(
        corpus_name=f"{matrix.corpus_name}{suffix}",
        feature_ids=list(matrix.feature_ids),
        rows=[matrix.rows[i] for i in indices],
    )
