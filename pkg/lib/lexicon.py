# lib/lexicon.py

"""
LIWC-style word-category dictionaries

File format (UTF-8):

    # language: en
    %
    1	pronoun
    2	article
    %
    he	1
    the	2
    certain*	3,4

Lines starting with `#` are comments. A trailing `*` marks a prefix stem.
Indices may be separated by commas or by whitespace (LIWC-native layout).
"""

import logging
import re
import unicodedata
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Set

from lib.errors import DataValidationError
from lib.types import CategoryHit, Language, Lexicon, TokenizedText

logger = logging.getLogger(__name__)

_LANGUAGE_DIRECTIVE = re.compile(r"^#\s*language\s*:\s*(\S+)\s*$", re.IGNORECASE)
_INDEX_SEPARATOR = re.compile(r"[,\s]+")


def normalize_word(word: str) -> str:
    """Case-fold and NFC-normalize a word or pattern; typographic apostrophes become ASCII"""
    return unicodedata.normalize("NFC", word).casefold().replace("’", "'")


def load_lexicon(path: str | Path, language: Optional[Language | str] = None) -> Lexicon:
    """
    Load and validate a lexicon file

    Args:
        path: Lexicon file
        language: Lexicon language; required when the file has no `# language:`
            directive and must match it otherwise

    Returns:
        Lexicon with exact and prefix patterns separated
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"lexicon file not found: {path}")

    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataValidationError(f"{path}: not valid UTF-8 ({e})") from e

    declared_language: Optional[str] = None
    section = 0  # 0 = preamble, 1 = categories, 2 = patterns
    index_to_position: Dict[str, int] = {}
    categories: List[str] = []
    exact: Dict[str, List[int]] = {}
    prefixes: Dict[str, List[int]] = {}
    multiword_skipped = 0

    for line_num, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.rstrip("\r")
        stripped = line.strip()

        if stripped.startswith("#"):
            directive = _LANGUAGE_DIRECTIVE.match(stripped)
            if directive:
                declared_language = directive.group(1).lower()
            continue
        if not stripped:
            continue

        if stripped == "%":
            if section == 2:
                raise DataValidationError(f"{path}: unexpected third '%' at line {line_num}")
            section += 1
            if section == 2 and not categories:
                raise DataValidationError(f"{path}: empty category section")
            continue

        if section == 0:
            raise DataValidationError(
                f"{path}: line {line_num} appears before the category section"
            )

        if section == 1:
            parts = stripped.split(None, 1)
            if len(parts) != 2:
                raise DataValidationError(
                    f"{path}: line {line_num}: expected 'index<TAB>category'"
                )
            index, name = _canonical_index(parts[0]), parts[1].strip()
            if index in index_to_position:
                raise DataValidationError(f"{path}: line {line_num}: duplicate category index {index}")
            if name in categories:
                raise DataValidationError(f"{path}: line {line_num}: duplicate category {name!r}")
            index_to_position[index] = len(categories)
            categories.append(name)
            continue

        # section 2: patterns
        if "\t" in stripped:
            pattern, _, refs = stripped.partition("\t")
        else:
            pattern, _, refs = stripped.partition(" ")
        pattern = pattern.strip()
        refs = refs.strip()

        if " " in pattern:
            multiword_skipped += 1
            continue
        if not refs:
            raise DataValidationError(f"{path}: line {line_num}: pattern {pattern!r} has no categories")
        if "*" in pattern[:-1]:
            raise DataValidationError(
                f"{path}: line {line_num}: '*' allowed only at the end of a pattern"
            )

        positions: List[int] = []
        for ref in _INDEX_SEPARATOR.split(refs):
            if not ref:
                continue
            position = index_to_position.get(_canonical_index(ref))
            if position is None:
                raise DataValidationError(
                    f"{path}: line {line_num}: unknown category reference {ref!r}"
                )
            if position not in positions:
                positions.append(position)

        is_prefix = pattern.endswith("*")
        key = normalize_word(pattern[:-1] if is_prefix else pattern)
        if not key:
            raise DataValidationError(f"{path}: line {line_num}: empty pattern")

        table = prefixes if is_prefix else exact
        if key in table:
            raise DataValidationError(
                f"{path}: line {line_num}: duplicate pattern {pattern!r}"
            )
        table[key] = positions

    if section < 2:
        raise DataValidationError(f"{path}: missing '%' section delimiters")
    if multiword_skipped:
        logger.warning(f"[LEXICON] Skipped {multiword_skipped} multiword patterns in {path}")

    requested = language.value if isinstance(language, Language) else language
    if requested is not None and declared_language is not None and declared_language != requested:
        raise DataValidationError(
            f"{path}: lexicon declares language {declared_language!r} but {requested!r} was requested"
        )
    chosen = requested if requested is not None else declared_language
    if chosen is None:
        raise DataValidationError(
            f"{path}: lexicon language unknown; add '# language: en|pt' or pass it explicitly"
        )
    try:
        chosen = Language(chosen)
    except ValueError as e:
        raise DataValidationError(f"{path}: unsupported lexicon language {chosen!r}") from e

    lexicon = Lexicon(
        language=chosen,
        categories=categories,
        exact=exact,
        prefixes=prefixes,
        source_path=str(path),
    )
    logger.info(
        f"[LEXICON] Loaded {path.name}: {len(categories)} categories, "
        f"{len(exact)} exact + {len(prefixes)} prefix patterns ({chosen.value})"
    )
    return lexicon


def _canonical_index(index: str) -> str:
    # "01" and "1" refer to the same category
    return str(int(index)) if index.isdigit() else index


def match_word(lexicon: Lexicon, word: str) -> Set[str]:
    """
    Categories of a word: exact pattern first, otherwise the longest matching
    prefix stem; unknown words match nothing
    """
    key = normalize_word(word)
    positions = lexicon.exact.get(key)
    if positions is None:
        for end in range(len(key), 0, -1):
            positions = lexicon.prefixes.get(key[:end])
            if positions is not None:
                break
    if not positions:
        return set()
    return {lexicon.categories[position] for position in positions}


def match_tokens(lexicon: Lexicon, tokens: TokenizedText) -> List[CategoryHit]:
    """One CategoryHit per word token, in text order"""
    cache: Dict[str, List[str]] = {}
    hits: List[CategoryHit] = []
    for token in tokens.words:
        if token.surface not in cache:
            cache[token.surface] = sorted(match_word(lexicon, token.surface))
        hits.append(CategoryHit(word=token.surface, categories=cache[token.surface]))
    return hits


def category_frequencies(lexicon: Lexicon, tokens: TokenizedText) -> Dict[str, float]:
    """Percent of word tokens falling in each lexicon category (0 when no hits)"""
    if tokens.word_count < 1:
        raise DataValidationError("category frequencies need at least one word token")

    counts: Counter = Counter()
    for hit in match_tokens(lexicon, tokens):
        counts.update(hit.categories)

    return {
        category: 100.0 * counts[category] / tokens.word_count
        for category in lexicon.categories
    }
