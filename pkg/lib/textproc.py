# lib/textproc.py

"""
Sentence segmentation, tokenization and syllable counting

Rules are deterministic and independent of any language toolkit so that
feature values are reproducible bit for bit.
"""

import logging
import re
import unicodedata
from typing import FrozenSet, List

from lib.errors import DataValidationError
from lib.types import Language, Token, TokenizedText, TokenKind

logger = logging.getLogger(__name__)

ABBREVIATIONS = {
    Language.EN: frozenset(
        {
            "mr.", "mrs.", "ms.", "dr.", "prof.", "jr.", "sr.", "st.",
            "u.s.", "u.k.", "vs.", "etc.", "inc.", "gov.", "sen.", "rep.",
        }
    ),
    Language.PT: frozenset(
        {
            "sr.", "sra.", "srta.", "dr.", "dra.", "prof.", "profa.",
            "etc.", "pág.", "av.", "gov.", "dep.", "ex.",
        }
    ),
}

OPENING_QUOTES = "\"'“‘«("

# terminator run, optional closing quotes/brackets, then the whitespace gap
_BOUNDARY = re.compile(r"([.!?…]+)([\"'”’»)]*)\s+")

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_HANDLE = re.compile(r"(?<!\w)@\w+")

_TOKEN = re.compile(
    r"(?P<word>[^\W\d_]+(?:['’\-‐][^\W\d_]+)*)"
    r"|(?P<number>\d+(?:[.,]\d+)*)"
    r"|(?P<punct>\S)"
)

EN_VOWELS = frozenset("aeiouy")
PT_VOWELS = frozenset("aeiouyáéíóúâêôãõàü")
PT_HIATUS = frozenset("áéíóú")
PT_FRONT = frozenset("eiéíêî")


def strip_boilerplate(text: str) -> str:
    """Remove URLs and @-handles, which are not authorial style"""
    text = _URL.sub(" ", text)
    text = _HANDLE.sub(" ", text)
    return text


def segment_sentences(text: str, language: Language = Language.EN) -> List[str]:
    """
    Split text into sentences

    A boundary is `.`, `!`, `?` or `…` followed by whitespace and then an
    uppercase letter, a digit or an opening quote. Only the abbreviation
    stoplist of the language suppresses a boundary, so a single capital
    letter such as the "I" of "World War I." ends a sentence.
    """
    cleaned = re.sub(r"\s+", " ", unicodedata.normalize("NFC", text)).strip()
    if not cleaned:
        raise DataValidationError("cannot segment empty text")

    stoplist = ABBREVIATIONS[Language(language)]
    sentences: List[str] = []
    start = 0

    for match in _BOUNDARY.finditer(cleaned):
        following = cleaned[match.end()] if match.end() < len(cleaned) else ""
        if not (following.isupper() or following.isdigit() or (following and following in OPENING_QUOTES)):
            continue
        if match.group(1) == "." and _ends_with_abbreviation(
            cleaned[start : match.start() + 1], stoplist
        ):
            continue

        sentence = cleaned[start : match.end()].strip()
        if sentence:
            sentences.append(sentence)
        start = match.end()

    tail = cleaned[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _ends_with_abbreviation(chunk: str, stoplist: FrozenSet[str]) -> bool:
    words = chunk.split()
    if not words:
        return False
    last = words[-1].lstrip(OPENING_QUOTES)
    return last.lower() in stoplist


def tokenize(sentence: str, language: Language = Language.EN) -> List[Token]:
    """
    Split a sentence into word, number and punctuation tokens

    Words are maximal letter runs (apostrophes and hyphens between letters
    stay inside the word); numbers are digit runs with internal `.`/`,`
    separators; every other non-space character is its own punct token.
    """
    language = Language(language)
    tokens: List[Token] = []

    for match in _TOKEN.finditer(sentence):
        surface = match.group(0)

        if match.lastgroup == "word":
            letters = [ch for ch in surface if ch.isalpha()]
            if letters:
                tokens.append(
                    Token(
                        surface=surface,
                        kind=TokenKind.WORD,
                        letter_count=len(letters),
                        is_all_caps=len(letters) >= 2 and all(ch.isupper() for ch in letters),
                        syllables=count_syllables(surface, language),
                    )
                )
                continue
            # word-class characters without letters (e.g. superscripts)
            tokens.extend(Token(surface=ch, kind=TokenKind.PUNCT) for ch in surface)
        elif match.lastgroup == "number":
            tokens.append(Token(surface=surface, kind=TokenKind.NUMBER))
        else:
            tokens.append(Token(surface=surface, kind=TokenKind.PUNCT))

    return tokens


def count_syllables(word: str, language: Language = Language.EN) -> int:
    """
    Heuristic syllable count of a single word, minimum 1

    English counts vowel groups (y included) and drops a terminal silent e
    unless the word ends in consonant + "le". Portuguese counts vowel groups
    where an acute-accented vowel always forms its own group and the u of
    "qu"/"gu" before e/i is silent.
    """
    folded = unicodedata.normalize("NFC", word).lower()
    if not any(ch.isalpha() for ch in folded):
        raise DataValidationError(f"cannot count syllables of {word!r}: no letters")

    if Language(language) == Language.PT:
        groups = _count_pt(folded)
    else:
        groups = _count_en(_strip_accents(folded))
    return max(1, groups)


def _count_en(word: str) -> int:
    groups = 0
    previous_vowel = False
    for ch in word:
        is_vowel = ch in EN_VOWELS
        if is_vowel and not previous_vowel:
            groups += 1
        previous_vowel = is_vowel

    letters = [ch for ch in word if ch.isalpha()]
    if len(letters) >= 2 and letters[-1] == "e" and letters[-2] not in EN_VOWELS:
        consonant_le = (
            letters[-2] == "l" and len(letters) >= 3 and letters[-3] not in EN_VOWELS
        )
        if not consonant_le:
            groups -= 1
    return groups


def _count_pt(word: str) -> int:
    groups = 0
    previous_vowel = False
    previous_hiatus = False
    for i, ch in enumerate(word):
        is_vowel = ch in PT_VOWELS
        if (
            ch == "u"
            and i > 0
            and word[i - 1] in "qg"
            and i + 1 < len(word)
            and word[i + 1] in PT_FRONT
        ):
            is_vowel = False

        if is_vowel and (not previous_vowel or ch in PT_HIATUS or previous_hiatus):
            groups += 1

        previous_vowel = is_vowel
        previous_hiatus = is_vowel and ch in PT_HIATUS
    return groups


def _strip_accents(word: str) -> str:
    decomposed = unicodedata.normalize("NFD", word)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def analyze(text: str, language: Language = Language.EN) -> TokenizedText:
    """
    Segment and tokenize a text and compute the counts every complexity
    formula needs (words, sentences, syllables, polysyllables)
    """
    language = Language(language)
    cleaned = strip_boilerplate(text)
    if not cleaned.strip():
        raise DataValidationError("cannot analyze empty text")

    sentences = [tokenize(sentence, language) for sentence in segment_sentences(cleaned, language)]

    words = [token for sentence in sentences for token in sentence if token.kind == TokenKind.WORD]
    return TokenizedText(
        sentences=sentences,
        word_count=len(words),
        sentence_count=len(sentences),
        syllable_total=sum(token.syllables for token in words),
        polysyllable_count=sum(1 for token in words if token.syllables >= 3),
    )
