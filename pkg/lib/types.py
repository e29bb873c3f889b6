from collections import Counter
from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# ===== CORPUS TYPES =====


class ClassLabel(str, Enum):
    """Source type of a news article"""

    RELIABLE = "R"
    UNRELIABLE = "U"
    SATIRE = "S"

    @property
    def full_name(self) -> str:
        return {"R": "Reliable", "U": "Unreliable", "S": "Satire"}[self.value]


class Language(str, Enum):
    """Supported article languages"""

    EN = "en"
    PT = "pt"


class Article(BaseModel):
    """One labeled news item"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    source: str
    language: Language
    label: ClassLabel
    title: str
    body: str

    @field_validator("id")
    @classmethod
    def _id_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("empty id")
        return value

    @field_validator("title", "body")
    @classmethod
    def _text_not_blank(cls, value: str, info) -> str:
        if not value.strip():
            raise ValueError(f"empty {info.field_name}")
        return value


class Corpus(BaseModel):
    """
    Ordered collection of articles, kept in ingestion order

    Ids are unique in a loaded corpus; an upsampled training view repeats
    minority articles under their original ids.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    articles: List[Article] = Field(default_factory=list)

    @property
    def class_counts(self) -> Dict[ClassLabel, int]:
        counts = Counter(article.label for article in self.articles)
        return {label: counts[label] for label in ClassLabel if counts[label]}


# ===== TEXT TYPES =====


class TokenKind(str, Enum):
    WORD = "word"
    NUMBER = "number"
    PUNCT = "punct"


class Token(BaseModel):
    """Single token produced by the tokenizer"""

    model_config = ConfigDict(frozen=True)

    surface: str
    kind: TokenKind
    letter_count: int = 0
    is_all_caps: bool = False
    syllables: int = 0  # words only


class TokenizedText(BaseModel):
    """Sentences of tokens plus the aggregates the complexity formulas need"""

    model_config = ConfigDict(frozen=True)

    sentences: List[List[Token]]
    word_count: int
    sentence_count: int
    syllable_total: int
    polysyllable_count: int  # words with >= 3 syllables

    @property
    def tokens(self) -> List[Token]:
        return [token for sentence in self.sentences for token in sentence]

    @property
    def words(self) -> List[Token]:
        return [token for token in self.tokens if token.kind == TokenKind.WORD]


# ===== LEXICON TYPES =====


class Lexicon(BaseModel):
    """
    Word-category dictionary in the LIWC style

    Patterns are stored case-folded and NFC-normalized. Exact patterns and
    prefix stems (a trailing `*` in the source file) live in separate maps;
    both map to indices into `categories`.
    """

    model_config = ConfigDict(frozen=True)

    language: Language
    categories: List[str]
    exact: Dict[str, List[int]] = Field(default_factory=dict)
    prefixes: Dict[str, List[int]] = Field(default_factory=dict)
    source_path: Optional[str] = None

    @model_validator(mode="after")
    def _check_references(self) -> "Lexicon":
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("category names must be unique")
        for table in (self.exact, self.prefixes):
            for pattern, indices in table.items():
                for index in indices:
                    if not 0 <= index < len(self.categories):
                        raise ValueError(
                            f"pattern {pattern!r} references unknown category {index}"
                        )
        return self


class CategoryHit(BaseModel):
    """Categories matched by one word"""

    word: str
    categories: List[str] = Field(default_factory=list)


# ===== FEATURE TYPES =====


class Scope(str, Enum):
    TITLE = "TTL"
    BODY = "TXT"


class Category(str, Enum):
    COMPLEXITY = "complexity"
    STYLISTIC = "stylistic"
    LINGUISTIC = "linguistic"
    PSYCHOLOGICAL = "psychological"


class FeatureId(BaseModel):
    """Registry key of one feature; serialized as `<scope>_<abbr>`"""

    model_config = ConfigDict(frozen=True)

    scope: Scope
    abbr: str
    category: Category

    @property
    def name(self) -> str:
        return f"{self.scope.value}_{self.abbr}"


class FeatureVector(BaseModel):
    """All registry features of one article, keyed by feature name"""

    article_id: str
    label: ClassLabel
    values: Dict[str, float]


class FeatureMatrix(BaseModel):
    """Feature vectors of a corpus, rows in corpus order"""

    corpus_name: str
    feature_ids: List[str]
    rows: List[FeatureVector] = Field(default_factory=list)

    @model_validator(mode="after")
    def _rows_share_features(self) -> "FeatureMatrix":
        expected = set(self.feature_ids)
        for row in self.rows:
            if set(row.values) != expected:
                raise ValueError(
                    f"row {row.article_id!r} does not carry the matrix feature set"
                )
        return self

    @property
    def class_counts(self) -> Dict[ClassLabel, int]:
        counts = Counter(row.label for row in self.rows)
        return {label: counts[label] for label in ClassLabel if counts[label]}


# ===== STATISTICS TYPES =====


class ClassPair(str, Enum):
    """Canonical class pairs; effect sizes are always first minus second"""

    RU = "R-U"
    RS = "R-S"
    US = "U-S"

    @property
    def first(self) -> ClassLabel:
        return ClassLabel(self.value[0])

    @property
    def second(self) -> ClassLabel:
        return ClassLabel(self.value[2])

    @property
    def description(self) -> str:
        # printed second-vs-first, the way agreement panels name the pairs
        return f"{self.second.full_name} vs {self.first.full_name}"

    @classmethod
    def parse(cls, text: str) -> "ClassPair":
        letters = "".join(ch for ch in text.upper() if ch in "RUS")
        for pair in cls:
            if letters == pair.value.replace("-", ""):
                return pair
        raise ValueError(
            f"unknown class pair {text!r} (expected one of R-U, R-S, U-S)"
        )


class Relation(str, Enum):
    FIRST_GREATER = "first_greater"
    SECOND_GREATER = "second_greater"
    EQUAL = "equal"

    def mirrored(self) -> "Relation":
        if self == Relation.FIRST_GREATER:
            return Relation.SECOND_GREATER
        if self == Relation.SECOND_GREATER:
            return Relation.FIRST_GREATER
        return Relation.EQUAL


TiePolicy = Literal["disagree", "skip"]


class AnalysisConfig(BaseModel):
    """Thresholds for significance, selection and ordering"""

    model_config = ConfigDict(frozen=True)

    p_threshold: float = 0.05
    d_select_threshold: float = 0.5
    d_equality_threshold: float = 0.2
    mixed_tie_policy: TiePolicy = "disagree"

    @model_validator(mode="after")
    def _check_thresholds(self) -> "AnalysisConfig":
        if not 0 < self.p_threshold < 1:
            raise ValueError("p_threshold must lie in (0, 1)")
        if self.d_equality_threshold < 0:
            raise ValueError("d_equality_threshold must be >= 0")
        if not self.d_equality_threshold < self.d_select_threshold:
            raise ValueError("d_equality_threshold must be below d_select_threshold")
        return self


class AnovaResult(BaseModel):
    f_stat: float
    p_value: float
    degenerate: bool = False  # zero within-group variance with separated means


class NormalityDiagnostic(BaseModel):
    skewness: float
    excess_kurtosis: float
    flag: Literal["pass", "warn"]


class PairwiseStat(BaseModel):
    """Test statistics of one feature over one class pair"""

    feature: str
    pair: ClassPair
    n_first: int
    n_second: int
    mean_first: float
    mean_second: float
    f_stat: float = Field(ge=0)
    p_value: float = Field(ge=0, le=1)
    cohens_d: float
    magnitude: Literal["negligible", "small", "medium", "large"]
    relation: Relation


class OrderingTable(BaseModel):
    """
    Pairwise class orderings per feature

    Entries may be given either as a relation map keyed by class pair or as
    chain notation such as "U > R > S".
    """

    dataset_name: str
    entries: Dict[str, Dict[ClassPair, Relation]] = Field(default_factory=dict)

    @field_validator("entries", mode="before")
    @classmethod
    def _accept_chain_notation(cls, value):
        if not isinstance(value, dict):
            return value
        from lib.stats import parse_ordering

        return {
            feature: parse_ordering(relations) if isinstance(relations, str) else relations
            for feature, relations in value.items()
        }


class AnalysisResult(BaseModel):
    """Everything analyze_dataset derives from one feature matrix"""

    stats: List[PairwiseStat] = Field(default_factory=list)
    ordering: OrderingTable
    selected: Dict[ClassPair, List[str]] = Field(default_factory=dict)
    excluded: Dict[str, str] = Field(default_factory=dict)
    diagnostics: Dict[str, Dict[ClassLabel, NormalityDiagnostic]] = Field(
        default_factory=dict
    )
    warnings: List[str] = Field(default_factory=list)


class AgreementReport(BaseModel):
    """Cross-dataset ordering agreement (+1 agree / -1 disagree, normalized)"""

    overall: Optional[float] = None  # None when nothing was compared
    per_pair: Dict[ClassPair, float] = Field(default_factory=dict)
    per_category: Dict[Category, float] = Field(default_factory=dict)
    per_category_pair: Dict[Category, Dict[ClassPair, float]] = Field(
        default_factory=dict
    )
    compared_features: List[str] = Field(default_factory=list)
    agreements: int = 0
    disagreements: int = 0
    skipped: int = 0


# ===== CLASSIFIER TYPES =====


class SvmHyperparams(BaseModel):
    model_config = ConfigDict(frozen=True)

    svm_lambda: float = Field(1e-4, gt=0)
    epochs: int = Field(200, ge=1)
    seed: int


class Standardizer(BaseModel):
    """Per-feature z-score parameters fitted on training rows"""

    feature_ids: List[str]
    means: List[float]
    stds: List[float]

    @model_validator(mode="after")
    def _check_shapes(self) -> "Standardizer":
        if not len(self.feature_ids) == len(self.means) == len(self.stds):
            raise ValueError("standardizer lengths differ")
        for name, std in zip(self.feature_ids, self.stds):
            if not std > 0:
                raise ValueError(f"standard deviation of {name} must be > 0")
        return self


class Provenance(BaseModel):
    corpus_name: str
    config_hash: str
    created_at: str


class LinearSvmModel(BaseModel):
    """Trained linear SVM; decision value is w . standardize(x) + bias"""

    task: ClassPair  # first class is the positive (+1) label
    feature_ids: List[str]
    weights: List[float]
    bias: float
    standardizer: Standardizer
    hyperparams: SvmHyperparams
    provenance: Provenance
    loss_history: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_shapes(self) -> "LinearSvmModel":
        if len(self.weights) != len(self.feature_ids):
            raise ValueError("weights length differs from feature_ids length")
        if self.standardizer.feature_ids != self.feature_ids:
            raise ValueError("standardizer features differ from model features")
        return self


class EvalReport(BaseModel):
    """Test-set scores of one binary task"""

    task: ClassPair
    n_test: int
    accuracy: float = Field(ge=0, le=1)
    confusion: List[List[int]]  # rows actual (pos, neg), columns predicted (pos, neg)
    baseline: float = 0.5
    majority_rate: float
    n_features: int
    feature_ids: List[str] = Field(default_factory=list)
