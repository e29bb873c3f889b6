import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pytest

from lib.features import FEATURE_NAMES
from lib.types import ClassLabel, FeatureMatrix, FeatureVector, OrderingTable

logging.basicConfig(level=logging.INFO)

FIXTURES = Path(__file__).parent / "fixtures"
LEXICON_DIR = Path(__file__).parent.parent / "data" / "lexicons"


def article_record(
    article_id: str,
    label: str = "R",
    title: str = "Council approves the budget",
    body: str = "The council approved the budget. Officials were pleased.",
    language: str = "en",
    source: str = "Test Source",
) -> dict:
    return {
        "id": article_id,
        "source": source,
        "language": language,
        "label": label,
        "title": title,
        "body": body,
    }


def write_jsonl(path: Path, records: Iterable[dict]) -> Path:
    path.write_text(
        "".join(json.dumps(record, ensure_ascii=False) + "\n" for record in records),
        encoding="utf-8",
    )
    return path


def synthetic_matrix(
    counts: Dict[ClassLabel, int],
    planted: Sequence[str] = (),
    shift: float = 1.0,
    shifted_class: ClassLabel = ClassLabel.RELIABLE,
    features: Optional[List[str]] = None,
    constant: Sequence[str] = (),
    seed: int = 0,
    name: str = "synthetic",
) -> FeatureMatrix:
    """
    Unit-variance Gaussian features; planted features are shifted by `shift`
    in `shifted_class`, constant features are 1.0 everywhere
    """
    rng = np.random.default_rng(seed)
    features = list(features or FEATURE_NAMES)
    rows = []
    for label, n in counts.items():
        noise = rng.standard_normal((n, len(features)))
        for i in range(n):
            values = {}
            for j, feature in enumerate(features):
                value = float(noise[i, j])
                if feature in constant:
                    value = 1.0
                elif feature in planted and label == shifted_class:
                    value += shift
                values[feature] = value
            rows.append(
                FeatureVector(article_id=f"{label.value}{i:05d}", label=label, values=values)
            )
    return FeatureMatrix(corpus_name=name, feature_ids=features, rows=rows)


def load_ordering(name: str) -> OrderingTable:
    return OrderingTable.model_validate_json((FIXTURES / name).read_text(encoding="utf-8"))


@pytest.fixture
def tiny_lexicon_path() -> Path:
    return FIXTURES / "tiny.dic"


@pytest.fixture
def small_corpus_path() -> Path:
    return FIXTURES / "small_corpus.jsonl"


@pytest.fixture
def no_log_files(monkeypatch):
    monkeypatch.setenv("NEWSSTYLE_LOG_DIR", "")
