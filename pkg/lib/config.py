# lib/config.py

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from lib.errors import DataValidationError
from lib.types import AnalysisConfig, SvmHyperparams, TiePolicy

logger = logging.getLogger(__name__)

ReportFormat = Literal["json", "table", "both"]


class RunConfig(BaseModel):
    """
    Settings of one pipeline run

    Loaded from a flat KEY=value file (keys are the upper-cased field names)
    and then overridden by command-line flags.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    out_dir: str = "out"
    lexicon_en: Optional[str] = None
    lexicon_pt: Optional[str] = None
    seed: Optional[int] = None
    test_fraction: float = Field(0.2, gt=0, lt=1)
    p_threshold: float = 0.05
    d_select_threshold: float = 0.5
    d_equality_threshold: float = 0.2
    mixed_tie_policy: TiePolicy = "disagree"
    svm_lambda: float = Field(1e-4, gt=0)
    epochs: int = Field(200, ge=1)
    max_features: Optional[int] = Field(None, ge=1)
    report_format: ReportFormat = "both"
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_thresholds(self) -> "RunConfig":
        if not 0 < self.p_threshold < 1:
            raise ValueError("p_threshold must lie in (0, 1)")
        if not 0 <= self.d_equality_threshold < self.d_select_threshold:
            raise ValueError("need 0 <= d_equality_threshold < d_select_threshold")
        return self

    def analysis(self) -> AnalysisConfig:
        return AnalysisConfig(
            p_threshold=self.p_threshold,
            d_select_threshold=self.d_select_threshold,
            d_equality_threshold=self.d_equality_threshold,
            mixed_tie_policy=self.mixed_tie_policy,
        )

    def hyperparams(self) -> SvmHyperparams:
        return SvmHyperparams(
            svm_lambda=self.svm_lambda, epochs=self.epochs, seed=self.require_seed()
        )

    def require_seed(self) -> int:
        if self.seed is None:
            raise DataValidationError("a seed is required for this command (--seed or SEED=)")
        return self.seed

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def read_config_file(path: str | Path) -> Dict[str, str]:
    """Parse a KEY=value config file into RunConfig field names"""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"config file not found: {path}")

    raw = dotenv_values(path, encoding="utf-8")
    fields = set(RunConfig.model_fields)
    values: Dict[str, str] = {}
    unknown = []
    for key, value in raw.items():
        name = key.strip().lower()
        if name not in fields:
            unknown.append(key)
            continue
        if value is None or value == "":
            continue
        values[name] = value
    if unknown:
        raise DataValidationError(f"{path}: unknown config key(s) {sorted(unknown)}")

    logger.debug(f"[CONFIG] {path}: {sorted(values)}")
    return values


def load_run_config(
    path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Build the run configuration: defaults < config file < overrides

    Overrides whose value is None are ignored so unset CLI flags never mask
    file values.
    """
    merged: Dict[str, Any] = {}
    if path is not None:
        merged.update(read_config_file(path))
    if overrides:
        merged.update({key: value for key, value in overrides.items() if value is not None})

    try:
        config = RunConfig(**merged)
    except ValidationError as e:
        reasons = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'config'}: "
            f"{err['msg'].removeprefix('Value error, ')}"
            for err in e.errors()
        )
        raise DataValidationError(f"invalid configuration: {reasons}") from e

    logger.info(f"[CONFIG] config hash {config.config_hash[:12]}")
    return config
