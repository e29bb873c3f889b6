# lib/classifier.py

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from lib.errors import (
    DataValidationError,
    ModelChecksumError,
    ModelFileError,
    ModelVersionError,
    NumericalError,
)
from lib.features import feature_array
from lib.types import (
    ClassLabel,
    ClassPair,
    EvalReport,
    FeatureMatrix,
    FeatureVector,
    LinearSvmModel,
    Provenance,
    Standardizer,
    SvmHyperparams,
)

logger = logging.getLogger(__name__)

MODEL_VERSION = "1"
BALANCED_BASELINE = 0.5

# ===== STANDARDIZATION =====


def fit_standardizer(matrix: FeatureMatrix) -> Standardizer:
    """Per-feature mean and population standard deviation of the given rows"""
    if not matrix.rows:
        raise DataValidationError("cannot fit a standardizer on zero rows")
    values = _finite_array(matrix)
    constant = [name for name, column in zip(matrix.feature_ids, values.T) if np.ptp(column) == 0]
    if constant:
        raise DataValidationError(f"features constant in the training rows: {constant}")
    return Standardizer(
        feature_ids=list(matrix.feature_ids),
        means=[float(v) for v in values.mean(axis=0)],
        stds=[float(v) for v in values.std(axis=0)],
    )


def apply_standardizer(standardizer: Standardizer, values: np.ndarray) -> np.ndarray:
    """z-scores of a rows x features array laid out in standardizer order"""
    return (values - np.asarray(standardizer.means)) / np.asarray(standardizer.stds)


# ===== OBJECTIVE =====


def objective(params: np.ndarray, X: np.ndarray, y: np.ndarray, svm_lambda: float) -> float:
    """
    lambda/2 * ||w||^2 + mean hinge loss

    `params` is the weight vector with the bias last and X carries a trailing
    constant column; the bias is not regularized.
    """
    weights = params[:-1]
    margins = y * (X @ params)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * svm_lambda * weights @ weights + hinge.mean())


def subgradient(params: np.ndarray, X: np.ndarray, y: np.ndarray, svm_lambda: float) -> np.ndarray:
    """Subgradient of `objective` (hinge points with margin exactly 1 contribute nothing)"""
    margins = y * (X @ params)
    active = margins < 1.0
    data_term = (y[active, None] * X[active]).sum(axis=0) / X.shape[0]
    return svm_lambda * _weights_only(params) - data_term


def best_bias(scores: np.ndarray, y: np.ndarray) -> float:
    """
    Bias minimizing the mean hinge loss for fixed weight scores

    Each hinge term has its kink at b = y_i - score_i and the slope of the
    sum rises by one per kink, from -n_positive; the minimum is therefore
    flat between the n_positive-th and the next kink, and the midpoint is
    returned.
    """
    n_positive = int(np.sum(y > 0))
    if n_positive == 0 or n_positive == y.size:
        raise DataValidationError("bias fit needs rows of both classes")
    kinks = np.sort(y - scores)
    return float(0.5 * (kinks[n_positive - 1] + kinks[n_positive]))


def _weights_only(params: np.ndarray) -> np.ndarray:
    masked = params.copy()
    masked[-1] = 0.0
    return masked


# ===== TRAINING =====


def train(
    matrix: FeatureMatrix,
    task: ClassPair | str,
    hyperparams: SvmHyperparams,
    config_hash: str = "",
    created_at: str = "",
) -> LinearSvmModel:
    """
    Train a linear SVM on the task's two classes

    Stochastic subgradient descent on the weights with step size
    1/(lambda * t), a seeded shuffle per epoch and projection of the weights
    onto the ball of radius 1/sqrt(lambda). The bias is not regularized; it is
    set to its exact hinge-loss minimizer at the end of every epoch. The
    first task class is the +1 label.
    Rows are standardized with parameters fitted on these rows.

    Args:
        matrix: Training rows restricted to the selected features
        task: Class pair, positive class first
        hyperparams: lambda, epochs and seed
        config_hash: Run configuration hash recorded in the provenance
        created_at: Timestamp recorded in the provenance

    Returns:
        Trained model with the objective value after every epoch
    """
    task = ClassPair(task)
    y = _task_labels(matrix, task)
    if not matrix.feature_ids:
        raise DataValidationError("cannot train on an empty feature list")

    counts = matrix.class_counts
    for label in (task.first, task.second):
        if counts.get(label, 0) < 2:
            raise DataValidationError(
                f"training needs at least 2 rows of class {label.value}, got {counts.get(label, 0)}"
            )
    if counts[task.first] != counts[task.second]:
        logger.warning(
            f"[TRAIN] Unbalanced training rows {task.first.value}:{counts[task.first]} "
            f"{task.second.value}:{counts[task.second]}; the 0.5 baseline no longer holds"
        )

    standardizer = fit_standardizer(matrix)
    Z = apply_standardizer(standardizer, feature_array(matrix))
    X = np.hstack([Z, np.ones((Z.shape[0], 1))])
    n_rows = X.shape[0]

    svm_lambda = hyperparams.svm_lambda
    radius = 1.0 / math.sqrt(svm_lambda)
    rng = np.random.default_rng(hyperparams.seed)
    params = np.zeros(X.shape[1])
    loss_history: List[float] = []

    logger.info("=" * 60)
    logger.info(
        f"[TRAIN] {task.value} on {n_rows} rows x {len(matrix.feature_ids)} features "
        f"(lambda={svm_lambda:g}, epochs={hyperparams.epochs}, seed={hyperparams.seed})"
    )

    step = 0
    for epoch in range(1, hyperparams.epochs + 1):
        for i in rng.permutation(n_rows):
            step += 1
            eta = 1.0 / (svm_lambda * step)
            margin = y[i] * (X[i] @ params)
            params[:-1] *= 1.0 - eta * svm_lambda
            if margin < 1.0:
                params[:-1] += eta * y[i] * Z[i]
            norm = np.linalg.norm(params[:-1])
            if norm > radius:
                params[:-1] *= radius / norm
        # the unregularized bias is refit exactly once per epoch
        params[-1] = best_bias(Z @ params[:-1], y)

        loss = objective(params, X, y, svm_lambda)
        if not math.isfinite(loss):
            raise NumericalError(f"training objective became non-finite at epoch {epoch}")
        loss_history.append(loss)
        if epoch == 1 or epoch % 50 == 0 or epoch == hyperparams.epochs:
            logger.debug(f"[TRAIN] epoch {epoch}: objective {loss:.6f}")

    accuracy = float(np.mean(np.where(X @ params >= 0, 1.0, -1.0) == y))
    logger.info(f"[TRAIN] Final objective {loss_history[-1]:.6f}, training accuracy {accuracy:.4f}")
    logger.info("=" * 60)

    return LinearSvmModel(
        task=task,
        feature_ids=list(matrix.feature_ids),
        weights=[float(w) for w in params[:-1]],
        bias=float(params[-1]),
        standardizer=standardizer,
        hyperparams=hyperparams,
        provenance=Provenance(
            corpus_name=matrix.corpus_name, config_hash=config_hash, created_at=created_at
        ),
        loss_history=loss_history,
    )


def _task_labels(matrix: FeatureMatrix, task: ClassPair) -> np.ndarray:
    outside = sorted({row.label.value for row in matrix.rows} - {task.first.value, task.second.value})
    if outside:
        raise DataValidationError(
            f"rows of class {outside} do not belong to task {task.value}"
        )
    return np.array([1.0 if row.label == task.first else -1.0 for row in matrix.rows])


def _finite_array(matrix: FeatureMatrix, names: Optional[List[str]] = None) -> np.ndarray:
    values = feature_array(matrix, names)
    if not np.all(np.isfinite(values)):
        raise DataValidationError(f"{matrix.corpus_name}: non-finite feature values")
    return values


# ===== PREDICTION =====


def decision_values(model: LinearSvmModel, matrix: FeatureMatrix) -> np.ndarray:
    """Raw decision value w . standardize(x) + b per row"""
    absent = [name for name in model.feature_ids if name not in matrix.feature_ids]
    if absent:
        raise DataValidationError(
            f"{matrix.corpus_name} lacks model features {absent}"
        )
    values = _finite_array(matrix, model.feature_ids)
    Z = apply_standardizer(model.standardizer, values)
    return Z @ np.asarray(model.weights) + model.bias


def predict(model: LinearSvmModel, vector: FeatureVector) -> Tuple[ClassLabel, float]:
    """Predicted class and raw margin; a margin of exactly 0 goes to the positive class"""
    missing = [name for name in model.feature_ids if name not in vector.values]
    if missing:
        raise DataValidationError(f"article {vector.article_id}: missing features {missing}")
    x = np.array([vector.values[name] for name in model.feature_ids], dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataValidationError(f"article {vector.article_id}: non-finite feature value")

    z = apply_standardizer(model.standardizer, x)
    margin = float(z @ np.asarray(model.weights) + model.bias)
    label = model.task.first if margin >= 0 else model.task.second
    return label, margin


def evaluate(model: LinearSvmModel, test: FeatureMatrix) -> EvalReport:
    """Accuracy and confusion counts on held-out rows of the task classes"""
    if not test.rows:
        raise DataValidationError("cannot evaluate on an empty test set")
    y = _task_labels(test, model.task)
    predicted = np.where(decision_values(model, test) >= 0, 1.0, -1.0)

    tp = int(np.sum((y > 0) & (predicted > 0)))
    fn = int(np.sum((y > 0) & (predicted < 0)))
    fp = int(np.sum((y < 0) & (predicted > 0)))
    tn = int(np.sum((y < 0) & (predicted < 0)))
    n_test = len(test.rows)
    n_positive = tp + fn

    report = EvalReport(
        task=model.task,
        n_test=n_test,
        accuracy=(tp + tn) / n_test,
        confusion=[[tp, fn], [fp, tn]],
        baseline=BALANCED_BASELINE,
        majority_rate=max(n_positive, n_test - n_positive) / n_test,
        n_features=len(model.feature_ids),
        feature_ids=list(model.feature_ids),
    )
    logger.info(
        f"[EVAL] {model.task.value}: accuracy {report.accuracy:.4f} on {n_test} rows "
        f"(baseline {report.baseline}, majority {report.majority_rate:.4f})"
    )
    return report


# ===== PERSISTENCE =====


def save_model(model: LinearSvmModel, path: str | Path) -> Path:
    """Write the versioned, checksummed JSON model file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    payload = {
        "version": MODEL_VERSION,
        "task": model.task.value,
        "feature_ids": list(model.feature_ids),
        "means": list(model.standardizer.means),
        "stds": list(model.standardizer.stds),
        "weights": list(model.weights),
        "bias": model.bias,
        "lambda": model.hyperparams.svm_lambda,
        "epochs": model.hyperparams.epochs,
        "seed": model.hyperparams.seed,
        "provenance": model.provenance.model_dump(mode="json"),
        "loss_history": list(model.loss_history),
    }
    payload["checksum"] = _checksum(payload)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info(f"[MODEL] Saved {model.task.value} model to {path}")
    return path


def load_model(path: str | Path) -> LinearSvmModel:
    """Read a model file, verifying its version and checksum"""
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"model file not found: {path}")

    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelChecksumError(f"{path}: corrupted model file ({e})") from e
    if not isinstance(payload, dict):
        raise ModelFileError(f"{path}: model file must hold a JSON object")

    version = payload.get("version")
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"{path}: unsupported model version {version!r} (expected {MODEL_VERSION!r})"
        )

    stored = payload.pop("checksum", None)
    if stored is None or stored != _checksum(payload):
        raise ModelChecksumError(f"{path}: checksum mismatch")

    try:
        feature_ids = payload["feature_ids"]
        model = LinearSvmModel(
            task=payload["task"],
            feature_ids=feature_ids,
            weights=payload["weights"],
            bias=payload["bias"],
            standardizer=Standardizer(
                feature_ids=feature_ids, means=payload["means"], stds=payload["stds"]
            ),
            hyperparams=SvmHyperparams(
                svm_lambda=payload["lambda"], epochs=payload["epochs"], seed=payload["seed"]
            ),
            provenance=Provenance(**payload["provenance"]),
            loss_history=payload.get("loss_history", []),
        )
    except (KeyError, TypeError, ValidationError) as e:
        raise ModelFileError(f"{path}: invalid model content ({e})") from e

    logger.info(f"[MODEL] Loaded {model.task.value} model ({len(model.feature_ids)} features) from {path}")
    return model


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
