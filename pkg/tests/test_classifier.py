import json
import logging

import numpy as np
import pytest

from lib.classifier import (
    apply_standardizer,
    best_bias,
    decision_values,
    evaluate,
    fit_standardizer,
    load_model,
    objective,
    predict,
    save_model,
    subgradient,
    train,
)
from lib.errors import DataValidationError, ModelChecksumError, ModelFileError, ModelVersionError
from lib.features import feature_array, restrict_matrix, split_matrix, upsample_matrix
from lib.stats import analyze_dataset
from lib.types import (
    ClassLabel,
    ClassPair,
    FeatureMatrix,
    FeatureVector,
    LinearSvmModel,
    Provenance,
    Standardizer,
    SvmHyperparams,
)

from tests.conftest import synthetic_matrix

logger = logging.getLogger(__name__)

R, U, S = ClassLabel.RELIABLE, ClassLabel.UNRELIABLE, ClassLabel.SATIRE
FEATURES = ["TXT_GI", "TXT_WC"]


def _blobs(n=100, spread=0.5, seed=0):
    """Two well separated clusters around (2, 2) for R and (-2, -2) for U"""
    rng = np.random.default_rng(seed)
    rows = []
    for label, center in ((R, 2.0), (U, -2.0)):
        points = rng.normal(center, spread, size=(n, 2))
        for i, (gi, wc) in enumerate(points):
            rows.append(
                FeatureVector(
                    article_id=f"{label.value}{i}",
                    label=label,
                    values={"TXT_GI": float(gi), "TXT_WC": float(wc)},
                )
            )
    return FeatureMatrix(corpus_name="blobs", feature_ids=list(FEATURES), rows=rows)


def _fixed_model(weights, bias, means=(0.0, 0.0), stds=(1.0, 1.0)):
    return LinearSvmModel(
        task=ClassPair.RU,
        feature_ids=list(FEATURES),
        weights=list(weights),
        bias=bias,
        standardizer=Standardizer(feature_ids=list(FEATURES), means=list(means), stds=list(stds)),
        hyperparams=SvmHyperparams(seed=0),
        provenance=Provenance(corpus_name="fixed", config_hash="", created_at=""),
    )


# ===== STANDARDIZATION =====


def test_fit_standardizer_uses_population_std():
    rows = [
        FeatureVector(article_id=f"a{i}", label=R, values={"TXT_GI": gi, "TXT_WC": wc})
        for i, (gi, wc) in enumerate([(1.0, 10.0), (3.0, 10.0), (5.0, 40.0)])
    ]
    matrix = FeatureMatrix(corpus_name="m", feature_ids=list(FEATURES), rows=rows)
    standardizer = fit_standardizer(matrix)

    assert standardizer.means == pytest.approx([3.0, 20.0])
    assert standardizer.stds == pytest.approx([np.sqrt(8 / 3), np.sqrt(200)])
    z = apply_standardizer(standardizer, feature_array(matrix))
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0)


def test_fit_standardizer_rejects_constant_feature():
    matrix = synthetic_matrix({R: 5, U: 5}, features=FEATURES, constant=["TXT_WC"])
    with pytest.raises(DataValidationError, match="TXT_WC"):
        fit_standardizer(matrix)


# ===== OBJECTIVE =====


def test_subgradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    X = np.hstack([rng.normal(size=(30, 4)), np.ones((30, 1))])
    y = np.where(rng.random(30) < 0.5, 1.0, -1.0)
    h = 1e-6
    for _ in range(20):
        params = rng.normal(scale=0.5, size=5)
        numeric = np.array([
            (objective(params + h * e, X, y, 0.1) - objective(params - h * e, X, y, 0.1)) / (2 * h)
            for e in np.eye(5)
        ])
        np.testing.assert_allclose(subgradient(params, X, y, 0.1), numeric, atol=1e-5)


def test_objective_at_zero_is_one():
    X = np.ones((4, 3))
    y = np.array([1.0, -1.0, 1.0, -1.0])
    assert objective(np.zeros(3), X, y, 0.5) == 1.0


def test_bias_is_not_regularized():
    X = np.array([[1.0, 1.0], [-1.0, 1.0]])
    y = np.array([1.0, -1.0])
    params = np.array([2.0, 5.0])
    # 0.05 * 2^2 + mean(hinge(7), hinge(-3)) = 0.2 + (0 + 4) / 2
    assert objective(params, X, y, 0.1) == pytest.approx(2.2)
    assert subgradient(params, X, y, 0.1) == pytest.approx([0.2 - 0.5, 0.5])


def test_best_bias_minimizes_hinge_loss():
    rng = np.random.default_rng(5)
    grid = np.linspace(-6.0, 6.0, 4801)
    for _ in range(50):
        y = np.where(rng.random(40) < 0.5, 1.0, -1.0)
        y[:2] = [1.0, -1.0]
        scores = rng.normal(scale=2.0, size=40)
        b = best_bias(scores, y)

        def loss(bias):
            return np.maximum(0.0, 1.0 - y * (scores + bias)).mean()

        assert loss(b) <= min(loss(g) for g in grid) + 1e-12

    assert best_bias(np.array([2.0, 0.5, -0.5, -3.0]), np.array([1.0, 1.0, -1.0, -1.0])) == 0.0
    with pytest.raises(DataValidationError, match="both classes"):
        best_bias(np.zeros(3), np.ones(3))


# ===== TRAINING =====


def test_train_separates_blobs():
    matrix = _blobs()
    model = train(matrix, ClassPair.RU, SvmHyperparams(svm_lambda=1e-3, epochs=20, seed=3))
    margins = decision_values(model, matrix)
    labels = np.array([1 if row.label == R else -1 for row in matrix.rows])
    accuracy = float(np.mean(np.where(margins >= 0, 1, -1) == labels))
    logger.info(f"weights={model.weights} bias={model.bias:.4f} accuracy={accuracy:.4f}")

    assert accuracy >= 0.99
    assert all(w > 0 for w in model.weights)
    assert len(model.loss_history) == 20
    assert np.linalg.norm(model.weights) <= 1 / np.sqrt(1e-3) + 1e-9


def test_training_is_deterministic(tmp_path):
    matrix = synthetic_matrix({R: 60, U: 60}, planted=["TXT_GI"], features=FEATURES, seed=9)
    params = SvmHyperparams(svm_lambda=1e-2, epochs=10, seed=5)
    first = save_model(train(matrix, "R-U", params, created_at="2024-01-01T00:00:00+00:00"), tmp_path / "a.json")
    second = save_model(train(matrix, "R-U", params, created_at="2024-01-01T00:00:00+00:00"), tmp_path / "b.json")
    other = save_model(train(matrix, "R-U", params.model_copy(update={"seed": 6})), tmp_path / "c.json")

    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text())["weights"] != json.loads(other.read_text())["weights"]


def test_loss_history_trends_down():
    matrix = synthetic_matrix({R: 150, U: 150}, planted=FEATURES, features=FEATURES, seed=2)
    model = train(matrix, ClassPair.RU, SvmHyperparams(svm_lambda=1e-2, epochs=40, seed=0))
    history = model.loss_history
    logger.info(f"objective first={history[0]:.4f} last={history[-1]:.4f}")
    assert all(np.isfinite(history))
    assert np.mean(history[-10:]) <= np.mean(history[:10])


def test_final_epochs_do_not_increase_loss():
    matrix = synthetic_matrix({R: 100, U: 100}, planted=FEATURES, features=FEATURES, seed=8)
    model = train(matrix, ClassPair.RU, SvmHyperparams(svm_lambda=0.1, epochs=80, seed=1))
    history = model.loss_history
    mean_change = (history[-1] - history[-11]) / 10
    logger.info(f"mean objective change over the final 10 epochs: {mean_change:.3e}")
    assert mean_change <= 1e-6


def test_train_input_checks():
    params = SvmHyperparams(epochs=2, seed=0)
    with_satire = synthetic_matrix({R: 5, U: 5, S: 5}, features=FEATURES)
    with pytest.raises(DataValidationError, match="do not belong to task R-U"):
        train(with_satire, ClassPair.RU, params)

    single = synthetic_matrix({R: 5, U: 1}, features=FEATURES)
    with pytest.raises(DataValidationError, match="at least 2 rows of class U"):
        train(single, ClassPair.RU, params)

    empty = FeatureMatrix(
        corpus_name="e",
        feature_ids=[],
        rows=[FeatureVector(article_id=f"x{i}", label=label, values={}) for i, label in enumerate([R, R, U, U])],
    )
    with pytest.raises(DataValidationError, match="empty feature list"):
        train(empty, ClassPair.RU, params)


def test_unbalanced_training_warns(caplog):
    matrix = synthetic_matrix({R: 10, U: 4}, features=FEATURES)
    with caplog.at_level(logging.WARNING):
        train(matrix, ClassPair.RU, SvmHyperparams(epochs=2, seed=0))
    assert "Unbalanced training rows" in caplog.text


# ===== PREDICTION =====


def test_predict_margin_and_tie():
    model = _fixed_model(weights=[1.0, -2.0], bias=0.5, means=[1.0, 0.0], stds=[2.0, 1.0])
    vector = FeatureVector(article_id="a", label=R, values={"TXT_GI": 5.0, "TXT_WC": 1.0})
    label, margin = predict(model, vector)
    # z = (2, 1) so margin = 2 - 2 + 0.5
    assert margin == pytest.approx(0.5)
    assert label == R

    zero = _fixed_model(weights=[0.0, 0.0], bias=0.0)
    assert predict(zero, vector) == (R, 0.0)


def test_predict_negative_margin():
    model = _fixed_model(weights=[1.0, 0.0], bias=0.0)
    vector = FeatureVector(article_id="b", label=U, values={"TXT_GI": -3.0, "TXT_WC": 5.0})
    assert predict(model, vector) == (U, pytest.approx(-3.0))


def test_predict_ignores_value_order_and_checks_features():
    model = _fixed_model(weights=[1.0, 1.0], bias=-1.0)
    forward = FeatureVector(article_id="a", label=U, values={"TXT_GI": -1.0, "TXT_WC": 0.5})
    backward = FeatureVector(article_id="a", label=U, values={"TXT_WC": 0.5, "TXT_GI": -1.0})
    assert predict(model, forward) == predict(model, backward) == (U, pytest.approx(-1.5))

    partial = FeatureVector(article_id="p", label=U, values={"TXT_GI": 1.0})
    with pytest.raises(DataValidationError, match="missing features"):
        predict(model, partial)


def test_decision_values_follow_model_feature_order():
    matrix = _blobs(n=10)
    model = train(matrix, ClassPair.RU, SvmHyperparams(svm_lambda=1e-2, epochs=5, seed=1))
    reordered = restrict_matrix(matrix, list(reversed(FEATURES)))
    np.testing.assert_allclose(decision_values(model, reordered), decision_values(model, matrix))

    with pytest.raises(DataValidationError, match="lacks model features"):
        decision_values(model, restrict_matrix(matrix, ["TXT_GI"]))


# ===== EVALUATION =====


def test_constant_model_scores_balanced_baseline():
    test = synthetic_matrix({R: 25, U: 25}, features=FEATURES)
    report = evaluate(_fixed_model(weights=[0.0, 0.0], bias=0.0), test)
    assert report.accuracy == 0.5
    assert report.confusion == [[25, 0], [25, 0]]
    assert report.baseline == 0.5
    assert report.majority_rate == 0.5
    assert report.n_test == 50


def test_evaluate_rejects_empty_test_set():
    empty = FeatureMatrix(corpus_name="e", feature_ids=list(FEATURES), rows=[])
    with pytest.raises(DataValidationError, match="empty test set"):
        evaluate(_fixed_model(weights=[1.0, 0.0], bias=0.0), empty)


# ===== PERSISTENCE =====


def test_model_file_round_trip(tmp_path):
    model = train(_blobs(n=20), ClassPair.RU, SvmHyperparams(svm_lambda=1e-2, epochs=5, seed=4), config_hash="abc")
    path = save_model(model, tmp_path / "model.json")
    payload = json.loads(path.read_text(encoding="utf-8"))

    assert payload["version"] == "1"
    assert payload["task"] == "R-U"
    assert len(payload["checksum"]) == 64
    assert load_model(path) == model


def test_load_model_rejects_damaged_files(tmp_path):
    model = train(_blobs(n=20), ClassPair.RU, SvmHyperparams(svm_lambda=1e-2, epochs=3, seed=4))
    path = save_model(model, tmp_path / "model.json")
    text = path.read_text(encoding="utf-8")

    truncated = tmp_path / "truncated.json"
    truncated.write_text(text[: len(text) // 2], encoding="utf-8")
    with pytest.raises(ModelChecksumError):
        load_model(truncated)

    payload = json.loads(text)
    payload["weights"][0] += 1.0
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ModelChecksumError, match="checksum mismatch"):
        load_model(tampered)

    payload = json.loads(text)
    payload["version"] = "2"
    future = tmp_path / "future.json"
    future.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ModelVersionError, match="unsupported model version '2'"):
        load_model(future)

    with pytest.raises(ModelFileError, match="not found"):
        load_model(tmp_path / "missing.json")


# ===== END TO END =====


def test_planted_signal_pipeline():
    planted = [
        "TTL_GI", "TTL_Comma", "TTL_Funct", "TTL_Posemo", "TXT_GI",
        "TXT_WC", "TXT_Comma", "TXT_Verb", "TXT_Negemo", "TXT_Feel",
    ]
    matrix = synthetic_matrix({R: 1000, U: 1000}, planted=planted, shift=1.0, seed=2024)

    train_rows, test_rows = split_matrix(matrix, 0.2, seed=2024)
    analysis = analyze_dataset(train_rows)
    selected = analysis.selected[ClassPair.RU]
    spurious = [feature for feature in selected if feature not in planted]
    logger.info(f"selected {len(selected)} features, spurious {spurious}")

    assert len(set(selected) & set(planted)) >= 8
    assert len(spurious) <= 5

    balanced = upsample_matrix(train_rows, (R, U), seed=2024)
    model = train(
        restrict_matrix(balanced, selected), ClassPair.RU, SvmHyperparams(epochs=25, seed=2024)
    )
    report = evaluate(model, restrict_matrix(test_rows, selected))
    logger.info(f"accuracy={report.accuracy:.4f} confusion={report.confusion}")

    assert report.n_test == 400
    assert report.accuracy >= 0.9
