import csv
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecan.config import HyperParams, ModelSpec
from ecan.data import Corpus, ShiftSpec, generate_pair
from ecan.errors import ConfigError, NumericError, UsageError
from ecan.evaluate import (cluster_quality, confusion_matrix, evaluate, principal_directions,
                           project_2d, project_features, report_from_predictions, uar,
                           write_projection)
from ecan.model import EcanModel
from ecan.trainer import pretrain


def counting_uar(y_true, y_pred, c):
    recalls = []
    for cls in range(c):
        total = sum(1 for t in y_true if t == cls)
        if total:
            recalls.append(sum(1 for t, p in zip(y_true, y_pred) if t == p == cls) / total)
    return sum(recalls) / len(recalls)


def test_perfect_classifier():
    assert uar([0, 1, 2, 1], [0, 1, 2, 1], 3) == 1.0


def test_recalls_one_and_half():
    assert uar([0, 0, 1, 1], [0, 0, 1, 0], 2) == 0.75


def test_zero_support_class_is_excluded():
    report = report_from_predictions([0, 0, 1], [0, 2, 1], 3)
    assert report.per_class_recall == [0.5, 1.0, None]
    assert report.uar == 0.75


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(2, 5))
def test_matches_counting_oracle(seed, n, c):
    r = np.random.default_rng(seed)
    y_true, y_pred = r.integers(0, c, n).tolist(), r.integers(0, c, n).tolist()
    report = report_from_predictions(y_true, y_pred, c)
    assert abs(report.uar - counting_uar(y_true, y_pred, c)) <= 1e-12
    recalls = [x for x in report.per_class_recall if x is not None]
    assert abs(report.uar - sum(recalls) / len(recalls)) <= 1e-12
    cm = np.array(report.confusion)
    assert cm.sum() == n
    assert cm.sum(axis=1).tolist() == np.bincount(y_true, minlength=c).tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(4)))
def test_uar_invariant_under_consistent_relabeling(seed, perm):
    r = np.random.default_rng(seed)
    y_true, y_pred = r.integers(0, 4, 30), r.integers(0, 4, 30)
    p = np.array(perm)
    assert uar(p[y_true], p[y_pred], 4) == pytest.approx(uar(y_true, y_pred, 4), abs=1e-12)


def test_confusion_layout():
    cm = confusion_matrix([0, 1, 1], [1, 1, 0], 2)
    assert cm.tolist() == [[0, 1], [1, 1]]


def test_argmax_tie_goes_to_lowest_class():
    spec = ModelSpec(2, (3,), 2, 3)
    model = EcanModel.init(spec, seed=0)
    model.classifier[0].data[:] = 0.0
    report = evaluate(model, Corpus([[1.0, 2.0], [3.0, 1.0]], [0, 1], 3))
    assert report.confusion == [[1, 0, 0], [1, 0, 0], [0, 0, 0]]


def test_undefined_cluster_quality_is_reported_as_none(small_model):
    report = evaluate(small_model, Corpus(np.ones((3, 8)), [0, 0, 0], 3))
    assert report.cluster_quality is None and report.uar in (0.0, 1.0)


def test_unlabeled_corpus_is_usage_error(small_model):
    with pytest.raises(UsageError):
        evaluate(small_model, Corpus(np.ones((3, 8)), None, 3))


def test_class_count_mismatch(small_model):
    with pytest.raises(ConfigError):
        evaluate(small_model, Corpus(np.ones((3, 8)), [0, 1, 0], 2))


def test_report_json(tmp_path, small_model, rng):
    report = evaluate(small_model, Corpus(rng.normal(size=(9, 8)), rng.integers(0, 3, 9), 3))
    report.write(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert set(doc) == {"uar", "accuracy", "per_class_recall", "confusion", "cluster_quality"}
    assert doc["uar"] == report.uar


# -- cluster quality -----------------------------------------------------------


def naive_cluster_quality(features, labels):
    def cos(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    intra, inter = [], []
    for i, j in itertools.permutations(range(len(labels)), 2):
        (intra if labels[i] == labels[j] else inter).append(cos(features[i], features[j]))
    return np.mean(intra) - np.mean(inter)


def test_cluster_quality_matches_pairwise_loop(rng):
    f, y = rng.normal(size=(12, 4)), rng.integers(0, 3, 12)
    assert cluster_quality(f, y) == pytest.approx(naive_cluster_quality(f, y), abs=1e-12)


def test_cluster_quality_extremes():
    f = np.array([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0], [-3.0, 0.0]])
    assert cluster_quality(f, [0, 0, 1, 1]) == pytest.approx(2.0)


# -- projection ---------------------------------------------------------------


def pairwise(x):
    return np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)


def test_2d_centered_input_is_rigidly_moved(rng):
    x = rng.normal(size=(30, 2)) * [3.0, 1.0]
    x -= x.mean(axis=0)
    table = project_features(x, np.zeros(30))
    assert np.abs(pairwise(table[:, :2]) - pairwise(x)).max() <= 1e-6


def test_duplicated_sample_gives_duplicated_row(rng):
    x = rng.normal(size=(10, 5))
    x[7] = x[2]
    table = project_features(x, np.arange(10) % 2)
    assert np.array_equal(table[7, :2], table[2, :2])


def test_directions_are_orthonormal_with_sign_fixed(rng):
    directions, _ = principal_directions(rng.normal(size=(50, 6)) * np.arange(1, 7))
    np.testing.assert_allclose(directions @ directions.T, np.eye(2), atol=1e-9)
    for v in directions:
        assert v[np.flatnonzero(np.abs(v) > 1e-12)[0]] > 0


def test_pca_beats_any_two_axes():
    source, target = generate_pair(ShiftSpec(seed=0))
    model = pretrain(source, ModelSpec(16, (64,), 32, 4), HyperParams(seed=0))
    from ecan.evaluate import predict

    features, _ = predict(model, target.features)
    directions, centered = principal_directions(features)
    captured = float(((centered @ directions.T) ** 2).sum())
    per_axis = np.sort((centered ** 2).sum(axis=0))
    assert captured >= per_axis[-2:].sum() - 1e-9


def test_rank_zero_features_are_numeric_error():
    with pytest.raises(NumericError):
        project_features(np.ones((5, 3)), np.zeros(5))


def test_too_few_samples(small_model):
    with pytest.raises(UsageError):
        project_2d(small_model, Corpus(np.ones((2, 8)), [0, 1], 3))


def test_projection_is_deterministic_and_csv(tmp_path, small_model, rng):
    corpus = Corpus(rng.normal(size=(15, 8)), rng.integers(0, 3, 15), 3)
    a, b = project_2d(small_model, corpus), project_2d(small_model, corpus)
    assert np.array_equal(a, b)
    write_projection(a, tmp_path / "p.csv")
    with open(tmp_path / "p.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "label"] and len(rows) == 16
    assert [int(r[2]) for r in rows[1:]] == corpus.labels.tolist()
    assert float(rows[1][0]) == a[0, 0]
