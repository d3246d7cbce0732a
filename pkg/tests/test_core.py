import json

import numpy as np
import pytest

from tds import (ContractViolation, Dataset, DeskOverrides, TdsParams,
                 as_seed_sequence, clip, clip_array, clip_labels, load_dataset,
                 save_dataset, squared_loss)


def _const(c):
    return lambda X: np.full(len(np.atleast_2d(X)), float(c))


def test_squared_loss_constant_case():
    data = Dataset(np.zeros((4, 2)), np.ones(4))
    assert squared_loss(_const(0.0), data) == 1.0


def test_squared_loss_perfect_fit():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((10, 3))
    y = X[:, 0] * 2.0 - X[:, 1]
    data = Dataset(X, y)
    assert squared_loss(lambda Z: Z[:, 0] * 2.0 - Z[:, 1], data) == 0.0


def test_squared_loss_hand_value():
    # residuals (1, -3) -> sqrt((1 + 9) / 2) = sqrt(5)
    data = Dataset(np.zeros((2, 1)), np.array([1.0, -3.0]))
    assert abs(squared_loss(_const(0.0), data) - np.sqrt(5.0)) < 1e-12


def test_squared_loss_rejects_unlabeled_and_empty():
    with pytest.raises(ContractViolation):
        squared_loss(_const(0.0), Dataset(np.zeros((3, 1))))
    with pytest.raises(ContractViolation):
        squared_loss(_const(0.0), Dataset(np.zeros((0, 1)), np.zeros(0)))


def test_loss_triangle_inequality_random_triples():
    # ||h1 - h2||_S <= ||h1 - h3||_S + ||h3 - h2||_S on any fixed sample
    rng = np.random.default_rng(42)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        a, b, c = rng.standard_normal((3, n))
        X = rng.standard_normal((n, 2))
        d12 = squared_loss(lambda Z, v=b: v, Dataset(X, a))
        d13 = squared_loss(lambda Z, v=c: v, Dataset(X, a))
        d32 = squared_loss(lambda Z, v=b: v, Dataset(X, c))
        assert d12 <= d13 + d32 + 1e-12


def test_clipping_is_a_contraction_on_samples():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        M = float(rng.uniform(0.1, 3.0))
        h1 = rng.standard_normal(n) * 3
        h2 = rng.standard_normal(n) * 3
        raw = np.sqrt(np.mean((h1 - h2) ** 2))
        clipped = np.sqrt(np.mean((clip_array(h1, M) - clip_array(h2, M)) ** 2))
        assert clipped <= raw + 1e-12


def test_clip_examples():
    assert clip(0.5, 1.0) == 0.5
    assert clip(3.0, 1.0) == 1.0
    assert clip(-3.0, 1.0) == -1.0


def test_clip_labels_basic():
    X = np.zeros((2, 1))
    same = clip_labels(Dataset(X, np.array([0.2, -0.9])), 1.0)
    assert np.array_equal(same.y, [0.2, -0.9])
    cut = clip_labels(Dataset(X, np.array([5.0, -5.0])), 2.0)
    assert np.array_equal(cut.y, [2.0, -2.0])
    with pytest.raises(ContractViolation):
        clip_labels(Dataset(X), 1.0)


def test_clip_level_controls_clipping_error():
    # With E[y^2 g(|y|)] <= Y for g(u) = u^2, the clip level M = sqrt(Y)/eps
    # keeps the RMS clipping distance below eps.  Heavy-ish labels: y = Z^2
    # with Z standard normal has E[y^2 g(|y|)] = E[Z^8] = 105.
    rng = np.random.default_rng(3)
    y = rng.standard_normal(200000) ** 2
    Y = 105.0
    for eps in (0.5, 0.25):
        M = np.sqrt(Y) / eps
        dist = np.sqrt(np.mean((y - clip_array(y, M)) ** 2))
        assert dist <= eps


def test_dataset_rejects_nonfinite_and_mismatch():
    with pytest.raises(ContractViolation):
        Dataset(np.array([[1.0, np.nan]]))
    with pytest.raises(ContractViolation):
        Dataset(np.ones((3, 2)), np.array([1.0, 2.0]))


@pytest.mark.parametrize("fmt,suffix", [("csv", ".csv"), ("json-lines", ".jsonl")])
def test_dataset_round_trip(tmp_path, fmt, suffix):
    rng = np.random.default_rng(11)
    data = Dataset(rng.standard_normal((10, 3)), rng.standard_normal(10))
    path = tmp_path / ("roundtrip" + suffix)
    save_dataset(data, path, format=fmt)
    back = load_dataset(path, format=fmt)
    assert back.labeled
    assert np.array_equal(back.X, data.X)
    assert np.array_equal(back.y, data.y)


def test_dataset_round_trip_unlabeled(tmp_path):
    data = Dataset(np.random.default_rng(1).standard_normal((6, 2)))
    path = tmp_path / "u.csv"
    save_dataset(data, path)
    back = load_dataset(path)
    assert not back.labeled
    assert np.array_equal(back.X, data.X)


def test_csv_short_row_is_an_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,y\n1.0,2.0,0.5\n1.0,0.5\n")
    with pytest.raises(ContractViolation):
        load_dataset(path)


def test_json_lines_record_shape(tmp_path):
    path = tmp_path / "one.jsonl"
    path.write_text('{"x": [1, 2], "y": 0.5}\n')
    data = load_dataset(path, format="json-lines")
    assert data.dim == 2 and data.labeled
    assert np.array_equal(data.X[0], [1.0, 2.0]) and data.y[0] == 0.5


def test_csv_header_autodetected(tmp_path):
    path = tmp_path / "noheader.csv"
    path.write_text("1.0,2.0\n3.0,4.0\n")
    data = load_dataset(path)
    assert len(data) == 2 and data.dim == 2


def test_params_validation_and_round_trip():
    params = TdsParams(epsilon=0.3, delta=0.1, M=2.0, R=1.0, B=4.0, A=3.0,
                       C=1.0, ell_hc=2, scale_mode="desk",
                       desk=DeskOverrides(m=50, N=500))
    back = TdsParams.from_json(json.loads(json.dumps(params.to_json())))
    assert back == params
    with pytest.raises(ContractViolation):
        TdsParams(epsilon=0.0, delta=0.1)
    with pytest.raises(ContractViolation):
        TdsParams(epsilon=0.3, delta=0.1, M=0.5)
    with pytest.raises(ContractViolation):
        TdsParams(epsilon=0.3, delta=0.1, scale_mode="other")


def test_seed_sequence_passthrough():
    ss = np.random.SeedSequence(5)
    assert as_seed_sequence(ss) is ss
    assert isinstance(as_seed_sequence(5), np.random.SeedSequence)
