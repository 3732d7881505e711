import struct

import numpy as np
import pytest
from sklearn import datasets as skd
from sklearn.tree import DecisionTreeClassifier

from fxtsode.data import (IdxFormatError, dataset_to_idx, load_idx, make_blobs, make_circles, make_moons,
                          read_idx, split_and_batch, write_idx)


def test_moons_noiseless_geometry():
    ds = make_moons(4, noise=0.0)
    outer, inner = ds.X[ds.y == 0], ds.X[ds.y == 1]
    np.testing.assert_allclose(np.linalg.norm(outer, axis=1), 1.0, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(inner - [1.0, 0.5], axis=1), 1.0, atol=1e-15)
    X_ref, y_ref = skd.make_moons(n_samples=200, noise=0.0, shuffle=False)
    ours = make_moons(200, noise=0.0)
    np.testing.assert_allclose(ours.X, X_ref, atol=1e-15)
    np.testing.assert_array_equal(ours.y, y_ref)


def test_moons_balanced_and_deterministic():
    a, b = make_moons(2000, 0.1, seed=3), make_moons(2000, 0.1, seed=3)
    assert np.bincount(a.y).tolist() == [1000, 1000]
    assert a.X.tobytes() == b.X.tobytes()
    assert make_moons(2000, 0.1, seed=4).X.tobytes() != a.X.tobytes()


def test_moons_separable_by_tree_oracle():
    ds = make_moons(2000, 0.1, seed=0)
    tree = DecisionTreeClassifier(max_depth=5, random_state=0).fit(ds.X, ds.y)
    assert tree.score(ds.X, ds.y) >= 0.95


def test_other_generators():
    c = make_circles(400, noise=0.0, factor=0.5)
    np.testing.assert_allclose(np.linalg.norm(c.X[c.y == 0], axis=1), 1.0)
    np.testing.assert_allclose(np.linalg.norm(c.X[c.y == 1], axis=1), 0.5)
    b = make_blobs(300, centers=3, seed=1)
    assert b.n_classes == 3 and np.bincount(b.y).tolist() == [100, 100, 100]
    with pytest.raises(ValueError):
        make_moons(3)
    with pytest.raises(ValueError):
        make_moons(10, noise=-1)


def test_csv_export(tmp_path):
    ds = make_moons(4, 0.0)
    ds.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,label"
    assert len(lines) == 5
    assert float(lines[1].split(",")[0]) == ds.X[0, 0]


def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


def test_idx_zero_image(tmp_path):
    (tmp_path / "i").write_bytes(idx_bytes(0x803, (1, 28, 28), [0] * 784))
    (tmp_path / "l").write_bytes(idx_bytes(0x801, (1,), [7]))
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert ds.X.shape == (1, 784) and np.all(ds.X == 0)
    assert ds.y.tolist() == [7] and ds.domain == (0.0, 1.0)


def test_idx_count_field_and_scaling(tmp_path):
    raw = idx_bytes(0x803, (2, 1, 2), [0, 255, 51, 102])
    assert raw[4:8] == b"\x00\x00\x00\x02"
    (tmp_path / "i").write_bytes(raw)
    (tmp_path / "l").write_bytes(idx_bytes(0x801, (2,), [0, 1]))
    ds = load_idx(tmp_path / "i", tmp_path / "l", n_classes=2)
    assert len(ds) == 2
    np.testing.assert_allclose(ds.X, [[0, 1], [0.2, 0.4]])


def test_idx_round_trip_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(3, 4, 5), dtype=np.uint8)
    labels = np.array([2, 0, 9], dtype=np.uint8)
    write_idx(tmp_path / "i", pixels)
    write_idx(tmp_path / "l", labels)
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    dataset_to_idx(ds, tmp_path / "i2", tmp_path / "l2", side=(4, 5))
    assert (tmp_path / "i2").read_bytes() == (tmp_path / "i").read_bytes()
    assert (tmp_path / "l2").read_bytes() == (tmp_path / "l").read_bytes()


def test_idx_gzip(tmp_path):
    import gzip
    with gzip.open(tmp_path / "l.gz", "wb") as fh:
        fh.write(idx_bytes(0x801, (3,), [1, 2, 3]))
    magic, arr = read_idx(tmp_path / "l.gz")
    assert magic == 0x801 and arr.tolist() == [1, 2, 3]


@pytest.mark.parametrize("raw,match", [
    (idx_bytes(0x804, (1,), [0]), "bad magic"),
    (idx_bytes(0x803, (2, 2, 2), [0] * 5), "truncated"),
    (b"\x00\x00", "truncated"),
    (idx_bytes(0x801, (2,), [0, 0, 0]), "trailing"),
])
def test_idx_errors(tmp_path, raw, match):
    (tmp_path / "f").write_bytes(raw)
    with pytest.raises(IdxFormatError, match=match):
        read_idx(tmp_path / "f")


def test_idx_count_mismatch(tmp_path):
    (tmp_path / "i").write_bytes(idx_bytes(0x803, (2, 1, 1), [0, 0]))
    (tmp_path / "l").write_bytes(idx_bytes(0x801, (3,), [0, 0, 0]))
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(tmp_path / "i", tmp_path / "l")
    with pytest.raises(IdxFormatError, match="expected image magic"):
        load_idx(tmp_path / "l", tmp_path / "l")


def test_split_disjoint_and_complete():
    ds = make_moons(10, 0.0)
    split = split_and_batch(ds, 0.5, 2, seed=0, normalize=False)
    assert len(split.train) == 5 and len(split.test) == 5
    rows = {tuple(r) for r in np.vstack([split.train.X, split.test.X])}
    assert rows == {tuple(r) for r in ds.X}


def test_batches_deterministic_and_keep_short_batch():
    split = split_and_batch(make_moons(100, 0.1), 0.7, 32, seed=1)
    a = [x.tobytes() for x, _ in split.batches(1)]
    b = [x.tobytes() for x, _ in split.batches(1)]
    assert a == b and len(a) == 3
    assert [len(y) for _, y in split.batches(1)] == [32, 32, 6]
    assert [x.tobytes() for x, _ in split.batches(2)] != a


def test_standardization_uses_train_statistics():
    split = split_and_batch(make_moons(2000, 0.1), 0.8, 64, seed=0)
    np.testing.assert_allclose(split.train.X.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(split.train.X.std(axis=0), 1.0, atol=1e-9)
    raw = make_moons(2000, 0.1)
    test_raw = split.test.X * split.test.std + split.test.mean
    assert {tuple(np.round(r, 9)) for r in test_raw} <= {tuple(np.round(r, 9)) for r in raw.X}
    np.testing.assert_array_equal(split.train.mean, split.test.mean)


def test_split_validation():
    with pytest.raises(ValueError):
        split_and_batch(make_moons(10), 1.0)
    with pytest.raises(ValueError):
        split_and_batch(make_moons(2), 0.1)
