import json

import numpy as np
import pytest

from kdict.dataset import (LabeledDataset, generate_synthetic, load_dataset,
                           save_dataset, split_dataset)


def test_load_jsonl(tmp_path):
    path = tmp_path / "ds.jsonl"
    lines = [
        {"id": "a", "label": "walk", "frames": [[0.0, 1.0], [1.0, 2.0], [2.0, 3.0]]},
        {"id": "b", "label": "run", "frames": [[0.0, 0.0]] * 5},
    ]
    path.write_text("\n".join(json.dumps(obj) for obj in lines) + "\n")
    ds = load_dataset(path, format="jsonl")
    assert ds.n_samples == 2
    assert ds.n_classes == 2
    assert ds.n_channels == 2
    assert ds.class_names == ["walk", "run"]
    assert ds.series[0].shape == (3, 2)
    assert ds.series[1].shape == (5, 2)


def test_load_csv_long(tmp_path):
    path = tmp_path / "ds.csv"
    rows = ["series_id,label,t,c0,c1"]
    for t in range(3):
        rows.append(f"a,walk,{t},{t}.0,{t}.5")
    for t in range(5):
        rows.append(f"b,run,{t},0.0,0.0")
    path.write_text("\n".join(rows) + "\n")
    ds = load_dataset(path, format="csv_long")
    assert ds.n_samples == 2
    assert ds.class_names == ["walk", "run"]
    assert np.allclose(ds.series[0][:, 1], [0.5, 1.5, 2.5])


def test_load_empty_file_errors(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ValueError, match="no series"):
        load_dataset(path, format="jsonl")


def test_load_nan_frame_names_series(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"id": "s7", "label": "x", "frames": [[0.0], [float("nan")]]})
                    + "\n" + json.dumps({"id": "ok", "label": "y", "frames": [[1.0]]}) + "\n")
    with pytest.raises(ValueError, match="s7"):
        load_dataset(path, format="jsonl")


def test_load_inconsistent_channels_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        json.dumps({"id": "a", "label": "x", "frames": [[0.0, 1.0]]}) + "\n"
        + json.dumps({"id": "b", "label": "x", "frames": [[0.0]]}) + "\n"
    )
    with pytest.raises(ValueError, match="channels"):
        load_dataset(path, format="jsonl")


def test_load_csv_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("series_id,label,t,c0\na,walk,0,1.0\na,walk,1,oops\n")
    with pytest.raises(ValueError, match="line 3"):
        load_dataset(path, format="csv_long")


def test_load_csv_missing_label_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("series_id,label,t,c0\na,,0,1.0\n")
    with pytest.raises(ValueError, match="unknown label"):
        load_dataset(path, format="csv_long")


@pytest.mark.parametrize("fmt", ["jsonl", "csv_long"])
def test_save_load_roundtrip(tmp_path, fmt):
    ds = generate_synthetic(2, 3, channels=2, noise_sd=0.05, warp=True, rng_seed=1)
    path = tmp_path / ("ds.jsonl" if fmt == "jsonl" else "ds.csv")
    save_dataset(ds, path, format=fmt)
    back = load_dataset(path, format=fmt)
    assert back.n_samples == ds.n_samples
    assert back.class_names == ds.class_names
    for s1, s2 in zip(ds.series, back.series):
        assert np.array_equal(s1, s2)


def test_synthetic_shapes_and_balance():
    ds = generate_synthetic(3, 20, channels=2, noise_sd=0.05, warp=True, rng_seed=7)
    assert ds.n_samples == 60
    assert ds.n_classes == 3
    assert np.all(np.bincount(ds.labels) == 20)
    lengths = {s.shape[0] for s in ds.series}
    assert len(lengths) > 1  # length jitter present
    assert min(lengths) >= 28 and max(lengths) <= 52  # +-30% of 40


def test_synthetic_zero_noise_no_warp_identical_within_class():
    ds = generate_synthetic(2, 4, channels=2, noise_sd=0.0, warp=False, rng_seed=3)
    for c in range(2):
        members = [ds.series[i] for i in np.flatnonzero(ds.labels == c)]
        for s in members[1:]:
            assert np.array_equal(s, members[0])
    # classes differ
    a = ds.series[np.flatnonzero(ds.labels == 0)[0]]
    b = ds.series[np.flatnonzero(ds.labels == 1)[0]]
    assert not np.array_equal(a, b)


def test_synthetic_deterministic():
    ds1 = generate_synthetic(3, 5, channels=2, noise_sd=0.1, warp=True, rng_seed=11)
    ds2 = generate_synthetic(3, 5, channels=2, noise_sd=0.1, warp=True, rng_seed=11)
    assert ds1.content_hash() == ds2.content_hash()
    ds3 = generate_synthetic(3, 5, channels=2, noise_sd=0.1, warp=True, rng_seed=12)
    assert ds1.content_hash() != ds3.content_hash()


def test_synthetic_preconditions():
    with pytest.raises(ValueError):
        generate_synthetic(1, 5)
    with pytest.raises(ValueError):
        generate_synthetic(2, 1)


def test_split_90_samples_matches_protocol():
    ds = generate_synthetic(9, 10, channels=1, noise_sd=0.05, warp=False, rng_seed=0)
    split = split_dataset(ds, rng_seed=42)
    n_tr = split.train_indices.size
    n_te = split.test_indices.size
    n_va = split.validation_indices.size
    assert n_tr == 45
    assert {n_te, n_va} == {22, 23}
    roles = split.roles
    for c in range(9):
        members = np.flatnonzero(ds.labels == c)
        for role in ("train", "test", "validation"):
            assert np.any(roles[members] == role)
        # per-class deviation from the target fractions stays under one sample
        counts = {role: int(np.sum(roles[members] == role))
                  for role in ("train", "test", "validation")}
        assert abs(counts["train"] - 5.0) < 1.0
        assert abs(counts["test"] - 2.5) < 1.0
        assert abs(counts["validation"] - 2.5) < 1.0


def test_split_partitions_indices():
    ds = generate_synthetic(3, 7, channels=1, noise_sd=0.0, warp=False, rng_seed=2)
    split = split_dataset(ds, rng_seed=5)
    all_idx = np.concatenate(
        [split.train_indices, split.test_indices, split.validation_indices]
    )
    assert sorted(all_idx.tolist()) == list(range(ds.n_samples))


def test_split_small_class_errors():
    ds = LabeledDataset(
        series=[np.zeros((3, 1))] * 5,
        labels=np.array([0, 0, 0, 1, 1]),
        class_names=["a", "b"],
    )
    with pytest.raises(ValueError, match="at least 3"):
        split_dataset(ds, rng_seed=0)


def test_split_deterministic():
    ds = generate_synthetic(4, 6, channels=1, noise_sd=0.05, warp=True, rng_seed=9)
    s1 = split_dataset(ds, rng_seed=17)
    s2 = split_dataset(ds, rng_seed=17)
    assert np.array_equal(s1.roles, s2.roles)
    s3 = split_dataset(ds, rng_seed=18)
    assert not np.array_equal(s1.roles, s3.roles)


def test_dataset_validation():
    with pytest.raises(ValueError, match="no series"):
        LabeledDataset(series=[], labels=np.array([]), class_names=[])
    with pytest.raises(ValueError, match="empty classes"):
        LabeledDataset(series=[np.zeros((2, 1))], labels=np.array([0]),
                       class_names=["a", "b"])
    subset = generate_synthetic(2, 3, rng_seed=0).subset([0, 1, 3])
    assert subset.n_samples == 3
    assert subset.labels.tolist() == [0, 0, 1]
