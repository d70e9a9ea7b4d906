"""Labeled variable-length time-series datasets: loading, synthesis, splitting."""

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_labels, check_series

TRAIN = "train"
TEST = "test"
VALIDATION = "validation"
ROLES = (TRAIN, TEST, VALIDATION)


@dataclass
class LabeledDataset:
    """An ordered collection of labeled series.

    series : list of (n_frames_i, n_channels) float64 arrays, one per sample.
    labels : (n_samples,) int array of class indices in 0..n_classes-1.
    class_names : one display name per class index.
    """

    series: list
    labels: np.ndarray
    class_names: list

    def __post_init__(self):
        self.labels = check_labels(self.labels, len(self.series)).astype(np.int64)
        if len(self.series) == 0:
            raise ValueError("no series")
        n_ch = None
        validated = []
        for i, s in enumerate(self.series):
            arr = check_series(s, n_channels=n_ch, name=f"series[{i}]")
            n_ch = arr.shape[1]
            validated.append(arr)
        self.series = validated
        C = len(self.class_names)
        if self.labels.min() < 0 or self.labels.max() >= C:
            raise ValueError("labels: class index out of range")
        counts = np.bincount(self.labels, minlength=C)
        if np.any(counts == 0):
            empty = [self.class_names[i] for i in np.flatnonzero(counts == 0)]
            raise ValueError(f"empty classes: {empty}")

    @property
    def n_samples(self):
        return len(self.series)

    @property
    def n_channels(self):
        return self.series[0].shape[1]

    @property
    def n_classes(self):
        return len(self.class_names)

    def subset(self, indices):
        """New dataset restricted to the given sample indices (class names kept)."""
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            series=[self.series[i] for i in indices],
            labels=self.labels[indices],
            class_names=list(self.class_names),
        )

    def content_hash(self):
        """SHA-256 over class names, labels, and raw frame bytes."""
        h = hashlib.sha256()
        h.update(json.dumps(list(self.class_names)).encode())
        h.update(self.labels.tobytes())
        for s in self.series:
            h.update(np.int64(s.shape[0]).tobytes())
            h.update(np.int64(s.shape[1]).tobytes())
            h.update(np.ascontiguousarray(s).tobytes())
        return h.hexdigest()


@dataclass
class SplitAssignment:
    """Role per sample index: one of 'train', 'test', 'validation'."""

    roles: np.ndarray

    def __post_init__(self):
        self.roles = np.asarray(self.roles)
        bad = set(self.roles.tolist()) - set(ROLES)
        if bad:
            raise ValueError(f"unknown roles: {sorted(bad)}")

    def indices(self, role):
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        return np.flatnonzero(self.roles == role)

    @property
    def train_indices(self):
        return self.indices(TRAIN)

    @property
    def test_indices(self):
        return self.indices(TEST)

    @property
    def validation_indices(self):
        return self.indices(VALIDATION)


def _role_counts(size, fractions, parity):
    # Largest-remainder allocation of `size` samples over the three roles.
    # Exact ties prefer train; a test/validation tie alternates with the
    # class index so totals track the fractions instead of drifting.
    quotas = [size * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    order = [0, 1, 2] if parity == 0 else [0, 2, 1]
    priority = sorted(range(3), key=lambda r: (-remainders[r], order.index(r)))
    for i in range(size - sum(counts)):
        counts[priority[i]] += 1
    return counts


def split_dataset(ds, fractions=(0.5, 0.25, 0.25), rng_seed=0):
    """Stratified train/test/validation split.

    Every class must have at least 3 members. Per class, role counts follow
    the fractions to within one sample, leftovers preferring train; the
    assignment is deterministic for a fixed seed.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three nonnegative values summing to 1")
    rng = np.random.default_rng(rng_seed)
    roles = np.empty(ds.n_samples, dtype="<U10")
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size < 3:
            raise ValueError(
                f"class {ds.class_names[c]!r} has {members.size} samples; "
                "need at least 3 for a stratified split"
            )
        perm = rng.permutation(members)
        n_tr, n_te, n_va = _role_counts(members.size, fractions, c % 2)
        roles[perm[:n_tr]] = TRAIN
        roles[perm[n_tr:n_tr + n_te]] = TEST
        roles[perm[n_tr + n_te:]] = VALIDATION
        assert n_tr + n_te + n_va == members.size
    return SplitAssignment(roles=roles)


def generate_synthetic(classes, per_class, channels=2, noise_sd=0.05, warp=True, rng_seed=0):
    """Synthetic labeled dataset of sinusoid prototypes.

    Each class is a multi-channel sinusoid with class-specific frequency and
    phase; samples add Gaussian noise and, when `warp` is set, a random
    monotone time-warp with length jitter of +-30%. Deterministic per seed.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if per_class < 2:
        raise ValueError("need at least 2 samples per class")
    if channels < 1:
        raise ValueError("need at least 1 channel")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    base_len = 40
    ch = np.arange(channels)
    series, labels = [], []
    for c in range(classes):
        freqs = 1.0 + 0.5 * c + 0.25 * ch
        phases = 1.7 * c + 0.9 * ch
        for _ in range(per_class):
            if warp:
                length = max(4, int(round(base_len * (1.0 + rng.uniform(-0.3, 0.3)))))
                increments = rng.gamma(4.0, 1.0, size=length)
                u = np.cumsum(increments)
                u = (u - u[0]) / (u[-1] - u[0])
            else:
                u = np.linspace(0.0, 1.0, base_len)
            frames = np.sin(2.0 * np.pi * freqs[None, :] * u[:, None] + phases[None, :])
            if noise_sd > 0:
                frames = frames + noise_sd * rng.standard_normal(frames.shape)
            series.append(frames)
            labels.append(c)
    class_names = [f"class{c}" for c in range(classes)]
    return LabeledDataset(series=series, labels=np.array(labels), class_names=class_names)


def _finish_dataset(records, path):
    # records: list of (series_id, label_string, frames_list)
    if not records:
        raise ValueError(f"{path}: no series")
    class_names = []
    name_to_idx = {}
    series, labels = [], []
    for sid, label, frames in records:
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{path}: series {sid!r} contains non-finite values")
        if label not in name_to_idx:
            name_to_idx[label] = len(class_names)
            class_names.append(label)
        series.append(arr)
        labels.append(name_to_idx[label])
    try:
        return LabeledDataset(series=series, labels=np.array(labels), class_names=class_names)
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from e


def _load_csv_long(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: no series") from None
        if len(header) < 4 or header[:3] != ["series_id", "label", "t"]:
            raise ValueError(
                f"{path}: line 1: expected header 'series_id,label,t,c0,...'"
            )
        n_channels = len(header) - 3
        expected = [f"c{i}" for i in range(n_channels)]
        if header[3:] != expected:
            raise ValueError(f"{path}: line 1: channel columns must be {expected}")
        current_id = None
        seen_ids = set()
        cur_frames = []
        cur_label = None
        last_t = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + n_channels:
                raise ValueError(f"{path}: line {lineno}: expected {3 + n_channels} fields")
            sid, label = row[0], row[1]
            if not label:
                raise ValueError(f"{path}: line {lineno}: unknown label string")
            try:
                t = float(row[2])
                values = [float(v) for v in row[3:]]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: could not parse numeric fields") from None
            if sid != current_id:
                if sid in seen_ids:
                    raise ValueError(
                        f"{path}: line {lineno}: series {sid!r} reappears; "
                        "rows must be sorted by (series_id, t)"
                    )
                if current_id is not None:
                    records.append((current_id, cur_label, cur_frames))
                seen_ids.add(sid)
                current_id, cur_label, cur_frames, last_t = sid, label, [], None
            elif label != cur_label:
                raise ValueError(f"{path}: line {lineno}: series {sid!r} has conflicting labels")
            if last_t is not None and t <= last_t:
                raise ValueError(f"{path}: line {lineno}: t not increasing within series {sid!r}")
            last_t = t
            cur_frames.append(values)
        if current_id is not None:
            records.append((current_id, cur_label, cur_frames))
    return _finish_dataset(records, path)


def _load_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict) or not {"id", "label", "frames"} <= obj.keys():
                raise ValueError(f"{path}: line {lineno}: expected keys id, label, frames")
            label = obj["label"]
            if label is None or str(label) == "":
                raise ValueError(f"{path}: line {lineno}: unknown label string")
            records.append((str(obj["id"]), str(label), obj["frames"]))
    return _finish_dataset(records, path)


def load_dataset(path, format="jsonl"):
    """Load a dataset file in 'csv_long' or 'jsonl' format."""
    if format == "csv_long":
        return _load_csv_long(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise ValueError(f"unknown dataset format {format!r}")


def save_dataset(ds, path, format="jsonl"):
    """Write a dataset file; inverse of load_dataset."""
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for i, (s, lab) in enumerate(zip(ds.series, ds.labels)):
                obj = {
                    "id": f"s{i:04d}",
                    "label": ds.class_names[lab],
                    "frames": s.tolist(),
                }
                fh.write(json.dumps(obj) + "\n")
    elif format == "csv_long":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["series_id", "label", "t"] + [f"c{i}" for i in range(ds.n_channels)])
            for i, (s, lab) in enumerate(zip(ds.series, ds.labels)):
                for t in range(s.shape[0]):
                    writer.writerow([f"s{i:04d}", ds.class_names[lab], t]
                                    + [repr(float(v)) for v in s[t]])
    else:
        raise ValueError(f"unknown dataset format {format!r}")
