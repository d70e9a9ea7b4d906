"""Label-consistent kernel sparse classification.

Training augments the base kernel with label and atom-assignment inner
products so same-class samples become more similar in feature space, and
restricts shrinkage in the atom updates to entries from non-dominant classes,
pushing every atom toward a single class. Unseen series are coded against the
base kernel (their labels being unknown) and labeled by the class whose
aggregate code response is closest to one.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_labels, check_series_list
from .dictionary import atoms_per_class, train_dictionary
from .dtw import pairwise_distances
from .kernels import GramMatrix, cross_kernel, gram_from_distances
from .sparse_coding import code_dataset

MODEL_FORMAT_VERSION = 1


def build_label_structures(labels, n_classes, n_atoms):
    """Label matrix H, atom-assignment matrix Q, and the per-atom class.

    H is the C x N one-hot label matrix. Atoms are assigned to classes in
    ascending class order, evenly with leftovers to the largest classes, and
    Q(i, j) = 1 exactly when atom i's class matches sample j's label, so
    same-class samples share identical Q columns.
    """
    labels = check_labels(labels)
    if n_atoms < n_classes:
        raise ValueError(f"need at least {n_classes} atoms, got {n_atoms}")
    n = labels.shape[0]
    H = np.zeros((n_classes, n))
    H[labels, np.arange(n)] = 1.0
    sizes = [int(np.sum(labels == c)) for c in range(n_classes)]
    counts = atoms_per_class(sizes, n_atoms)
    atom_class = np.repeat(np.arange(n_classes), counts)
    Q = (atom_class[:, None] == labels[None, :]).astype(np.float64)
    return H, Q, atom_class


def augment_kernel(gram, H, Q, alpha, beta):
    """Add label and atom-assignment similarity to a base Gram matrix.

    K~_ij = K_ij + alpha <q_i, q_j> + beta <h_i, h_j>. Both added terms are
    PSD, so a clipped base kernel stays PSD without re-clipping.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    values = gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, float)
    n = values.shape[0]
    if H.shape[1] != n or Q.shape[1] != n:
        raise ValueError("H and Q must have one column per training sample")
    augmented = values + alpha * (Q.T @ Q) + beta * (H.T @ H)
    sigma = gram.sigma if isinstance(gram, GramMatrix) else None
    if sigma is None:
        return augmented
    return GramMatrix(values=augmented, sigma=sigma)


def purity_mask(atom, H, atom_class):
    """Entries of an atom that shrinkage is allowed to touch.

    The dominant class is the one with the largest contribution H @ atom
    (ties resolve to the atom's assigned class, then the smallest index);
    the mask is true exactly at samples outside the dominant class.
    """
    atom = np.asarray(atom, dtype=np.float64)
    contributions = H @ atom
    top = contributions.max()
    if contributions[atom_class] >= top:
        dominant = int(atom_class)
    else:
        dominant = int(np.argmax(contributions))
    sample_class = np.argmax(H, axis=0)
    return sample_class != dominant


@dataclass
class SparseClassifierModel:
    """Everything needed to classify new series: dictionary, label structures,
    kernel parameters, and the embedded training set."""

    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    alpha: float
    beta: float
    sigma: float
    sparsity: int
    tol: float
    atom_class: np.ndarray
    class_names: list
    train_series: list
    train_labels: np.ndarray
    atom_purity: np.ndarray
    trace_summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    _base_gram: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def n_channels(self):
        return self.train_series[0].shape[1]

    def base_gram(self):
        # recomputed lazily from the embedded series; deterministic
        if self._base_gram is None:
            D = pairwise_distances(self.train_series)
            self._base_gram = gram_from_distances(D, sigma=self.sigma).values
        return self._base_gram


def consecutive_error_rises(errors):
    """Length of the strictly-rising streak at the end of an error curve."""
    rises = 0
    for later, earlier in zip(errors[::-1], errors[-2::-1]):
        if later > earlier:
            rises += 1
        else:
            break
    return rises


def _atom_purities(A, H):
    contributions = H @ A
    totals = contributions.sum(axis=0)
    purities = np.full(A.shape[1], np.nan)
    live = totals > 0
    purities[live] = 100.0 * contributions[:, live].max(axis=0) / totals[live]
    return purities


def train_classifier(ds, split, cfg, alpha, beta, distances=None, patience=3,
                     sigma=None, epoch_callback=None):
    """Train a label-consistent model on the train split of a dataset.

    Builds the base Gram over the train split, augments it with the label
    structures, and runs dictionary learning with the purity mask wired into
    every atom update (disabled when alpha == beta == 0 so the run reduces to
    plain unsupervised training). When `patience` is set, training stops after
    the test-split classification error has risen that many epochs in a row.

    distances : optional precomputed DTW matrix over the full dataset.
    sigma : optional kernel bandwidth override (None picks the mean
        off-diagonal squared distance of the train block).
    epoch_callback : optional monitoring hook (epoch, A, X) -> bool; truthy
        stops training, composed with the early-stopping rule.
    """
    train_idx = split.train_indices
    test_idx = split.test_indices
    if train_idx.size == 0:
        raise ValueError("empty train split")
    train_labels = ds.labels[train_idx]
    present = np.bincount(train_labels, minlength=ds.n_classes)
    if np.any(present == 0):
        missing = [ds.class_names[i] for i in np.flatnonzero(present == 0)]
        raise ValueError(f"train split misses classes: {missing}")

    if distances is None:
        distances = pairwise_distances(ds.series)
    D_train = distances[np.ix_(train_idx, train_idx)]
    base = gram_from_distances(D_train, sigma=sigma)
    H, Q, atom_class = build_label_structures(train_labels, ds.n_classes, cfg.n_atoms)
    augmented = augment_kernel(base, H, Q, alpha, beta)

    if alpha == 0 and beta == 0:
        mask_fn = None
    else:
        def mask_fn(j, atom):
            return purity_mask(atom, H, atom_class[j])

    early_stop = None
    if patience is not None and test_idx.size > 0:
        test_rows = np.exp(-(distances[np.ix_(test_idx, train_idx)] ** 2) / base.sigma)
        test_truth = ds.labels[test_idx]
        errors = []

        def early_stop(epoch, A, X):
            codes, _ = code_dataset(
                test_rows, np.ones(test_idx.size), base.values, A, cfg.sparsity,
                tol=cfg.tol,
            )
            scores = np.abs(1.0 - H @ A @ codes)
            err = float(np.mean(np.argmin(scores, axis=0) != test_truth))
            errors.append(err)
            return consecutive_error_rises(errors) >= patience

    if early_stop is None and epoch_callback is None:
        callback = None
    else:
        def callback(epoch, A, X):
            stop = False
            if epoch_callback is not None:
                stop = bool(epoch_callback(epoch, A, X))
            if early_stop is not None:
                stop = bool(early_stop(epoch, A, X)) or stop
            return stop

    A, X, trace = train_dictionary(
        augmented, cfg, labels=train_labels, mask_fn=mask_fn, epoch_callback=callback
    )
    return SparseClassifierModel(
        A=A,
        H=H,
        Q=Q,
        alpha=float(alpha),
        beta=float(beta),
        sigma=base.sigma,
        sparsity=cfg.sparsity,
        tol=cfg.tol,
        atom_class=atom_class,
        class_names=list(ds.class_names),
        train_series=[ds.series[i] for i in train_idx],
        train_labels=train_labels,
        atom_purity=_atom_purities(A, H),
        trace_summary=trace.summary_dict(),
    )


def classify_rows(model, kernel_rows):
    """Classify from precomputed query-to-training kernel rows.

    Same rule as classify(); useful when DTW distances are already cached.
    """
    rows = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
    k = model.A.shape[1]
    if rows.shape[0] == 0:
        return (np.zeros(0, dtype=np.int64), np.zeros((k, 0)),
                np.zeros((model.n_classes, 0)))
    if rows.shape[1] != len(model.train_series):
        raise ValueError("kernel rows must have one column per training sample")
    K = model.base_gram()
    codes, _ = code_dataset(
        rows, np.ones(rows.shape[0]), K, model.A, model.sparsity, tol=model.tol
    )
    scores = np.abs(1.0 - model.H @ model.A @ codes)
    labels = np.argmin(scores, axis=0).astype(np.int64)
    return labels, codes, scores


def classify(model, queries):
    """Predict class indices for a list of series.

    Queries are coded by greedy pursuit against the base kernel (label terms
    cannot extend to unlabeled data); the label is the class j minimizing
    |1 - H(j,:) A x|, ties going to the smallest class index.

    Returns (labels, codes, scores) with codes of shape (n_atoms, n_queries)
    and scores of shape (n_classes, n_queries).
    """
    queries = check_series_list(queries, n_channels=model.n_channels)
    n_queries = len(queries)
    if n_queries == 0:
        k = model.A.shape[1]
        return (np.zeros(0, dtype=np.int64), np.zeros((k, 0)),
                np.zeros((model.n_classes, 0)))
    rows = cross_kernel(queries, model.train_series, model.sigma)
    return classify_rows(model, rows)


def save_model(model, path):
    """Write a model as versioned JSON; round-trips classify() bit-identically."""
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "sigma": model.sigma,
        "alpha": model.alpha,
        "beta": model.beta,
        "T": model.sparsity,
        "tol": model.tol,
        "A": model.A.tolist(),
        "atom_class": model.atom_class.tolist(),
        "H": model.H.astype(int).tolist(),
        "class_names": list(model.class_names),
        "atom_purity": model.atom_purity.tolist(),
        "training_series": [
            {"id": f"s{i:04d}", "label": model.class_names[lab], "frames": s.tolist()}
            for i, (s, lab) in enumerate(zip(model.train_series, model.train_labels))
        ],
        "trace": model.trace_summary,
        "metadata": model.metadata,
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    class_names = list(payload["class_names"])
    name_to_idx = {name: i for i, name in enumerate(class_names)}
    series = [np.asarray(rec["frames"], dtype=np.float64)
              for rec in payload["training_series"]]
    labels = np.array([name_to_idx[rec["label"]] for rec in payload["training_series"]],
                      dtype=np.int64)
    A = np.asarray(payload["A"], dtype=np.float64)
    H = np.asarray(payload["H"], dtype=np.float64)
    atom_class = np.asarray(payload["atom_class"], dtype=np.int64)
    Q = (atom_class[:, None] == labels[None, :]).astype(np.float64)
    return SparseClassifierModel(
        A=A,
        H=H,
        Q=Q,
        alpha=float(payload["alpha"]),
        beta=float(payload["beta"]),
        sigma=float(payload["sigma"]),
        sparsity=int(payload["T"]),
        tol=float(payload["tol"]),
        atom_class=atom_class,
        class_names=class_names,
        train_series=series,
        train_labels=labels,
        atom_purity=np.asarray(payload["atom_purity"], dtype=np.float64),
        trace_summary=payload.get("trace", {}),
        metadata=payload.get("metadata", {}),
    )
