"""Gaussian Gram matrices over DTW distances, PSD repair, and distance caching."""

import json
import os
from dataclasses import dataclass

import numpy as np

from ._validation import check_series_list, check_square
from .dtw import cross_distances, pairwise_distances


@dataclass
class GramMatrix:
    """A symmetric PSD kernel matrix together with the bandwidth that built it."""

    values: np.ndarray
    sigma: float

    @property
    def n(self):
        return self.values.shape[0]


def _series_of(data):
    if hasattr(data, "series"):
        return data.series
    return list(data)


def psd_clip(K):
    """Project a symmetric matrix onto the PSD cone by zeroing negative eigenvalues.

    Returns the Frobenius-nearest PSD matrix of (K + K.T)/2; idempotent up to
    floating-point noise.
    """
    K = check_square(K, name="kernel matrix")
    K = (K + K.T) / 2.0
    w, V = np.linalg.eigh(K)
    if w[0] >= 0.0:
        return K
    w = np.maximum(w, 0.0)
    M = (V * w) @ V.T
    return (M + M.T) / 2.0


def default_bandwidth(distances):
    """Mean of the off-diagonal squared distances (scale-free default)."""
    D = np.asarray(distances, dtype=np.float64)
    n = D.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples to pick a bandwidth")
    off = ~np.eye(n, dtype=bool)
    return float(np.mean(D[off] ** 2))


def gram_from_distances(distances, sigma=None):
    """Gaussian kernel K_ij = exp(-d_ij^2 / sigma) with PSD clipping applied."""
    D = check_square(distances, name="distance matrix")
    if sigma is None:
        sigma = default_bandwidth(D)
    sigma = float(sigma)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    K = np.exp(-(D ** 2) / sigma)
    return GramMatrix(values=psd_clip(K), sigma=sigma)


def build_gram(data, sigma=None):
    """Pairwise DTW distances plus their clipped Gaussian Gram matrix.

    `data` is a LabeledDataset or a list of series. When `sigma` is absent it
    defaults to the mean off-diagonal squared distance.
    """
    series = check_series_list(_series_of(data))
    if len(series) < 2:
        raise ValueError("need at least 2 series")
    D = pairwise_distances(series)
    return D, gram_from_distances(D, sigma=sigma)


def cross_kernel(queries, data, sigma):
    """Rectangular kernel block K(queries, data); no clipping."""
    sigma = float(sigma)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    references = check_series_list(_series_of(data))
    n_channels = references[0].shape[1]
    queries = check_series_list(_series_of(queries), n_channels=n_channels)
    if not queries:
        return np.zeros((0, len(references)))
    D = cross_distances(queries, references)
    return np.exp(-(D ** 2) / sigma)


# -- distance cache ----------------------------------------------------------

CACHE_FORMAT_VERSION = 1


def save_distances(path, distances, content_hash):
    """Write a distance matrix plus a sidecar header keyed by the dataset hash."""
    D = check_square(distances, name="distance matrix")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        np.save(fh, D)
    os.replace(tmp, path)
    meta = {
        "version": CACHE_FORMAT_VERSION,
        "dataset_sha256": content_hash,
        "n": int(D.shape[0]),
    }
    meta_path = f"{path}.meta.json"
    tmp = f"{meta_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, meta_path)


def load_distances(path, content_hash):
    """Load a cached distance matrix; returns None unless the sidecar hash matches."""
    meta_path = f"{path}.meta.json"
    if not (os.path.exists(path) and os.path.exists(meta_path)):
        return None
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("version") != CACHE_FORMAT_VERSION:
        return None
    if meta.get("dataset_sha256") != content_hash:
        return None
    return np.load(path)
