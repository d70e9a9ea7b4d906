"""Comparison methods over the same DTW Gram matrix: kNN, kernel k-means
prototype coding, kernel PCA projection, and a ridge one-vs-rest classifier."""

import warnings
from dataclasses import dataclass

import numpy as np


def knn_predict(query_distances, labels, n_neighbors=3):
    """Majority vote over the nearest training samples, one query per row.

    Ties go to the class with the smaller summed neighbor distance, then to
    the smaller class index.
    """
    D = np.atleast_2d(np.asarray(query_distances, dtype=np.float64))
    labels = np.asarray(labels)
    if n_neighbors > D.shape[1]:
        raise ValueError("n_neighbors exceeds the number of training samples")
    out = np.empty(D.shape[0], dtype=np.int64)
    for i, row in enumerate(D):
        neighbors = np.argsort(row, kind="stable")[:n_neighbors]
        votes = {}
        for j in neighbors:
            c = int(labels[j])
            count, dist_sum = votes.get(c, (0, 0.0))
            votes[c] = (count + 1, dist_sum + row[j])
        out[i] = min(votes, key=lambda c: (-votes[c][0], votes[c][1], c))
    return out


@dataclass
class KernelKMeansResult:
    """Cluster ids, the normalized assignment matrix E (indicator / size), and
    the within-cluster inertia after each Lloyd pass."""

    labels: np.ndarray
    assignment: np.ndarray
    inertia_history: list


def _assignment_matrix(labels, n_clusters):
    n = labels.shape[0]
    E = np.zeros((n, n_clusters))
    E[np.arange(n), labels] = 1.0
    sizes = E.sum(axis=0)
    live = sizes > 0
    E[:, live] /= sizes[live]
    return E


def _kernel_point_distances(K, E):
    # squared feature-space distance of each point to each cluster mean
    cluster_sq = np.einsum("im,im->m", E, K @ E)
    return np.diag(K)[:, None] - 2.0 * (K @ E) + cluster_sq[None, :]


def kernel_kmeans(gram, n_clusters, rng_seed=0, max_iter=100):
    """Lloyd's algorithm in feature space using only kernel evaluations.

    Seeding follows k-means++ on kernel distances; empty clusters are
    re-seeded from the point farthest from its current cluster mean. Stops
    when assignments stabilize.
    """
    K = getattr(gram, "values", gram)
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError("n_clusters must lie in 1..n_samples")
    rng = np.random.default_rng(rng_seed)
    diag = np.diag(K)

    centers = [int(rng.integers(n))]
    while len(centers) < n_clusters:
        d2 = np.min(
            diag[:, None] - 2.0 * K[:, centers] + diag[centers][None, :], axis=1
        )
        d2 = np.maximum(d2, 0.0)
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), centers)
            centers.append(int(rng.choice(remaining)))
        else:
            centers.append(int(rng.choice(n, p=d2 / total)))

    point_dist = diag[:, None] - 2.0 * K[:, centers] + diag[centers][None, :]
    labels = np.argmin(point_dist, axis=1)
    labels[centers] = np.arange(n_clusters)

    history = []
    for _ in range(max_iter):
        E = _assignment_matrix(labels, n_clusters)
        d2 = _kernel_point_distances(K, E)
        sizes = np.bincount(labels, minlength=n_clusters)
        for m in np.flatnonzero(sizes == 0):
            farthest = int(np.argmax(d2[np.arange(n), labels]))
            labels[farthest] = m
            E = _assignment_matrix(labels, n_clusters)
            d2 = _kernel_point_distances(K, E)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(np.sum(d2[np.arange(n), new_labels])))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    E = _assignment_matrix(labels, n_clusters)
    return KernelKMeansResult(labels=labels, assignment=E, inertia_history=history)


def kkm_distances(gram, query_rows, kqq, assignment):
    """Squared feature-space distance of each query to each cluster mean:
    diag(E^T K E) - 2 K(query, trainset) E + K(query, query)."""
    K = getattr(gram, "values", gram)
    K = np.asarray(K, dtype=np.float64)
    E = np.asarray(assignment, dtype=np.float64)
    query_rows = np.atleast_2d(np.asarray(query_rows, dtype=np.float64))
    kqq = np.asarray(kqq, dtype=np.float64).ravel()
    if query_rows.shape[1] != K.shape[0] or E.shape[0] != K.shape[0]:
        raise ValueError("inconsistent shapes")
    if kqq.shape[0] != query_rows.shape[0]:
        raise ValueError("kqq length must match the number of queries")
    cluster_sq = np.einsum("im,im->m", E, K @ E)
    return cluster_sq[None, :] - 2.0 * (query_rows @ E) + kqq[:, None]


def kkm_codes(distances, sparsity, bandwidth=None):
    """Gaussian similarities of cluster distances, keeping the top entries.

    Each row keeps its `sparsity` largest similarities (all of them when
    sparsity >= n_clusters); `bandwidth` defaults to the mean distance and
    should be reused from the training pass when coding queries.
    """
    d = np.atleast_2d(np.asarray(distances, dtype=np.float64))
    if bandwidth is None:
        bandwidth = float(np.mean(d))
    if bandwidth <= 0:
        bandwidth = 1.0
    sims = np.exp(-d / bandwidth)
    if sparsity < sims.shape[1]:
        cut = np.partition(sims, -sparsity, axis=1)[:, -sparsity][:, None]
        sims = np.where(sims >= cut, sims, 0.0)
    return sims, bandwidth


def kpca_project(gram, query_rows, n_components):
    """Kernel PCA coordinates for training data and queries.

    Double-centers the Gram matrix, keeps the top eigenpairs, and projects
    queries with the matching centering. Shrinks (with a warning) when
    n_components exceeds the numerical rank.
    """
    K = getattr(gram, "values", gram)
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if not 1 <= n_components <= n:
        raise ValueError("n_components must lie in 1..n_samples")
    query_rows = np.atleast_2d(np.asarray(query_rows, dtype=np.float64))
    if query_rows.size and query_rows.shape[1] != n:
        raise ValueError("query rows must have one column per training sample")

    ones = np.full((n, n), 1.0 / n)
    Kc = K - ones @ K - K @ ones + ones @ K @ ones
    w, V = np.linalg.eigh(Kc)
    w, V = w[::-1], V[:, ::-1]
    rank = int(np.sum(w > max(w[0], 0.0) * 1e-12)) if w[0] > 0 else 0
    if n_components > rank:
        warnings.warn(
            f"n_components={n_components} exceeds numerical rank {rank}; shrinking"
        )
        n_components = max(rank, 1)
    w = w[:n_components]
    V = V[:, :n_components]
    scale = np.sqrt(np.maximum(w, 1e-300))
    train_coords = V * scale[None, :]

    col_means = K.mean(axis=0)
    grand_mean = float(K.mean())
    q_centered = (query_rows - col_means[None, :]
                  - query_rows.mean(axis=1, keepdims=True) + grand_mean)
    query_coords = q_centered @ (V / scale[None, :])
    return train_coords, query_coords


class RidgeOneVsRest:
    """One-vs-rest regularized least squares on +-1 targets.

    The intercept is not penalized, so with huge ridge the prediction falls
    back to the majority class. Prediction is argmax of the class scores,
    ties to the smallest class index.
    """

    def __init__(self, ridge=1e-3):
        if ridge <= 0:
            raise ValueError("ridge must be positive")
        self.ridge = ridge
        self.weights_ = None
        self.classes_ = None

    def fit(self, features, labels):
        F = np.atleast_2d(np.asarray(features, dtype=np.float64))
        labels = np.asarray(labels)
        self.classes_ = np.unique(labels)
        targets = np.where(labels[:, None] == self.classes_[None, :], 1.0, -1.0)
        Fa = np.hstack([F, np.ones((F.shape[0], 1))])
        reg = self.ridge * np.eye(Fa.shape[1])
        reg[-1, -1] = 0.0
        self.weights_ = np.linalg.solve(Fa.T @ Fa + reg, Fa.T @ targets)
        return self

    def decision_scores(self, features):
        F = np.atleast_2d(np.asarray(features, dtype=np.float64))
        Fa = np.hstack([F, np.ones((F.shape[0], 1))])
        return Fa @ self.weights_

    def predict(self, features):
        return self.classes_[np.argmax(self.decision_scores(features), axis=1)]
