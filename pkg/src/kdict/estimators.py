"""Scikit-learn style estimators wrapping the kernel sparse-coding pipeline.

Samples are variable-length series, so X is a list of (n_frames_i, n_channels)
arrays rather than a rectangular matrix; codes and projections come back in
the usual (n_samples, n_features) orientation.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from ._validation import check_series_list
from .classifier import classify, train_classifier
from .dataset import TRAIN, LabeledDataset, SplitAssignment, split_dataset
from .dictionary import TrainConfig, train_dictionary
from .dtw import pairwise_distances
from .kernels import cross_kernel, gram_from_distances
from .sparse_coding import code_dataset


def _check_fitted(estimator, attr):
    if not hasattr(estimator, attr):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )


class KernelSparseCoder(BaseEstimator, TransformerMixin):
    """Nonnegative kernel dictionary learning over DTW Gaussian similarities.

    fit() learns a dictionary of `n_atoms` feature-space atoms from a list of
    series; transform() codes new series against it, each code holding at
    most `sparsity` nonnegative coefficients.

    Parameters mirror TrainConfig; `sigma` is the Gaussian kernel bandwidth
    (None uses the mean off-diagonal squared DTW distance). When labels are
    passed to fit(), `n_atoms=None` defaults to twice the number of classes
    and the initial atoms are drawn stratified by class.
    """

    def __init__(self, n_atoms=None, sparsity=4, lam=0.1, sigma=None, eta=0.5,
                 alpha0=None, delta=1e-6, fista_max_iter=300, epochs=50,
                 rel_tol=1e-4, tol=1e-10, random_state=0):
        self.n_atoms = n_atoms
        self.sparsity = sparsity
        self.lam = lam
        self.sigma = sigma
        self.eta = eta
        self.alpha0 = alpha0
        self.delta = delta
        self.fista_max_iter = fista_max_iter
        self.epochs = epochs
        self.rel_tol = rel_tol
        self.tol = tol
        self.random_state = random_state

    def _config(self, n_atoms):
        return TrainConfig(
            n_atoms=n_atoms, sparsity=self.sparsity, lam=self.lam, eta=self.eta,
            alpha0=self.alpha0, delta=self.delta, fista_max_iter=self.fista_max_iter,
            epochs=self.epochs, rel_tol=self.rel_tol, rng_seed=self.random_state,
            tol=self.tol,
        )

    def fit(self, X, y=None):
        series = check_series_list(X)
        labels = None
        if y is not None:
            y = np.asarray(y)
            self.classes_ = np.unique(y)
            labels = np.searchsorted(self.classes_, y)
        n_atoms = self.n_atoms
        if n_atoms is None:
            if y is None:
                raise ValueError("n_atoms=None requires labels to apply the "
                                 "two-atoms-per-class default")
            n_atoms = 2 * len(self.classes_)
        distances = pairwise_distances(series)
        gram = gram_from_distances(distances, sigma=self.sigma)
        A, codes, trace = train_dictionary(gram, self._config(n_atoms), labels=labels)
        self.series_ = series
        self.distances_ = distances
        self.gram_ = gram.values
        self.sigma_ = gram.sigma
        self.dictionary_ = A
        self.codes_ = codes
        self.trace_ = trace
        return self

    def transform(self, X):
        _check_fitted(self, "dictionary_")
        queries = check_series_list(X, n_channels=self.series_[0].shape[1])
        rows = cross_kernel(queries, self.series_, self.sigma_)
        codes, _ = code_dataset(
            rows, np.ones(len(queries)), self.gram_, self.dictionary_,
            self.sparsity, tol=self.tol,
        )
        return codes.T

    def fit_transform(self, X, y=None):
        return self.fit(X, y).codes_.T


class KernelSparseClassifier(BaseEstimator, ClassifierMixin):
    """Label-consistent kernel sparse-coding classifier.

    fit(X, y) augments the training kernel with label similarity (weights
    `alpha` for the atom-assignment term and `beta` for the label term) and
    learns a dictionary whose atoms each serve one class; predict() codes
    queries against the base kernel and picks the class whose aggregate
    response is closest to one.

    test_fraction > 0 carves a stratified internal split (every class needs
    at least 3 samples) used to stop training once its error keeps rising
    for `patience` epochs.
    """

    def __init__(self, n_atoms=None, sparsity=4, lam=0.1, alpha=1.0, beta=5.0,
                 sigma=None, eta=0.5, alpha0=None, delta=1e-6, fista_max_iter=300,
                 epochs=50, rel_tol=1e-4, tol=1e-10, test_fraction=0.0,
                 patience=3, random_state=0):
        self.n_atoms = n_atoms
        self.sparsity = sparsity
        self.lam = lam
        self.alpha = alpha
        self.beta = beta
        self.sigma = sigma
        self.eta = eta
        self.alpha0 = alpha0
        self.delta = delta
        self.fista_max_iter = fista_max_iter
        self.epochs = epochs
        self.rel_tol = rel_tol
        self.tol = tol
        self.test_fraction = test_fraction
        self.patience = patience
        self.random_state = random_state

    def fit(self, X, y):
        series = check_series_list(X)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        labels = np.searchsorted(self.classes_, y)
        ds = LabeledDataset(series=series, labels=labels,
                            class_names=[str(c) for c in self.classes_])
        n_atoms = self.n_atoms if self.n_atoms is not None else 2 * len(self.classes_)
        cfg = TrainConfig(
            n_atoms=n_atoms, sparsity=self.sparsity, lam=self.lam, eta=self.eta,
            alpha0=self.alpha0, delta=self.delta, fista_max_iter=self.fista_max_iter,
            epochs=self.epochs, rel_tol=self.rel_tol, rng_seed=self.random_state,
            tol=self.tol,
        )
        if self.test_fraction > 0:
            split = split_dataset(
                ds, fractions=(1.0 - self.test_fraction, self.test_fraction, 0.0),
                rng_seed=self.random_state,
            )
        else:
            split = SplitAssignment(roles=np.full(ds.n_samples, TRAIN, dtype="<U10"))
        self.model_ = train_classifier(
            ds, split, cfg, self.alpha, self.beta, patience=self.patience
        )
        return self

    def predict(self, X):
        _check_fitted(self, "model_")
        labels, _, _ = classify(self.model_, check_series_list(X))
        return self.classes_[labels]

    def predict_scores(self, X):
        """Per-class decision scores |1 - H A x|, lower is better; shape
        (n_samples, n_classes)."""
        _check_fitted(self, "model_")
        _, _, scores = classify(self.model_, check_series_list(X))
        return scores.T

    def encode(self, X):
        """Sparse codes of the queries, shape (n_samples, n_atoms)."""
        _check_fitted(self, "model_")
        _, codes, _ = classify(self.model_, check_series_list(X))
        return codes.T
