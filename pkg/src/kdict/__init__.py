"""Nonnegative kernel sparse coding for variable-length time series.

Variable-length multichannel series are compared by dynamic time warping,
embedded through a Gaussian kernel, and decomposed into sparse nonnegative
combinations of learned feature-space atoms. A label-consistent variant turns
the dictionary into a classifier whose atoms each serve a single class.
"""

from .classifier import (SparseClassifierModel, augment_kernel,
                         build_label_structures, classify, classify_rows,
                         load_model, purity_mask, save_model, train_classifier)
from .dataset import (LabeledDataset, SplitAssignment, generate_synthetic,
                      load_dataset, save_dataset, split_dataset)
from .dictionary import (FistaResult, TrainConfig, TrainTrace, normalize_atom,
                         residual_coefficients, shrink_nonneg, train_dictionary,
                         update_atom_fista, update_code_row)
from .dtw import cross_distances, dtw_distance, pairwise_distances
from .estimators import KernelSparseClassifier, KernelSparseCoder
from .kernels import (GramMatrix, build_gram, cross_kernel, default_bandwidth,
                      gram_from_distances, psd_clip)
from .metrics import (EvalReport, accuracy, class_sparsity,
                      dictionary_sparseness, reconstruction_error)
from .sparse_coding import SparseCode, code_dataset, kernel_nn_omp, kernel_nnls

__version__ = "0.1.0"

__all__ = [
    "EvalReport",
    "FistaResult",
    "GramMatrix",
    "KernelSparseClassifier",
    "KernelSparseCoder",
    "LabeledDataset",
    "SparseClassifierModel",
    "SparseCode",
    "SplitAssignment",
    "TrainConfig",
    "TrainTrace",
    "accuracy",
    "augment_kernel",
    "build_gram",
    "build_label_structures",
    "class_sparsity",
    "classify",
    "classify_rows",
    "code_dataset",
    "cross_distances",
    "cross_kernel",
    "default_bandwidth",
    "dictionary_sparseness",
    "dtw_distance",
    "generate_synthetic",
    "gram_from_distances",
    "kernel_nn_omp",
    "kernel_nnls",
    "load_dataset",
    "load_model",
    "normalize_atom",
    "pairwise_distances",
    "psd_clip",
    "purity_mask",
    "reconstruction_error",
    "residual_coefficients",
    "save_dataset",
    "save_model",
    "shrink_nonneg",
    "split_dataset",
    "train_classifier",
    "train_dictionary",
    "update_atom_fista",
    "update_code_row",
]
