"""Evaluation metrics: accuracy, kernel-space reconstruction error, class-based
code sparsity, and per-atom dictionary purity."""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

NONZERO_EPS = 1e-12  # active-set codes hold exact zeros; this guards float dust


def accuracy(predicted, truth):
    """Percent of matching entries."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.size == 0:
        raise ValueError("predicted and truth must be nonempty and equal-length")
    return 100.0 * float(np.mean(predicted == truth))


def reconstruction_error(gram, query_rows, kqq_diag, A, X):
    """Relative feature-space reconstruction error, in percent.

    100 * sum_i ||phi(q_i) - phi(trainset) A x_i||^2 / sum_i ||phi(q_i)||^2,
    expanded purely through kernel quantities and normalized by the total
    signal energy so values are comparable across datasets.
    """
    K = getattr(gram, "values", gram)
    K = np.asarray(K, dtype=np.float64)
    query_rows = np.atleast_2d(np.asarray(query_rows, dtype=np.float64))
    kqq = np.asarray(kqq_diag, dtype=np.float64).ravel()
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    denom = float(kqq.sum())
    if denom <= 0:
        raise ValueError("total signal energy is zero")
    B = query_rows @ A                     # (n_queries, k)
    G = A.T @ K @ A                        # (k, k)
    cross = np.einsum("ik,ki->i", B, X)
    quad = np.einsum("ki,kl,li->i", X, G, X)
    return 100.0 * float(np.sum(kqq - 2.0 * cross + quad)) / denom


def class_sparsity(X, labels, n_classes):
    """Per class, the number of atoms with nonzero total usage in its codes."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    counts = np.zeros(n_classes, dtype=np.int64)
    for c in range(n_classes):
        cols = labels == c
        if np.any(cols):
            usage = np.abs(X[:, cols]).sum(axis=1)
            counts[c] = int(np.sum(usage > NONZERO_EPS))
    return counts


def dictionary_sparseness(A, H):
    """Per atom, 100 * (largest class contribution) / (total contribution).

    Contributions are H @ a_j. Atoms with zero total contribution are
    excluded (NaN) with a warning.
    """
    A = np.asarray(A, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    contributions = H @ A
    totals = contributions.sum(axis=0)
    out = np.full(A.shape[1], np.nan)
    dead = totals <= 0
    if np.any(dead):
        warnings.warn(f"excluding zero atoms from purity: {np.flatnonzero(dead).tolist()}")
    live = ~dead
    out[live] = 100.0 * contributions[:, live].max(axis=0) / totals[live]
    return out


@dataclass
class EvalReport:
    """Classification and sparseness summary for one evaluation pass."""

    accuracy_percent: float
    rec_error_percent: float
    sp_per_class: list
    ds_per_atom: list
    baselines: dict = field(default_factory=dict)

    @property
    def bsp(self):
        return int(min(self.sp_per_class))

    @property
    def wsp(self):
        return int(max(self.sp_per_class))

    @property
    def bds(self):
        live = [d for d in self.ds_per_atom if not np.isnan(d)]
        return max(live) if live else float("nan")

    @property
    def wds(self):
        live = [d for d in self.ds_per_atom if not np.isnan(d)]
        return min(live) if live else float("nan")

    def to_json_dict(self):
        return {
            "accuracy_percent": self.accuracy_percent,
            "rec_error_percent": self.rec_error_percent,
            "sp_per_class": [int(v) for v in self.sp_per_class],
            "bSP": self.bsp,
            "wSP": self.wsp,
            "ds_per_atom": [None if np.isnan(v) else float(v) for v in self.ds_per_atom],
            "bDS": None if np.isnan(self.bds) else float(self.bds),
            "wDS": None if np.isnan(self.wds) else float(self.wds),
            "baselines": dict(self.baselines),
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_text_table(self):
        header = ["method", "Acc", "Rec.Err", "bSP", "wSP", "bDS", "wDS"]
        rows = [[
            "sparse-coding",
            f"{self.accuracy_percent:.2f}",
            f"{self.rec_error_percent:.2f}",
            str(self.bsp),
            str(self.wsp),
            f"{self.bds:.1f}",
            f"{self.wds:.1f}",
        ]]
        for name in sorted(self.baselines):
            rows.append([name, f"{self.baselines[name]:.2f}", "--", "--", "--", "--", "--"])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = []
        for r in [header] + rows:
            lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
        return "\n".join(lines) + "\n"
