"""Non-negative sparse code inference computed entirely through kernel products.

A signal is represented in feature space as a nonnegative combination of
dictionary atoms, each atom itself a nonnegative combination of training
samples. Inference never touches explicit feature vectors: every inner
product is an entry of the Gram matrix or of a cross-kernel row.
"""

from typing import NamedTuple

import numpy as np

from ._validation import check_gram, check_vector


class SparseCode(NamedTuple):
    """One code: full-length coefficient vector, selected atoms, residual energy."""

    x: np.ndarray
    support: tuple
    residual: float


def residual_energy(kqq, kernel_row, gram, atoms, x):
    """Squared feature-space residual of coding a query with coefficients x."""
    ax = atoms @ x
    return float(kqq - 2.0 * (kernel_row @ ax) + ax @ gram @ ax)


def kernel_nnls(kernel_row, gram, atoms, tol=1e-10, ridge=1e-10):
    """Nonnegative least squares against kernel-defined atoms.

    Solves min_x ||phi(query) - phi(trainset) @ atoms @ x||^2 s.t. x >= 0 by
    the Lawson-Hanson active-set method, with every inner product expressed
    through `gram` (training Gram matrix) and `kernel_row` (query-to-training
    kernel values). The passive-set solve falls back to a ridge-regularized
    system when the restricted Gram is singular.

    Exit satisfies the KKT conditions at `tol`: passive gradient entries
    vanish, active ones are <= tol, and x is exactly nonnegative.
    """
    K = check_gram(gram)
    kernel_row = check_vector(kernel_row, length=K.shape[0], name="kernel_row")
    atoms = np.asarray(atoms, dtype=np.float64)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    m = atoms.shape[1]
    b = atoms.T @ kernel_row
    G = atoms.T @ K @ atoms

    def solve_passive(P):
        sub = G[np.ix_(P, P)]
        try:
            s = np.linalg.solve(sub, b[P])
        except np.linalg.LinAlgError:
            s = None
        if s is None or not np.all(np.isfinite(s)):
            try:
                s = np.linalg.solve(sub + ridge * np.eye(len(P)), b[P])
            except np.linalg.LinAlgError:
                s = None
            if s is None or not np.all(np.isfinite(s)):
                raise np.linalg.LinAlgError(
                    "singular passive-set Gram after ridge fallback"
                )
        return s

    x = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    idx = np.arange(m)
    cap = max(3 * m, 3)
    for _ in range(cap):
        w = b - G @ x
        free = ~passive
        if not np.any(free) or np.max(w[free]) <= tol:
            return x
        j = idx[free][np.argmax(w[free])]
        passive[j] = True
        for _ in range(cap):
            P = idx[passive]
            s = solve_passive(P)
            if np.min(s) > 0.0:
                x[:] = 0.0
                x[P] = s
                break
            blocked = s <= 0.0
            xP = x[P]
            alpha = np.min(xP[blocked] / (xP[blocked] - s[blocked]))
            xP = xP + alpha * (s - xP)
            # entries driven to (numerical) zero leave the passive set exactly
            drop = xP <= 1e-12 * max(1.0, np.max(np.abs(xP)))
            xP[drop] = 0.0
            x[:] = 0.0
            x[P] = xP
            passive[P[drop]] = False
            if not np.any(passive):
                return x
        else:
            raise RuntimeError("kernel_nnls: iteration cap exceeded (possible cycling)")
    raise RuntimeError("kernel_nnls: iteration cap exceeded (possible cycling)")


def kernel_nn_omp(kernel_row, kqq, gram, atoms, sparsity, tol=1e-10):
    """Greedy nonnegative kernel matching pursuit.

    Repeatedly picks the unselected atom with the largest nonnegative
    correlation to the current residual, then refits all selected
    coefficients with kernel_nnls. Stops once `sparsity` atoms are selected
    or no atom has correlation above `tol`. The residual energy is
    non-increasing over the greedy iterations.
    """
    K = check_gram(gram)
    kernel_row = check_vector(kernel_row, length=K.shape[0], name="kernel_row")
    atoms = np.asarray(atoms, dtype=np.float64)
    if sparsity < 1:
        raise ValueError("sparsity must be >= 1")
    k = atoms.shape[1]
    x = np.zeros(k)
    support = []
    while len(support) < min(sparsity, k):
        r = kernel_row - (atoms @ x) @ K
        tau = np.maximum(r @ atoms, 0.0)
        if support:
            tau[np.array(support)] = -np.inf
        j = int(np.argmax(tau))
        if tau[j] <= tol:
            break
        support.append(j)
        cols = np.array(support)
        x[:] = 0.0
        x[cols] = kernel_nnls(kernel_row, K, atoms[:, cols], tol=tol)
    res = residual_energy(float(kqq), kernel_row, K, atoms, x)
    return SparseCode(x=x, support=tuple(support), residual=res)


def code_dataset(kernel_rows, kqq_diag, gram, atoms, sparsity, tol=1e-10):
    """Code a batch of queries column by column; columns follow query order."""
    kernel_rows = np.asarray(kernel_rows, dtype=np.float64)
    kqq_diag = np.asarray(kqq_diag, dtype=np.float64).ravel()
    k = np.asarray(atoms).shape[1]
    n_queries = kernel_rows.shape[0]
    if kqq_diag.shape[0] != n_queries:
        raise ValueError("kqq_diag length must match the number of kernel rows")
    X = np.zeros((k, n_queries))
    residuals = np.zeros(n_queries)
    for i in range(n_queries):
        try:
            code = kernel_nn_omp(kernel_rows[i], kqq_diag[i], gram, atoms, sparsity, tol=tol)
        except Exception as e:
            raise RuntimeError(f"coding failed for query column {i}: {e}") from e
        X[:, i] = code.x
        residuals[i] = code.residual
    return X, residuals
