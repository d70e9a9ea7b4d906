"""Kernel dictionary learning by alternating nonnegative coding and atom updates.

The dictionary lives in feature space as phi(trainset) @ A with A >= 0; one
training epoch codes every sample under a sparsity cap, then sweeps the atoms,
refitting each atom's code row in closed form and the atom itself by an
accelerated proximal gradient method with one-sided shrinkage (which enforces
nonnegativity and l1 sparsity in a single projection).
"""

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import check_gram, check_vector
from .sparse_coding import code_dataset


@dataclass
class TrainConfig:
    """Hyperparameters of one dictionary-learning run.

    n_atoms : dictionary size k.
    sparsity : max nonzeros per code column.
    lam : l1 weight on atom coefficients.
    eta, alpha0, delta, fista_max_iter : line-search shrink factor, initial
        step (None picks the inverse Lipschitz estimate), stopping threshold,
        and iteration cap of the atom updates.
    epochs, rel_tol : outer-loop cap and relative objective-change threshold.
    """

    n_atoms: int
    sparsity: int = 4
    lam: float = 0.1
    eta: float = 0.5
    alpha0: float | None = None
    delta: float = 1e-6
    fista_max_iter: int = 300
    epochs: int = 50
    rel_tol: float = 1e-4
    rng_seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if self.alpha0 is not None and self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if self.delta <= 0 or self.fista_max_iter < 1:
            raise ValueError("invalid stopping parameters")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class TrainTrace:
    """Per-epoch history of one training run."""

    objective: list = field(default_factory=list)
    rec_error_percent: list = field(default_factory=list)
    coding_error_percent: list = field(default_factory=list)
    replacements: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (epoch, atom, sample)
    stage_a_recon: list = field(default_factory=list)
    stage_b_recon: list = field(default_factory=list)
    final_error_percent: float = float("nan")
    stopped_by: str = "epochs"

    @property
    def n_epochs(self):
        return len(self.objective)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "objective", "rec_error_percent", "replacements"])
            for e in range(self.n_epochs):
                writer.writerow(
                    [e + 1, repr(self.objective[e]), repr(self.rec_error_percent[e]),
                     self.replacements[e]]
                )

    def summary_dict(self):
        return {
            "epochs": self.n_epochs,
            "objective": list(self.objective),
            "rec_error_percent": list(self.rec_error_percent),
            "coding_error_percent": list(self.coding_error_percent),
            "replacements": list(self.replacements),
            "final_error_percent": self.final_error_percent,
            "stopped_by": self.stopped_by,
        }


def residual_coefficients(X, A, atom_index):
    """Coefficient matrix of the reconstruction residual excluding one atom.

    Returns I - sum_{i != j} a_i x^i; in feature space phi(trainset) times this
    matrix is the error left for atom j to explain.
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = A.shape[0]
    E = np.eye(n) - (A @ X - np.outer(A[:, atom_index], X[atom_index]))
    return E


def update_code_row(gram, E, atom, support):
    """Exact nonnegative refit of one code row, restricted to its support.

    Each supported column gets the 1-D nonnegative least-squares minimizer
    max(a^T K E_c / (a^T K a), 0); columns outside the support stay zero so
    the per-sample sparsity cap is preserved.
    """
    K = check_gram(gram)
    atom = check_vector(atom, length=K.shape[0], name="atom")
    denom = float(atom @ K @ atom)
    if denom <= 1e-12:
        raise ValueError("degenerate atom: a^T K a is numerically zero")
    row = np.zeros(K.shape[0])
    support = np.asarray(support, dtype=np.int64)
    if support.size:
        proj = (atom @ K) @ E[:, support]
        row[support] = np.maximum(proj / denom, 0.0)
    return row


def shrink_nonneg(v, threshold):
    """One-sided shrinkage max(v - threshold, 0): l1 prox merged with v >= 0."""
    return np.maximum(np.asarray(v, dtype=np.float64) - threshold, 0.0)


class FistaResult(NamedTuple):
    atom: np.ndarray
    converged: bool
    objective: float
    n_iter: int


def update_atom_fista(gram, E, code_row, atom_init, lam=0.1, eta=0.5, alpha0=None,
                      delta=1e-6, max_iter=300, class_mask=None, gram_opnorm=None):
    """Accelerated proximal-gradient update of one dictionary atom.

    Minimizes f(a) + lam * l1(a) over a >= 0 where
    f(a) = tr[(E - a x)^T K (E - a x)], via momentum steps, backtracking that
    shrinks the step by `eta` until the quadratic upper bound holds, and the
    one-sided shrink prox. When `class_mask` is given, shrinkage applies only
    to masked-true entries; the rest get the bare nonnegativity projection,
    and masked entries of the result never exceed their initial values.

    Returns the best feasible iterate: among iterates that do not increase
    f beyond its initial value, the one with the lowest composite objective.
    This makes the update safe to chain into a monotone training sweep even
    though raw accelerated iterations are not monotone.
    """
    K = check_gram(gram)
    n = K.shape[0]
    x = check_vector(code_row, length=n, name="code_row")
    a0 = check_vector(atom_init, length=n, name="atom_init")
    xnorm2 = float(x @ x)
    if xnorm2 <= 0:
        raise ValueError("code_row must be nonzero")
    if class_mask is not None:
        class_mask = np.asarray(class_mask, dtype=bool)
        if class_mask.shape != (n,):
            raise ValueError("class_mask length must match the training size")

    if alpha0 is None:
        if gram_opnorm is None:
            gram_opnorm = float(np.linalg.eigvalsh(K)[-1])
        alpha0 = 1.0 / (2.0 * max(gram_opnorm, 1e-30) * xnorm2)

    KEx = K @ (E @ x)
    c0 = float(np.sum(E * (K @ E)))
    if not (np.isfinite(c0) and np.all(np.isfinite(KEx))):
        raise ValueError("atom update: non-finite objective")

    def f(a):
        return c0 - 2.0 * float(a @ KEx) + xnorm2 * float(a @ K @ a)

    def grad(a):
        return 2.0 * (xnorm2 * (K @ a) - KEx)

    def penalty(a):
        if class_mask is None:
            return lam * float(np.sum(a))
        return lam * float(np.sum(a[class_mask]))

    def prox(v, level):
        if class_mask is None:
            return shrink_nonneg(v, level)
        out = np.maximum(v, 0.0)
        out[class_mask] = np.maximum(v[class_mask] - level, 0.0)
        return out

    f_init = f(a0)
    slack = 1e-12 * max(1.0, abs(f_init))
    best_a = a0.copy()
    best_F = f_init + penalty(a0)

    a_prev = a0.copy()
    y = a0.copy()
    t = 1.0
    alpha = float(alpha0)
    history = [best_F]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(y)
        fy = f(y)
        while True:
            a_new = prox(y - alpha * g, alpha * lam)
            d = a_new - y
            f_new = f(a_new)
            bound = fy + float(g @ d) + float(d @ d) / (2.0 * alpha)
            if f_new <= bound + 1e-12 * max(1.0, abs(fy)):
                break
            alpha *= eta
            if alpha < 1e-18:
                raise RuntimeError("atom update: backtracking step underflow")
        if not np.isfinite(f_new):
            raise ValueError("atom update: non-finite objective")
        F_new = f_new + penalty(a_new)
        feasible = f_new <= f_init + slack
        if feasible and class_mask is not None:
            feasible = bool(np.all(a_new[class_mask] <= a0[class_mask]))
        if feasible and F_new < best_F:
            best_F = F_new
            best_a = a_new.copy()
        history.append(F_new)
        if f_new < delta:
            converged = True
            break
        if len(history) > 5:
            ref = history[-6]
            if abs(history[-1] - ref) < delta * max(abs(ref), 1e-30):
                converged = True
                break
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = a_new + ((t - 1.0) / t_next) * (a_new - a_prev)
        a_prev = a_new
        t = t_next
    return FistaResult(atom=best_a, converged=converged, objective=best_F, n_iter=it)


def normalize_atom(gram, atom):
    """Scale an atom to unit feature-space norm; returns (atom, scale).

    The caller must multiply the atom's code row by `scale` so the product
    a_j x^j is unchanged.
    """
    K = check_gram(gram)
    atom = check_vector(atom, length=K.shape[0], name="atom")
    nrm2 = float(atom @ K @ atom)
    if nrm2 <= 1e-12:
        raise ValueError("degenerate atom: a^T K a is numerically zero")
    scale = float(np.sqrt(nrm2))
    return atom / scale, scale


def atoms_per_class(class_sizes, n_atoms):
    """Even atom allocation over classes; leftovers go to the largest classes."""
    C = len(class_sizes)
    if n_atoms < C:
        raise ValueError(f"need at least {C} atoms for {C} classes")
    base, extra = divmod(n_atoms, C)
    counts = [base] * C
    order = sorted(range(C), key=lambda c: (-class_sizes[c], c))
    for i in range(extra):
        counts[order[i]] += 1
    return counts


def _indicator_atoms(K, sample_indices):
    n = K.shape[0]
    A = np.zeros((n, len(sample_indices)))
    for j, i in enumerate(sample_indices):
        A[i, j] = 1.0
        A[:, j], _ = normalize_atom(K, A[:, j])
    return A


def _init_dictionary(K, n_atoms, labels, rng):
    n = K.shape[0]
    if labels is None:
        picks = rng.choice(n, size=n_atoms, replace=False)
    else:
        labels = np.asarray(labels)
        classes = np.unique(labels)
        sizes = [int(np.sum(labels == c)) for c in classes]
        counts = atoms_per_class(sizes, n_atoms)
        picks = []
        spare = []
        for c, want in zip(classes, counts):
            members = np.flatnonzero(labels == c)
            take = min(want, members.size)
            chosen = rng.choice(members, size=take, replace=False)
            picks.extend(chosen.tolist())
            spare.extend(np.setdiff1d(members, chosen).tolist())
        if len(picks) < n_atoms:
            extra = rng.choice(np.array(spare), size=n_atoms - len(picks), replace=False)
            picks.extend(extra.tolist())
    return _indicator_atoms(K, list(picks))


def _reconstruction_energy(K, A, X):
    R = np.eye(K.shape[0]) - A @ X
    return float(np.sum(R * (K @ R)))


def train_dictionary(gram, cfg, init_A=None, labels=None, mask_fn=None,
                     epoch_callback=None):
    """Learn a nonnegative kernel dictionary and the codes of its training set.

    Alternates (a) full-batch greedy coding with (b) an atom-by-atom sweep of
    exact code-row refits, proximal-gradient atom updates, and feature-space
    normalization. Atoms left unused by a coding pass are replaced by the
    indicator of the worst-reconstructed sample. The sweep never increases
    the reconstruction term (checked each epoch at 1e-8).

    labels : optional class indices used for a stratified choice of the
        initial sample-indicator atoms.
    mask_fn : optional callable (atom_index, atom) -> bool mask limiting
        shrinkage to the masked entries of that atom's update.
    epoch_callback : optional callable (epoch, A, X) -> bool; truthy stops
        training after that epoch.

    Returns (A, X, trace) where X is a fresh coding pass against the final
    dictionary and trace.final_error_percent is its relative error.
    """
    K = check_gram(gram)
    n = K.shape[0]
    if cfg.n_atoms > n:
        raise ValueError(f"n_atoms={cfg.n_atoms} exceeds the training size {n}")
    rng = np.random.default_rng(cfg.rng_seed)
    if init_A is not None:
        A = np.asarray(init_A, dtype=np.float64).copy()
        if A.shape != (n, cfg.n_atoms):
            raise ValueError(f"init_A must have shape ({n}, {cfg.n_atoms})")
        if np.min(A) < 0:
            raise ValueError("init_A must be nonnegative")
        for j in range(cfg.n_atoms):
            A[:, j], _ = normalize_atom(K, A[:, j])
    else:
        A = _init_dictionary(K, cfg.n_atoms, labels, rng)

    gram_opnorm = float(np.linalg.eigvalsh(K)[-1])
    total_energy = float(np.trace(K))
    if total_energy <= 0:
        raise ValueError("gram matrix has nonpositive trace")
    diag = np.diag(K).copy()
    trace = TrainTrace()
    prev_objective = None

    for epoch in range(1, cfg.epochs + 1):
        # stage (a): full-batch coding
        X, residuals = code_dataset(K, diag, K, A, cfg.sparsity, tol=cfg.tol)
        recon_a = _reconstruction_energy(K, A, X)
        objective_a = recon_a + cfg.lam * float(A.sum())

        # replace atoms the coding pass left unused
        events = []
        claimed = set()
        order = np.argsort(residuals)[::-1]
        for j in range(cfg.n_atoms):
            if np.max(X[j]) > 0:
                continue
            for candidate in order:
                candidate = int(candidate)
                if candidate not in claimed and diag[candidate] > 1e-12:
                    claimed.add(candidate)
                    A[:, j] = 0.0
                    A[candidate, j] = 1.0
                    A[:, j], _ = normalize_atom(K, A[:, j])
                    X[j] = 0.0
                    events.append((epoch, j, candidate))
                    break

        # stage (b): atom sweep
        for j in range(cfg.n_atoms):
            support = np.flatnonzero(X[j] > 0)
            if support.size == 0:
                continue
            E = residual_coefficients(X, A, j)
            X[j] = update_code_row(K, E, A[:, j], support)
            if np.max(X[j]) <= 0:
                continue
            mask = mask_fn(j, A[:, j]) if mask_fn is not None else None
            result = update_atom_fista(
                K, E, X[j], A[:, j], lam=cfg.lam, eta=cfg.eta, alpha0=cfg.alpha0,
                delta=cfg.delta, max_iter=cfg.fista_max_iter, class_mask=mask,
                gram_opnorm=gram_opnorm,
            )
            nrm2 = float(result.atom @ K @ result.atom)
            if nrm2 <= 1e-12:
                continue  # keep the previous (normalized) atom
            scale = float(np.sqrt(nrm2))
            A[:, j] = result.atom / scale
            X[j] *= scale

        recon_b = _reconstruction_energy(K, A, X)
        if recon_b > recon_a + 1e-8:
            raise RuntimeError(
                f"epoch {epoch}: dictionary sweep increased the reconstruction "
                f"term ({recon_a} -> {recon_b})"
            )
        objective = recon_b + cfg.lam * float(A.sum())
        trace.objective.append(objective)
        trace.rec_error_percent.append(100.0 * recon_b / total_energy)
        trace.coding_error_percent.append(100.0 * recon_a / total_energy)
        trace.stage_a_recon.append(recon_a)
        trace.stage_b_recon.append(recon_b)
        trace.replacements.append(len(events))
        trace.events.extend(events)

        if epoch_callback is not None and epoch_callback(epoch, A, X):
            trace.stopped_by = "callback"
            break
        baseline = objective_a if prev_objective is None else prev_objective
        if abs(objective - baseline) < cfg.rel_tol * max(abs(baseline), 1e-30):
            trace.stopped_by = "rel_tol"
            break
        prev_objective = objective

    X, residuals = code_dataset(K, diag, K, A, cfg.sparsity, tol=cfg.tol)
    trace.final_error_percent = 100.0 * float(np.sum(residuals)) / total_energy
    return A, X, trace
