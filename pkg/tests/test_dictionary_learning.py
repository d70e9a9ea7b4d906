import numpy as np
import pytest

from kdict.dictionary import (TrainConfig, TrainTrace, normalize_atom,
                              residual_coefficients, shrink_nonneg,
                              train_dictionary, update_atom_fista,
                              update_code_row)
from kdict.kernels import GramMatrix
from oracles import train_dictionary_features


def random_psd(rng, n, scale=1.0):
    B = rng.standard_normal((n + 3, n))
    K = B.T @ B / (n + 3)
    return scale * K


def fista_objective(K, E, x, a, lam=0.0):
    R = E - np.outer(a, x)
    return float(np.sum(R * (K @ R))) + lam * float(np.sum(np.abs(a)))


# -- residual coefficients ----------------------------------------------------

def test_residual_coefficients_zero_codes():
    A = np.abs(np.random.default_rng(0).standard_normal((5, 3)))
    X = np.zeros((3, 5))
    assert np.array_equal(residual_coefficients(X, A, 1), np.eye(5))


def test_residual_coefficients_single_atom():
    rng = np.random.default_rng(1)
    A = np.abs(rng.standard_normal((4, 1)))
    X = np.abs(rng.standard_normal((1, 4)))
    assert np.array_equal(residual_coefficients(X, A, 0), np.eye(4))


def test_residual_coefficients_hand_example():
    n = 3
    A = np.zeros((n, 2))
    A[0, 0] = 1.0  # a_1 = e_1
    A[1, 1] = 1.0
    X = np.zeros((2, n))
    X[0] = [1.0, 0.0, 0.0]  # x^1 = e_1^T
    E2 = residual_coefficients(X, A, 1)
    expected = np.eye(n) - np.outer(A[:, 0], X[0])
    assert np.array_equal(E2, expected)
    assert E2[0, 0] == 0.0


# -- code row update ----------------------------------------------------------

def test_update_code_row_empty_support():
    rng = np.random.default_rng(2)
    K = random_psd(rng, 5)
    a = np.abs(rng.standard_normal(5))
    row = update_code_row(K, np.eye(5), a, np.array([], dtype=int))
    assert np.array_equal(row, np.zeros(5))


def test_update_code_row_clamps_negative_projection():
    K = np.eye(3)
    a = np.array([1.0, 0.0, 0.0])
    E = -np.eye(3)  # projections all negative
    row = update_code_row(K, E, a, np.array([0, 1, 2]))
    assert np.array_equal(row, np.zeros(3))


def test_update_code_row_matches_explicit_scalar_nnls():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = 6
        Y = rng.standard_normal((9, n))
        K = Y.T @ Y
        a = np.abs(rng.standard_normal(n))
        E = rng.standard_normal((n, n))
        support = np.sort(rng.choice(n, size=3, replace=False))
        row = update_code_row(K, E, a, support)
        d = Y @ a
        for c in support:
            expected = max(float(d @ (Y @ E[:, c])) / float(d @ d), 0.0)
            assert row[c] == pytest.approx(expected, rel=1e-10, abs=1e-12)
        outside = np.setdiff1d(np.arange(n), support)
        assert np.all(row[outside] == 0.0)


def test_update_code_row_degenerate_atom_errors():
    K = np.eye(3)
    with pytest.raises(ValueError, match="degenerate"):
        update_code_row(K, np.eye(3), np.zeros(3), np.array([0]))


def test_update_code_row_does_not_increase_objective():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = 7
        K = random_psd(rng, n)
        a = np.abs(rng.standard_normal(n))
        E = rng.standard_normal((n, n))
        old_row = np.zeros(n)
        support = np.sort(rng.choice(n, size=4, replace=False))
        old_row[support] = np.abs(rng.standard_normal(4))
        new_row = update_code_row(K, E, a, support)
        assert fista_objective(K, E, new_row, a) <= fista_objective(K, E, old_row, a) + 1e-10


# -- shrink operator ----------------------------------------------------------

def test_shrink_values():
    assert shrink_nonneg(5.0, 2.0) == 3.0
    assert shrink_nonneg(1.0, 2.0) == 0.0
    assert shrink_nonneg(-4.0, 2.0) == 0.0
    assert np.array_equal(shrink_nonneg(np.array([5.0, 1.0, -4.0]), 2.0),
                          np.array([3.0, 0.0, 0.0]))


# -- atom update --------------------------------------------------------------

def test_fista_reaches_unconstrained_minimizer():
    rng = np.random.default_rng(5)
    n = 6
    K = random_psd(rng, n) + 0.5 * np.eye(n)
    x = np.abs(rng.standard_normal(n)) + 0.1
    a_star = np.abs(rng.standard_normal(n)) + 0.05
    E = np.outer(a_star, x)  # unconstrained minimizer E x / ||x||^2 == a_star
    result = update_atom_fista(K, E, x, np.zeros(n), lam=0.0, delta=1e-14,
                               max_iter=5000)
    assert np.max(np.abs(result.atom - a_star)) < 1e-6


def test_fista_fixed_point_returns_init():
    rng = np.random.default_rng(6)
    n = 5
    K = random_psd(rng, n) + np.eye(n)
    x = np.abs(rng.standard_normal(n)) + 0.1
    a_star = np.abs(rng.standard_normal(n)) + 0.1
    E = np.outer(a_star, x)
    result = update_atom_fista(K, E, x, a_star, lam=0.0)
    assert np.allclose(result.atom, a_star, atol=1e-10)
    assert fista_objective(K, E, x, result.atom) <= fista_objective(K, E, x, a_star) + 1e-12


def test_fista_never_increases_objective():
    rng = np.random.default_rng(7)
    for lam in (0.0, 0.1, 1.0):
        for _ in range(5):
            n = 6
            K = random_psd(rng, n)
            x = np.abs(rng.standard_normal(n)) + 0.05
            E = rng.standard_normal((n, n))
            a0 = np.abs(rng.standard_normal(n))
            result = update_atom_fista(K, E, x, a0, lam=lam, max_iter=60)
            assert result.objective <= fista_objective(K, E, x, a0, lam) + 1e-12
            # returned objective is the masked-composite value of the atom
            assert result.objective == pytest.approx(
                fista_objective(K, E, x, result.atom, lam), rel=1e-10, abs=1e-12
            )
            assert np.min(result.atom) >= 0.0


def test_fista_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    h = 1e-5
    for _ in range(10):
        n = int(rng.integers(4, 9))
        K = random_psd(rng, n)
        E = rng.standard_normal((n, n))
        x = np.abs(rng.standard_normal(n)) + 0.1
        a = np.abs(rng.standard_normal(n))

        def f(v):
            R = E - np.outer(v, x)
            return float(np.sum(R * (K @ R)))

        analytic = -2.0 * (K @ (E - np.outer(a, x))) @ x
        numeric = np.zeros(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            numeric[i] = (f(a + e) - f(a - e)) / (2 * h)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-30)
        assert rel < 1e-4


def test_fista_mask_limits_shrinkage():
    rng = np.random.default_rng(9)
    n = 6
    K = random_psd(rng, n) + np.eye(n)
    x = np.abs(rng.standard_normal(n)) + 0.1
    E = rng.standard_normal((n, n))
    a0 = np.abs(rng.standard_normal(n)) + 0.5
    mask = np.zeros(n, dtype=bool)
    mask[:3] = True
    result = update_atom_fista(K, E, x, a0, lam=0.5, class_mask=mask, max_iter=80)
    # masked entries can only shrink relative to the start
    assert np.all(result.atom[mask] <= a0[mask] + 1e-12)
    assert np.min(result.atom) >= 0.0


def test_fista_requires_nonzero_row():
    K = np.eye(3)
    with pytest.raises(ValueError, match="nonzero"):
        update_atom_fista(K, np.eye(3), np.zeros(3), np.ones(3))


def test_fista_nonfinite_input_errors():
    K = np.eye(3)
    E = np.full((3, 3), np.nan)
    with pytest.raises(ValueError):
        update_atom_fista(K, E, np.ones(3), np.ones(3))


# -- normalization ------------------------------------------------------------

def test_normalize_atom_scaling():
    K = 4.0 * np.eye(3)
    a = np.array([1.0, 0.0, 0.0])  # a^T K a = 4
    scaled, scale = normalize_atom(K, a)
    assert scale == pytest.approx(2.0)
    assert np.allclose(scaled, a / 2.0)
    assert float(scaled @ K @ scaled) == pytest.approx(1.0, abs=1e-10)


def test_normalize_atom_already_normalized():
    rng = np.random.default_rng(10)
    K = random_psd(rng, 4) + np.eye(4)
    a = np.abs(rng.standard_normal(4))
    a, _ = normalize_atom(K, a)
    again, scale = normalize_atom(K, a)
    assert scale == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(again, a, atol=1e-12)


def test_normalize_atom_product_invariance():
    rng = np.random.default_rng(11)
    K = random_psd(rng, 5) + np.eye(5)
    a = np.abs(rng.standard_normal(5)) + 0.1
    x = np.abs(rng.standard_normal(5))
    product = np.outer(a, x)
    scaled, scale = normalize_atom(K, a)
    assert np.allclose(np.outer(scaled, x * scale), product, atol=1e-10)


def test_normalize_atom_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        normalize_atom(np.eye(3), np.zeros(3))


# -- training loop ------------------------------------------------------------

def test_train_self_representation():
    rng = np.random.default_rng(12)
    n = 5
    K = random_psd(rng, n) + np.eye(n)
    cfg = TrainConfig(n_atoms=n, sparsity=1, lam=0.01, epochs=3, rng_seed=0)
    A, X, trace = train_dictionary(K, cfg, init_A=np.eye(n))
    # every sample codes itself: reconstruction error collapses immediately
    assert trace.rec_error_percent[0] < 1e-8
    assert trace.final_error_percent < 1e-8
    assert np.all(np.sum(X > 0, axis=0) <= 1)


def test_train_stops_after_one_epoch_with_infinite_rel_tol():
    rng = np.random.default_rng(13)
    K = GramMatrix(values=random_psd(rng, 8) + np.eye(8), sigma=1.0)
    cfg = TrainConfig(n_atoms=3, sparsity=2, lam=0.1, epochs=50,
                      rel_tol=float("inf"), rng_seed=1)
    _, _, trace = train_dictionary(K, cfg)
    assert trace.n_epochs == 1
    assert trace.stopped_by == "rel_tol"


def test_train_feasibility_and_monotonicity():
    rng = np.random.default_rng(14)
    n = 12
    K = random_psd(rng, n, scale=2.0) + 0.2 * np.eye(n)
    cfg = TrainConfig(n_atoms=4, sparsity=2, lam=0.1, epochs=8, rel_tol=1e-9,
                      rng_seed=2)
    checked = []

    def callback(epoch, A, X):
        assert np.min(A) >= 0.0
        assert np.min(X) >= 0.0
        assert np.all(np.sum(X > 0, axis=0) <= cfg.sparsity)
        for j in range(cfg.n_atoms):
            assert abs(float(A[:, j] @ K @ A[:, j]) - 1.0) < 1e-8
        checked.append(epoch)
        return False

    A, X, trace = train_dictionary(K, cfg, epoch_callback=callback)
    assert checked  # callback ran
    for ra, rb in zip(trace.stage_a_recon, trace.stage_b_recon):
        assert rb <= ra + 1e-8
    assert np.min(A) >= 0.0 and np.min(X) >= 0.0


def test_train_replaces_dead_atoms():
    # atom 1 duplicates atom 0; coding ties pick the first, leaving atom 1
    # permanently unused until the replacement scan re-seeds it
    K = np.eye(4)
    init_A = np.zeros((4, 4))
    init_A[0, 0] = 1.0
    init_A[0, 1] = 1.0  # duplicate of atom 0
    init_A[1, 2] = 1.0
    init_A[2, 3] = 1.0
    cfg = TrainConfig(n_atoms=4, sparsity=2, lam=0.01, epochs=2, rel_tol=1e-12,
                      rng_seed=3)
    A, X, trace = train_dictionary(K, cfg, init_A=init_A)
    assert sum(trace.replacements) > 0
    assert all(event[0] >= 1 for event in trace.events)
    for j in range(4):
        assert abs(float(A[:, j] @ K @ A[:, j]) - 1.0) < 1e-8


def test_train_matches_explicit_feature_mirror():
    rng = np.random.default_rng(16)
    n = 12
    Y = rng.standard_normal((20, n))
    K = Y.T @ Y
    init_A = np.abs(rng.standard_normal((n, 4))) + 0.01
    cfg = TrainConfig(n_atoms=4, sparsity=2, lam=0.1, epochs=10, rel_tol=1e-6,
                      rng_seed=4)
    A, X, trace = train_dictionary(K, cfg, init_A=init_A)
    A_ref, X_ref, trace_ref, final_ref = train_dictionary_features(
        Y, init_A, sparsity=2, lam=0.1, epochs=10, rel_tol=1e-6
    )
    assert len(trace.objective) == len(trace_ref)
    scale = max(1.0, abs(trace_ref[-1]))
    assert abs(trace.objective[-1] - trace_ref[-1]) < 1e-6 * scale
    assert abs(trace.final_error_percent - final_ref) < 1e-6


def test_train_rejects_bad_shapes():
    K = np.eye(4)
    with pytest.raises(ValueError, match="exceeds"):
        train_dictionary(K, TrainConfig(n_atoms=5, sparsity=1))
    with pytest.raises(ValueError, match="shape"):
        train_dictionary(K, TrainConfig(n_atoms=2, sparsity=1),
                         init_A=np.ones((4, 3)))
    with pytest.raises(ValueError, match="nonnegative"):
        train_dictionary(K, TrainConfig(n_atoms=2, sparsity=1),
                         init_A=-np.ones((4, 2)))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(n_atoms=0)
    with pytest.raises(ValueError):
        TrainConfig(n_atoms=2, eta=1.5)
    with pytest.raises(ValueError):
        TrainConfig(n_atoms=2, rel_tol=0.0)
    with pytest.raises(ValueError):
        TrainConfig(n_atoms=2, sparsity=0)


def test_trace_csv_roundtrip(tmp_path):
    trace = TrainTrace()
    trace.objective.extend([2.0, 1.0])
    trace.rec_error_percent.extend([20.0, 10.0])
    trace.coding_error_percent.extend([25.0, 12.0])
    trace.replacements.extend([1, 0])
    trace.stage_a_recon.extend([2.5, 1.2])
    trace.stage_b_recon.extend([2.0, 1.0])
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,objective,rec_error_percent,replacements"
    assert lines[1].startswith("1,2.0,20.0,1")
    assert len(lines) == 3
