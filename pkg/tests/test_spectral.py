"""Tests for thin SVD helpers, low-rank truncation, and fractional powers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from linflow.spectral import (
    best_rank_r,
    frac_sym_power,
    row_projectors,
    target_spectrum,
    thin_svd,
)

EXACT_TOL = 1e-12
RECON_TOL = 1e-10
POWER_TOL = 1e-9


def test_diagonal_singular_values():
    t = thin_svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(t.singular_values, [3.0, 1.0], atol=EXACT_TOL)
    assert t.rank == 2


def test_zero_matrix_has_rank_zero():
    t = thin_svd(np.zeros((3, 2)))
    assert t.rank == 0
    np.testing.assert_allclose(t.singular_values, 0.0, atol=EXACT_TOL)


def test_ones_matrix_is_rank_one():
    # [[1,1],[1,1]] = 2 * outer(e, e) with e the normalized ones vector;
    # the thin form keeps only the surviving direction.
    t = thin_svd(np.ones((2, 2)))
    assert t.rank == 1
    np.testing.assert_allclose(t.singular_values, [2.0], atol=EXACT_TOL)
    t_full = thin_svd(np.ones((2, 2)), full=True)
    np.testing.assert_allclose(t_full.singular_values, [2.0, 0.0], atol=EXACT_TOL)


def test_reconstruction_and_orthonormal_frames():
    rng = np.random.default_rng(7)
    for shape in ((4, 6), (6, 4), (1, 5), (5, 1), (3, 3)):
        M = rng.standard_normal(shape)
        t = thin_svd(M)
        np.testing.assert_allclose(t.reconstruct(), M, atol=RECON_TOL)
        k = min(shape)
        np.testing.assert_allclose(t.U.T @ t.U, np.eye(k), atol=RECON_TOL)
        np.testing.assert_allclose(t.V.T @ t.V, np.eye(k), atol=RECON_TOL)
        assert np.all(np.diff(t.singular_values) <= 0)


def test_sign_convention_is_deterministic():
    # Leading nonzero entry of every left vector is nonnegative, so repeated
    # factorizations of equal inputs cannot disagree by a joint sign flip.
    rng = np.random.default_rng(11)
    for _ in range(20):
        M = rng.standard_normal((4, 4))
        t = thin_svd(M)
        for j in range(t.U.shape[1]):
            col = t.U[:, j]
            lead = col[np.nonzero(np.abs(col) > EXACT_TOL)[0][0]]
            assert lead > 0
        t2 = thin_svd(M.copy())
        np.testing.assert_array_equal(t.U, t2.U)
        np.testing.assert_array_equal(t.V, t2.V)


def _best_rank_r_by_eig(M, r):
    """Independent reference: project onto top eigenvectors of M^T M."""
    lam, V = np.linalg.eigh(M.T @ M)
    order = np.argsort(lam)[::-1]
    Vr = V[:, order[:r]]
    return M @ Vr @ Vr.T


def test_best_rank_r_matches_eigenvector_route():
    rng = np.random.default_rng(23)
    for _ in range(25):
        M = rng.standard_normal((5, 4))
        for r in (1, 2, 3):
            got = best_rank_r(M, r)
            want = _best_rank_r_by_eig(M, r)
            np.testing.assert_allclose(got, want, atol=1e-8)


@settings(deadline=None, max_examples=60)
@given(
    arrays(
        np.float64,
        (4, 5),
        elements=st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
    ),
    st.integers(min_value=1, max_value=4),
)
def test_truncation_residual_is_the_singular_tail(M, r):
    # The optimal residual value is robust even when the subspace is not
    # unique, so compare values rather than matrices.
    s = np.linalg.svd(M, compute_uv=False)
    resid = np.linalg.norm(M - best_rank_r(M, r)) ** 2
    np.testing.assert_allclose(resid, np.sum(s[r:] ** 2), atol=1e-8)


def test_half_power_of_diagonal_gram():
    np.testing.assert_allclose(
        frac_sym_power(np.diag([4.0, 0.0]), 0.5), np.diag([2.0, 0.0]), atol=EXACT_TOL
    )


def test_power_one_is_identity_map():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 4))
    S = A @ A.T
    np.testing.assert_allclose(frac_sym_power(S, 1.0), S, atol=1e-10)


def test_small_power_annihilates_exact_null_direction():
    # An exactly singular Gram matrix must keep an exact zero after a small
    # fractional power; eigenvalue noise at 1e-16 would otherwise surface as
    # (1e-16)**(1/5) ~ 6e-4.
    v = np.array([3.0, 4.0]) / 5.0
    S = np.outer(v, v)
    P = frac_sym_power(S, 0.2)
    w = np.array([-v[1], v[0]])
    np.testing.assert_allclose(P @ w, 0.0, atol=1e-12)
    np.testing.assert_allclose(P @ v, v, atol=1e-12)


@settings(deadline=None, max_examples=40)
@given(
    arrays(
        np.float64,
        (3, 3),
        elements=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False),
    ),
    st.sampled_from([0.25, 0.5, 1.0 / 3.0]),
)
def test_fractional_powers_compose(A, p):
    S = A @ A.T + 1e-6 * np.eye(3)
    left = frac_sym_power(S, p) @ frac_sym_power(S, 1.0 - p)
    np.testing.assert_allclose(left, S, atol=POWER_TOL)


def test_row_projectors_split_identity():
    # Projectors act on the sample axis: P keeps the span of X's rows.
    rng = np.random.default_rng(5)
    X = rng.standard_normal((3, 8))
    P, P_perp = row_projectors(X)
    np.testing.assert_allclose(P + P_perp, np.eye(8), atol=1e-10)
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(X @ P, X, atol=1e-9)
    np.testing.assert_allclose(X @ P_perp, 0.0, atol=1e-9)


def test_target_spectrum_of_diagonal():
    ts = target_spectrum(np.diag([3.0, 1.0]))
    assert ts.s == pytest.approx(3.0)
    assert ts.s2 == pytest.approx(1.0)
    assert ts.gap == pytest.approx(1.0 / 3.0)
    assert not ts.degenerate
    np.testing.assert_allclose(ts.rank_one, np.diag([3.0, 0.0]), atol=EXACT_TOL)


def test_target_spectrum_row_vector_has_zero_gap():
    ts = target_spectrum(np.array([[3.0, 4.0]]))
    assert ts.s == pytest.approx(5.0)
    assert ts.s2 == 0.0
    assert ts.gap == 0.0


def test_target_spectrum_zero_matrix_is_degenerate():
    ts = target_spectrum(np.zeros((2, 3)))
    assert ts.degenerate
    assert ts.s == 0.0
