"""Cross-checks for the depth-induced preconditioning operator.

The operator has two independent evaluation paths (a literal power-sum and a
singular-frame expansion); these tests pin them against each other and
against hand-computable cases, and check the structural properties that make
the flow well posed: linearity, self-adjointness, and a nonnegative quadratic
form.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linflow.dataset import Dataset
from linflow.induced import (
    OperatorContext,
    induced_rhs,
    precondition_by_definition,
    precondition_by_svd,
    precondition_row_vector,
    quadratic_form,
    residual_gradient,
)

ROUTE_TOL = 1e-9
HAND_TOL = 1e-12


def _ctx(W, depth):
    return OperatorContext(W=np.asarray(W, dtype=float), depth=depth)


def _random_pair(rng, d_y, d_x, depth, deficient=False):
    W = rng.standard_normal((d_y, d_x))
    if deficient and min(d_y, d_x) > 1:
        # Collapse onto a rank-one sheet to exercise zero singular values.
        u = rng.standard_normal(d_y)
        v = rng.standard_normal(d_x)
        W = np.outer(u, v)
    delta = rng.standard_normal((d_y, d_x))
    return W, delta, depth


def test_depth_one_is_the_identity():
    rng = np.random.default_rng(1)
    W = rng.standard_normal((3, 4))
    delta = rng.standard_normal((3, 4))
    np.testing.assert_allclose(precondition_by_svd(_ctx(W, 1), delta), delta, atol=HAND_TOL)
    np.testing.assert_allclose(
        precondition_by_definition(_ctx(W, 1), delta), delta, atol=HAND_TOL
    )


def test_hand_value_singular_diagonal_depth_two():
    # W = diag(2, 0), delta = I: (WW^T)^(1/2) delta + delta (W^T W)^(1/2)
    # = diag(2,0) + diag(2,0) = diag(4,0), exactly, including the zeros.
    W = np.diag([2.0, 0.0])
    delta = np.eye(2)
    want = np.diag([4.0, 0.0])
    np.testing.assert_allclose(precondition_by_definition(_ctx(W, 2), delta), want, atol=HAND_TOL)
    np.testing.assert_allclose(precondition_by_svd(_ctx(W, 2), delta), want, atol=HAND_TOL)


def test_routes_agree_including_rank_deficient_states():
    rng = np.random.default_rng(77)
    cases = []
    for depth in (1, 2, 3, 4, 5):
        for k in range(8):
            d_y = int(rng.integers(1, 7))
            d_x = int(rng.integers(1, 7))
            cases.append(_random_pair(rng, d_y, d_x, depth, deficient=(k % 3 == 0)))
    for W, delta, depth in cases:
        ctx = _ctx(W, depth)
        a = precondition_by_definition(ctx, delta)
        b = precondition_by_svd(ctx, delta)
        scale = max(1.0, float(np.abs(a).max()))
        np.testing.assert_allclose(b, a, atol=ROUTE_TOL * scale)


@settings(deadline=None, max_examples=50)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=2**32 - 1))
def test_operator_is_linear_and_self_adjoint(depth, seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((3, 4))
    d1 = rng.standard_normal((3, 4))
    d2 = rng.standard_normal((3, 4))
    ctx = _ctx(W, depth)
    lin = precondition_by_svd(ctx, 2.0 * d1 - 0.5 * d2)
    np.testing.assert_allclose(
        lin,
        2.0 * precondition_by_svd(ctx, d1) - 0.5 * precondition_by_svd(ctx, d2),
        atol=1e-9,
    )
    # <d1, A(d2)> = <A(d1), d2>
    lhs = float(np.sum(d1 * precondition_by_svd(ctx, d2)))
    rhs = float(np.sum(precondition_by_svd(ctx, d1) * d2))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_quadratic_form_nonnegative_and_consistent():
    rng = np.random.default_rng(13)
    for _ in range(60):
        depth = int(rng.integers(1, 6))
        W, delta, _ = _random_pair(rng, 4, 3, depth, deficient=bool(rng.integers(2)))
        ctx = _ctx(W, depth)
        q = quadratic_form(ctx, delta)
        assert q >= -1e-12
        inner = float(np.sum(delta * precondition_by_svd(ctx, delta)))
        assert q == pytest.approx(inner, rel=1e-9, abs=1e-9)


def test_row_vector_closed_form_matches_frame_route():
    rng = np.random.default_rng(21)
    for depth in (2, 3, 6):
        w = rng.standard_normal(5)
        delta = rng.standard_normal(5)
        got = precondition_row_vector(w, depth, delta)
        ref = precondition_by_svd(_ctx(w[None, :], depth), delta[None, :])[0]
        np.testing.assert_allclose(got, ref, atol=1e-10)


def test_row_vector_scaling_law():
    # For a single-row state the operator is s^(2-2/N) on the orthogonal
    # component and N * s^(2-2/N) along the state direction.
    w = np.array([2.0, 0.0])
    along = np.array([1.0, 0.0])
    across = np.array([0.0, 1.0])
    depth = 3
    s_pow = 2.0 ** (2.0 - 2.0 / depth)
    np.testing.assert_allclose(
        precondition_row_vector(w, depth, along), depth * s_pow * along, atol=1e-12
    )
    np.testing.assert_allclose(
        precondition_row_vector(w, depth, across), s_pow * across, atol=1e-12
    )


def test_residual_gradient_and_fixed_point():
    rng = np.random.default_rng(31)
    m = 20
    X = np.sqrt(m) * np.linalg.qr(rng.standard_normal((m, 4)))[0].T
    Y = rng.standard_normal((2, m))
    data = Dataset(X=X, Y=Y, m=m, whitened=True)
    Z = Y @ X.T / m
    np.testing.assert_allclose(residual_gradient(Z, data), 0.0, atol=1e-9)
    for depth in (1, 2, 4):
        np.testing.assert_allclose(induced_rhs(_ctx(Z, depth), data), 0.0, atol=1e-7)


def test_induced_rhs_is_descent_direction():
    rng = np.random.default_rng(41)
    m = 30
    X = np.sqrt(m) * np.linalg.qr(rng.standard_normal((m, 5)))[0].T
    Y = rng.standard_normal((1, m))
    data = Dataset(X=X, Y=Y, m=m, whitened=True)
    W = rng.standard_normal((1, 5))
    for depth in (1, 2, 3):
        rhs = induced_rhs(_ctx(W, depth), data)
        grad = residual_gradient(W, data)
        # d/dt L = <grad, rhs> = -quadratic_form(grad) <= 0
        assert float(np.sum(grad * rhs)) <= 1e-12
