"""Stationary-point classification, PCA collapse, and global minimum values."""

import numpy as np
import pytest

from linflow.dataset import Dataset, InstanceSpec, compute_target, generate_instance
from linflow.flows import IntegratorConfig, integrate_factor_flow
from linflow.landscape import (
    CLASS_NOT_STATIONARY,
    CLASS_SOSP_CANDIDATE,
    CLASS_STRICT_SADDLE,
    classify_stationarity,
    collapse_to_pq,
    global_min_value,
    lazy_feasibility_check,
    pca_global_min,
    pq_to_pca,
    second_order_form,
    stationarity_tolerance,
)
from linflow.network import LinearNetwork, balanced_factorization, end_to_end, loss

SECOND_ORDER_FD_TOL = 1e-4
COLLAPSE_TOL = 1e-12


def _whitened_data(rng, d_x, d_y, m):
    X = np.sqrt(m) * np.linalg.qr(rng.standard_normal((m, d_x)))[0].T
    Y = rng.standard_normal((d_y, m))
    return Dataset(X=X, Y=Y, m=m, whitened=True)


def _zero_net(chain):
    return LinearNetwork(
        layers=tuple(np.zeros((chain[j + 1], chain[j])) for j in range(len(chain) - 1))
    )


def test_second_order_form_matches_finite_differences():
    rng = np.random.default_rng(14)
    chain = (4, 3, 2)
    net = LinearNetwork(
        layers=tuple(
            0.7 * rng.standard_normal((chain[j + 1], chain[j])) for j in range(2)
        )
    )
    data = _whitened_data(rng, 4, 2, 9)
    for _ in range(5):
        deltas = [rng.standard_normal(W.shape) for W in net.layers]
        h = 1e-4
        vals = []
        for c in (-1.0, 0.0, 1.0):
            shifted = LinearNetwork(
                layers=tuple(W + c * h * D for W, D in zip(net.layers, deltas))
            )
            vals.append(loss(shifted, data))
        fd = (vals[0] - 2.0 * vals[1] + vals[2]) / h**2
        exact = second_order_form(net, data, deltas)
        assert exact == pytest.approx(fd, rel=SECOND_ORDER_FD_TOL, abs=1e-6)


def test_zero_two_layer_network_is_a_strict_saddle():
    rng = np.random.default_rng(4)
    data = _whitened_data(rng, 3, 2, 8)
    report = classify_stationarity(_zero_net((3, 2, 2)), data, num_dirs=32, seed=0)
    assert report.classification == CLASS_STRICT_SADDLE
    assert report.min_quadratic_form < 0


def test_zero_three_layer_network_shows_no_curvature():
    # Every second-order term carries at least one surviving zero factor, so
    # probing finds nothing negative: the stall is invisible at this order.
    rng = np.random.default_rng(4)
    data = _whitened_data(rng, 3, 2, 8)
    report = classify_stationarity(_zero_net((3, 2, 2, 2)), data, num_dirs=32, seed=0)
    assert report.classification == CLASS_SOSP_CANDIDATE
    assert report.min_quadratic_form == pytest.approx(0.0, abs=1e-12)


def test_nonstationary_point_is_labelled_as_such():
    rng = np.random.default_rng(6)
    data = _whitened_data(rng, 3, 2, 8)
    net = LinearNetwork(
        layers=(rng.standard_normal((2, 3)), rng.standard_normal((2, 2)))
    )
    report = classify_stationarity(net, data, num_dirs=8, seed=1)
    assert report.classification == CLASS_NOT_STATIONARY


def test_stationarity_tolerance_scales_with_target():
    rng = np.random.default_rng(9)
    data = _whitened_data(rng, 3, 2, 8)
    want = 1e-6 * (1.0 + float(np.linalg.norm(data.Y @ data.X.T)))
    assert stationarity_tolerance(data) == pytest.approx(want, rel=1e-12)


def test_collapse_preserves_the_product():
    rng = np.random.default_rng(19)
    chain = (5, 4, 2, 3, 1)
    net = LinearNetwork(
        layers=tuple(
            rng.standard_normal((chain[j + 1], chain[j])) for j in range(len(chain) - 1)
        )
    )
    P, Q = collapse_to_pq(net)
    np.testing.assert_allclose(P @ Q, end_to_end(net), atol=COLLAPSE_TOL)
    # The split interface has the narrowest width.
    assert P.shape[1] == min(chain)
    assert Q.shape[0] == min(chain)


def test_collapse_depth_one_convention():
    W = np.arange(6.0).reshape(2, 3)
    P, Q = collapse_to_pq(LinearNetwork(layers=(W,)))
    np.testing.assert_allclose(P, W)
    np.testing.assert_allclose(Q, np.eye(3))


def test_collapse_then_pca_preserves_loss():
    rng = np.random.default_rng(23)
    data = _whitened_data(rng, 4, 2, 10)
    net = LinearNetwork(
        layers=(rng.standard_normal((3, 4)), rng.standard_normal((2, 3)))
    )
    P, Q = collapse_to_pq(net)
    P2, QX = pq_to_pca(P, Q, data.X)
    pca_loss = 0.5 * float(np.sum((data.Y - P2 @ QX) ** 2))
    assert pca_loss == pytest.approx(loss(net, data), rel=1e-12)


def test_pca_global_min_is_the_singular_tail():
    rng = np.random.default_rng(33)
    for _ in range(10):
        M = rng.standard_normal((4, 6))
        s = np.linalg.svd(M, compute_uv=False)
        for r in (1, 2, 3):
            value, P, Q = pca_global_min(M, r)
            assert value == pytest.approx(0.5 * np.sum(s[r:] ** 2), abs=1e-10)
            # The reported factors attain the reported value.
            attained = 0.5 * np.linalg.norm(M - P @ Q) ** 2
            assert attained == pytest.approx(value, abs=1e-10)


def test_global_min_value_against_direct_formula():
    rng = np.random.default_rng(37)
    data = _whitened_data(rng, 4, 3, 12)
    Z = data.Y @ data.X.T / data.m
    # On-span part reduces to m/2 times the tail of Z's spectrum; the
    # off-span part of Y is an irreducible floor.
    P_row = data.X.T @ data.X / data.m
    Y_off = data.Y - data.Y @ P_row
    sZ = np.linalg.svd(Z, compute_uv=False)
    for r in (1, 2, 3):
        want = 0.5 * np.sum(Y_off**2) + 0.5 * data.m * np.sum(sZ[r:] ** 2)
        assert global_min_value(data, r) == pytest.approx(want, rel=1e-10)


def test_converged_flow_reaches_the_global_minimum():
    data, W0 = generate_instance(
        InstanceSpec(d_x=5, d_y=1, m=50, seed=12, init_angle_deg=20.0, init_scale=1.5)
    )
    net0 = balanced_factorization(W0, (5, 5, 1))
    # The loss gap closes by T = 0.4 but the gradient needs until about
    # T = 0.8 to drop under the stationarity tolerance.
    cfg = IntegratorConfig(method="rk4", dt=1e-5, steps=80_000, record_every=8000)
    traj = integrate_factor_flow(net0, data, cfg)
    end = traj.states[-1]
    gm = global_min_value(data, 1)
    assert abs(loss(end, data) - gm) <= 1e-6 * (1.0 + gm)
    report = classify_stationarity(end, data, num_dirs=16, seed=3)
    assert report.classification == CLASS_SOSP_CANDIDATE


def test_lazy_feasibility_hand_cases():
    Z = np.diag([2.0, 1.0])
    assert lazy_feasibility_check(Z + 0.05 * np.eye(2), Z)
    assert not lazy_feasibility_check(np.zeros((2, 2)), Z)


def test_lazy_feasibility_fails_far_from_target():
    data, W0 = generate_instance(
        InstanceSpec(d_x=5, d_y=1, m=50, seed=36, init_angle_deg=30.0, init_scale=10.0)
    )
    ts = compute_target(data)
    assert not lazy_feasibility_check(W0, ts.matrix)
