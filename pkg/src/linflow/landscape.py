"""Stationarity probes, collapse maps between problem levels, and the
truncation-based global-minimum oracle.

A depth-N problem collapses to a two-factor problem (P, Q) at the narrowest
interface, then to a fixed-design PCA problem (P, QX). The PCA level has a
closed-form global minimum via SVD truncation, which gives an independent
target value for converged trajectories. Stationarity classification is by
sampling: it can certify a strict saddle (one negative direction suffices)
but only gather evidence for second-order optimality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import (
    LayerGradient,
    LinearNetwork,
    end_to_end,
    gradient,
    min_width,
    prefix_suffix_products,
)
from .spectral import thin_svd

TOL_SCALE = 1e-6  # stationarity thresholds are TOL_SCALE * (1 + ||Y X^T||_F)

CLASS_NOT_STATIONARY = "not-stationary"
CLASS_STRICT_SADDLE = "strict-saddle"
CLASS_SOSP_CANDIDATE = "sosp-candidate"


def stationarity_tolerance(data) -> float:
    return TOL_SCALE * (1.0 + float(np.linalg.norm(data.Y @ data.X.T)))


@dataclass(frozen=True)
class StationarityReport:
    grad_norm: float
    min_quadratic_form: float
    classification: str
    directions_sampled: int

    def to_json(self) -> dict:
        return {
            "grad_norm": self.grad_norm,
            "min_quadratic_form": self.min_quadratic_form,
            "classification": self.classification,
            "directions_sampled": self.directions_sampled,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return path


def _as_direction(net: LinearNetwork, deltas) -> list:
    if isinstance(deltas, LayerGradient):
        deltas = deltas.per_layer
    deltas = [np.asarray(D, dtype=float) for D in deltas]
    if len(deltas) != net.depth:
        raise ValueError(f"expected {net.depth} direction blocks, got {len(deltas)}")
    for D, W in zip(deltas, net.layers):
        if D.shape != W.shape:
            raise ValueError(f"direction block shape {D.shape} != layer shape {W.shape}")
    return deltas


def _segment_products(layers):
    """seg[(a, b)] = W_b ... W_a for 1 <= a <= b <= N (1-based)."""
    N = len(layers)
    seg = {}
    for a in range(1, N + 1):
        P = layers[a - 1]
        seg[(a, a)] = P
        for b in range(a + 1, N + 1):
            P = layers[b - 1] @ P
            seg[(a, b)] = P
    return seg


def second_order_form(net: LinearNetwork, data, deltas) -> float:
    """Exact second directional derivative of the loss at net along deltas.

    Expanding the layer product to second order in h gives
    d^2/dh^2 L = ||S1 X||_F^2 + 2 <W X - Y, S2 X>, where S1 substitutes the
    perturbation into one slot at a time and S2 into two distinct slots.
    """
    deltas = _as_direction(net, deltas)
    N = net.depth
    layers = net.layers
    prefix, suffix = prefix_suffix_products(net)
    S1 = np.zeros((layers[-1].shape[0], layers[0].shape[1]))
    for j in range(1, N + 1):
        S1 += suffix[j] @ deltas[j - 1] @ prefix[j - 1]
    seg = _segment_products(layers)
    S2 = np.zeros_like(S1)
    for i in range(1, N + 1):
        for j in range(i + 1, N + 1):
            if i + 1 <= j - 1:
                mid = seg[(i + 1, j - 1)]
                inner = deltas[j - 1] @ mid @ deltas[i - 1]
            else:
                inner = deltas[j - 1] @ deltas[i - 1]
            S2 += suffix[j] @ inner @ prefix[i - 1]
    S1X = S1 @ data.X
    R = prefix[-1] @ data.X - data.Y
    return float(np.sum(S1X * S1X)) + 2.0 * float(np.sum(R * (S2 @ data.X)))


def _cross_pair_directions(net: LinearNetwork, data):
    """Rank-1 two-slot probes aimed along the steepest interface residual.

    At each adjacent interface, the cross term of the quadratic form couples
    Delta_{j+1} Delta_j to an effective residual matrix; choosing the pair
    from its top singular triple with opposite signs drives the cross term
    negative. At the zero network with N=2 this recovers the classic escape
    direction even though the gradient vanishes.
    """
    prefix, suffix = prefix_suffix_products(net)
    G = prefix[-1] @ (data.X @ data.X.T) - data.Y @ data.X.T
    dirs = []
    for j in range(1, net.depth):
        B = suffix[j + 1].T @ G @ prefix[j - 1].T
        svd = thin_svd(B)
        if svd.rank == 0:
            continue
        u1 = svd.U[:, 0]
        v1 = svd.V[:, 0]
        d_mid = net.layers[j].shape[1]
        w = np.zeros(d_mid)
        w[0] = 1.0
        blocks = [np.zeros_like(W) for W in net.layers]
        blocks[j] = np.outer(u1, w)
        blocks[j - 1] = -np.outer(w, v1)
        dirs.append(blocks)
    return dirs


def _single_layer_directions(net: LinearNetwork, rng):
    dirs = []
    for j in range(net.depth):
        blocks = [np.zeros_like(W) for W in net.layers]
        blocks[j] = rng.standard_normal(net.layers[j].shape)
        dirs.append(blocks)
    return dirs


def _normalize_direction(blocks):
    total = np.sqrt(sum(float(np.sum(B * B)) for B in blocks))
    if total == 0.0:
        return None
    return [B / total for B in blocks]


def classify_stationarity(net: LinearNetwork, data, num_dirs: int, seed: int) -> StationarityReport:
    """Gradient-norm gate, then quadratic-form sampling over random plus
    structured directions."""
    if num_dirs < 1:
        raise ValueError("num_dirs must be >= 1")
    tol = stationarity_tolerance(data)
    grad_norm = gradient(net, data).norm()
    rng = np.random.Generator(np.random.Philox(key=seed))
    candidates = []
    for _ in range(num_dirs):
        candidates.append([rng.standard_normal(W.shape) for W in net.layers])
    candidates.extend(_single_layer_directions(net, rng))
    candidates.extend(_cross_pair_directions(net, data))
    min_q = np.inf
    sampled = 0
    for blocks in candidates:
        unit = _normalize_direction(blocks)
        if unit is None:
            continue
        sampled += 1
        min_q = min(min_q, second_order_form(net, data, unit))
    if grad_norm > tol:
        label = CLASS_NOT_STATIONARY
    elif min_q < -tol:
        label = CLASS_STRICT_SADDLE
    else:
        label = CLASS_SOSP_CANDIDATE
    return StationarityReport(
        grad_norm=float(grad_norm),
        min_quadratic_form=float(min_q),
        classification=label,
        directions_sampled=sampled,
    )


def collapse_to_pq(net: LinearNetwork):
    """Split the product at the first narrowest interface.

    Returns (P, Q) with P Q equal to the end-to-end matrix. Depth 1 returns
    (W, I) so the map is total.
    """
    if net.depth == 1:
        W = net.layers[0]
        return W.copy(), np.eye(W.shape[1])
    dims = net.dims
    j0 = int(np.argmin(dims))
    prefix, suffix = prefix_suffix_products(net)
    return suffix[j0].copy(), prefix[j0].copy()


def pq_to_pca(P, Q, X):
    """Absorb the design matrix into the narrow factor: (P, Q X)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if Q.shape[1] != X.shape[0]:
        raise ValueError(f"Q has {Q.shape[1]} columns but X has {X.shape[0]} rows")
    return np.atleast_2d(np.asarray(P, dtype=float)), Q @ X


def pca_global_min(M, r: int):
    """Global minimum of 0.5||M - P Q'||_F^2 over rank-r factorizations.

    Returns (value, Popt, Qopt) with value = half the sum of squared
    discarded singular values; Popt Qopt is the best rank-r truncation.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    k = min(r, s.size)
    value = 0.5 * float(np.sum(s[k:] ** 2))
    Popt = np.zeros((M.shape[0], r))
    Qopt = np.zeros((r, M.shape[1]))
    Popt[:, :k] = U[:, :k]
    Qopt[:k, :] = s[:k, None] * Vt[:k, :]
    return value, Popt, Qopt


def pca_gradient_norm(P, Qp, M) -> float:
    """Gradient norm of 0.5||M - P Q'||_F^2 at (P, Q'). Correspondence probe."""
    R = P @ Qp - M
    gP = R @ Qp.T
    gQ = P.T @ R
    return float(np.sqrt(np.sum(gP * gP) + np.sum(gQ * gQ)))


def global_min_value(data, r: int) -> float:
    """Minimum of the depth-N loss over networks whose narrowest width is r.

    Splits Y into its components on and off the row span of X; the on-span
    part reduces to the PCA problem, the off-span part is an irreducible
    floor. Requires X to have full row rank.
    """
    svd = thin_svd(data.X)
    if svd.rank < data.X.shape[0]:
        raise ValueError("X X^T is singular; global minimum formula needs full row rank")
    V = svd.V
    Y_on = (data.Y @ V) @ V.T
    Y_off = data.Y - Y_on
    value, _, _ = pca_global_min(Y_on, r)
    return 0.5 * float(np.sum(Y_off * Y_off)) + value


def lazy_feasibility_check(W0, Z) -> bool:
    """Whether ||Z - W0||_F < s_min(Z), the premise of the local
    perturbation argument. False means that argument cannot apply."""
    W0 = np.atleast_2d(np.asarray(W0, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if W0.shape != Z.shape:
        raise ValueError(f"shape mismatch {W0.shape} vs {Z.shape}")
    s = np.linalg.svd(Z, compute_uv=False)
    s_min = float(s[-1]) if s.size else 0.0
    return float(np.linalg.norm(Z - W0)) < s_min
