"""Layered linear networks: end-to-end products, loss, per-layer gradients,
balancedness, and constructive balanced factorization of a target matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import RANK_TOL, thin_svd


class InfeasibleFactorization(ValueError):
    """Raised when a matrix cannot be factored through the requested widths."""


@dataclass(frozen=True)
class LinearNetwork:
    """Ordered layers (W_1, ..., W_N); layer j maps d_{j-1} -> d_j."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(np.asarray(W, dtype=float) for W in self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for j in range(1, len(layers)):
            if layers[j].shape[1] != layers[j - 1].shape[0]:
                raise ValueError(
                    f"layer {j + 1} expects {layers[j].shape[1]} inputs but "
                    f"layer {j} produces {layers[j - 1].shape[0]}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple:
        """Width chain (d_0, d_1, ..., d_N)."""
        return (self.layers[0].shape[1],) + tuple(W.shape[0] for W in self.layers)


@dataclass(frozen=True)
class LayerGradient:
    """Per-layer matrices with the same shapes as the network layers."""

    per_layer: tuple

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(G * G) for G in self.per_layer)))


def end_to_end(net: LinearNetwork) -> np.ndarray:
    """Product W_N ... W_1 of all layers."""
    W = net.layers[0]
    for layer in net.layers[1:]:
        W = layer @ W
    return W


def min_width(net: LinearNetwork) -> int:
    """Smallest width over the full chain d_0, ..., d_N."""
    return min(net.dims)


def loss(net: LinearNetwork, data) -> float:
    """Squared-error loss 0.5 * ||Y - W_N...W_1 X||_F^2."""
    W = end_to_end(net)
    if W.shape[1] != data.X.shape[0] or W.shape[0] != data.Y.shape[0]:
        raise ValueError(
            f"network maps {W.shape[1]} -> {W.shape[0]} but data has "
            f"d_x={data.X.shape[0]}, d_y={data.Y.shape[0]}"
        )
    R = W @ data.X - data.Y
    return 0.5 * float(np.sum(R * R))


def prefix_suffix_products(net: LinearNetwork):
    """Partial products around each layer.

    Returns (prefix, suffix) where prefix[j] = W_j ... W_1 (prefix[0] = I) and
    suffix[j] = W_N ... W_{j+1} (suffix[N] = I). Layer j sits between
    suffix[j] on the left and prefix[j-1] on the right.
    """
    N = net.depth
    prefix = [np.eye(net.layers[0].shape[1])]
    for j in range(N):
        prefix.append(net.layers[j] @ prefix[j])
    suffix = [np.eye(net.layers[-1].shape[0])]
    for j in range(N - 1, -1, -1):
        suffix.append(suffix[-1] @ net.layers[j])
    suffix.reverse()
    return prefix, suffix


def gradient(net: LinearNetwork, data) -> LayerGradient:
    """Per-layer gradients of the loss.

    grad_j = (W_N...W_{j+1})^T (W X X^T - Y X^T) (W_{j-1}...W_1)^T, with empty
    products taken as identity. Validated against central finite differences.
    """
    d0 = net.layers[0].shape[1]
    dN = net.layers[-1].shape[0]
    if d0 != data.X.shape[0] or dN != data.Y.shape[0]:
        raise ValueError("network/data shape mismatch")
    prefix, suffix = prefix_suffix_products(net)
    R = prefix[-1] @ (data.X @ data.X.T) - data.Y @ data.X.T
    grads = tuple(
        suffix[j].T @ R @ prefix[j - 1].T for j in range(1, net.depth + 1)
    )
    return LayerGradient(grads)


def balance_residual(net: LinearNetwork) -> float:
    """Max over adjacent pairs of ||W_{j+1}^T W_{j+1} - W_j W_j^T||_F.

    Zero for depth-1 networks. A balanced network keeps this at zero along
    the exact gradient flow.
    """
    worst = 0.0
    for j in range(net.depth - 1):
        A = net.layers[j + 1].T @ net.layers[j + 1]
        B = net.layers[j] @ net.layers[j].T
        worst = max(worst, float(np.linalg.norm(A - B)))
    return worst


def balanced_factorization(W0, dims) -> LinearNetwork:
    """Factor W0 into balanced layers along the given width chain.

    Takes the thin SVD W0 = U S V^T of rank k and threads it through
    orthonormal-column bridge matrices: A_0 = V, A_N = U, interior A_j the
    first k columns of the identity. Layer j is A_j S^{1/N} A_{j-1}^T, so the
    product telescopes back to W0 and adjacent balance holds exactly.
    """
    W0 = np.asarray(W0, dtype=float)
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("dims chain needs at least (d_0, d_1)")
    if dims[0] != W0.shape[1] or dims[-1] != W0.shape[0]:
        raise ValueError(
            f"dims chain ends ({dims[0]}, {dims[-1]}) do not match W0 shape {W0.shape}"
        )
    N = len(dims) - 1
    svd = thin_svd(W0)
    k = svd.rank
    if k > min(dims):
        raise InfeasibleFactorization(
            f"rank {k} exceeds the narrowest width {min(dims)}"
        )
    if k == 0:
        return LinearNetwork(
            tuple(np.zeros((dims[j + 1], dims[j])) for j in range(N))
        )
    root = svd.s ** (1.0 / N)
    bridges = [svd.V]
    for j in range(1, N):
        bridges.append(np.eye(dims[j], k))
    bridges.append(svd.U)
    layers = []
    for j in range(N):
        layers.append((bridges[j + 1] * root) @ bridges[j].T)
    return LinearNetwork(tuple(layers))


def rank_of_product(net: LinearNetwork) -> int:
    """Numerical rank of the end-to-end matrix."""
    s = np.linalg.svd(end_to_end(net), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))
