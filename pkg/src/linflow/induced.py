"""The induced flow on the end-to-end matrix and its state-dependent operator.

A depth-N layered parametrization does not yield plain gradient flow on the
product W: the velocity is a state-dependent linear preconditioner applied to
the gradient,

    precond(W, Delta) = sum_{j=1}^{N} (W W^T)^{(N-j)/N} Delta (W^T W)^{(j-1)/N}.

Two independent evaluation routes are kept: the literal power sum
(precondition_by_definition) and a singular-frame evaluation with diagonal
powers (precondition_by_svd, the default). The frame route must handle the
j=1 and j=N terms specially since their zero exponents act as the identity on
the full space, including the orthogonal complements of the ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import ThinSVD, frac_sym_power, thin_svd


@dataclass(frozen=True)
class OperatorContext:
    """End-to-end matrix W, the depth N, and W's cached thin SVD."""

    W: np.ndarray
    depth: int
    svd: ThinSVD = field(init=False, repr=False)

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "svd", thin_svd(W))

    @property
    def shape(self) -> tuple:
        return self.W.shape


def _check_shape(ctx: OperatorContext, delta: np.ndarray) -> np.ndarray:
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    if delta.shape != ctx.W.shape:
        raise ValueError(f"direction shape {delta.shape} != state shape {ctx.W.shape}")
    return delta


def precondition_by_definition(ctx: OperatorContext, delta) -> np.ndarray:
    """Literal N-term power sum. Reference route, kept for cross-checking."""
    delta = _check_shape(ctx, delta)
    N = ctx.depth
    WWt = ctx.W @ ctx.W.T
    WtW = ctx.W.T @ ctx.W
    out = np.zeros_like(delta)
    for j in range(1, N + 1):
        left = frac_sym_power(WWt, (N - j) / N)
        right = frac_sym_power(WtW, (j - 1) / N)
        out += left @ delta @ right
    return out


def frame_apply(U, s, V, depth: int, delta) -> np.ndarray:
    """Apply the preconditioner given any thin singular frame of the state.

    U (d_y by k) and V (d_x by k) need orthonormal columns with
    U diag(s) V^T equal to the state; zero singular values are fine. Core
    terms act on U^T Delta V; the j=1 and j=N terms additionally carry the
    parts of Delta outside the right and left ranges respectively.
    """
    if depth == 1:
        return np.array(delta, dtype=float, copy=True)
    s2 = s * s
    UtD = U.T @ delta
    DV = delta @ V
    core = UtD @ V
    acc = np.zeros_like(core)
    for j in range(1, depth + 1):
        row = s2 ** ((depth - j) / depth)
        col = s2 ** ((j - 1) / depth)
        acc += row[:, None] * core * col[None, :]
    edge = s2 ** ((depth - 1) / depth)
    out = U @ acc @ V.T
    out += U @ (edge[:, None] * (UtD - core @ V.T))
    out += ((DV - U @ core) * edge[None, :]) @ V.T
    return out


def precondition_by_svd(ctx: OperatorContext, delta) -> np.ndarray:
    """Singular-frame evaluation with diagonal fractional powers. Default route."""
    delta = _check_shape(ctx, delta)
    return frame_apply(ctx.svd.U, ctx.svd.s, ctx.svd.V, ctx.depth, delta)


def quadratic_form(ctx: OperatorContext, delta) -> float:
    """<Delta, precond(W, Delta)> as a sum of squared Frobenius norms.

    Each term contributes the square of a half-power-scaled block, so the
    value is nonnegative by construction. Computed independently of the two
    apply routes so tests can triangulate.
    """
    delta = _check_shape(ctx, delta)
    N = ctx.depth
    if N == 1:
        return float(np.sum(delta * delta))
    U, s, V = ctx.svd.U, ctx.svd.s, ctx.svd.V
    s2 = s * s
    UtD = U.T @ delta
    DV = delta @ V
    core = UtD @ V
    total = 0.0
    for j in range(1, N + 1):
        row = s2 ** ((N - j) / (2 * N))
        col = s2 ** ((j - 1) / (2 * N))
        B = row[:, None] * core * col[None, :]
        total += float(np.sum(B * B))
    half_edge = s2 ** ((N - 1) / (2 * N))
    left = half_edge[:, None] * (UtD - core @ V.T)
    right = (DV - U @ core) * half_edge[None, :]
    total += float(np.sum(left * left)) + float(np.sum(right * right))
    return total


def residual_gradient(W, data) -> np.ndarray:
    """Plain gradient of the end-to-end loss: W X X^T - Y X^T."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != data.X.shape[0] or W.shape[0] != data.Y.shape[0]:
        raise ValueError(
            f"state shape {W.shape} incompatible with data "
            f"({data.Y.shape[0]}, {data.X.shape[0]})"
        )
    return W @ (data.X @ data.X.T) - data.Y @ data.X.T


def induced_rhs(ctx: OperatorContext, data) -> np.ndarray:
    """Velocity of the end-to-end matrix: minus the preconditioned gradient."""
    return -precondition_by_svd(ctx, residual_gradient(ctx.W, data))


def precondition_row_vector(w, depth: int, delta) -> np.ndarray:
    """Closed form for a single-output state (1 by d_x row vector).

    Any row vector has rank at most one, so with s = ||w|| and v = w/s the
    power sum collapses exactly to s^(2-2/N) (Delta + (N-1)(Delta v) v^T).
    Used by the fast single-output integrator; unit tests pin it against
    precondition_by_svd.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if w.shape != delta.shape:
        raise ValueError("state and direction must have equal length")
    if depth == 1:
        return delta.copy()
    s = float(np.linalg.norm(w))
    if s == 0.0:
        return np.zeros_like(delta)
    v = w / s
    scale = s ** (2.0 - 2.0 / depth)
    return scale * (delta + (depth - 1) * (delta @ v) * v)
