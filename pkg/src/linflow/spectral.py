"""Spectral primitives: thin SVD, low-rank truncation, fractional PSD powers,
row projectors, and the target-spectrum summary used throughout the package.

Everything here is dense double precision on small matrices. Sign conventions
and rank tolerances are pinned so downstream golden tests are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative cutoff for numerical-rank decisions, measured against the largest
# singular value. Matches double-precision SVD backward error at these sizes.
RANK_TOL = 1e-10

# Symmetry / PSD tolerances for fractional powers.
SYM_TOL = 1e-10
EIG_CLAMP = -1e-10
# Eigenvalues of a Gram matrix that are exactly zero in exact arithmetic come
# out of eigh as O(eps * lambda_max) noise, and a small fractional power blows
# that noise up (1e-16 to the 1/5 is 6e-4). Zero them below this relative cut.
EIG_RANK_TOL = 1e-12


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {M.shape}")
    return M


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip column pairs so the first nonzero entry of each left vector is > 0."""
    U = U.copy()
    V = V.copy()
    for k in range(U.shape[1]):
        col = U[:, k]
        scale = np.max(np.abs(col))
        if scale == 0.0:
            continue
        nz = np.flatnonzero(np.abs(col) > 1e-12 * scale)
        if nz.size and col[nz[0]] < 0:
            U[:, k] = -col
            V[:, k] = -V[:, k]
    return U, V


@dataclass(frozen=True)
class ThinSVD:
    """Thin singular value decomposition M = U diag(s) V^T.

    left_vectors has orthonormal columns (d x k), right_vectors likewise
    (e x k), singular_values is nonincreasing and nonnegative.
    """

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    @property
    def U(self) -> np.ndarray:
        return self.left_vectors

    @property
    def s(self) -> np.ndarray:
        return self.singular_values

    @property
    def V(self) -> np.ndarray:
        return self.right_vectors

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def thin_svd(M, *, full: bool = False) -> ThinSVD:
    """Thin SVD with deterministic signs.

    By default only singular triples above RANK_TOL relative to s_max are
    retained (numerical rank). Pass full=True to keep all min(d, e) triples,
    e.g. when the smallest singular value itself is the quantity of interest.
    """
    M = _as_matrix(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    V = Vt.T
    if not full:
        smax = s[0] if s.size else 0.0
        k = int(np.sum(s > RANK_TOL * smax)) if smax > 0 else 0
        U, s, V = U[:, :k], s[:k], V[:, :k]
    U, V = _fix_signs(U, V)
    return ThinSVD(U, s, V)


def best_rank_r(M, r: int) -> np.ndarray:
    """Best rank-r approximation in Frobenius norm (SVD truncation)."""
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    M = _as_matrix(M)
    svd = thin_svd(M)
    k = min(r, svd.rank)
    U, s, V = svd.U[:, :k], svd.s[:k], svd.V[:, :k]
    return (U * s) @ V.T


def frac_sym_power(S, p: float) -> np.ndarray:
    """Fractional power S^p of a symmetric PSD matrix via eigendecomposition.

    Convention: lambda^0 = 1 for every eigenvalue including 0, so p = 0
    returns the full identity. This makes the depth-1 preconditioner reduce
    to the identity operator. Eigenvalues within EIG_CLAMP of zero are
    clamped to zero before powering.
    """
    S = _as_matrix(S)
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"expected square matrix, got {S.shape}")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"exponent must lie in [0, 1], got {p}")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > SYM_TOL * (1.0 + np.max(np.abs(S), initial=0.0)):
        raise ValueError(f"matrix asymmetry {asym:.3e} beyond tolerance")
    if p == 1.0:
        return 0.5 * (S + S.T)
    if p == 0.0:
        return np.eye(S.shape[0])
    lam, Q = np.linalg.eigh(0.5 * (S + S.T))
    if np.min(lam, initial=0.0) < EIG_CLAMP * (1.0 + np.max(np.abs(lam), initial=0.0)):
        raise ValueError(f"matrix has negative eigenvalue {lam.min():.3e}")
    lam = np.clip(lam, 0.0, None)
    if lam.size:
        lam[lam <= EIG_RANK_TOL * lam[-1]] = 0.0
    return (Q * lam**p) @ Q.T


def row_projectors(X) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal projector onto the row span of X, and its complement.

    Returns (P, P_perp), both m x m with P = pinv(X) X in exact arithmetic.
    Built from the thin SVD right vectors for numerical symmetry.
    """
    X = _as_matrix(X)
    m = X.shape[1]
    svd = thin_svd(X)
    P = svd.V @ svd.V.T
    P = 0.5 * (P + P.T)
    return P, np.eye(m) - P


@dataclass(frozen=True)
class TargetSpectrum:
    """Leading spectral data of a regression target matrix.

    Holds the matrix itself, its top singular triple (u, s, v), the second
    singular value s2, the inverse spectral gap s2/s, and a degeneracy flag
    for the zero-matrix case where the gap is undefined.
    """

    matrix: np.ndarray
    u: np.ndarray
    s: float
    v: np.ndarray
    s2: float
    gap: float
    degenerate: bool = False
    rank_one: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.rank_one is None:
            object.__setattr__(self, "rank_one", self.s * np.outer(self.u, self.v))


def target_spectrum(Z) -> TargetSpectrum:
    """Compute the TargetSpectrum of a matrix.

    For a matrix with a single singular value (row or column vector) s2 is 0
    and the gap vanishes; a zero matrix is flagged degenerate.
    """
    Z = _as_matrix(Z)
    svd = thin_svd(Z, full=True)
    s_all = svd.s
    s1 = float(s_all[0]) if s_all.size >= 1 else 0.0
    s2 = float(s_all[1]) if s_all.size >= 2 else 0.0
    if s1 <= 0.0:
        u = np.zeros(Z.shape[0])
        v = np.zeros(Z.shape[1])
        u[0] = 1.0
        v[0] = 1.0
        return TargetSpectrum(Z, u, 0.0, v, 0.0, 0.0, degenerate=True)
    return TargetSpectrum(Z, svd.U[:, 0].copy(), s1, svd.V[:, 0].copy(), s2, s2 / s1)
