"""Training data: container with whitening status, the whitening transform,
target-spectrum extraction, and seeded instance generation.

Random generation uses a counter-based PRNG keyed by (seed, stream) so that
instances are bit-identical across runs and safe to generate concurrently.
Streams: 0 draws X, 1 draws Y, 2 draws rotation planes for the initial point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import TargetSpectrum, target_spectrum, thin_svd

# Whitened data must satisfy ||X X^T / m - I||_F within this.
WHITEN_TOL = 1e-8

_STREAM_X = 0
_STREAM_Y = 1
_STREAM_PLANE = 2


class WhiteningError(ValueError):
    """Raised when X lacks full row rank and cannot be whitened."""


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


@dataclass(frozen=True)
class Dataset:
    """Training matrices X (d_x by m) and Y (d_y by m)."""

    X: np.ndarray
    Y: np.ndarray
    m: int
    whitened: bool

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape[1] != Y.shape[1]:
            raise ValueError(
                f"X has {X.shape[1]} columns but Y has {Y.shape[1]}"
            )
        if X.shape[1] != self.m:
            raise ValueError(f"m={self.m} does not match {X.shape[1]} columns")
        if self.whitened:
            gram = X @ X.T / self.m
            err = float(np.linalg.norm(gram - np.eye(X.shape[0])))
            if err > WHITEN_TOL:
                raise WhiteningError(
                    f"claimed whitened but ||XX^T/m - I||_F = {err:.3e}"
                )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def d_x(self) -> int:
        return self.X.shape[0]

    @property
    def d_y(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True)
class InstanceSpec:
    """Parameters for one synthetic instance.

    init_scale multiplies the target's top singular value, and
    init_angle_deg tilts the initial directions away from the target's.
    """

    d_x: int
    d_y: int
    m: int
    seed: int
    init_angle_deg: float = 30.0
    init_scale: float = 10.0

    def __post_init__(self):
        if min(self.d_x, self.d_y, self.m) < 1:
            raise ValueError("d_x, d_y, m must be positive")
        if self.m < self.d_x:
            raise ValueError(f"need m >= d_x for whitening, got {self.m} < {self.d_x}")


def whiten(X) -> np.ndarray:
    """Rescale X to X' = sqrt(m)·U·V^T so that X'X'^T = m·I.

    Preserves the row span. Requires full row rank.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d_x, m = X.shape
    svd = thin_svd(X)
    if svd.rank < d_x:
        raise WhiteningError(
            f"X has numerical rank {svd.rank} < {d_x}; whitening infeasible"
        )
    return math.sqrt(m) * (svd.U @ svd.V.T)


def compute_target(data: Dataset) -> TargetSpectrum:
    """Spectrum of the regression target Y X^T / m. Requires whitened data."""
    if not data.whitened:
        raise ValueError("target spectrum is only meaningful for whitened data")
    return target_spectrum(data.Y @ data.X.T / data.m)


def _rotate_in_random_plane(x: np.ndarray, angle_rad: float, rng) -> np.ndarray:
    """Rotate unit vector x by a fixed angle within a random plane through x."""
    if abs(angle_rad) < 1e-15:
        return x.copy()
    d = x.size
    if d == 1:
        raise ValueError("cannot rotate a 1-dimensional direction by a nonzero angle")
    while True:
        g = rng.standard_normal(d)
        w = g - (x @ g) * x
        nw = np.linalg.norm(w)
        if nw > 1e-12:
            break
    w /= nw
    return math.cos(angle_rad) * x + math.sin(angle_rad) * w


def generate_instance(spec: InstanceSpec):
    """Seeded (Dataset, W0) pair.

    X has Gaussian entries and is then whitened; Y is Gaussian. W0 is rank one:
    scale init_scale times the target's top singular value, directions obtained
    by rotating the target's top singular pair by init_angle_deg inside seeded
    random planes. For d_y = 1 only the right direction rotates; the left stays
    at the target's (a sign).
    """
    X = _stream(spec.seed, _STREAM_X).standard_normal((spec.d_x, spec.m))
    Y = _stream(spec.seed, _STREAM_Y).standard_normal((spec.d_y, spec.m))
    data = Dataset(X=whiten(X), Y=Y, m=spec.m, whitened=True)
    target = compute_target(data)
    theta = math.radians(spec.init_angle_deg)
    rng = _stream(spec.seed, _STREAM_PLANE)
    v0 = _rotate_in_random_plane(target.v, theta, rng)
    if spec.d_y == 1:
        u0 = target.u.copy()
    else:
        u0 = _rotate_in_random_plane(target.u, theta, rng)
    s0 = spec.init_scale * target.s
    W0 = s0 * np.outer(u0, v0)
    return data, W0


def save_instance_csv(data: Dataset, directory) -> tuple:
    """Write X.csv and Y.csv (row-major, dims in the header comment)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, M in (("X", data.X), ("Y", data.Y)):
        path = directory / f"{name}.csv"
        np.savetxt(path, M, delimiter=",", header=f"rows={M.shape[0]} cols={M.shape[1]}")
        paths.append(path)
    return tuple(paths)


def load_instance_csv(directory) -> Dataset:
    """Read an X.csv / Y.csv pair; whitening status is re-detected from X."""
    directory = Path(directory)
    X = np.loadtxt(directory / "X.csv", delimiter=",", ndmin=2)
    Y = np.loadtxt(directory / "Y.csv", delimiter=",", ndmin=2)
    m = X.shape[1]
    gram_err = float(np.linalg.norm(X @ X.T / m - np.eye(X.shape[0])))
    return Dataset(X=X, Y=Y, m=m, whitened=gram_err <= WHITEN_TOL)
