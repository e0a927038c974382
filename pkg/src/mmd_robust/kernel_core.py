"""Kernels, Gram matrices and maximum mean discrepancy.

All distances here are computed through Gram-matrix quadratic forms; kernel
mean embeddings are never materialised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "WeightedAtoms",
    "GramCache",
    "as_points",
    "eval_kernel",
    "gram_matrix",
    "kernel_block",
    "mmd_weighted",
    "mmd_sq_weighted",
    "mmd_unbiased_sq",
    "PSD_JITTER",
]

PSD_JITTER = 1e-10


class KernelFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"


@dataclass(frozen=True)
class KernelSpec:
    """A bounded, characteristic translation-invariant kernel.

    Gaussian: ``exp(-||x - y||_2^2 / (2 sigma^2))``.
    Laplacian: ``exp(-||x - y||_1 / sigma)``.
    Both are bounded by ``bound = 1``.
    """

    family: KernelFamily = KernelFamily.GAUSSIAN
    bandwidth: float = 1.0
    bound: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.bound > 0:
            raise ValueError(f"bound must be positive, got {self.bound}")

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "KernelSpec":
        return cls(KernelFamily.GAUSSIAN, sigma, 1.0)

    @classmethod
    def laplacian(cls, sigma: float = 1.0) -> "KernelSpec":
        return cls(KernelFamily.LAPLACIAN, sigma, 1.0)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "bandwidth": self.bandwidth, "bound": self.bound}


def as_points(x, name: str = "points") -> np.ndarray:
    """Coerce to a float array of shape (n, d); a flat sequence is n points in d=1."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n, d), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def kernel_block(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Raw kernel matrix between two (n, d) / (m, d) arrays, no validation."""
    if spec.family is KernelFamily.GAUSSIAN:
        D = cdist(A, B, "sqeuclidean")
        return np.exp(-D / (2.0 * spec.bandwidth**2))
    D = cdist(A, B, "cityblock")
    return np.exp(-D / spec.bandwidth)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.family is KernelFamily.GAUSSIAN:
        return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * spec.bandwidth**2)))
    return float(np.exp(-np.sum(np.abs(x - y)) / spec.bandwidth))


@dataclass(frozen=True, eq=False)
class WeightedAtoms:
    """A finitely supported distribution: points (n, d) with probability weights.

    Duplicate atoms are allowed and are not merged.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empirical(cls, samples) -> "WeightedAtoms":
        pts = as_points(samples, "samples")
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def dirac(cls, point) -> "WeightedAtoms":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class GramCache:
    """Kernel matrix with the atom sets it was built from."""

    matrix: np.ndarray
    row_points: np.ndarray
    col_points: np.ndarray
    symmetric: bool = field(default=False)

    def jittered(self, jitter: float = PSD_JITTER) -> np.ndarray:
        if not self.symmetric:
            raise ValueError("jitter only applies to a self-Gram")
        return self.matrix + jitter * np.eye(self.matrix.shape[0])


def gram_matrix(spec: KernelSpec, A, B=None) -> GramCache:
    """Gram matrix ``k(A[i], B[j])``. With ``B`` omitted, the symmetric self-Gram."""
    A = as_points(A, "A")
    if B is None:
        K = kernel_block(spec, A, A)
        K = 0.5 * (K + K.T)
        return GramCache(K, A, A, symmetric=True)
    B = as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    same = A.shape == B.shape and np.array_equal(A, B)
    K = kernel_block(spec, A, B)
    if same:
        K = 0.5 * (K + K.T)
    return GramCache(K, A, B, symmetric=same)


def _check_dims(P: WeightedAtoms, Q: WeightedAtoms) -> None:
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")


def mmd_sq_weighted(spec: KernelSpec, P: WeightedAtoms, Q: WeightedAtoms) -> float:
    """Squared MMD between two discrete distributions (may round slightly below 0)."""
    _check_dims(P, Q)
    p, q = P.weights, Q.weights
    pp = p @ kernel_block(spec, P.points, P.points) @ p
    qq = q @ kernel_block(spec, Q.points, Q.points) @ q
    pq = p @ kernel_block(spec, P.points, Q.points) @ q
    return float(pp + qq - 2.0 * pq)


def mmd_weighted(spec: KernelSpec, P: WeightedAtoms, Q: WeightedAtoms) -> float:
    """Exact MMD between two finitely supported distributions."""
    return float(np.sqrt(max(mmd_sq_weighted(spec, P, Q), 0.0)))


def mmd_unbiased_sq(spec: KernelSpec, X, Y) -> float:
    """Unbiased U-statistic estimate of the squared MMD from raw samples.

    The result can be negative.
    """
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    n, m = X.shape[0], Y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("need at least 2 samples on each side")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    Kxx = kernel_block(spec, X, X)
    Kyy = kernel_block(spec, Y, Y)
    Kxy = kernel_block(spec, X, Y)
    xx = (Kxx.sum() - np.trace(Kxx)) / (n * (n - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (m * (m - 1))
    return float(xx + yy - 2.0 * Kxy.mean())
