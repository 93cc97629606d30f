"""
Dense numeric core for the calibration engine.

Provides:
- Validated float64 Matrix / Vector containers (plain numpy arrays, row-major)
- matvec, transpose_matvec and outer kernels with hard shape checks
- SeededRng: a reproducible random stream built on the PCG64 bit generator

The uniform stream is derived directly from the 64-bit PCG64 outputs
(top 53 bits), and normals come from a fixed Box-Muller pairing, so the
stream does not depend on numpy's distribution-sampling internals.
"""

import math
import logging
from typing import Iterable, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

# Type aliases: a Matrix is a 2D float64 array, a Vector a 1D float64 array.
Matrix = np.ndarray
Vector = np.ndarray

ArrayLike = Union[np.ndarray, Iterable[float]]

_TWO_POW_MINUS_53 = 2.0 ** -53


class ShapeError(ValueError):
    """Raised when operand shapes are inconsistent."""


class NonFiniteError(ValueError):
    """Raised when a container would hold NaN or infinite entries."""


# =============================================================================
# Containers
# =============================================================================

def as_vector(values: ArrayLike, name: str = "vector") -> Vector:
    """Return `values` as a non-empty, finite 1D float64 array."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ShapeError(f"{name} must be 1D, got shape {vec.shape}")
    if vec.size == 0:
        raise ShapeError(f"{name} must be non-empty")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return vec


def as_matrix(values: ArrayLike, name: str = "matrix") -> Matrix:
    """Return `values` as a finite 2D float64 array with rows, cols >= 1."""
    mat = np.asarray(values, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"{name} must be 2D, got shape {mat.shape}")
    if mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return mat


def matrix_from_flat(rows: int, cols: int, values: ArrayLike) -> Matrix:
    """Build a Matrix from a flat row-major list."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size != rows * cols:
        raise ShapeError(f"Expected {rows}*{cols}={rows * cols} values, got {flat.size}")
    return as_matrix(flat.reshape(rows, cols))


# =============================================================================
# Kernels
# =============================================================================

def matvec(m: Matrix, x: Vector) -> Vector:
    """y_i = sum_j m[i,j] * x_j."""
    if m.ndim != 2 or x.ndim != 1 or m.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec shape mismatch: matrix {m.shape} vs vector {x.shape}")
    return m @ x


def transpose_matvec(m: Matrix, y: Vector) -> Vector:
    """x_j = sum_i m[i,j] * y_i (multiplication by the transpose)."""
    if m.ndim != 2 or y.ndim != 1 or m.shape[0] != y.shape[0]:
        raise ShapeError(f"transpose_matvec shape mismatch: matrix {m.shape} vs vector {y.shape}")
    return y @ m


def outer(a: Vector, b: Vector) -> Matrix:
    """Outer product, entry [i,j] = a_i * b_j."""
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ShapeError(f"outer needs two non-empty vectors, got {a.shape} and {b.shape}")
    return np.outer(a, b)


# =============================================================================
# Random stream
# =============================================================================

class SeededRng:
    """
    Reproducible random stream.

    Backed by numpy's PCG64 bit generator, seeded through SeedSequence with
    the seed as entropy and the stream id as spawn key. Only the raw 64-bit
    outputs are consumed, so the stream is identical on every platform.
    """

    def __init__(self, seed: int, stream: Optional[int] = None):
        if seed is None or int(seed) < 0 or int(seed) >= 2 ** 64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed!r}")
        if stream is not None and int(stream) < 0:
            raise ValueError(f"Stream id must be >= 0, got {stream!r}")
        self.seed = int(seed)
        self.stream = stream
        spawn_key = () if stream is None else (int(stream),)
        self._bits = np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=spawn_key))

    def derive(self, stream: int) -> "SeededRng":
        """Independent stream keyed by (seed, stream); does not advance self."""
        return SeededRng(self.seed, stream)

    def random(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1) with 53-bit resolution."""
        if n < 0:
            raise ValueError(f"Sample count must be >= 0, got {n}")
        raw = self._bits.random_raw(n)
        return (np.asarray(raw, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * _TWO_POW_MINUS_53

    def uniform(self, lo: float, hi: float, n: int) -> Vector:
        if not lo < hi:
            raise ValueError(f"uniform needs lo < hi, got lo={lo}, hi={hi}")
        out = lo + (hi - lo) * self.random(n)
        # rounding can land exactly on hi
        return np.minimum(out, np.nextafter(hi, lo))

    def normal(self, mean: float, sd: float, n: int) -> Vector:
        if sd < 0:
            raise ValueError(f"normal needs sd >= 0, got {sd}")
        pairs = (n + 1) // 2
        u = self.random(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * math.pi * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return mean + sd * z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Random ordering of range(n): stable argsort of n uniforms."""
        return np.argsort(self.random(n), kind="stable")

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def rng_uniform(rng: SeededRng, lo: float, hi: float, n: int) -> Vector:
    return rng.uniform(lo, hi, n)


def rng_normal(rng: SeededRng, mean: float, sd: float, n: int) -> Vector:
    return rng.normal(mean, sd, n)
