"""Dense matrix/vector construction and the reductions everything else consumes.

All arithmetic runs in float64; 32-bit precision exists only at the file
boundary (see the io module). Arrays are treated as immutable after
construction, so they can be shared freely across concurrent evaluations.
"""

import numpy as np

Matrix = np.ndarray
Vector = np.ndarray


def matrix(data) -> Matrix:
    """Validate and return a 2-D float64 array with finite entries."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be at least 1x1, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    return a


def vector(data) -> Vector:
    """Validate and return a 1-D float64 array with finite entries."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got ndim={a.ndim}")
    if a.size < 1:
        raise ValueError("vector must have at least one entry")
    if not np.isfinite(a).all():
        raise ValueError("vector entries must be finite")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def abs_row_sums(a: Matrix) -> Vector:
    return np.abs(a).sum(axis=1)


def abs_col_sums(a: Matrix) -> Vector:
    return np.abs(a).sum(axis=0)


def frobenius_norm(a: Matrix) -> float:
    return float(np.sqrt((a * a).sum()))
