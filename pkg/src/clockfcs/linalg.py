"""Dense complex linear algebra used by the counting-statistics engine.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``.
Vectorization is column stacking throughout the package, so that

    vec(B X C) = (C^T kron B) vec(X)

and ``trace(A) = <<1|A>>`` with ``|1>> = vectorize(identity)``.
"""
import numpy as np

from .errors import ModelError, NumericalError

DEFAULT_CUTOFF = 1e-12


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D complex array, raising ModelError otherwise."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ModelError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ModelError(f"{name} has non-finite entries")
    return m


def kron(a, b):
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > 2**31:
        raise OverflowError(f"Kronecker product of size {rows}x{cols} is too large")
    return np.kron(a, b)


def vectorize(a):
    """Stack the columns of a square matrix into a vector of length n**2."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"vectorize expects a square matrix, got shape {a.shape}")
    return a.reshape(-1, order="F")


def unvectorize(v):
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    n = int(round(np.sqrt(v.size)))
    if v.ndim != 1 or n * n != v.size:
        raise ModelError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(n, n, order="F")


def identity_vector(n):
    """``|1>>`` for an n-dimensional Hilbert space."""
    return vectorize(np.eye(n, dtype=complex))


def _svd(a):
    try:
        return np.linalg.svd(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def moore_penrose(a, cutoff=DEFAULT_CUTOFF):
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``cutoff * sigma_max`` are treated as zero.
    """
    if not 0 < cutoff < 1:
        raise ValueError("cutoff must lie in (0, 1)")
    a = np.asarray(a, dtype=complex)
    u, s, vh = _svd(a)
    if s.size == 0 or s[0] == 0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=complex)
    keep = s > cutoff * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vh.conj().T * inv_s) @ u.conj().T


def null_space(a, cutoff=DEFAULT_CUTOFF):
    """Orthonormal basis of the right null space of a square matrix.

    Returns a list of 1-D vectors (empty when ``a`` has full rank).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"null_space expects a square matrix, got shape {a.shape}")
    _, s, vh = _svd(a)
    scale = s[0] if s.size else 0.0
    if scale == 0:
        return [row.conj() for row in np.eye(a.shape[0], dtype=complex)]
    rank = int(np.sum(s > cutoff * scale))
    return [vh[k].conj() for k in range(rank, a.shape[0])]
