"""Minimal complex linear-algebra kernel shared by every other module.

Everything is dense double-precision complex (matrices top out around
16x16 at the default scale). Arrays returned here are fresh objects; the
rest of the package treats them as immutable.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def as_cvector(v) -> np.ndarray:
    """Validate and return a 1-D complex128 vector (non-empty, all finite)."""
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("vector must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains non-finite entries")
    return arr


def as_cmatrix(m) -> np.ndarray:
    """Validate and return a 2-D complex128 matrix (non-empty, all finite)."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("matrix must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    return arr


def hermitian(m) -> np.ndarray:
    """Conjugate transpose. Applying it twice returns the input bit-exactly."""
    return as_cmatrix(m).conj().T.copy()


def matvec(m, v) -> np.ndarray:
    """Complex matrix-vector product with an explicit dimension check."""
    m = as_cmatrix(m)
    v = as_cvector(v)
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def diag_from_phases(phases) -> np.ndarray:
    """N x N diagonal matrix with entries exp(j*phase_n), phases in [0, 2*pi].

    Off-diagonal entries are exactly zero and every diagonal entry has unit
    modulus (up to floating error in exp).
    """
    ph = np.asarray(phases, dtype=np.float64)
    if ph.ndim != 1 or ph.size == 0:
        raise ValueError("phases must be a non-empty 1-D sequence")
    if np.any(ph < 0.0) or np.any(ph > TWO_PI):
        raise ValueError("phase out of range [0, 2*pi]")
    return np.diag(np.exp(1j * ph))


def norm_sq(v) -> float:
    """Sum of squared moduli, i.e. the real part of <v, v>."""
    v = as_cvector(v)
    return float(np.vdot(v, v).real)
