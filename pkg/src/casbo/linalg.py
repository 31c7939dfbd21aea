"""Dense symmetric positive (semi-)definite matrix utilities.

Every routine here goes through one symmetric eigendecomposition, so the
square root, inverse and inverse square root of the same matrix share a
common eigenbasis.  That keeps the whitening transform consistent across
the library: the ``z`` that produced a sample ``x = mu + S z`` is recovered
exactly by the matching ``S^{-1}``, with no mixing of factorization
conventions.
"""

import numpy as np

__all__ = [
    "EIG_FLOOR",
    "SYM_RTOL",
    "sym_eigh",
    "sym_sqrt",
    "sym_inv",
    "eig_clamp",
    "min_eigenvalue",
]

# Eigenvalues below this are clamped up before taking square roots or
# reciprocals, so degenerate covariances never poison an update.
EIG_FLOOR = 1e-12

# A matrix M counts as symmetric when |M - M^T| <= SYM_RTOL * (1 + |M|)
# entrywise.
SYM_RTOL = 1e-12


def check_symmetric(m, rtol=SYM_RTOL, name="matrix"):
    """Validate that ``m`` is square and symmetric within tolerance.

    Raises ``ValueError`` otherwise and returns ``m`` as a float ndarray.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.abs(m - m.T) <= rtol * (1.0 + np.abs(m))):
        worst = float(np.max(np.abs(m - m.T)))
        raise ValueError(
            f"{name} is not symmetric within tolerance (max asymmetry {worst:.3e})"
        )
    return m


def sym_eigh(m, rtol=SYM_RTOL, name="matrix"):
    """Symmetric eigendecomposition with input validation.

    Returns ``(w, v)`` with ascending eigenvalues ``w`` and orthonormal
    columns ``v``.  Raises ``ValueError`` for non-symmetric input and
    ``numpy.linalg.LinAlgError`` if the decomposition fails to converge.
    """
    m = check_symmetric(m, rtol=rtol, name=name)
    # eigh works on the symmetrized copy so that tolerated asymmetry in the
    # last bits cannot leak into the spectrum.
    return np.linalg.eigh(0.5 * (m + m.T))


def _rebuild(w, v):
    a = (v * w) @ v.T
    return 0.5 * (a + a.T)


def sym_sqrt(m, eig_floor=EIG_FLOOR):
    """Symmetric positive-definite square root.

    Computes S with ``S @ S ~= m`` by eigendecomposition, clamping
    eigenvalues at ``eig_floor`` before the square root.
    """
    w, v = sym_eigh(m)
    return _rebuild(np.sqrt(np.maximum(w, eig_floor)), v)


def sym_inv(m, eig_floor=EIG_FLOOR):
    """Inverse of a symmetric positive-definite matrix.

    Raises ``numpy.linalg.LinAlgError`` when the smallest eigenvalue is
    below ``eig_floor``: such a matrix is treated as singular rather than
    silently regularized.
    """
    w, v = sym_eigh(m)
    if w[0] < eig_floor:
        raise np.linalg.LinAlgError(
            f"matrix is singular to working precision: "
            f"min eigenvalue {w[0]:.3e} < {eig_floor:.3e}"
        )
    return _rebuild(1.0 / w, v)


def eig_clamp(m, lo, hi):
    """Clamp the spectrum of a symmetric matrix into ``[lo, hi]``.

    Eigenvectors are preserved; eigenvalues are clipped.  ``hi`` may be
    ``numpy.inf`` for a one-sided clamp.
    """
    if lo > hi:
        raise ValueError(f"invalid eigenvalue band: lo={lo} > hi={hi}")
    w, v = sym_eigh(m)
    return _rebuild(np.clip(w, lo, hi), v)


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix."""
    m = check_symmetric(m)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
