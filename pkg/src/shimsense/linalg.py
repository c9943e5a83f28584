"""Dense linear-algebra primitives: SVD, greedy column-pivoted QR,
Moore-Penrose pseudoinverse, and the two proximity operators (elementwise
soft thresholding and singular value thresholding) that the robust
decomposition is built from.

All routines take and return plain ``float64`` NumPy arrays.  Factorizations
are made deterministic by a fixed sign convention so repeated runs are
bit-identical.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError, ParameterError

#: Residual norm below which pivoting treats the matrix as rank deficient.
RANK_TOL = 1e-12

#: Default relative cutoff for small singular values in the pseudoinverse.
RCOND_DEFAULT = 1e-12


def as_matrix(a, name="matrix"):
    """Validate and convert ``a`` to a 2-D, finite, C-contiguous float64 array.

    Raises
    ------
    ParameterError
        If the input is not 2-D, is empty, or contains NaN/Inf.
    """
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ParameterError(f"{name} must have at least one row and column")
    if not np.isfinite(arr).all():
        raise ParameterError(f"{name} contains NaN or Inf entries")
    return arr


def as_vector(a, name="vector", allow_empty=False):
    """Validate and convert ``a`` to a 1-D, finite float64 array."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0 and not allow_empty:
        raise ParameterError(f"{name} must not be empty")
    if not np.isfinite(arr).all():
        raise ParameterError(f"{name} contains NaN or Inf entries")
    return arr


@dataclass(frozen=True)
class SvdResult:
    """Economy SVD ``A = U @ diag(s) @ Vt`` with ``s`` descending."""

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray
    economy: bool = True

    def compose(self):
        """Multiply the factors back together."""
        return (self.u * self.singular_values) @ self.vt


@dataclass(frozen=True)
class PivotSequence:
    """Greedy pivot order with the residual norm observed at each step.

    ``rank_deficient`` is set when pivoting stopped early because every
    remaining column had residual norm below :data:`RANK_TOL`.
    """

    pivots: np.ndarray
    residual_norms: np.ndarray
    rank_deficient: bool = False

    def __len__(self):
        return int(self.pivots.shape[0])


def _canonical_signs(u, vt):
    """Flip factor signs so each U column has a nonnegative first nonzero entry.

    The corresponding Vt row is flipped with it, leaving the product intact.
    Gives bit-stable factors for golden tests.
    """
    u = np.ascontiguousarray(u)
    vt = np.ascontiguousarray(vt)
    nonzero = u != 0.0
    first = np.argmax(nonzero, axis=0)  # 0 for all-zero columns, harmless
    lead = u[first, np.arange(u.shape[1])]
    flip = lead < 0.0
    u[:, flip] *= -1.0
    vt[flip, :] *= -1.0
    return u, vt


def svd(a):
    """Economy singular value decomposition with deterministic signs.

    Parameters
    ----------
    a : array_like, shape (n, m)
        Finite dense matrix.

    Returns
    -------
    SvdResult
        ``u`` is n-by-k, ``vt`` is k-by-m with ``k = min(n, m)``; singular
        values are nonnegative and descending.

    Raises
    ------
    NumericalError
        If the underlying iterative bidiagonalization fails to converge.
    """
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    u, vt = _canonical_signs(u, vt)
    return SvdResult(u=u, singular_values=s, vt=vt, economy=True)


def pivoted_qr(a, max_pivots=None, tol=RANK_TOL):
    """Greedy column selection by maximal residual 2-norm.

    Each step picks the column whose residual, after orthogonalization
    against all previously selected columns, has the largest 2-norm; ties
    break toward the lowest column index.  This is the volume-greedy pivot
    rule of column-pivoted QR.

    Parameters
    ----------
    a : array_like, shape (n, m)
    max_pivots : int, optional
        Number of pivots requested (default ``min(n, m)``); must not exceed
        the column count.
    tol : float
        Residual norm below which remaining columns are considered
        numerically zero; selection then stops early and the result is
        flagged rank deficient.

    Returns
    -------
    PivotSequence
    """
    a = as_matrix(a)
    n, m = a.shape
    if max_pivots is None:
        max_pivots = min(n, m)
    max_pivots = int(max_pivots)
    if max_pivots < 0 or max_pivots > m:
        raise ParameterError(
            f"max_pivots must be in [0, {m}], got {max_pivots}")
    pivots, norms, deficient = _kernels.pivot_columns(a, max_pivots, float(tol))
    return PivotSequence(pivots=pivots, residual_norms=norms,
                         rank_deficient=bool(deficient))


def pseudoinverse(a, rcond=RCOND_DEFAULT):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values no larger than ``rcond * s_max`` are treated as zero.
    """
    if rcond < 0:
        raise ParameterError(f"rcond must be >= 0, got {rcond}")
    res = svd(a)
    s = res.singular_values
    cutoff = rcond * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    keep = s > cutoff
    inv[keep] = 1.0 / s[keep]
    return (res.vt.T * inv) @ res.u.T


def soft_threshold(z, tau):
    """Proximity operator of ``tau * ||.||_1``: elementwise shrinkage.

    Computes ``sign(z) * max(|z| - tau, 0)`` for a scalar or an array of any
    shape.  Magnitudes never grow and signs are preserved (or become zero).
    """
    if tau < 0:
        raise ParameterError(f"tau must be >= 0, got {tau}")
    if np.isscalar(z) or np.ndim(z) == 0:
        v = float(z)
        mag = abs(v) - tau
        if mag <= 0.0:
            return 0.0
        return mag if v > 0 else -mag
    arr = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty(arr.size, dtype=np.float64)
    _kernels.soft_threshold(arr.reshape(-1), float(tau), out)
    return out.reshape(arr.shape)


def svt(a, tau):
    """Proximity operator of ``tau * ||.||_*``: singular value thresholding.

    Soft-thresholds the singular values of ``a`` and recomposes, shrinking
    the matrix toward lower rank.
    """
    if tau < 0:
        raise ParameterError(f"tau must be >= 0, got {tau}")
    res = svd(a)
    s = soft_threshold(res.singular_values, tau)
    return (res.u * s) @ res.vt
