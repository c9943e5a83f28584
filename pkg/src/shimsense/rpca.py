"""Robust principal component pursuit and rank selection.

``pcp`` splits a data matrix into a low-rank part and a sparse outlier part
by inexact augmented-Lagrangian iteration over the two proximity operators
(singular value thresholding for the low-rank update, elementwise soft
thresholding for the sparse update).  ``optimal_rank`` implements the
asymptotically optimal hard truncation level for singular values of a
low-rank-plus-Gaussian-noise matrix, in both the known-noise closed form and
the unknown-noise variant based on the exact Marchenko-Pastur median.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .errors import NumericalError, ParameterError
from .linalg import as_matrix, as_vector, soft_threshold
from .randomized import RsvdConfig, rsvd

MU_MAX_FACTOR = 1e7  # cap on the penalty parameter, relative to its start


@dataclass(frozen=True)
class PcpConfig:
    """Solver parameters for principal component pursuit.

    ``lam`` (sparsity weight) and ``mu0`` (initial penalty) default to the
    standard automatic choices ``1/sqrt(max(n, m))`` and
    ``1.25 / ||X||_2`` when left as None.  The spectral-norm start puts the
    first shrinkage thresholds above the corruption spectrum, which is what
    makes the split recover the true factors; see the solver notes in the
    README.  ``svd_mode`` selects the exact LAPACK SVD or an adaptive-rank
    randomized SVD inside each thresholding step; exact mode is the
    correctness reference.
    """

    lam: Optional[float] = None
    mu0: Optional[float] = None
    rho: float = 1.5
    tol: float = 1e-7
    max_iter: int = 500
    svd_mode: str = "exact"

    def __post_init__(self):
        if self.lam is not None and self.lam <= 0:
            raise ParameterError(f"lam must be > 0, got {self.lam}")
        if self.mu0 is not None and self.mu0 <= 0:
            raise ParameterError(f"mu0 must be > 0, got {self.mu0}")
        if self.rho <= 1:
            raise ParameterError(f"rho must be > 1, got {self.rho}")
        if self.tol <= 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.svd_mode not in ("exact", "randomized"):
            raise ParameterError(
                f"svd_mode must be 'exact' or 'randomized', got {self.svd_mode!r}")


@dataclass(frozen=True)
class RobustDecomposition:
    """Result of principal component pursuit: ``X ~ low_rank + sparse``."""

    low_rank: np.ndarray
    sparse: np.ndarray
    iterations: int
    converged: bool
    final_residual: float
    sparsity: float                      # fraction of nonzero sparse entries
    lam: float
    mu0: float
    residual_history: tuple = ()
    mu_history: tuple = ()


@dataclass(frozen=True)
class FeatureBasis:
    """Truncated orthonormal modes with their singular values.

    ``mean`` optionally carries the per-location training mean that was
    removed before the modes were learned.
    """

    modes: np.ndarray
    singular_values: np.ndarray
    rank: int
    mean: Optional[np.ndarray] = None

    def __post_init__(self):
        modes = self.modes
        if modes.ndim != 2 or modes.shape[1] != self.rank:
            raise ParameterError(
                f"modes must be (n, {self.rank}), got {modes.shape}")
        if self.singular_values.shape != (self.rank,):
            raise ParameterError("one singular value per mode is required")
        if self.mean is not None and self.mean.shape != (modes.shape[0],):
            raise ParameterError("mean length must match mode rows")
        gram = modes.T @ modes
        if np.abs(gram - np.eye(self.rank)).max() > 1e-10:
            raise ParameterError("basis columns are not orthonormal")

    @property
    def n_locations(self):
        return int(self.modes.shape[0])


def _svt_exact(x, tau):
    # np.linalg.svd directly: the U/Vt sign convention is irrelevant here
    # because only the recomposed product is used.
    try:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    s = soft_threshold(s, tau)
    rank = int(np.count_nonzero(s))
    k = max(rank, 1)
    low = (u[:, :k] * s[:k]) @ vt[:k, :]
    return low, rank


def _svt_randomized(x, tau, rank_guess, seed):
    """Singular value thresholding with an adaptively sized sketch.

    Grows the sketch until the smallest recovered singular value falls below
    the threshold (so no mode above it was missed), falling back to the
    exact SVD when the sketch would reach full width.
    """
    min_dim = min(x.shape)
    k = min(max(rank_guess + 5, 5), min_dim)
    while True:
        oversample = min(10, min_dim - k)
        if k + oversample >= min_dim:
            return _svt_exact(x, tau)
        res = rsvd(x, RsvdConfig(rank=k, oversample=oversample,
                                 power_iters=2, seed=seed))
        if res.singular_values[-1] <= tau:
            s = soft_threshold(res.singular_values, tau)
            rank = int(np.count_nonzero(s))
            kk = max(rank, 1)
            low = (res.u[:, :kk] * s[:kk]) @ res.vt[:kk, :]
            return low, rank
        k = min(k + max(k // 2, 5), min_dim)


def pcp(x, cfg=None):
    """Principal component pursuit by inexact augmented Lagrange multipliers.

    Iterates::

        L <- svt(X - S + Y/mu, 1/mu)
        S <- soft_threshold(X - L + Y/mu, lam/mu)
        Y <- Y + mu * (X - L - S)
        mu <- min(rho * mu, mu_max)

    until the relative constraint residual ``||X - L - S||_F / ||X||_F``
    drops to ``cfg.tol`` or ``cfg.max_iter`` is reached.  Non-convergence is
    reported through ``converged=False``, not an exception.
    """
    x = as_matrix(x)
    cfg = cfg or PcpConfig()
    n, m = x.shape
    norm_x = float(np.linalg.norm(x))
    if norm_x == 0.0:
        zero = np.zeros_like(x)
        return RobustDecomposition(
            low_rank=zero, sparse=zero.copy(), iterations=0, converged=True,
            final_residual=0.0, sparsity=0.0,
            lam=cfg.lam if cfg.lam is not None else 1.0 / math.sqrt(max(n, m)),
            mu0=cfg.mu0 if cfg.mu0 is not None else 0.0)

    lam = cfg.lam if cfg.lam is not None else 1.0 / math.sqrt(max(n, m))
    if cfg.mu0 is not None:
        mu0 = cfg.mu0
    else:
        mu0 = 1.25 / float(np.linalg.norm(x, 2))
    mu = mu0
    mu_max = MU_MAX_FACTOR * mu0

    low = np.zeros_like(x)
    sparse = np.zeros_like(x)
    dual = np.zeros_like(x)
    residuals = []
    mus = []
    converged = False
    iterations = 0
    rank_guess = 5
    randomized = cfg.svd_mode == "randomized"

    for it in range(1, cfg.max_iter + 1):
        iterations = it
        mus.append(mu)
        if randomized:
            low, rank_guess = _svt_randomized(x - sparse + dual / mu,
                                              1.0 / mu, rank_guess, seed=it)
        else:
            low, rank_guess = _svt_exact(x - sparse + dual / mu, 1.0 / mu)
        sparse = soft_threshold(x - low + dual / mu, lam / mu)
        gap = x - low - sparse
        dual += mu * gap
        residual = float(np.linalg.norm(gap)) / norm_x
        residuals.append(residual)
        if residual <= cfg.tol:
            converged = True
            break
        mu = min(cfg.rho * mu, mu_max)

    return RobustDecomposition(
        low_rank=low, sparse=sparse, iterations=iterations,
        converged=converged, final_residual=residuals[-1],
        sparsity=float(np.count_nonzero(sparse)) / sparse.size,
        lam=float(lam), mu0=float(mu0),
        residual_history=tuple(residuals), mu_history=tuple(mus))


def _threshold_coefficient(beta):
    """Closed-form optimal hard-threshold coefficient for aspect ratio beta."""
    return math.sqrt(2.0 * (beta + 1.0)
                     + 8.0 * beta / ((beta + 1.0)
                                     + math.sqrt(beta * beta + 14.0 * beta + 1.0)))


@lru_cache(maxsize=None)
def _marchenko_pastur_median(beta):
    """Median of the Marchenko-Pastur distribution with aspect ratio beta.

    Found by root-finding on the CDF.  The quarter-circle-like density on
    ``[(1-sqrt(beta))^2, (1+sqrt(beta))^2]`` is integrated after the
    substitution ``t = lo + (hi-lo) sin^2(theta)``, which removes both
    endpoint singularities (including the one at 0 when beta = 1).
    """
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    lo = (1.0 - math.sqrt(beta)) ** 2
    hi = (1.0 + math.sqrt(beta)) ** 2
    span = hi - lo
    scale = span * span / (math.pi * beta)

    def integrand(theta):
        s2 = math.sin(theta) ** 2
        t = lo + span * s2
        ratio = s2 / t if t > 0.0 else 1.0 / span
        return scale * math.cos(theta) ** 2 * ratio

    def cdf_minus_half(t):
        upper = math.asin(min(1.0, math.sqrt((t - lo) / span)))
        val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-8, limit=200)
        return val - 0.5

    return float(optimize.brentq(cdf_minus_half, lo + 1e-12 * span,
                                 hi - 1e-12 * span, xtol=1e-10))


def optimal_rank(singular_values, n, m, sigma=None):
    """Number of singular values above the optimal hard threshold.

    With known noise level ``sigma`` the threshold is
    ``coef(beta) * sqrt(max(n, m)) * sigma`` where
    ``beta = min(n, m) / max(n, m)``.  With unknown noise it is
    ``coef(beta) / sqrt(mp_median(beta)) * median(singular_values)``, using
    the exact numerically computed Marchenko-Pastur median rather than a
    polynomial fit.

    Returns 0 for an all-zero spectrum.
    """
    s = as_vector(singular_values, "singular_values", allow_empty=True)
    if s.size == 0 or not s.any():
        return 0
    if (s < 0).any():
        raise ParameterError("singular values must be nonnegative")
    if (np.diff(s) > 1e-12 * max(s[0], 1.0)).any():
        raise ParameterError("singular values must be sorted descending")
    if n < 1 or m < 1:
        raise ParameterError("matrix dimensions must be positive")
    beta = min(n, m) / max(n, m)
    coef = _threshold_coefficient(beta)
    if sigma is not None:
        if sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {sigma}")
        tau = coef * math.sqrt(max(n, m)) * sigma
    else:
        tau = coef / math.sqrt(_marchenko_pastur_median(beta)) * float(np.median(s))
    return int(np.count_nonzero(s > tau))


def truncate_basis(svd_result, r, mean=None):
    """Keep the first ``r`` left singular vectors as a feature basis.

    The optional per-location ``mean`` is carried through unchanged so that
    downstream reconstruction can restore it.
    """
    s = svd_result.singular_values
    if not 1 <= r <= s.size:
        raise ParameterError(f"rank must be in [1, {s.size}], got {r}")
    mean_arr = None if mean is None else as_vector(mean, "mean")
    return FeatureBasis(modes=svd_result.u[:, :r].copy(),
                        singular_values=s[:r].copy(),
                        rank=int(r), mean=mean_arr)
