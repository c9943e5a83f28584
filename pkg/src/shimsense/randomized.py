"""Randomized range finding and randomized SVD.

A Gaussian sketch compresses the input to a small orthonormal range basis;
power iterations with re-orthonormalization sharpen the basis when the
spectrum decays slowly.  All randomness flows from a single PCG64 stream
seeded by the config, so results are reproducible bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .linalg import SvdResult, _canonical_signs, as_matrix, svd


@dataclass(frozen=True)
class RsvdConfig:
    """Sketch-size parameters for the randomized SVD.

    rank : target number of modes to recover
    oversample : extra sketch columns beyond ``rank`` (default 10)
    power_iters : subspace (power) iterations with re-orthonormalization
    seed : PCG64 seed for the Gaussian test matrix
    """

    rank: int
    oversample: int = 10
    power_iters: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ParameterError(f"rank must be >= 1, got {self.rank}")
        if self.oversample < 0:
            raise ParameterError(
                f"oversample must be >= 0, got {self.oversample}")
        if self.power_iters < 0:
            raise ParameterError(
                f"power_iters must be >= 0, got {self.power_iters}")


def _orthonormalize(y):
    q, _ = np.linalg.qr(y, mode="reduced")
    return q


def range_finder(a, cfg):
    """Orthonormal basis approximating the range of ``a``.

    Draws a Gaussian test matrix with ``rank + oversample`` columns from
    ``PCG64(cfg.seed)``, sketches ``a``, and applies ``cfg.power_iters``
    passes of ``a @ (a.T @ Q)`` with re-orthonormalization after every
    product.

    Returns an ``(n, rank + oversample)`` matrix with orthonormal columns.
    """
    a = as_matrix(a)
    n, m = a.shape
    width = cfg.rank + cfg.oversample
    if width > min(n, m):
        raise ParameterError(
            f"rank + oversample = {width} exceeds min(n, m) = {min(n, m)}")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    omega = rng.standard_normal((m, width))
    q = _orthonormalize(a @ omega)
    for _ in range(cfg.power_iters):
        z = _orthonormalize(a.T @ q)
        q = _orthonormalize(a @ z)
    return q


def rsvd(a, cfg):
    """Randomized truncated SVD.

    Projects ``a`` onto the sketched range basis, takes the small SVD there,
    and lifts the left factor back, keeping ``cfg.rank`` modes.  With an
    exact-rank input the recovered singular values match the deterministic
    SVD to roundoff.
    """
    a = as_matrix(a)
    q = range_finder(a, cfg)
    small = svd(q.T @ a)
    k = cfg.rank
    u = q @ small.u[:, :k]
    s = small.singular_values[:k].copy()
    vt = small.vt[:k, :].copy()
    u, vt = _canonical_signs(u, vt)
    return SvdResult(u=u, singular_values=s, vt=vt, economy=True)
