"""Synthetic gap-field generator with known ground truth.

Stands in for production assembly measurements: each unit's gap field is a
shared smooth mean profile plus a few orthonormalized low-frequency cosine
modes with random per-unit coefficients, dense Gaussian measurement noise,
and sparse large-magnitude outliers.  The generator returns both the
assembled dataset and the exact decomposition used to build it, so every
pipeline stage can be checked against ground truth.

Draw order from the single PCG64(seed) stream is fixed and documented:
mode coefficients, then the noise field, then outlier positions, then
outlier signs.  Identical configs therefore reproduce bit-identical data.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import GapDataset
from .errors import ParameterError

MODE_FAMILIES = ("cosine-1d", "cosine-2d")


def default_coeff_scale(rank):
    """Descending per-mode coefficient scales: 0.3 * 0.7**i.

    Sized so that every mode's singular value clears the pseudo-noise
    spectrum that 5% outliers of magnitude 0.05 contribute on the default
    600 x 40 grid; weaker modes would be spectrally indistinguishable from
    the corruption and no robust method could separate them.
    """
    return tuple(0.3 * 0.7 ** i for i in range(rank))


@dataclass(frozen=True)
class SynthConfig:
    """Scenario parameters for the synthetic generator.

    Defaults define the standard desk-scale scenario: 600 locations x 40
    units, rank 5, gaps on a 0.01-0.1 scale, noise well below the 0.005
    machining tolerance, and 5% outliers of magnitude 0.05.
    """

    n_locations: int = 600
    n_units: int = 40
    true_rank: int = 5
    mode_family: str = "cosine-1d"
    mean_amplitude: float = 0.08
    coeff_scale: Optional[Sequence[float]] = None
    noise_sigma: float = 0.0005
    outlier_fraction: float = 0.05
    outlier_magnitude: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_locations < 1 or self.n_units < 1:
            raise ParameterError("n_locations and n_units must be >= 1")
        if not 1 <= self.true_rank <= min(self.n_locations, self.n_units):
            raise ParameterError(
                f"true_rank must be in [1, {min(self.n_locations, self.n_units)}],"
                f" got {self.true_rank}")
        if self.mode_family not in MODE_FAMILIES:
            raise ParameterError(
                f"mode_family must be one of {MODE_FAMILIES}, got {self.mode_family!r}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ParameterError(
                f"outlier_fraction must be in [0, 1), got {self.outlier_fraction}")
        if self.noise_sigma < 0 or self.outlier_magnitude < 0:
            raise ParameterError("noise_sigma and outlier_magnitude must be >= 0")
        if self.mean_amplitude < 0:
            raise ParameterError("mean_amplitude must be >= 0")
        if self.coeff_scale is not None:
            scales = tuple(float(c) for c in self.coeff_scale)
            if len(scales) != self.true_rank:
                raise ParameterError(
                    f"coeff_scale needs {self.true_rank} entries, got {len(scales)}")
            if any(c <= 0 for c in scales):
                raise ParameterError("coeff_scale entries must be > 0")
            if any(b > a for a, b in zip(scales, scales[1:])):
                raise ParameterError("coeff_scale must be non-increasing")
            object.__setattr__(self, "coeff_scale", scales)


@dataclass(frozen=True)
class GroundTruth:
    """Exact constituents of a generated dataset.

    ``low_rank`` includes the mean column (mean + modes @ coefficients);
    ``clean`` additionally includes the dense noise but not the outliers.
    """

    low_rank: np.ndarray
    sparse: np.ndarray
    modes: np.ndarray
    mean: np.ndarray
    coefficients: np.ndarray
    clean: np.ndarray
    config: SynthConfig = field(repr=False, default=None)


def _orthonormal_cosine_modes(n, rank, family):
    """Low-frequency cosine mode matrix, orthonormalized by QR.

    1-D modes use cos(pi f t) on a unit interval; 2-D modes use products
    cos(pi p u) cos(pi q v) on a near-square grid, ordered by total
    frequency.  The constant direction is excluded (the mean carries it).
    """
    if family == "cosine-1d":
        t = np.linspace(0.0, 1.0, n)
        raw = np.stack([np.cos(math.pi * (j + 1) * t) for j in range(rank)],
                       axis=1)
    else:
        side = max(int(math.ceil(math.sqrt(n))), 2)
        u, v = np.meshgrid(np.linspace(0.0, 1.0, side),
                           np.linspace(0.0, 1.0, side), indexing="ij")
        u = u.reshape(-1)[:n]
        v = v.reshape(-1)[:n]
        pairs = sorted(((p, q) for p in range(rank + 1) for q in range(rank + 1)
                        if p + q > 0), key=lambda pq: (pq[0] + pq[1], pq[0]))
        raw = np.stack([np.cos(math.pi * p * u) * np.cos(math.pi * q * v)
                        for p, q in pairs[:rank]], axis=1)
    q, _ = np.linalg.qr(raw)
    # deterministic signs: first nonzero entry of each mode nonnegative
    lead = q[np.argmax(q != 0.0, axis=0), np.arange(rank)]
    q[:, lead < 0] *= -1.0
    return np.ascontiguousarray(q)


def _mean_profile(n, amplitude):
    t = np.linspace(0.0, 1.0, n)
    return amplitude * (0.7 + 0.3 * np.cos(2.0 * math.pi * t))


def generate(cfg=None):
    """Generate a synthetic gap dataset plus its exact ground truth.

    Returns ``(GapDataset, GroundTruth)``.  The data matrix is
    ``mean + modes @ diag(coeff_scale) @ W + sigma * noise + sparse`` with
    ``W`` standard normal and outliers of magnitude ``outlier_magnitude``
    and random sign at uniformly drawn positions.
    """
    cfg = cfg or SynthConfig()
    n, m, r = cfg.n_locations, cfg.n_units, cfg.true_rank
    scales = np.asarray(cfg.coeff_scale if cfg.coeff_scale is not None
                        else default_coeff_scale(r))
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    modes = _orthonormal_cosine_modes(n, r, cfg.mode_family)
    mean = _mean_profile(n, cfg.mean_amplitude)
    coeffs = scales[:, None] * rng.standard_normal((r, m))
    noise = cfg.noise_sigma * rng.standard_normal((n, m))

    sparse = np.zeros((n, m))
    n_outliers = int(round(cfg.outlier_fraction * n * m))
    if n_outliers:
        flat = rng.choice(n * m, size=n_outliers, replace=False)
        signs = rng.integers(0, 2, size=n_outliers) * 2 - 1
        sparse.reshape(-1)[flat] = cfg.outlier_magnitude * signs

    low_rank = mean[:, None] + modes @ coeffs
    clean = low_rank + noise
    values = clean + sparse

    width_loc = max(4, len(str(n - 1)))
    width_unit = max(3, len(str(m - 1)))
    dataset = GapDataset(
        values=values,
        location_ids=tuple(f"loc_{i:0{width_loc}d}" for i in range(n)),
        unit_ids=tuple(f"unit_{k:0{width_unit}d}" for k in range(m)),
        units_label="synthetic units",
        gap_unit="inch")
    truth = GroundTruth(low_rank=low_rank, sparse=sparse, modes=modes,
                        mean=mean, coefficients=coeffs, clean=clean,
                        config=cfg)
    return dataset, truth
