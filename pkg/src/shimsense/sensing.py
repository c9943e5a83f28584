"""Sparse sensor placement and gappy least-squares reconstruction.

Sensor locations are the greedy volume-maximizing pivots of a column-pivoted
QR factorization applied to the transposed feature basis: each pivot picks
the location whose basis row is least explained by the rows already chosen,
keeping the sampled basis well conditioned.  Reconstruction solves the small
least-squares system at the sampled rows and lifts back through the basis.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .linalg import RCOND_DEFAULT, as_vector, pivoted_qr, pseudoinverse, svd

#: Condition number above which a reconstruction is flagged ill conditioned.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SensorSet:
    """Ordered measurement-location indices with per-sensor selection scores.

    Indices refer to rows of the basis the set was selected for (region-local
    when the basis covers one region).  ``scores`` holds the residual-norm
    pivot score at each selection step; None for sets not chosen by pivoting.
    ``rank_deficient`` marks sets truncated because the basis rows ran out of
    volume early.
    """

    indices: np.ndarray
    scores: Optional[np.ndarray] = None
    rank_deficient: bool = False

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1:
            raise ParameterError("sensor indices must be 1-D")
        if idx.size and idx.min() < 0:
            raise ParameterError("sensor indices must be nonnegative")
        if np.unique(idx).size != idx.size:
            raise ParameterError("sensor indices must be distinct")
        if self.scores is not None and len(self.scores) != idx.size:
            raise ParameterError("one score per sensor is required")

    def __len__(self):
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class Reconstruction:
    """Full-field estimate from sparse measurements.

    ``values = mean + modes @ coefficients`` by construction;
    ``condition_number`` is that of the sampled-basis system, with
    ``ill_conditioned`` set above :data:`CONDITION_LIMIT`.
    """

    values: np.ndarray
    coefficients: np.ndarray
    condition_number: float
    ill_conditioned: bool = False


def select_sensors(basis, n_sensors=None):
    """Greedy volume-maximizing sensor selection for a feature basis.

    Runs column-pivoted QR on the transposed mode matrix; the first ``r``
    pivots (ties toward the lowest location index) become the sensors.  When
    ``n_sensors`` exceeds the basis rank, additional locations are appended
    greedily, each maximizing the determinant gain of the sampled Gram
    matrix.

    Returns a :class:`SensorSet`; it is shorter than requested and flagged
    when the basis rows are numerically rank deficient.
    """
    n = basis.n_locations
    r = basis.rank
    if n_sensors is None:
        n_sensors = r
    n_sensors = int(n_sensors)
    if not 1 <= n_sensors <= n:
        raise ParameterError(
            f"n_sensors must be in [1, {n}], got {n_sensors}")
    seq = pivoted_qr(basis.modes.T, max_pivots=min(n_sensors, r))
    indices = seq.pivots
    scores = seq.residual_norms
    if n_sensors > r and not seq.rank_deficient:
        extra_idx, extra_scores = _oversample_greedy(
            basis.modes, indices, n_sensors - r)
        indices = np.concatenate([indices, extra_idx])
        scores = np.concatenate([scores, extra_scores])
    return SensorSet(indices=indices, scores=scores,
                     rank_deficient=seq.rank_deficient)


def _oversample_greedy(modes, selected, extra):
    """Append rows maximizing the sampled Gram determinant, one at a time.

    The gain of adding row ``phi`` to sampled rows M is
    ``det(M'M + phi phi^T) = det(M'M) * (1 + phi^T (M'M)^-1 phi)``, so each
    step picks the remaining row with the largest leverage against the
    current selection.  Scores record ``sqrt(1 + leverage)``.
    """
    n = modes.shape[0]
    chosen = list(selected)
    gram = modes[chosen].T @ modes[chosen]
    alive = np.ones(n, dtype=bool)
    alive[chosen] = False
    out_idx = np.empty(extra, dtype=np.int64)
    out_scores = np.empty(extra, dtype=np.float64)
    for step in range(extra):
        solved = np.linalg.solve(gram, modes.T)        # r x n
        leverage = np.einsum("ij,ji->i", modes, solved)
        leverage[~alive] = -np.inf
        j = int(np.argmax(leverage))
        out_idx[step] = j
        out_scores[step] = np.sqrt(max(1.0 + leverage[j], 0.0))
        alive[j] = False
        gram = gram + np.outer(modes[j], modes[j])
    return out_idx, out_scores


def measure(x, sensors):
    """Apply the point measurement operator: gather ``x`` at sensor indices."""
    x = as_vector(x, "field")
    idx = sensors.indices
    if idx.size == 0:
        return np.empty(0, dtype=np.float64)
    if idx.max() >= x.shape[0]:
        raise ParameterError(
            f"sensor index {int(idx.max())} out of bounds for field of "
            f"length {x.shape[0]}")
    return x[idx].copy()


def reconstruct(y, basis, sensors, rcond=RCOND_DEFAULT):
    """Estimate the full field from measurements at the sensor locations.

    Solves the least-squares problem for the basis coefficients through the
    pseudoinverse of the sampled modes, then lifts back to all locations.  A
    training mean stored on the basis is removed from the measurements first
    and restored after lifting.

    Parameters
    ----------
    y : array_like, length len(sensors)
        Measured values, ordered like ``sensors.indices``.
    basis : FeatureBasis
    sensors : SensorSet

    Returns
    -------
    Reconstruction
        Ill conditioning of the sampled system is reported on the result,
        never raised.
    """
    y = as_vector(y, "measurements", allow_empty=True)
    idx = sensors.indices
    if y.shape[0] != idx.size:
        raise ParameterError(
            f"got {y.shape[0]} measurements for {idx.size} sensors")
    if idx.size == 0:
        raise ParameterError("cannot reconstruct from an empty sensor set")
    if idx.max() >= basis.n_locations:
        raise ParameterError(
            f"sensor index {int(idx.max())} out of bounds for basis with "
            f"{basis.n_locations} locations")
    sampled = basis.modes[idx, :]
    rhs = y - basis.mean[idx] if basis.mean is not None else y
    coeff = pseudoinverse(sampled, rcond=rcond) @ rhs
    s = svd(sampled).singular_values
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    values = basis.modes @ coeff
    if basis.mean is not None:
        values = values + basis.mean
    return Reconstruction(values=values, coefficients=coeff,
                          condition_number=cond,
                          ill_conditioned=bool(cond > CONDITION_LIMIT))


def random_sensors(n, r, seed):
    """Uniform sensor baseline: ``r`` of ``n`` locations without replacement.

    Seeded and deterministic; used as the comparison arm for the optimized
    placement.
    """
    if not 0 <= r <= n:
        raise ParameterError(f"need 0 <= r <= n, got r={r}, n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(n, size=r, replace=False).astype(np.int64)
    return SensorSet(indices=idx, scores=None)
