"""End-to-end predictive shimming workflow.

Training learns, per shim region: a per-location mean, a robust low-rank
feature basis (principal component pursuit followed by SVD and optimal-rank
truncation), and a greedy volume-maximizing sensor set.  Prediction measures
a new unit at the sensor locations only and reconstructs the full gap field.
Leave-one-out cross-validation repeats training with every unit held out
once, scores within-tolerance accuracy, and runs a paired random-sensor
baseline for comparison.
"""

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np

from .dataset import ShimSegmentation
from .errors import MissingSensorError, NumericalError, ParameterError
from .linalg import RCOND_DEFAULT, as_matrix, svd
from .rpca import FeatureBasis, PcpConfig, optimal_rank, pcp, truncate_basis
from .sensing import SensorSet, measure, random_sensors, reconstruct, select_sensors

#: Default within-tolerance accuracy threshold (machining tolerance, inches).
TOLERANCE_DEFAULT = 0.005

#: Fixed histogram bin edges over log10(absolute error); errors are clipped
#: into the covered range so reports are deterministic and comparable.
LOG10_ERROR_EDGES = tuple(np.linspace(-12.0, 1.0, 66))


@dataclass(frozen=True)
class PipelineConfig:
    """Training and cross-validation settings.

    ``center`` removes the per-location training mean before decomposition;
    ``robust`` routes the centered matrix through principal component
    pursuit before the SVD (turn off to ablate against plain SVD).  ``rank``
    overrides the optimal-rank selection; either way the rank is clamped to
    ``[1, m_train - 1]``.  ``n_sensors`` defaults to the basis rank.
    ``seed`` is the master seed from which per-fold baseline seeds derive.
    """

    center: bool = True
    robust: bool = True
    rank: Optional[int] = None
    n_sensors: Optional[int] = None
    pcp: PcpConfig = field(default_factory=PcpConfig)
    tolerance: float = TOLERANCE_DEFAULT
    rcond: float = RCOND_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if self.rank is not None and self.rank < 1:
            raise ParameterError(f"rank override must be >= 1, got {self.rank}")
        if self.n_sensors is not None and self.n_sensors < 1:
            raise ParameterError(
                f"n_sensors must be >= 1, got {self.n_sensors}")
        if self.tolerance <= 0:
            raise ParameterError(
                f"tolerance must be > 0, got {self.tolerance}")

    def snapshot(self):
        """JSON-ready dict of every setting (stored with trained models)."""
        return {
            "center": self.center,
            "robust": self.robust,
            "rank": self.rank,
            "n_sensors": self.n_sensors,
            "pcp": {
                "lam": self.pcp.lam,
                "mu0": self.pcp.mu0,
                "rho": self.pcp.rho,
                "tol": self.pcp.tol,
                "max_iter": self.pcp.max_iter,
                "svd_mode": self.pcp.svd_mode,
            },
            "tolerance": self.tolerance,
            "rcond": self.rcond,
            "seed": self.seed,
        }

    @classmethod
    def from_snapshot(cls, data):
        pcp_cfg = PcpConfig(**data.get("pcp", {}))
        fields = {k: data[k] for k in
                  ("center", "robust", "rank", "n_sensors", "tolerance",
                   "rcond", "seed") if k in data}
        return cls(pcp=pcp_cfg, **fields)


@dataclass(frozen=True)
class RegionModel:
    """Trained artifacts for one shim region.

    ``region_indices`` are global dataset row indices; the basis rows and
    sensor indices are region-local (positions within ``region_indices``).
    """

    name: str
    region_indices: np.ndarray
    basis: FeatureBasis
    sensors: SensorSet
    training_unit_ids: Tuple[str, ...]
    diagnostics: Mapping[str, object]

    @property
    def global_sensor_indices(self):
        return self.region_indices[self.sensors.indices]


@dataclass(frozen=True)
class ShimModel:
    """Per-region models plus the location vocabulary they index into."""

    regions: Mapping[str, RegionModel]
    location_ids: Tuple[str, ...]
    gap_unit: str
    config: Mapping[str, object]

    def sensor_location_ids(self):
        """Region name -> location ids of its sensors, in selection order."""
        return {name: [self.location_ids[g] for g in model.global_sensor_indices]
                for name, model in self.regions.items()}


@dataclass(frozen=True)
class Prediction:
    """Full-field prediction; locations outside every region are NaN."""

    values: np.ndarray
    covered: np.ndarray
    regions: Mapping[str, object]


def train_region_matrix(x_region, cfg):
    """Train basis + sensors on one region's training matrix.

    Pipeline order is fixed: optional row-mean centering, principal
    component pursuit on the centered matrix, SVD of the low-rank part,
    rank selection (optimal threshold unless overridden, clamped to
    ``[1, m_train - 1]``), then greedy sensor selection on the truncated
    modes.

    The optimal-threshold rank is computed from the spectrum of the centered
    training matrix, which is the signal-plus-noise object the threshold is
    calibrated for; the spectra that come out of the pursuit have their
    noise bulk shrunken and make the threshold badly overestimate the rank.
    The modes themselves are still taken from the robust low-rank part.

    Returns ``(basis, sensors, diagnostics)``.
    """
    x = as_matrix(x_region, "training matrix")
    n, m_train = x.shape
    if m_train < 2:
        raise ParameterError(
            f"training requires at least 2 units, got {m_train}")
    diagnostics = {}
    mean = x.mean(axis=1) if cfg.center else None
    centered = x - mean[:, None] if cfg.center else x

    if cfg.robust:
        decomposition = pcp(centered, cfg.pcp)
        diagnostics["pcp_converged"] = decomposition.converged
        diagnostics["pcp_iterations"] = decomposition.iterations
        diagnostics["pcp_residual"] = decomposition.final_residual
        diagnostics["pcp_sparsity"] = decomposition.sparsity
        if not decomposition.converged:
            warnings.warn(
                f"principal component pursuit stopped at "
                f"{decomposition.iterations} iterations with residual "
                f"{decomposition.final_residual:.3e}; training continues")
        low_rank = decomposition.low_rank
        if cfg.center:
            # Outliers leak into the plain row mean (a few corrupted units
            # bias every prediction at their locations); storing the mean of
            # the outlier-cleaned data removes that systematic offset.
            mean = mean - decomposition.sparse.mean(axis=1)
    else:
        low_rank = centered

    spectrum = svd(low_rank)
    if cfg.rank is not None:
        rank = cfg.rank
        diagnostics["rank_source"] = "override"
    else:
        if cfg.robust:
            data_spectrum = np.linalg.svd(centered, compute_uv=False)
        else:
            data_spectrum = spectrum.singular_values
        # centered data that is zero up to roundoff (identical units) would
        # otherwise leave floating-point junk for the threshold to count
        scale = float(np.linalg.norm(x))
        if data_spectrum[0] <= 1e-12 * max(scale, 1.0):
            rank = 0
        else:
            rank = optimal_rank(data_spectrum, n, m_train)
        diagnostics["rank_source"] = "optimal_threshold"
    clamped = min(max(rank, 1), m_train - 1)
    diagnostics["rank_selected"] = rank
    diagnostics["rank_clamped"] = clamped != rank
    rank = clamped

    basis = truncate_basis(spectrum, rank, mean=mean)
    sensors = select_sensors(basis, n_sensors=cfg.n_sensors or rank)
    diagnostics["rank"] = rank
    diagnostics["sensor_count"] = len(sensors)
    return basis, sensors, diagnostics


def train(dataset, segmentation=None, cfg=None):
    """Train a :class:`ShimModel` on every region of a dataset."""
    cfg = cfg or PipelineConfig()
    if dataset.n_units < 2:
        raise ParameterError("training requires at least 2 units")
    if segmentation is None:
        segmentation = ShimSegmentation.single_region(dataset.n_locations)
    segmentation.validate_for(dataset.n_locations)
    regions = {}
    for name, idx in segmentation:
        basis, sensors, diag = train_region_matrix(dataset.values[idx, :], cfg)
        regions[name] = RegionModel(
            name=name, region_indices=idx, basis=basis, sensors=sensors,
            training_unit_ids=dataset.unit_ids, diagnostics=diag)
    return ShimModel(regions=regions, location_ids=dataset.location_ids,
                     gap_unit=dataset.gap_unit, config=cfg.snapshot())


def predict(model, measurements, rcond=RCOND_DEFAULT):
    """Reconstruct the full gap field of one unit from sensor measurements.

    ``measurements`` maps location id -> measured gap and must cover every
    sensor of every region; anything extra is ignored.  Locations outside
    the segmentation are NaN in the result and flagged in ``covered``.
    """
    n = len(model.location_ids)
    values = np.full(n, np.nan)
    covered = np.zeros(n, dtype=bool)
    missing_idx = []
    missing_ids = []
    for region in model.regions.values():
        for g in region.global_sensor_indices:
            loc = model.location_ids[g]
            if loc not in measurements:
                missing_idx.append(int(g))
                missing_ids.append(loc)
    if missing_idx:
        raise MissingSensorError(
            f"missing measurements at sensor indices {sorted(missing_idx)}",
            indices=missing_idx, location_ids=missing_ids)
    region_results = {}
    for name, region in model.regions.items():
        y = np.array([float(measurements[model.location_ids[g]])
                      for g in region.global_sensor_indices])
        rec = reconstruct(y, region.basis, region.sensors, rcond=rcond)
        region_results[name] = rec
        values[region.region_indices] = rec.values
        covered[region.region_indices] = True
    return Prediction(values=values, covered=covered, regions=region_results)


def within_tolerance(x_true, x_hat, tol=TOLERANCE_DEFAULT):
    """Fraction of points with ``|x_true - x_hat| <= tol`` (inclusive)."""
    if tol <= 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    a = np.asarray(x_true, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(
            f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ParameterError("cannot score empty vectors")
    return float(np.count_nonzero(np.abs(a - b) <= tol)) / a.size


def _fold_seed(master_seed, held_out_unit, region_name):
    """Stable per-fold, per-region seed for the random-sensor baseline.

    Keyed by the held-out unit id rather than the fold position so that
    relabeling or reordering dataset columns leaves every fold's baseline
    draw (and therefore all aggregates) unchanged.
    """
    digest = hashlib.blake2b(
        f"{master_seed}:{held_out_unit}:{region_name}".encode(),
        digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _log_histogram(errors):
    clipped = np.clip(np.abs(errors), 1e-12, None)
    logs = np.clip(np.log10(clipped), LOG10_ERROR_EDGES[0],
                   LOG10_ERROR_EDGES[-1])
    counts, _ = np.histogram(logs, bins=np.asarray(LOG10_ERROR_EDGES))
    return tuple(int(c) for c in counts)


@dataclass(frozen=True)
class ArmStats:
    """Accuracy aggregates for one sensing arm (optimal or random)."""

    percent_within_tol: float            # pooled over all fold x point pairs
    percent_within_tol_fold_mean: float  # mean of per-fold percentages
    median_abs_error: float
    fold_percents: Mapping[str, float]
    fold_errors: Mapping[str, np.ndarray]
    histogram_counts: Tuple[int, ...]


@dataclass(frozen=True)
class RegionReport:
    name: str
    total_points: int
    avg_sensor_count: float
    fold_sensor_counts: Mapping[str, int]
    optimal: ArmStats
    baseline: ArmStats


@dataclass(frozen=True)
class CrossValReport:
    """Leave-one-out results for every region, both sensing arms."""

    regions: Mapping[str, RegionReport]
    tolerance: float
    master_seed: int
    n_units: int
    unit_ids: Tuple[str, ...]
    failed_folds: Tuple[str, ...]
    gap_unit: str
    histogram_edges: Tuple[float, ...] = LOG10_ERROR_EDGES

    @property
    def n_folds(self):
        return self.n_units


def _arm_stats(fold_errors, tol):
    pooled = np.concatenate(list(fold_errors.values()))
    fold_percents = {unit: 100.0 * within_tolerance(err, np.zeros_like(err), tol)
                     for unit, err in fold_errors.items()}
    return ArmStats(
        percent_within_tol=100.0
        * float(np.count_nonzero(pooled <= tol)) / pooled.size,
        percent_within_tol_fold_mean=float(np.mean(list(fold_percents.values()))),
        median_abs_error=float(np.median(pooled)),
        fold_percents=fold_percents,
        fold_errors=fold_errors,
        histogram_counts=_log_histogram(pooled))


def loo_crossval(dataset, segmentation=None, cfg=None, truth=None):
    """Leave-one-out cross-validation with a paired random-sensor baseline.

    For every unit: train on the remaining units (per region), measure the
    held-out unit at that fold's sensors, reconstruct, and score against the
    held-out values at the configured tolerance.  The identical protocol
    runs with uniformly random sensor sets of the same size (per-fold seeds
    derived from the master seed, fold index, and region name) to quantify
    the value of optimized placement.

    ``truth`` optionally supplies a reference matrix (same shape as the
    dataset) used both for the held-out measurements and for scoring, e.g.
    the outlier-free field of a synthetic scenario; training always uses the
    recorded dataset values.

    Folds whose training fails are recorded in ``failed_folds`` and skipped;
    at least one fold must succeed.
    """
    cfg = cfg or PipelineConfig()
    if dataset.n_units < 3:
        raise ParameterError(
            f"leave-one-out needs at least 3 units, got {dataset.n_units}")
    if segmentation is None:
        segmentation = ShimSegmentation.single_region(dataset.n_locations)
    segmentation.validate_for(dataset.n_locations)
    if truth is not None:
        truth = as_matrix(truth, "truth")
        if truth.shape != dataset.values.shape:
            raise ParameterError(
                f"truth shape {truth.shape} does not match dataset "
                f"{dataset.values.shape}")
    target = truth if truth is not None else dataset.values

    region_names = [name for name, _ in segmentation]
    fold_errors = {name: {} for name in region_names}
    fold_errors_baseline = {name: {} for name in region_names}
    sensor_counts = {name: {} for name in region_names}
    failed = []

    for k, unit in enumerate(dataset.unit_ids):
        training = dataset.drop_unit(k)
        held_out = target[:, k]
        try:
            fold_models = {
                name: train_region_matrix(training.values[idx, :], cfg)
                for name, idx in segmentation}
        except (ParameterError, NumericalError) as exc:
            warnings.warn(f"fold {unit!r} failed to train: {exc}")
            failed.append(unit)
            continue
        for name, idx in segmentation:
            basis, sensors, _ = fold_models[name]
            local_field = held_out[idx]
            rec = reconstruct(measure(local_field, sensors), basis, sensors,
                              rcond=cfg.rcond)
            fold_errors[name][unit] = np.abs(local_field - rec.values)
            rand = random_sensors(idx.size, len(sensors),
                                  seed=_fold_seed(cfg.seed, unit, name))
            rec_rand = reconstruct(measure(local_field, rand), basis, rand,
                                   rcond=cfg.rcond)
            fold_errors_baseline[name][unit] = np.abs(local_field
                                                      - rec_rand.values)
            sensor_counts[name][unit] = len(sensors)

    if len(failed) == dataset.n_units:
        raise NumericalError("no cross-validation fold trained successfully")

    regions = {}
    for name, idx in segmentation:
        counts = sensor_counts[name]
        regions[name] = RegionReport(
            name=name,
            total_points=int(idx.size),
            avg_sensor_count=float(np.mean(list(counts.values()))),
            fold_sensor_counts=counts,
            optimal=_arm_stats(fold_errors[name], cfg.tolerance),
            baseline=_arm_stats(fold_errors_baseline[name], cfg.tolerance))
    return CrossValReport(regions=regions, tolerance=cfg.tolerance,
                          master_seed=cfg.seed, n_units=dataset.n_units,
                          unit_ids=dataset.unit_ids,
                          failed_folds=tuple(failed),
                          gap_unit=dataset.gap_unit)


@dataclass(frozen=True)
class RegionComparison:
    """Optimal-vs-random summary for one region."""

    name: str
    median_error_ratio: float        # random / optimal
    percent_within_tol_gap: float    # optimal - random, percentage points
    optimal_histogram: Tuple[int, ...]
    baseline_histogram: Tuple[int, ...]


@dataclass(frozen=True)
class BaselineComparison:
    regions: Mapping[str, RegionComparison]
    aggregate_median_error_ratio: float
    fraction_regions_optimal_no_worse: float
    histogram_edges: Tuple[float, ...]


def compare_baseline(report):
    """Summarize how optimized sensors compare with the random baseline.

    Per region: the ratio of pooled median absolute errors (random over
    optimal), the within-tolerance percentage gap, and the histogram pair
    for plotting.  The aggregate ratio pools every error across regions.
    """
    regions = {}
    pooled_opt = []
    pooled_base = []
    no_worse = 0
    for name, region in report.regions.items():
        opt_median = region.optimal.median_abs_error
        base_median = region.baseline.median_abs_error
        ratio = base_median / opt_median if opt_median > 0 else float("inf")
        if base_median == 0 and opt_median == 0:
            ratio = 1.0
        regions[name] = RegionComparison(
            name=name,
            median_error_ratio=float(ratio),
            percent_within_tol_gap=region.optimal.percent_within_tol
            - region.baseline.percent_within_tol,
            optimal_histogram=region.optimal.histogram_counts,
            baseline_histogram=region.baseline.histogram_counts)
        if (region.optimal.percent_within_tol
                >= region.baseline.percent_within_tol):
            no_worse += 1
        pooled_opt.extend(err for err in region.optimal.fold_errors.values())
        pooled_base.extend(err for err in region.baseline.fold_errors.values())
    all_opt = float(np.median(np.concatenate(pooled_opt)))
    all_base = float(np.median(np.concatenate(pooled_base)))
    if all_opt == 0 and all_base == 0:
        aggregate = 1.0
    elif all_opt == 0:
        aggregate = float("inf")
    else:
        aggregate = all_base / all_opt
    return BaselineComparison(
        regions=regions,
        aggregate_median_error_ratio=aggregate,
        fraction_regions_optimal_no_worse=no_worse / len(report.regions),
        histogram_edges=report.histogram_edges)
