"""shimsense: predictive shimming from sparse optimized measurements.

Learns low-dimensional gap-field structure from historical assembly
measurements via robust principal component pursuit, places near-optimal
sparse sensors with greedy volume-maximizing QR pivoting, reconstructs full
high-resolution fields from those few measurements, and cross-validates
within-tolerance accuracy against a random-sensor baseline.
"""

from ._kernels import active_backend, available_backends, set_backend
from .dataset import GapDataset, ShimSegmentation, build_gap_matrix
from .errors import (IngestionError, MissingSensorError, NumericalError,
                     ParameterError, ShimsenseError)
from .linalg import (PivotSequence, SvdResult, pivoted_qr, pseudoinverse,
                     soft_threshold, svd, svt)
from .pipeline import (ArmStats, BaselineComparison, CrossValReport,
                       PipelineConfig, Prediction, RegionComparison,
                       RegionModel, RegionReport, ShimModel, compare_baseline,
                       loo_crossval, predict, train, train_region_matrix,
                       within_tolerance)
from .randomized import RsvdConfig, range_finder, rsvd
from .rpca import (FeatureBasis, PcpConfig, RobustDecomposition, optimal_rank,
                   pcp, truncate_basis)
from .sensing import (Reconstruction, SensorSet, measure, random_sensors,
                      reconstruct, select_sensors)
from .synth import GroundTruth, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "ArmStats", "BaselineComparison", "CrossValReport", "FeatureBasis",
    "GapDataset", "GroundTruth", "IngestionError", "MissingSensorError",
    "NumericalError", "ParameterError", "PcpConfig", "PipelineConfig",
    "PivotSequence", "Prediction", "Reconstruction", "RegionComparison",
    "RegionModel", "RegionReport", "RobustDecomposition", "RsvdConfig",
    "SensorSet", "ShimModel", "ShimSegmentation", "ShimsenseError",
    "SvdResult", "SynthConfig", "active_backend", "available_backends",
    "build_gap_matrix", "compare_baseline", "generate", "loo_crossval",
    "measure", "optimal_rank", "pcp", "pivoted_qr", "predict",
    "pseudoinverse", "random_sensors", "range_finder", "reconstruct", "rsvd",
    "select_sensors", "set_backend", "soft_threshold", "svd", "svt", "train",
    "train_region_matrix", "truncate_basis", "within_tolerance",
]
