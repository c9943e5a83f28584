"""Gap measurement datasets and shim-region segmentation.

A dataset is a dense matrix of aligned gap measurements: one row per
measurement location, one column per assembled unit, with stable string ids
on both axes.  A segmentation names disjoint subsets of locations (the
separately manufactured shim regions) that are modeled independently.
"""

from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from .errors import IngestionError, ParameterError


@dataclass(frozen=True)
class GapDataset:
    """Aligned gap measurements: locations x units, plus metadata."""

    values: np.ndarray
    location_ids: Tuple[str, ...]
    unit_ids: Tuple[str, ...]
    units_label: str = "units"
    gap_unit: str = "inch"
    imputed_count: int = 0

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "location_ids", tuple(self.location_ids))
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        if values.ndim != 2:
            raise IngestionError(f"gap matrix must be 2-D, got {values.shape}")
        n, m = values.shape
        if n < 1 or m < 1:
            raise IngestionError("gap matrix must be nonempty")
        if len(self.location_ids) != n:
            raise IngestionError(
                f"{len(self.location_ids)} location ids for {n} rows")
        if len(self.unit_ids) != m:
            raise IngestionError(f"{len(self.unit_ids)} unit ids for {m} columns")
        if len(set(self.location_ids)) != n:
            raise IngestionError("location ids must be unique")
        if len(set(self.unit_ids)) != m:
            raise IngestionError("unit ids must be unique")
        if not np.isfinite(values).all():
            raise IngestionError("gap matrix contains NaN or Inf entries")

    @property
    def n_locations(self):
        return int(self.values.shape[0])

    @property
    def n_units(self):
        return int(self.values.shape[1])

    def location_index(self):
        """Mapping location_id -> row index."""
        return {loc: i for i, loc in enumerate(self.location_ids)}

    def drop_unit(self, k):
        """Dataset without column ``k`` (used by leave-one-out folds)."""
        mask = np.ones(self.n_units, dtype=bool)
        mask[k] = False
        return GapDataset(values=self.values[:, mask],
                          location_ids=self.location_ids,
                          unit_ids=tuple(u for i, u in enumerate(self.unit_ids)
                                         if i != k),
                          units_label=self.units_label,
                          gap_unit=self.gap_unit)


def build_gap_matrix(scans, units_label="units", gap_unit="inch",
                     impute_missing=False):
    """Assemble per-unit location->gap maps into a :class:`GapDataset`.

    Columns are ordered by unit id and rows by sorted location id (the
    canonical ordering stored in the dataset).  Every unit must cover the
    same location-id set; a mismatch raises :class:`IngestionError` naming
    the offending unit and its missing/extra ids.  NaN values are rejected
    unless ``impute_missing`` is set, in which case they are replaced by the
    per-location mean of the remaining units and counted in
    ``imputed_count``.
    """
    if not isinstance(scans, Mapping) or not scans:
        raise IngestionError("scans must be a nonempty mapping of "
                             "unit id -> {location id: gap}")
    unit_ids = tuple(sorted(str(u) for u in scans))
    reference = None
    reference_unit = None
    for unit in unit_ids:
        locs = set(scans[unit])
        if reference is None:
            reference, reference_unit = locs, unit
            if not locs:
                raise IngestionError(f"unit {unit!r} has no measurements")
            continue
        if locs != reference:
            missing = sorted(reference - locs)
            extra = sorted(locs - reference)
            parts = [f"unit {unit!r} does not match the location set of "
                     f"unit {reference_unit!r}"]
            if missing:
                parts.append(f"missing: {missing}")
            if extra:
                parts.append(f"unexpected: {extra}")
            raise IngestionError("; ".join(parts))
    location_ids = tuple(sorted(reference))
    values = np.empty((len(location_ids), len(unit_ids)), dtype=np.float64)
    for j, unit in enumerate(unit_ids):
        column = scans[unit]
        for i, loc in enumerate(location_ids):
            values[i, j] = float(column[loc])
    imputed = 0
    nan_mask = np.isnan(values)
    if np.isinf(values).any():
        raise IngestionError("gap values contain Inf entries")
    if nan_mask.any():
        if not impute_missing:
            bad = [location_ids[i] for i in np.unique(np.nonzero(nan_mask)[0])]
            raise IngestionError(
                f"gap values contain NaN at locations {bad}; "
                "pass impute_missing=True to fill with per-location means")
        for i in np.nonzero(nan_mask.any(axis=1))[0]:
            row = values[i]
            present = ~nan_mask[i]
            if not present.any():
                raise IngestionError(
                    f"location {location_ids[i]!r} has no finite value in any unit")
            row[nan_mask[i]] = row[present].mean()
            imputed += int(nan_mask[i].sum())
    return GapDataset(values=values, location_ids=location_ids,
                      unit_ids=unit_ids, units_label=units_label,
                      gap_unit=gap_unit, imputed_count=imputed)


@dataclass(frozen=True)
class ShimSegmentation:
    """Named, pairwise-disjoint subsets of location indices."""

    regions: Mapping[str, np.ndarray]

    def __post_init__(self):
        cleaned = {}
        seen = set()
        for name, idx in self.regions.items():
            arr = np.ascontiguousarray(idx, dtype=np.int64)
            if arr.ndim != 1 or arr.size == 0:
                raise ParameterError(
                    f"region {name!r} must be a nonempty 1-D index list")
            if arr.min() < 0:
                raise ParameterError(f"region {name!r} has negative indices")
            here = set(arr.tolist())
            if len(here) != arr.size:
                raise ParameterError(f"region {name!r} has duplicate indices")
            if here & seen:
                raise ParameterError(
                    f"region {name!r} overlaps another region")
            seen |= here
            cleaned[str(name)] = arr
        object.__setattr__(self, "regions", cleaned)

    @classmethod
    def single_region(cls, n_locations, name="all"):
        """One region covering every location."""
        return cls({name: np.arange(n_locations, dtype=np.int64)})

    @classmethod
    def from_location_ids(cls, named_ids, dataset):
        """Build from a mapping of region name -> list of location ids."""
        index = dataset.location_index()
        regions = {}
        for name, ids in named_ids.items():
            try:
                regions[name] = np.array([index[i] for i in ids], dtype=np.int64)
            except KeyError as exc:
                raise IngestionError(
                    f"region {name!r} references unknown location id "
                    f"{exc.args[0]!r}") from None
        return cls(regions)

    def to_location_ids(self, dataset):
        """Serialize back to region name -> list of location ids."""
        return {name: [dataset.location_ids[i] for i in idx]
                for name, idx in self.regions.items()}

    def validate_for(self, n_locations):
        for name, idx in self.regions.items():
            if idx.max() >= n_locations:
                raise ParameterError(
                    f"region {name!r} index {int(idx.max())} out of range "
                    f"for {n_locations} locations")

    def __iter__(self):
        return iter(self.regions.items())

    def __len__(self):
        return len(self.regions)
