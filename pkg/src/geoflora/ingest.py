"""Survey table ingestion: CSV parsing, validation and the species catalog.

Two comma-delimited, UTF-8 file shapes are supported (header row required):

  long  surveyId,lat,lon,speciesId    one row per observation
  wide  surveyId,lat,lon,speciesIds   one row per survey, speciesIds a
                                      space-separated list (empty for test
                                      surveys)

Raw species identifiers are remapped to dense indices [0, S) at ingestion;
all downstream math runs on dense indices and submissions map back to raw
ids. Dense indices are assigned by ascending raw id, so any two files
covering the same species produce identical mappings.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

# Duplicate rows for one survey may disagree on coordinates by up to this
# much (degrees) before we treat the file as corrupt; tolerates formatting
# jitter in source exports.
COORD_CONFLICT_TOLERANCE_DEG = 1e-6


class ParseError(ValueError):
    """Raised for malformed or inconsistent survey files."""


class DatasetKind(enum.Enum):
    PA_TRAIN = "pa"
    PO_TRAIN = "po"
    TEST = "test"


class OccurrenceFormat(enum.Enum):
    AUTO = "auto"
    LONG = "long"
    WIDE = "wide"


_LONG_HEADER = ["surveyId", "lat", "lon", "speciesId"]
_WIDE_HEADER = ["surveyId", "lat", "lon", "speciesIds"]


@dataclass(frozen=True)
class SurveyRecord:
    """One survey: identifier, coordinates in degrees, dense species indices."""

    survey_id: int
    lat: float
    lon: float
    species: frozenset[int]


class SpeciesCatalog:
    """Bidirectional raw id <-> dense index map with per-species survey counts.

    ``occurrence_count[d]`` is the number of surveys containing species ``d``
    in the data the catalog was built from; summed over species it equals the
    total number of distinct (survey, species) pairs.
    """

    __slots__ = ("raw_to_dense", "dense_to_raw", "occurrence_count")

    def __init__(self, dense_to_raw, occurrence_count=None):
        self.dense_to_raw = np.asarray(dense_to_raw, dtype=np.int64)
        if occurrence_count is None:
            occurrence_count = np.zeros(self.dense_to_raw.size, dtype=np.int64)
        self.occurrence_count = np.asarray(occurrence_count, dtype=np.int64)
        if self.occurrence_count.shape != self.dense_to_raw.shape:
            raise ValueError("occurrence_count length must match dense_to_raw")
        self.raw_to_dense = {int(raw): d for d, raw in enumerate(self.dense_to_raw)}
        if len(self.raw_to_dense) != self.dense_to_raw.size:
            raise ValueError("duplicate raw species id in catalog")

    @classmethod
    def from_species_sets(cls, species_sets: Iterable[Iterable[int]]) -> "SpeciesCatalog":
        """Build a catalog (sorted raw ids, counted occurrences) from raw id sets."""
        counts: dict[int, int] = {}
        for s in species_sets:
            for raw in set(s):
                counts[raw] = counts.get(raw, 0) + 1
        raws = sorted(counts)
        return cls(np.array(raws, dtype=np.int64), np.array([counts[r] for r in raws], dtype=np.int64))

    @staticmethod
    def union(catalogs: Sequence["SpeciesCatalog"]) -> "SpeciesCatalog":
        """Merged catalog over several datasets; counts are summed per raw id."""
        counts: dict[int, int] = {}
        for cat in catalogs:
            for raw, cnt in zip(cat.dense_to_raw, cat.occurrence_count):
                counts[int(raw)] = counts.get(int(raw), 0) + int(cnt)
        raws = sorted(counts)
        return SpeciesCatalog(np.array(raws, dtype=np.int64), np.array([counts[r] for r in raws], dtype=np.int64))

    def to_dense(self, raw: int) -> int:
        return self.raw_to_dense[raw]

    def to_raw(self, dense: int) -> int:
        return int(self.dense_to_raw[dense])

    def __len__(self) -> int:
        return int(self.dense_to_raw.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpeciesCatalog)
            and np.array_equal(self.dense_to_raw, other.dense_to_raw)
            and np.array_equal(self.occurrence_count, other.occurrence_count)
        )


@dataclass
class Dataset:
    """An immutable-by-convention collection of surveys, sorted by survey id.

    Columnar storage (ids/lats/lons arrays plus a list of dense species
    frozensets) keeps million-survey pipelines cheap; ``SurveyRecord`` views
    are materialised on demand.
    """

    ids: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    species: list[frozenset[int]]
    kind: DatasetKind | None = None

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.lons = np.asarray(self.lons, dtype=np.float64)
        n = self.ids.size
        if not (self.lats.size == self.lons.size == len(self.species) == n):
            raise ValueError("column lengths disagree")
        if n > 1 and np.any(np.diff(self.ids) <= 0):
            raise ValueError("survey ids must be unique and sorted ascending")

    def __len__(self) -> int:
        return int(self.ids.size)

    def record(self, i: int) -> SurveyRecord:
        return SurveyRecord(int(self.ids[i]), float(self.lats[i]), float(self.lons[i]), self.species[i])

    def __iter__(self) -> Iterator[SurveyRecord]:
        return (self.record(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.lats, other.lats)
            and np.array_equal(self.lons, other.lons)
            and self.species == other.species
        )

    def species_counts(self, num_species: int | None = None) -> np.ndarray:
        """Per-species number of surveys containing it (dense indexing)."""
        if num_species is None:
            num_species = 1 + max((max(s) for s in self.species if s), default=-1)
        counts = np.zeros(num_species, dtype=np.int64)
        for s in self.species:
            for d in s:
                counts[d] += 1
        return counts


@dataclass
class _Group:
    lat: float
    lon: float
    line: int
    raw_species: set[int] = field(default_factory=set)


def _check_coords(lat: float, lon: float, line: int, path: str) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ParseError(f"{path}:{line}: non-finite coordinate")
    if abs(lat) > 90.0 or abs(lon) > 180.0:
        raise ParseError(f"{path}:{line}: coordinate out of range ({lat}, {lon})")


def _detect_format(header: list[str], path: str) -> OccurrenceFormat:
    if header == _LONG_HEADER:
        return OccurrenceFormat.LONG
    if header == _WIDE_HEADER:
        return OccurrenceFormat.WIDE
    raise ParseError(f"{path}:1: unrecognised header {header!r}; expected {_LONG_HEADER} or {_WIDE_HEADER}")


def parse_occurrences(
    path: str,
    fmt: OccurrenceFormat = OccurrenceFormat.AUTO,
    *,
    kind: DatasetKind | None = None,
    catalog: SpeciesCatalog | None = None,
) -> tuple[Dataset, SpeciesCatalog]:
    """Parse a survey CSV into a dataset plus its species catalog.

    Rows sharing a survey id are grouped into one record (union of species);
    they must agree on coordinates to within 1e-6 degrees. Output is sorted
    by survey id, so row order never affects the result. If ``catalog`` is
    given its mapping is reused (every species in the file must be present in
    it and its counts are left untouched); otherwise a fresh catalog is built
    from this file.

    ``kind`` enables emptiness checks: TEST surveys must carry no species,
    training surveys must carry at least one.
    """
    groups: dict[int, _Group] = {}
    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}:1: empty file, header row required")
        header = [h.strip() for h in header]
        detected = _detect_format(header, path)
        if fmt is not OccurrenceFormat.AUTO and fmt is not detected:
            raise ParseError(f"{path}:1: header is {detected.value} format but {fmt.value} was requested")

        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            try:
                survey_id = int(row[0])
                lat = float(row[1])
                lon = float(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{line}: malformed row: {exc}") from None
            _check_coords(lat, lon, line, path)
            try:
                if detected is OccurrenceFormat.LONG:
                    raw_species = [int(row[3])]
                else:
                    raw_species = [int(tok) for tok in row[3].split()]
            except ValueError as exc:
                raise ParseError(f"{path}:{line}: malformed species field: {exc}") from None

            grp = groups.get(survey_id)
            if grp is None:
                groups[survey_id] = _Group(lat, lon, line, set(raw_species))
            else:
                if (
                    abs(grp.lat - lat) > COORD_CONFLICT_TOLERANCE_DEG
                    or abs(grp.lon - lon) > COORD_CONFLICT_TOLERANCE_DEG
                ):
                    raise ParseError(
                        f"{path}:{line}: survey {survey_id} has conflicting coordinates "
                        f"({lat}, {lon}) vs ({grp.lat}, {grp.lon}) at line {grp.line}"
                    )
                grp.raw_species.update(raw_species)

    if catalog is None:
        catalog = SpeciesCatalog.from_species_sets(g.raw_species for g in groups.values())

    order = sorted(groups)
    ids = np.fromiter(order, dtype=np.int64, count=len(order))
    lats = np.array([groups[i].lat for i in order], dtype=np.float64)
    lons = np.array([groups[i].lon for i in order], dtype=np.float64)
    species: list[frozenset[int]] = []
    for i in order:
        g = groups[i]
        try:
            species.append(frozenset(catalog.to_dense(r) for r in g.raw_species))
        except KeyError as exc:
            raise ParseError(f"{path}: survey {i} references species {exc.args[0]} not present in the catalog") from None

    if kind is DatasetKind.TEST:
        for i, s in zip(ids, species):
            if s:
                raise ParseError(f"{path}: test survey {i} must not carry species")
    elif kind is not None:
        for i, s in zip(ids, species):
            if not s:
                raise ParseError(f"{path}: {kind.value} survey {i} carries no species")

    return Dataset(ids, lats, lons, species, kind=kind), catalog


def write_dataset(dataset: Dataset, path: str, catalog: SpeciesCatalog) -> None:
    """Write a dataset in the wide format; re-parsing restores it exactly.

    Species are emitted as raw ids sorted ascending, coordinates with 7
    decimal places, rows ordered by survey id, "\\n" line endings.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("surveyId,lat,lon,speciesIds\n")
        for i in range(len(dataset)):
            raw = sorted(catalog.to_raw(d) for d in dataset.species[i])
            f.write(
                f"{int(dataset.ids[i])},{dataset.lats[i]:.7f},{dataset.lons[i]:.7f},"
                f"{' '.join(map(str, raw))}\n"
            )


def reindex_dataset(dataset: Dataset, old: SpeciesCatalog, new: SpeciesCatalog) -> Dataset:
    """Re-encode a dataset's dense species indices from one catalog to another."""
    remap = {d: new.to_dense(old.to_raw(d)) for d in range(len(old))}
    species = [frozenset(remap[d] for d in s) for s in dataset.species]
    return Dataset(dataset.ids, dataset.lats, dataset.lons, species, kind=dataset.kind)


def decode_species(dataset: Dataset, catalog: SpeciesCatalog) -> dict[int, frozenset[int]]:
    """Per-survey raw-id species sets, e.g. for metric computation on files."""
    return {
        int(dataset.ids[i]): frozenset(catalog.to_raw(d) for d in dataset.species[i])
        for i in range(len(dataset))
    }
