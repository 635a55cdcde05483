"""Geographic expert router.

Test surveys with a presence-absence training survey within the gate radius
(10 km by default, boundary inclusive) are in-distribution; everything else
is out-of-distribution. Each survey then takes exactly its assigned expert's
prediction, with no mixing inside a survey.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .geo import GeoIndex
from .ingest import Dataset

DEFAULT_GATE_RADIUS_KM = 10.0


class Side(enum.Enum):
    IN_DISTRIBUTION = "in_distribution"
    OUT_OF_DISTRIBUTION = "out_of_distribution"


class RoutingError(ValueError):
    """A survey is missing from its assigned expert's predictions."""


@dataclass(frozen=True)
class GateAssignment:
    survey_id: int
    side: Side
    nearest_pa_km: float


def assign(
    test_dataset: Dataset,
    pa_dataset: Dataset,
    gate_radius_km: float = DEFAULT_GATE_RADIUS_KM,
) -> list[GateAssignment]:
    """Per test survey: its side and the distance to the nearest PA survey.

    An empty PA dataset routes everything out-of-distribution with an
    infinite nearest distance. Output is ordered by survey id.
    """
    if gate_radius_km < 0:
        raise ValueError("gate_radius_km must be >= 0")
    n = len(test_dataset)
    if len(pa_dataset) == 0:
        nearest = np.full(n, math.inf)
    else:
        index = GeoIndex.from_dataset(pa_dataset)
        _, dists = index.knn_query_many(np.radians(test_dataset.lats), np.radians(test_dataset.lons), 1)
        nearest = dists[:, 0]
    return [
        GateAssignment(
            int(test_dataset.ids[i]),
            Side.IN_DISTRIBUTION if nearest[i] <= gate_radius_km else Side.OUT_OF_DISTRIBUTION,
            float(nearest[i]),
        )
        for i in range(n)
    ]


def moe_merge(
    assignments: list[GateAssignment],
    in_dist_predictions: Mapping[int, frozenset[int]],
    ood_predictions: Mapping[int, frozenset[int]],
) -> dict[int, frozenset[int]]:
    """Route each survey to its assigned expert's prediction."""
    out: dict[int, frozenset[int]] = {}
    for a in assignments:
        source = in_dist_predictions if a.side is Side.IN_DISTRIBUTION else ood_predictions
        if a.survey_id not in source:
            raise RoutingError(f"survey {a.survey_id} missing from {a.side.value} predictions")
        out[a.survey_id] = frozenset(source[a.survey_id])
    return out


def write_assignments(assignments: list[GateAssignment], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("surveyId,side,nearestPaKm\n")
        for a in assignments:
            km = "inf" if math.isinf(a.nearest_pa_km) else repr(a.nearest_pa_km)
            f.write(f"{a.survey_id},{a.side.value},{km}\n")


def read_assignments(path: str) -> list[GateAssignment]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["surveyId", "side", "nearestPaKm"]:
            raise ValueError(f"{path}: not an assignment file (header {header!r})")
        for row in reader:
            if not row:
                continue
            out.append(GateAssignment(int(row[0]), Side(row[1]), float(row[2])))
    return out
