"""Score-to-species decisions and neighbour-vote augmentation.

Threshold Top-K keeps species whose score clears the threshold, ranked by
descending score (ties to the lower species index) and capped at K.
Neighbour voting adds species that appear in more than a configured fraction
of the nearest reference surveys; the in-distribution side votes over raw PA
surveys (5 neighbours, > 80 %), the out-of-distribution side over strictly
merged PO surveys (6 neighbours, > 50 %). The final prediction is the
deduplicated union of both.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geo import GeoIndex
from .ingest import Dataset, SpeciesCatalog, SurveyRecord
from .losses import samples_f1
from .predictor import ScoreMatrix

# Grid-search defaults for tuning the in-distribution Threshold Top-K on a
# held-out split.
DEFAULT_GRID_THRESHOLDS = tuple(round(0.1 + 0.05 * i, 2) for i in range(17))  # 0.1 .. 0.9
DEFAULT_GRID_KCAPS = tuple(range(5, 51, 5))


@dataclass(frozen=True)
class TopKConfig:
    threshold: float
    k_cap: int
    fallback_top1: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.k_cap < 1:
            raise ValueError("k_cap must be >= 1")


@dataclass(frozen=True)
class VoteConfig:
    neighbor_count: int
    min_frequency: float
    strictly_greater: bool = True

    def __post_init__(self) -> None:
        if self.neighbor_count < 1:
            raise ValueError("neighbor_count must be >= 1")
        if not 0.0 < self.min_frequency <= 1.0:
            raise ValueError("min_frequency must be in (0, 1]")


# Defaults for the two expert sides.
IN_DIST_VOTE = VoteConfig(neighbor_count=5, min_frequency=0.8)
OOD_VOTE = VoteConfig(neighbor_count=6, min_frequency=0.5)


def threshold_top_k(scores: Mapping[int, float], cfg: TopKConfig) -> frozenset[int]:
    """Species whose score clears the threshold, capped at the K best.

    Filtering happens before capping: candidates are everything at or above
    the threshold, ranked by (descending score, ascending species index) and
    truncated to ``k_cap``. With ``fallback_top1`` an otherwise empty
    selection degrades to the single best-scoring species.
    """
    ranked = sorted(((sp, val) for sp, val in scores.items() if val >= cfg.threshold), key=lambda e: (-e[1], e[0]))
    if not ranked and cfg.fallback_top1 and scores:
        best = min(scores.items(), key=lambda e: (-e[1], e[0]))
        return frozenset({best[0]})
    return frozenset(sp for sp, _ in ranked[: cfg.k_cap])


def neighbor_vote(
    survey: SurveyRecord,
    reference: Dataset,
    cfg: VoteConfig,
    *,
    index: GeoIndex | None = None,
) -> frozenset[int]:
    """Species frequent among the nearest reference surveys of one test point.

    A species is voted in when its frequency among the ``neighbor_count``
    nearest reference surveys exceeds ``min_frequency`` (or meets it when
    ``strictly_greater`` is off). A reference smaller than the neighbour
    count uses every survey it has, shrinking the denominator.
    """
    votes = neighbor_vote_many(
        np.array([survey.lat]), np.array([survey.lon]), reference, cfg, index=index
    )
    return votes[0]


def neighbor_vote_many(
    lats_deg,
    lons_deg,
    reference: Dataset,
    cfg: VoteConfig,
    *,
    index: GeoIndex | None = None,
) -> list[frozenset[int]]:
    """Vectorised ``neighbor_vote`` over many query coordinates."""
    lats_deg = np.atleast_1d(np.asarray(lats_deg, dtype=np.float64))
    lons_deg = np.atleast_1d(np.asarray(lons_deg, dtype=np.float64))
    if len(reference) == 0:
        return [frozenset()] * lats_deg.size
    if index is None:
        index = GeoIndex.from_dataset(reference)
    pos, _ = index.knn_query_many(np.radians(lats_deg), np.radians(lons_deg), cfg.neighbor_count)
    denom = pos.shape[1]
    out: list[frozenset[int]] = []
    for i in range(lats_deg.size):
        counts: Counter[int] = Counter()
        for p in pos[i]:
            counts.update(reference.species[p])
        if cfg.strictly_greater:
            out.append(frozenset(sp for sp, c in counts.items() if c / denom > cfg.min_frequency))
        else:
            out.append(frozenset(sp for sp, c in counts.items() if c / denom >= cfg.min_frequency))
    return out


def finalize(
    predictions: Mapping[int, Iterable[int]],
    votes: Mapping[int, Iterable[int]],
) -> dict[int, frozenset[int]]:
    """Union the thresholded predictions with the vote sets, per survey."""
    out: dict[int, frozenset[int]] = {}
    for sid in set(predictions) | set(votes):
        out[sid] = frozenset(predictions.get(sid, ())) | frozenset(votes.get(sid, ()))
    return out


def apply_top_k(matrix: ScoreMatrix, cfg: TopKConfig) -> dict[int, frozenset[int]]:
    """Threshold Top-K over every row of a score matrix."""
    return {sid: threshold_top_k(matrix.row(sid), cfg) for sid in matrix.survey_ids()}


def grid_search_top_k(
    matrix: ScoreMatrix,
    truth: Mapping[int, frozenset[int]],
    thresholds: Sequence[float] = DEFAULT_GRID_THRESHOLDS,
    k_caps: Sequence[int] = DEFAULT_GRID_KCAPS,
    *,
    fallback_top1: bool = False,
) -> tuple[TopKConfig, float]:
    """Pick the (threshold, k_cap) pair maximising samples-averaged F1.

    The grid is scanned in ascending (threshold, k_cap) order and only a
    strict improvement moves the winner, so the result is deterministic.
    """
    best_cfg: TopKConfig | None = None
    best_f1 = -math.inf
    for thr in sorted(thresholds):
        for k_cap in sorted(k_caps):
            cfg = TopKConfig(threshold=thr, k_cap=k_cap, fallback_top1=fallback_top1)
            f1 = samples_f1(truth, apply_top_k(matrix, cfg))
            if f1 > best_f1:
                best_cfg, best_f1 = cfg, f1
    if best_cfg is None:
        raise ValueError("empty grid")
    return best_cfg, best_f1


def write_submission(predictions: Mapping[int, Iterable[int]], path: str, catalog: SpeciesCatalog) -> None:
    """Write surveyId,predictions rows; species as ascending raw ids."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("surveyId,predictions\n")
        for sid in sorted(predictions):
            raw = sorted(catalog.to_raw(sp) for sp in predictions[sid])
            f.write(f"{sid},{' '.join(map(str, raw))}\n")


def read_submission(path: str) -> dict[int, frozenset[int]]:
    """Read a submission file into per-survey raw-id sets."""
    import csv

    out: dict[int, frozenset[int]] = {}
    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["surveyId", "predictions"]:
            raise ValueError(f"{path}:1: expected header surveyId,predictions, got {header!r}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            sid = int(row[0])
            if sid in out:
                raise ValueError(f"{path}:{line}: duplicate survey id {sid}")
            out[sid] = frozenset(int(tok) for tok in row[1].split())
    return out
