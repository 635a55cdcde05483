"""Independent reference implementations used to check the fast paths.

The spatial oracles are direct O(n) / O(n^2) scans with no index structure.
They reuse the library's haversine function for distance values (so boundary
and tie comparisons are bit-identical); the formula itself is validated
separately against ``reference_haversine_km``, a from-scratch scalar
implementation.
"""

from __future__ import annotations

import math

import numpy as np

from geoflora.geo import GeoPoint, haversine_km_arrays
from geoflora.ingest import Dataset
from geoflora.pseudolabel import MergeConfig, MergeMode


def reference_haversine_km(lat1_deg: float, lon1_deg: float, lat2_deg: float, lon2_deg: float) -> float:
    """Scalar haversine written independently of the library (math module)."""
    r = 6371.0
    p1 = math.radians(lat1_deg)
    p2 = math.radians(lat2_deg)
    dp = p2 - p1
    dl = math.radians(lon2_deg) - math.radians(lon1_deg)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * r * math.asin(min(1.0, math.sqrt(a)))


def brute_radius(ids, lats_deg, lons_deg, center: GeoPoint, radius_km: float) -> list[tuple[int, float]]:
    """Linear scan: every point with haversine <= radius, sorted (d, id)."""
    ids = np.asarray(ids, dtype=np.int64)
    d = haversine_km_arrays(center.lat_rad, center.lon_rad, np.radians(lats_deg), np.radians(lons_deg))
    keep = np.flatnonzero(d <= radius_km)
    order = np.lexsort((ids[keep], d[keep]))
    return [(int(i), float(x)) for i, x in zip(ids[keep][order], d[keep][order])]


def brute_knn(ids, lats_deg, lons_deg, center: GeoPoint, k: int) -> list[tuple[int, float]]:
    """Linear scan: full sort by (d, id), first min(k, n)."""
    ids = np.asarray(ids, dtype=np.int64)
    d = haversine_km_arrays(center.lat_rad, center.lon_rad, np.radians(lats_deg), np.radians(lons_deg))
    order = np.lexsort((ids, d))[: min(k, ids.size)]
    return [(int(ids[o]), float(d[o])) for o in order]


def box_members_oracle(dataset: Dataset, i: int, cfg: MergeConfig) -> np.ndarray:
    """Positions of every survey inside survey i's patch box (pairwise test)."""
    lat0 = dataset.lats[i]
    lon0 = dataset.lons[i]
    dlat_km = np.abs(dataset.lats - lat0) * cfg.lat_km_per_deg
    dl = np.abs(dataset.lons - lon0)
    dl = np.minimum(dl, 360.0 - dl)
    dlon_km = dl * (cfg.lon_km_per_deg_at_equator * np.cos(np.radians(lat0)))
    return np.flatnonzero((dlat_km <= cfg.box_half_km) & (dlon_km <= cfg.box_half_km))


def merge_points_oracle(dataset: Dataset, cfg: MergeConfig) -> list[tuple]:
    """Quadratic aggregation reference: box predicate on every pair, no index.

    Returns (survey_id, lat, lon, species, source_ids) tuples in processing
    order.
    """
    n = len(dataset)
    members = [box_members_oracle(dataset, i, cfg) for i in range(n)]

    counts: dict[int, int] = {}
    for s in dataset.species:
        for sp in s:
            counts[sp] = counts.get(sp, 0) + 1

    order = sorted(range(n), key=lambda i: (-len(dataset.species[i]), int(dataset.ids[i])))
    consumed = [False] * n
    out = []
    for i in order:
        if consumed[i]:
            if cfg.mode is MergeMode.STRICT:
                continue
            if cfg.mode is MergeMode.BALANCED and not any(
                counts[sp] < cfg.rare_count_threshold for sp in dataset.species[i]
            ):
                continue
        union: set[int] = set()
        for j in members[i]:
            union.update(dataset.species[j])
            if cfg.mode is not MergeMode.LOOSE:
                consumed[j] = True
        out.append(
            (
                int(dataset.ids[i]),
                float(dataset.lats[i]),
                float(dataset.lons[i]),
                frozenset(union),
                tuple(sorted(int(dataset.ids[j]) for j in members[i])),
            )
        )
    return out


def samples_f1_oracle(truth: dict, predicted: dict) -> float:
    """Set-arithmetic recount of the samples-averaged F1."""
    scores = []
    for sid in sorted(truth):
        t = set(truth[sid])
        q = set(predicted[sid])
        tp = len(t & q)
        fp = len(q - t)
        fn = len(t - q)
        denom = tp + (fp + fn) / 2.0
        scores.append(1.0 if denom == 0 else tp / denom)
    return sum(scores) / len(scores)
