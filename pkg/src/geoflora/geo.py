"""Great-circle geometry and an exact spatial index over survey coordinates.

Distances are haversine on a 6371 km sphere; the radius is a fixed constant,
never configurable. The index embeds points on the unit sphere and queries a
k-d tree in chord space. Chord length is a strictly monotone function of
great-circle distance, so a chord lookup with a slightly inflated radius
yields a candidate superset which is then re-checked with the exact
haversine distance. Query results therefore match a brute-force scan point
for point while staying fast on millions of entries.

Determinism rules, fixed for reproducibility:
  * radius boundaries are inclusive (d <= radius),
  * k-NN ties at equal distance are broken by ascending survey id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS_KM = 6371.0

# Inflation applied to chord-space radii so rounding in the sphere embedding
# can never drop a qualifying point; candidates are re-checked exactly.
_CHORD_REL = 1e-9
_CHORD_ABS = 1e-12


@dataclass(frozen=True)
class GeoPoint:
    """A coordinate pair in radians; |lat_rad| <= pi/2, |lon_rad| <= pi."""

    lat_rad: float
    lon_rad: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat_rad) and math.isfinite(self.lon_rad)):
            raise ValueError("non-finite coordinate")
        if abs(self.lat_rad) > math.pi / 2 + 1e-12 or abs(self.lon_rad) > math.pi + 1e-12:
            raise ValueError(f"radian coordinate out of range: ({self.lat_rad}, {self.lon_rad})")

    @classmethod
    def from_degrees(cls, lat: float, lon: float) -> "GeoPoint":
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError("non-finite coordinate")
        if abs(lat) > 90.0 or abs(lon) > 180.0:
            raise ValueError(f"coordinate out of range: ({lat}, {lon})")
        return cls(math.radians(lat), math.radians(lon))


def haversine_km_arrays(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised haversine distance in km; all inputs in radians."""
    lat1 = np.asarray(lat1, dtype=np.float64)
    lat2 = np.asarray(lat2, dtype=np.float64)
    s_lat = np.sin((lat2 - lat1) * 0.5)
    s_lon = np.sin((np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64)) * 0.5)
    h = s_lat * s_lat + np.cos(lat1) * np.cos(lat2) * s_lon * s_lon
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km between two points.

    Delegates to the vectorised implementation so that every code path in
    the package computes bit-identical distances.
    """
    return float(haversine_km_arrays(a.lat_rad, a.lon_rad, b.lat_rad, b.lon_rad))


def _embed(lat_rad, lon_rad) -> np.ndarray:
    lat_rad = np.atleast_1d(np.asarray(lat_rad, dtype=np.float64))
    lon_rad = np.atleast_1d(np.asarray(lon_rad, dtype=np.float64))
    cp = np.cos(lat_rad)
    return np.column_stack((cp * np.cos(lon_rad), cp * np.sin(lon_rad), np.sin(lat_rad)))


def _chord_radius(radius_km):
    """Inflated chord length on the unit sphere subtending ``radius_km`` of arc."""
    ang = np.minimum(np.asarray(radius_km, dtype=np.float64) / EARTH_RADIUS_KM, np.pi)
    return 2.0 * np.sin(ang * 0.5) * (1.0 + _CHORD_REL) + _CHORD_ABS


class GeoIndex:
    """Immutable spatial index whose queries reproduce a brute-force haversine scan.

    Built once over (survey_id, lat, lon) triples; read-only afterwards, so a
    single index can be queried from many threads without coordination.
    Positions returned by the bulk methods are row offsets into the arrays
    the index was built from.
    """

    def __init__(self, survey_ids, lats_deg, lons_deg):
        ids = np.ascontiguousarray(survey_ids, dtype=np.int64)
        lats = np.asarray(lats_deg, dtype=np.float64)
        lons = np.asarray(lons_deg, dtype=np.float64)
        if ids.ndim != 1 or ids.shape != lats.shape or ids.shape != lons.shape:
            raise ValueError("survey_ids, lats_deg and lons_deg must be 1-D and equally long")
        if lats.size and (np.abs(lats).max() > 90.0 or np.abs(lons).max() > 180.0):
            raise ValueError("coordinate out of range")
        self.survey_ids = ids
        self.lat_rad = np.radians(lats)
        self.lon_rad = np.radians(lons)
        self._tree = cKDTree(_embed(self.lat_rad, self.lon_rad)) if ids.size else None

    @classmethod
    def build(cls, survey_ids, lats_deg, lons_deg) -> "GeoIndex":
        return cls(survey_ids, lats_deg, lons_deg)

    @classmethod
    def from_dataset(cls, dataset) -> "GeoIndex":
        return cls(dataset.ids, dataset.lats, dataset.lons)

    def __len__(self) -> int:
        return int(self.survey_ids.size)

    # -- single-point queries ------------------------------------------------

    def radius_query(self, center: GeoPoint, radius_km: float) -> list[tuple[int, float]]:
        """All indexed points within ``radius_km`` (inclusive) of ``center``.

        Returns (survey_id, distance_km) pairs sorted by (distance, survey_id).
        """
        if radius_km < 0:
            raise ValueError("radius_km must be >= 0")
        if self._tree is None:
            return []
        q = _embed(center.lat_rad, center.lon_rad)[0]
        cand = np.asarray(self._tree.query_ball_point(q, float(_chord_radius(radius_km))), dtype=np.intp)
        if cand.size == 0:
            return []
        d = haversine_km_arrays(center.lat_rad, center.lon_rad, self.lat_rad[cand], self.lon_rad[cand])
        keep = d <= radius_km
        cand, d = cand[keep], d[keep]
        order = np.lexsort((self.survey_ids[cand], d))
        return [(int(i), float(x)) for i, x in zip(self.survey_ids[cand[order]], d[order])]

    def knn_query(self, center: GeoPoint, k: int) -> list[tuple[int, float]]:
        """The min(k, n) nearest points as (survey_id, distance_km) pairs."""
        if len(self) == 0:
            if k < 1:
                raise ValueError("k must be >= 1")
            return []
        pos, d = self.knn_query_many(np.array([center.lat_rad]), np.array([center.lon_rad]), k)
        return [(int(self.survey_ids[p]), float(x)) for p, x in zip(pos[0], d[0])]

    # -- bulk queries ----------------------------------------------------------

    def knn_query_many(self, lat_rad, lon_rad, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k-NN for many query points at once.

        Returns (positions, distances_km), each of shape (m, min(k, n)), rows
        sorted by (distance, survey_id). Near-ties are resolved by gathering
        every point whose chord distance falls within an inflated bound of the
        k-th neighbour and re-ranking the candidates exactly.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        lat_rad = np.atleast_1d(np.asarray(lat_rad, dtype=np.float64))
        lon_rad = np.atleast_1d(np.asarray(lon_rad, dtype=np.float64))
        m = lat_rad.size
        n = len(self)
        kk = min(k, n)
        pos_out = np.empty((m, kk), dtype=np.intp)
        d_out = np.empty((m, kk), dtype=np.float64)
        if kk == 0 or m == 0:
            return pos_out, d_out
        q = _embed(lat_rad, lon_rad)
        chord, _ = self._tree.query(q, k=kk, workers=-1)
        chord = np.reshape(chord, (m, kk))
        r = chord[:, -1] * (1.0 + _CHORD_REL) + _CHORD_ABS
        cand = self._tree.query_ball_point(q, r, workers=-1, return_sorted=False)
        ids = self.survey_ids
        for i in range(m):
            c = np.asarray(cand[i], dtype=np.intp)
            d = haversine_km_arrays(lat_rad[i], lon_rad[i], self.lat_rad[c], self.lon_rad[c])
            order = np.lexsort((ids[c], d))[:kk]
            pos_out[i] = c[order]
            d_out[i] = d[order]
        return pos_out, d_out

    def radius_candidates_many(self, lat_rad, lon_rad, radius_km) -> tuple[np.ndarray, np.ndarray]:
        """Candidate positions per query point, CSR-style (offsets, positions).

        Membership is a superset of the exact haversine ball (chord lookup
        with inflation, no re-check); callers apply their own definitive
        filter. ``radius_km`` may be a scalar or a per-query array.
        """
        lat_rad = np.atleast_1d(np.asarray(lat_rad, dtype=np.float64))
        lon_rad = np.atleast_1d(np.asarray(lon_rad, dtype=np.float64))
        m = lat_rad.size
        offsets = np.zeros(m + 1, dtype=np.int64)
        if self._tree is None or m == 0:
            return offsets, np.empty(0, dtype=np.intp)
        r = _chord_radius(radius_km)
        if r.ndim:
            r = np.broadcast_to(r, (m,))
        lists = self._tree.query_ball_point(_embed(lat_rad, lon_rad), r, workers=-1, return_sorted=False)
        counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=m)
        np.cumsum(counts, out=offsets[1:])
        total = int(offsets[-1])
        flat = np.empty(total, dtype=np.intp)
        pos = 0
        for lst in lists:
            nxt = pos + len(lst)
            flat[pos:nxt] = lst
            pos = nxt
        return offsets, flat

    def radius_query_many(self, lat_rad, lon_rad, radius_km) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact inclusive radius memberships for many query points.

        Returns (offsets, positions, distances_km) in CSR layout; the order
        of members within one query's slice is unspecified (the single-point
        ``radius_query`` is the fully ordered variant).
        """
        lat_rad = np.atleast_1d(np.asarray(lat_rad, dtype=np.float64))
        lon_rad = np.atleast_1d(np.asarray(lon_rad, dtype=np.float64))
        m = lat_rad.size
        offsets, flat = self.radius_candidates_many(lat_rad, lon_rad, radius_km)
        if flat.size == 0:
            return offsets, flat, np.empty(0, dtype=np.float64)
        counts = np.diff(offsets)
        src = np.repeat(np.arange(m), counts)
        d = haversine_km_arrays(lat_rad[src], lon_rad[src], self.lat_rad[flat], self.lon_rad[flat])
        rr = np.asarray(radius_km, dtype=np.float64)
        keep = d <= (rr[src] if rr.ndim else rr)
        new_offsets = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(src[keep], minlength=m), out=new_offsets[1:])
        return new_offsets, flat[keep], d[keep]
