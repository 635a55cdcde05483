#!/usr/bin/env python3
"""Time patch aggregation and radius-query throughput on synthetic surveys.

Mirrors the performance acceptance run but with tunable sizes, so regressions
can be chased interactively:

    python scripts/benchmark_merge.py --surveys 1000000 --queries 200000
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from geoflora.geo import GeoIndex
from geoflora.pseudolabel import MergeConfig, MergeMode, merge_points
from geoflora.synth import uniform_surveys


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--surveys", type=int, default=1_000_000)
    parser.add_argument("--queries", type=int, default=200_000)
    parser.add_argument("--species", type=int, default=5000)
    parser.add_argument("--mode", choices=["loose", "balanced", "strict"], default="strict")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"cpus={os.cpu_count()} surveys={args.surveys} queries={args.queries}")

    start = time.perf_counter()
    ds = uniform_surveys(args.surveys, args.species, rng, mean_extra_species=0.3)
    print(f"generate: {time.perf_counter() - start:.2f}s")

    cfg = MergeConfig(mode=MergeMode(args.mode))
    start = time.perf_counter()
    merged = merge_points(ds, cfg)
    merge_s = time.perf_counter() - start
    print(f"merge[{args.mode}]: {merge_s:.2f}s -> {len(merged)} records")

    start = time.perf_counter()
    index = GeoIndex.from_dataset(ds)
    print(f"index build: {time.perf_counter() - start:.2f}s")

    sample = rng.integers(0, args.surveys, args.queries)
    start = time.perf_counter()
    offsets, positions, dists = index.radius_query_many(
        index.lat_rad[sample], index.lon_rad[sample], cfg.radius_threshold_km
    )
    bulk_s = time.perf_counter() - start
    print(
        f"radius queries: {bulk_s:.2f}s -> {args.queries / bulk_s:,.0f} q/s "
        f"(avg {offsets[-1] / args.queries:.2f} members)"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
