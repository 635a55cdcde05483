"""Command-line orchestration of the survey pipeline.

Subcommands: ingest, stats, merge, gate, predict, postprocess, evaluate,
pipeline, fusion-check. Configuration precedence is flags > config file
(JSON, keys = long option names with underscores) > built-in defaults; the
pipeline dumps its effective configuration, input digests and versions into
a manifest so a run can be reproduced byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fusion import FusionWeights, ModalityTriple, init_weights, stack_forward, tri_serial_forward
from .gate import Side, assign, moe_merge, write_assignments
from .ingest import (
    Dataset,
    DatasetKind,
    OccurrenceFormat,
    ParseError,
    SpeciesCatalog,
    decode_species,
    parse_occurrences,
    reindex_dataset,
    write_dataset,
)
from .losses import samples_f1
from .postprocess import (
    DEFAULT_GRID_KCAPS,
    DEFAULT_GRID_THRESHOLDS,
    TopKConfig,
    VoteConfig,
    apply_top_k,
    finalize,
    grid_search_top_k,
    neighbor_vote_many,
    read_submission,
    write_submission,
)
from .predictor import ScoreMatrix, load_scores, neighbor_frequency_predict, save_scores
from .pseudolabel import (
    DEFAULT_RADIUS_KM,
    MergeConfig,
    MergeMode,
    merge_points,
    merge_stats,
    merged_to_dataset,
)
from .stats import bbox_summary, occurrences_per_species_hist, species_per_survey_hist

_KIND = {"pa": DatasetKind.PA_TRAIN, "po": DatasetKind.PO_TRAIN, "test": DatasetKind.TEST}

MERGE_DEFAULTS = {
    "mode": "balanced",
    "radius_threshold_km": DEFAULT_RADIUS_KM,
    "box_half_km": 0.32,
    "lat_km_per_deg": 111.4,
    "lon_km_per_deg_at_equator": 111.32,
    "rare_count_threshold": 100,
}

PIPELINE_DEFAULTS = {
    "merge_mode": "strict",
    "radius_threshold_km": DEFAULT_RADIUS_KM,
    "box_half_km": 0.32,
    "lat_km_per_deg": 111.4,
    "lon_km_per_deg_at_equator": 111.32,
    "rare_count_threshold": 100,
    "gate_radius_km": 10.0,
    "predict_k": 10,
    "in_threshold": 0.5,
    "in_k_cap": 25,
    "ood_threshold": 0.475,
    "ood_k_cap": 25,
    "in_vote_neighbors": 5,
    "in_vote_min_freq": 0.8,
    "ood_vote_neighbors": 6,
    "ood_vote_min_freq": 0.5,
    "vote_inclusive": False,
    "fallback_top1": False,
    "seed": 0,
}


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _effective_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults, restricted to known keys."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            loaded = json.load(f)
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ValueError(f"unknown config keys {unknown}; known: {sorted(defaults)}")
        merged.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _merge_config(cfg: dict) -> MergeConfig:
    return MergeConfig(
        mode=MergeMode(cfg["mode"] if "mode" in cfg else cfg["merge_mode"]),
        radius_threshold_km=float(cfg["radius_threshold_km"]),
        box_half_km=float(cfg["box_half_km"]),
        lat_km_per_deg=float(cfg["lat_km_per_deg"]),
        lon_km_per_deg_at_equator=float(cfg["lon_km_per_deg_at_equator"]),
        rare_count_threshold=int(cfg["rare_count_threshold"]),
    )


def _parse_file(path: str, fmt: str = "auto", kind: str | None = None, catalog: SpeciesCatalog | None = None):
    return parse_occurrences(
        path,
        OccurrenceFormat(fmt),
        kind=_KIND[kind] if kind else None,
        catalog=catalog,
    )


def _cmd_ingest(args) -> int:
    dataset, catalog = _parse_file(args.input, args.format, args.kind)
    write_dataset(dataset, args.output, catalog)
    pairs = int(catalog.occurrence_count.sum())
    print(f"{args.input}: {len(dataset)} surveys, {len(catalog)} species, {pairs} (survey, species) pairs")
    print(f"wrote {args.output}")
    return 0


def _cmd_stats(args) -> int:
    dataset, catalog = _parse_file(args.input, args.format, args.kind)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    per_survey = species_per_survey_hist(dataset)
    with open(outdir / "species_per_survey.csv", "w", newline="", encoding="utf-8") as f:
        f.write("bin,count\n")
        for b, c in per_survey.histogram.items():
            f.write(f"{b},{c}\n")

    per_species = occurrences_per_species_hist(dataset, len(catalog))
    with open(outdir / "occurrences_per_species.csv", "w", newline="", encoding="utf-8") as f:
        f.write("bin,count\n")
        for b, c in per_species.histogram.items():
            f.write(f"{b},{c}\n")

    box = bbox_summary(dataset)
    with open(outdir / "bbox.csv", "w", newline="", encoding="utf-8") as f:
        f.write("field,value\n")
        f.write(f"surveys,{box.surveys}\n")
        for name in ("lat_min", "lat_max", "lon_min", "lon_max"):
            f.write(f"{name},{getattr(box, name)!r}\n")
        for q, v in box.lat_quantiles.items():
            f.write(f"lat_q{int(q * 100):02d},{v!r}\n")
        for q, v in box.lon_quantiles.items():
            f.write(f"lon_q{int(q * 100):02d},{v!r}\n")

    summary = {
        "surveys": per_survey.surveys,
        "speciesPerSurveyMode": per_survey.mode,
        "presentSpecies": per_species.present_species,
        "fractionSpeciesUnder50": per_species.fraction_under_50,
        "singletonSpecies": per_species.singleton_species,
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(
        f"{len(dataset)} surveys; species-per-survey mode {per_survey.mode}; "
        f"{per_species.fraction_under_50:.1%} of species under 50 occurrences; "
        f"{per_species.singleton_species} singleton species"
    )
    print(f"wrote histograms under {outdir}")
    return 0


def _cmd_merge(args) -> int:
    cfg = _effective_config(args, MERGE_DEFAULTS)
    merge_cfg = _merge_config(cfg)
    dataset, catalog = _parse_file(args.input, args.format)
    merged = merge_points(dataset, merge_cfg)
    write_dataset(merged_to_dataset(merged), args.output, catalog)
    report = merge_stats(dataset, merged)
    print(
        f"mode={merge_cfg.mode.value}: {report.surveys_in} surveys -> {report.surveys_out} "
        f"({report.consumed} consumed); species {report.species_in} -> {report.species_out}; "
        f"mean species/survey {report.mean_species_in:.3f} -> {report.mean_species_out:.3f}"
    )
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as f:
            json.dump(report.__dict__, f, indent=2, sort_keys=True)
            f.write("\n")
    print(f"wrote {args.output}")
    return 0


def _cmd_gate(args) -> int:
    test, _ = _parse_file(args.test, kind="test")
    pa, _ = _parse_file(args.pa)
    assignments = assign(test, pa, args.gate_radius_km)
    write_assignments(assignments, args.output)
    n_in = sum(a.side is Side.IN_DISTRIBUTION for a in assignments)
    print(f"{n_in} in-distribution, {len(assignments) - n_in} out-of-distribution (radius {args.gate_radius_km} km)")
    print(f"wrote {args.output}")
    return 0


def _cmd_predict(args) -> int:
    train, catalog = _parse_file(args.train)
    test, _ = _parse_file(args.test, kind="test")
    matrix = neighbor_frequency_predict(train, test, args.k, num_species=len(catalog))
    save_scores(matrix, args.out, catalog)
    print(f"scored {len(matrix)} surveys against {len(train)} training surveys (k={args.k})")
    print(f"wrote {args.out}")
    return 0


def _cmd_postprocess(args) -> int:
    reference, catalog = _parse_file(args.reference)
    test, _ = _parse_file(args.test, kind="test")
    matrix = load_scores(args.scores, catalog)

    top_cfg = TopKConfig(args.threshold, args.k_cap, bool(args.fallback_top1))
    if args.tune_truth:
        truth_ds, truth_catalog = _parse_file(args.tune_truth)
        try:
            truth = {
                int(truth_ds.ids[i]): frozenset(
                    catalog.to_dense(truth_catalog.to_raw(d)) for d in truth_ds.species[i]
                )
                for i in range(len(truth_ds))
            }
        except KeyError as exc:
            raise ValueError(
                f"tuning truth references species {exc.args[0]} absent from the reference dataset"
            ) from None
        thresholds = args.grid_thresholds or DEFAULT_GRID_THRESHOLDS
        k_caps = args.grid_kcaps or DEFAULT_GRID_KCAPS
        top_cfg, best = grid_search_top_k(matrix, truth, thresholds, k_caps, fallback_top1=bool(args.fallback_top1))
        print(f"grid search: threshold={top_cfg.threshold} k_cap={top_cfg.k_cap} (F1={best:.5f})")

    vote_cfg = VoteConfig(args.vote_neighbors, args.vote_min_freq, not args.vote_inclusive)
    predictions = apply_top_k(matrix, top_cfg)
    votes = dict(zip(test.ids.tolist(), neighbor_vote_many(test.lats, test.lons, reference, vote_cfg)))
    final = finalize(predictions, votes)
    write_submission(final, args.output, catalog)
    print(f"wrote {args.output} ({len(final)} surveys)")
    return 0


def _cmd_evaluate(args) -> int:
    truth_ds, truth_catalog = _parse_file(args.truth)
    truth = decode_species(truth_ds, truth_catalog)
    predicted = read_submission(args.submission)
    print(f"{samples_f1(truth, predicted):.5f}")
    return 0


def _subset(dataset: Dataset, mask: np.ndarray, kind: DatasetKind | None) -> Dataset:
    keep = np.flatnonzero(mask)
    return Dataset(
        dataset.ids[keep],
        dataset.lats[keep],
        dataset.lons[keep],
        [dataset.species[i] for i in keep],
        kind=kind,
    )


def _expert_predictions(
    train: Dataset,
    vote_reference: Dataset,
    test_side: Dataset,
    catalog: SpeciesCatalog,
    k: int,
    top_cfg: TopKConfig,
    vote_cfg: VoteConfig,
    side_name: str,
) -> tuple[dict[int, frozenset[int]], ScoreMatrix]:
    if len(test_side) == 0:
        return {}, ScoreMatrix(len(catalog))
    if len(train) == 0:
        raise ValueError(f"no training data for the {side_name} expert")
    matrix = neighbor_frequency_predict(train, test_side, k, num_species=len(catalog))
    predictions = apply_top_k(matrix, top_cfg)
    votes = dict(zip(test_side.ids.tolist(), neighbor_vote_many(test_side.lats, test_side.lons, vote_reference, vote_cfg)))
    return finalize(predictions, votes), matrix


def _cmd_pipeline(args) -> int:
    cfg = _effective_config(args, PIPELINE_DEFAULTS)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    pa, pa_catalog = _parse_file(args.pa, kind="pa")
    po, po_catalog = _parse_file(args.po, kind="po")
    test, _ = _parse_file(args.test, kind="test")
    catalog = SpeciesCatalog.union([pa_catalog, po_catalog])
    pa = reindex_dataset(pa, pa_catalog, catalog)
    po = reindex_dataset(po, po_catalog, catalog)

    merge_cfg = _merge_config(cfg)
    merged_records = merge_points(po, merge_cfg)
    merged_po = merged_to_dataset(merged_records)
    write_dataset(merged_po, outdir / "merged_po.csv", catalog)
    report = merge_stats(po, merged_records)
    print(
        f"merge[{merge_cfg.mode.value}]: {report.surveys_in} -> {report.surveys_out} surveys, "
        f"mean species/survey {report.mean_species_in:.3f} -> {report.mean_species_out:.3f}"
    )

    assignments = assign(test, pa, float(cfg["gate_radius_km"]))
    write_assignments(assignments, str(outdir / "gate.csv"))
    in_mask = np.array([a.side is Side.IN_DISTRIBUTION for a in assignments], dtype=bool)
    test_in = _subset(test, in_mask, DatasetKind.TEST)
    test_ood = _subset(test, ~in_mask, DatasetKind.TEST)
    print(f"gate: {len(test_in)} in-distribution, {len(test_ood)} out-of-distribution")

    strictly_greater = not bool(cfg["vote_inclusive"])
    preds_in, scores_in = _expert_predictions(
        pa,
        pa,
        test_in,
        catalog,
        int(cfg["predict_k"]),
        TopKConfig(float(cfg["in_threshold"]), int(cfg["in_k_cap"]), bool(cfg["fallback_top1"])),
        VoteConfig(int(cfg["in_vote_neighbors"]), float(cfg["in_vote_min_freq"]), strictly_greater),
        "in-distribution",
    )
    preds_ood, scores_ood = _expert_predictions(
        merged_po,
        merged_po,
        test_ood,
        catalog,
        int(cfg["predict_k"]),
        TopKConfig(float(cfg["ood_threshold"]), int(cfg["ood_k_cap"]), bool(cfg["fallback_top1"])),
        VoteConfig(int(cfg["ood_vote_neighbors"]), float(cfg["ood_vote_min_freq"]), strictly_greater),
        "out-of-distribution",
    )
    save_scores(scores_in, str(outdir / "scores_in.csv"), catalog)
    save_scores(scores_ood, str(outdir / "scores_ood.csv"), catalog)

    final = moe_merge(assignments, preds_in, preds_ood)
    submission_path = outdir / "submission.csv"
    write_submission(final, str(submission_path), catalog)
    print(f"wrote {submission_path} ({len(final)} surveys)")

    outputs = ["merged_po.csv", "gate.csv", "scores_in.csv", "scores_ood.csv", "submission.csv"]
    manifest = {
        "package": "geoflora",
        "version": __version__,
        "versions": {"numpy": np.__version__, "python": sys.version.split()[0]},
        "command": "pipeline",
        "config": cfg,
        "inputs": {name: _sha256(getattr(args, name)) for name in ("pa", "po", "test")},
        "outputs": {name: _sha256(outdir / name) for name in outputs},
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {outdir / 'manifest.json'}")
    return 0


def _cmd_fusion_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    dims = tuple(args.dims)
    failures = []

    def check(name: str, ok: bool) -> None:
        print(f"fusion-check {name}: {'PASS' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    weights = init_weights(dims, args.hidden_dim, args.heads, args.seed)
    again = init_weights(dims, args.hidden_dim, args.heads, args.seed)
    check("seeded-init-deterministic", all(np.array_equal(a, b) for a, b in zip(weights.in_proj, again.in_proj)))

    x = ModalityTriple(*(rng.normal(0.0, 1.0, d) for d in dims))
    out1 = tri_serial_forward(x, weights)
    out2 = tri_serial_forward(x, weights)
    check("forward-deterministic", all(np.array_equal(a, b) for a, b in ((out1.a, out2.a), (out1.b, out2.b), (out1.c, out2.c))))
    check("forward-finite", all(np.all(np.isfinite(v)) for v in (out1.a, out1.b, out1.c)))
    check("dims-preserved", out1.dims == x.dims)

    trace: dict = {}
    tri_serial_forward(x, weights, trace=trace)
    sums_ok = all(np.allclose(trace[k].sum(axis=1), 1.0, atol=1e-6) for k in ("attn_a", "attn_b", "attn_c"))
    check("attention-rows-normalised", sums_ok)

    zeroed = FusionWeights(
        weights.in_proj,
        weights.q_proj,
        weights.k_proj,
        weights.v_proj,
        weights.ff1,
        weights.ff2,
        tuple(np.zeros_like(w) for w in weights.out_proj),
        weights.heads,
    )
    ident = tri_serial_forward(x, zeroed)
    check("residual-identity", all(np.array_equal(a, b) for a, b in ((ident.a, x.a), (ident.b, x.b), (ident.c, x.c))))

    empty = stack_forward(x, [])
    check("empty-stack-identity", all(np.array_equal(a, b) for a, b in ((empty.a, x.a), (empty.b, x.b), (empty.c, x.c))))

    if failures:
        print(f"fusion-check: FAIL ({', '.join(failures)})")
        return 1
    print("fusion-check: OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoflora", description=__doc__)
    parser.add_argument("--version", action="version", version=f"geoflora {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a survey file and write its normalised wide form")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=["auto", "long", "wide"], default="auto")
    p.add_argument("--kind", choices=["pa", "po", "test"], default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="write distribution histograms and extent summaries")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--format", choices=["auto", "long", "wide"], default="auto")
    p.add_argument("--kind", choices=["pa", "po", "test"], default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("merge", help="aggregate presence-only surveys by patch coverage")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=["auto", "long", "wide"], default="auto")
    p.add_argument("--config", default=None, help="JSON config file; keys mirror the merge parameters")
    p.add_argument("--mode", choices=["loose", "balanced", "strict"], default=None)
    p.add_argument("--radius-threshold-km", type=float, default=None)
    p.add_argument("--box-half-km", type=float, default=None)
    p.add_argument("--lat-km-per-deg", type=float, default=None)
    p.add_argument("--lon-km-per-deg-at-equator", type=float, default=None)
    p.add_argument("--rare-count-threshold", type=int, default=None)
    p.add_argument("--report-out", default=None, help="optional JSON merge report")
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("gate", help="route test surveys by proximity to PA training surveys")
    p.add_argument("--test", required=True)
    p.add_argument("--pa", required=True)
    p.add_argument("--gate-radius-km", type=float, default=10.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_gate)

    p = sub.add_parser("predict", help="neighbour-frequency baseline scores")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("postprocess", help="threshold scores, add neighbour votes, write a submission")
    p.add_argument("--scores", required=True)
    p.add_argument("--test", required=True, help="test survey coordinates")
    p.add_argument("--reference", required=True, help="dataset voted over; also defines the species universe")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--k-cap", type=int, default=25)
    p.add_argument("--fallback-top1", action="store_true")
    p.add_argument("--vote-neighbors", type=int, default=5)
    p.add_argument("--vote-min-freq", type=float, default=0.8)
    p.add_argument("--vote-inclusive", action="store_true", help="vote in species at exactly the minimum frequency")
    p.add_argument("--tune-truth", default=None, help="held-out truth file enabling threshold/k grid search")
    p.add_argument("--grid-thresholds", type=float, nargs="*", default=None)
    p.add_argument("--grid-kcaps", type=int, nargs="*", default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser("evaluate", help="samples-averaged F1 of a submission against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--submission", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="merge -> gate -> predict -> postprocess -> routed submission")
    p.add_argument("--pa", required=True)
    p.add_argument("--po", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--config", default=None, help="JSON config file; keys mirror the pipeline options")
    p.add_argument("--merge-mode", choices=["loose", "balanced", "strict"], default=None)
    p.add_argument("--radius-threshold-km", type=float, default=None)
    p.add_argument("--box-half-km", type=float, default=None)
    p.add_argument("--lat-km-per-deg", type=float, default=None)
    p.add_argument("--lon-km-per-deg-at-equator", type=float, default=None)
    p.add_argument("--rare-count-threshold", type=int, default=None)
    p.add_argument("--gate-radius-km", type=float, default=None)
    p.add_argument("--predict-k", type=int, default=None)
    p.add_argument("--in-threshold", type=float, default=None)
    p.add_argument("--in-k-cap", type=int, default=None)
    p.add_argument("--ood-threshold", type=float, default=None)
    p.add_argument("--ood-k-cap", type=int, default=None)
    p.add_argument("--in-vote-neighbors", type=int, default=None)
    p.add_argument("--in-vote-min-freq", type=float, default=None)
    p.add_argument("--ood-vote-neighbors", type=int, default=None)
    p.add_argument("--ood-vote-min-freq", type=float, default=None)
    p.add_argument("--vote-inclusive", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--fallback-top1", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seed", type=int, default=None, help="seed recorded for reproducibility")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("fusion-check", help="run the fusion block's invariant battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=int, nargs=3, default=[8, 12, 16], metavar=("DA", "DB", "DC"))
    p.add_argument("--hidden-dim", type=int, default=16)
    p.add_argument("--heads", type=int, default=4)
    p.set_defaults(func=_cmd_fusion_check)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
