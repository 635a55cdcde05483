"""Weakly supervised geospatial pipeline for multi-species survey data."""

__version__ = "0.1.0"

from .gate import GateAssignment, Side, assign, moe_merge
from .geo import EARTH_RADIUS_KM, GeoIndex, GeoPoint, haversine_km
from .ingest import (
    Dataset,
    DatasetKind,
    OccurrenceFormat,
    ParseError,
    SpeciesCatalog,
    SurveyRecord,
    parse_occurrences,
    write_dataset,
)
from .losses import AslParams, LabeledScores, asl_grad, asl_loss, bce_loss, samples_f1
from .postprocess import TopKConfig, VoteConfig, finalize, neighbor_vote, threshold_top_k
from .predictor import ScoreMatrix, load_scores, neighbor_frequency_predict, save_scores
from .pseudolabel import (
    MergeConfig,
    MergedRecord,
    MergeMode,
    merge_points,
    merge_stats,
    neighbors_in_patch,
)

__all__ = [
    "AslParams",
    "Dataset",
    "DatasetKind",
    "EARTH_RADIUS_KM",
    "GateAssignment",
    "GeoIndex",
    "GeoPoint",
    "LabeledScores",
    "MergeConfig",
    "MergeMode",
    "MergedRecord",
    "OccurrenceFormat",
    "ParseError",
    "ScoreMatrix",
    "Side",
    "SpeciesCatalog",
    "SurveyRecord",
    "TopKConfig",
    "VoteConfig",
    "asl_grad",
    "asl_loss",
    "assign",
    "bce_loss",
    "finalize",
    "haversine_km",
    "load_scores",
    "merge_points",
    "merge_stats",
    "moe_merge",
    "neighbor_frequency_predict",
    "neighbor_vote",
    "neighbors_in_patch",
    "parse_occurrences",
    "samples_f1",
    "save_scores",
    "threshold_top_k",
    "write_dataset",
]
