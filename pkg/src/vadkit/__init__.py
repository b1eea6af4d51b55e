"""Training-free video anomaly detection pipeline engine."""

from .types import (
    AnomalyInstance,
    BoundingBox,
    Clip,
    ConsolidatedProposal,
    FrameMask,
    Proposal,
    TemporalInterval,
    VideoMeta,
    union_masks,
)
from .harness import Backends, RunConfig, run_gridvad, run_uniform, segment_clips
from .metrics import GroundTruth, MetricReport, ScoredPixelField, compute_report
from .proposer import CallLedger
from .scc import SccConfig, consolidate, deterministic_consolidate, filter_support
from .synth import NoiseProfile, SyntheticWorld, random_world

__all__ = [
    "AnomalyInstance",
    "Backends",
    "BoundingBox",
    "CallLedger",
    "Clip",
    "ConsolidatedProposal",
    "FrameMask",
    "GroundTruth",
    "MetricReport",
    "NoiseProfile",
    "Proposal",
    "RunConfig",
    "SccConfig",
    "ScoredPixelField",
    "SyntheticWorld",
    "TemporalInterval",
    "VideoMeta",
    "compute_report",
    "consolidate",
    "deterministic_consolidate",
    "filter_support",
    "random_world",
    "run_gridvad",
    "run_uniform",
    "segment_clips",
    "union_masks",
]

__version__ = "0.1.0"
