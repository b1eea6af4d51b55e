"""Core domain types shared by every pipeline stage.

All types are immutable after construction and validate their own
invariants, so instances can be shared freely across worker threads.
Frame indices are 0-based everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rle


@dataclass(frozen=True)
class VideoMeta:
    """Identity and geometry of one video."""

    id: str
    frame_count: int
    height: int
    width: int
    fps: float | None = None

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if self.height < 1 or self.width < 1:
            raise ValueError("frame dimensions must be >= 1")


@dataclass(frozen=True, order=True)
class TemporalInterval:
    """Inclusive frame-index range [start, end]."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError("interval start must be >= 0")
        if self.end < self.start:
            raise ValueError("interval end must be >= start")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, t: int) -> bool:
        return self.start <= t <= self.end

    def frames(self) -> range:
        return range(self.start, self.end + 1)

    def overlaps_or_abuts(self, other: "TemporalInterval") -> bool:
        return self.start <= other.end + 1 and other.start <= self.end + 1

    def clamp(self, start: int, end: int) -> "TemporalInterval":
        return TemporalInterval(max(self.start, start), min(self.end, end))


@dataclass(frozen=True)
class Clip:
    """A contiguous window of one video."""

    video_id: str
    interval: TemporalInterval

    @property
    def start(self) -> int:
        return self.interval.start

    @property
    def end(self) -> int:
        return self.interval.end

    @property
    def length(self) -> int:
        return self.interval.length


@dataclass(frozen=True)
class Proposal:
    """One free-form anomaly candidate from a single grid sampling."""

    description: str
    interval: TemporalInterval
    confidence: float
    source_sampling: int
    evidence_cells: frozenset[int]

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError("description must be nonempty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        if self.source_sampling < 1:
            raise ValueError("source_sampling must be >= 1")
        if not self.evidence_cells:
            raise ValueError("evidence_cells must be nonempty")


@dataclass(frozen=True)
class ConsolidatedProposal:
    """A cluster of semantically equivalent proposals after consolidation.

    support counts *distinct* source samplings among the members; the
    interval is the min-start/max-end hull and the confidence the member
    maximum. The stored fields must agree with what the members imply.
    """

    description: str
    interval: TemporalInterval
    support: int
    confidence: float
    members: tuple[Proposal, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("a consolidated proposal needs at least one member")
        want_support = len({m.source_sampling for m in self.members})
        if self.support != want_support:
            raise ValueError(f"support {self.support} != distinct samplings {want_support}")
        want_start = min(m.interval.start for m in self.members)
        want_end = max(m.interval.end for m in self.members)
        if (self.interval.start, self.interval.end) != (want_start, want_end):
            raise ValueError("interval is not the min/max hull of the members")
        want_conf = max(m.confidence for m in self.members)
        if abs(self.confidence - want_conf) > 1e-12:
            raise ValueError("confidence is not the member maximum")

    @classmethod
    def from_members(cls, description: str, members: list[Proposal]) -> "ConsolidatedProposal":
        members = tuple(members)
        return cls(
            description=description,
            interval=TemporalInterval(
                min(m.interval.start for m in members),
                max(m.interval.end for m in members),
            ),
            support=len({m.source_sampling for m in members}),
            confidence=max(m.confidence for m in members),
            members=members,
        )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with a detector score."""

    x0: float
    y0: float
    x1: float
    y1: float
    score: float

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("box must have positive extent")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError("box coordinates must be >= 0")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("box score must be in [0, 1]")

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1, self.score]


@dataclass(frozen=True)
class FrameMask:
    """A binary mask for one frame, stored run-length encoded."""

    frame_index: int
    shape: tuple[int, int]
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        h, w = self.shape
        if sum(self.runs) != h * w:
            raise ValueError("run lengths do not cover the frame")

    @classmethod
    def from_bitmap(cls, frame_index: int, bitmap: np.ndarray) -> "FrameMask":
        bitmap = np.asarray(bitmap, dtype=bool)
        return cls(frame_index, (bitmap.shape[0], bitmap.shape[1]), rle.encode(bitmap))

    @property
    def bitmap(self) -> np.ndarray:
        return rle.decode(self.runs, self.shape)

    @property
    def area(self) -> int:
        return rle.area(self.runs)


@dataclass(frozen=True)
class AnomalyInstance:
    """A grounded, propagated anomaly: proposal + anchor + per-frame masks."""

    proposal: ConsolidatedProposal
    anchor_frame: int
    box: BoundingBox
    masks: tuple[FrameMask, ...]

    def __post_init__(self) -> None:
        iv = self.proposal.interval
        if self.anchor_frame not in iv:
            raise ValueError("anchor frame outside the proposal interval")
        covered = [m.frame_index for m in self.masks]
        if covered != list(iv.frames()):
            raise ValueError("masks must cover the proposal interval exactly once, in order")

    @property
    def interval(self) -> TemporalInterval:
        return self.proposal.interval

    @property
    def confidence(self) -> float:
        return self.proposal.confidence

    def mask_at(self, t: int) -> FrameMask:
        return self.masks[t - self.interval.start]


def union_masks(instances: list[AnomalyInstance], video: VideoMeta) -> dict[int, FrameMask]:
    """Pixelwise OR of all instance masks, keyed by frame index.

    Frames covered by no instance are absent from the result. Order of
    the instance list does not matter.
    """
    shape = (video.height, video.width)
    acc: dict[int, np.ndarray] = {}
    for inst in instances:
        for mask in inst.masks:
            if mask.shape != shape:
                raise ValueError(
                    f"mask shape {mask.shape} does not match video {video.id} shape {shape}"
                )
            if mask.frame_index in acc:
                acc[mask.frame_index] |= mask.bitmap
            else:
                acc[mask.frame_index] = mask.bitmap
    return {t: FrameMask.from_bitmap(t, bm) for t, bm in sorted(acc.items())}
