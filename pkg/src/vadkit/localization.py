"""Spatial grounding and temporal mask propagation.

Each surviving proposal is anchored to the candidate frame where the
grounding backend is most confident, then a single propagation request
turns the anchor box into one binary mask per frame of the proposal
interval. Propagation never sees frames outside the interval, so
tracking errors cannot leak across unrelated segments.
"""

from __future__ import annotations

import base64
import io
import logging
import time
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from PIL import Image

from . import rle
from .frames import FrameProvider
from .proposer import CallLedger
from .types import AnomalyInstance, BoundingBox, ConsolidatedProposal, FrameMask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalizationConfig:
    candidate_count: int = 5
    box_threshold: float = 0.05
    text_threshold: float = 0.05
    min_mask_area: int = 50
    grounding_endpoint: str = ""
    propagation_endpoint: str = ""
    timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if not (0 <= self.box_threshold <= 1 and 0 <= self.text_threshold <= 1):
            raise ValueError("thresholds must be in [0, 1]")
        if self.min_mask_area < 0:
            raise ValueError("min_mask_area must be >= 0")


class GroundingFailed(Exception):
    """No candidate frame produced a box above threshold."""


class PropagationFailed(Exception):
    """The propagation backend failed or broke the mask-count contract."""


class GroundingBackend(Protocol):
    def ground(
        self,
        image: np.ndarray,
        text: str,
        box_threshold: float,
        text_threshold: float,
        frame_index: int | None = None,
    ) -> list[BoundingBox]:
        """Boxes above both thresholds, sorted descending by score."""
        ...


class PropagationBackend(Protocol):
    def propagate(
        self,
        frames: list[np.ndarray],
        anchor_index: int,
        box: BoundingBox,
        frame_indices: list[int] | None = None,
    ) -> list[np.ndarray]:
        """One boolean mask per input frame."""
        ...


def candidate_frames(start: int, end: int, count: int) -> list[int]:
    """count frames evenly spaced over [start, end], endpoints included.

    Duplicates are kept when the interval is shorter than count so the
    grounding-call accounting stays exact.
    """
    if count == 1:
        return [start]
    return [int(round(v)) for v in np.linspace(start, end, count)]


def select_anchor(
    proposal: ConsolidatedProposal,
    frames: FrameProvider,
    video_id: str,
    backend: GroundingBackend,
    cfg: LocalizationConfig,
    ledger: CallLedger,
) -> tuple[int, BoundingBox]:
    """Ground the description on each candidate frame; keep the best box.

    Ties break toward the earliest frame. Raises GroundingFailed when no
    candidate yields a box at or above box_threshold.
    """
    best: tuple[int, BoundingBox] | None = None
    for t in candidate_frames(proposal.interval.start, proposal.interval.end, cfg.candidate_count):
        image = frames.get_frame(video_id, t)
        ledger.add("grounding_calls")
        t0 = time.monotonic()
        try:
            boxes = backend.ground(
                image, proposal.description, cfg.box_threshold, cfg.text_threshold, frame_index=t
            )
        except Exception as exc:
            log.warning("grounding call failed at frame %d: %s", t, exc)
            boxes = []
        finally:
            ledger.add_wall(time.monotonic() - t0)
        if not boxes:
            continue
        top = boxes[0]
        if len(boxes) > 1:
            log.info("grounding returned %d boxes at frame %d; keeping the top one", len(boxes), t)
        if top.score >= cfg.box_threshold and (best is None or top.score > best[1].score):
            best = (t, top)
    if best is None:
        raise GroundingFailed(f"no box >= {cfg.box_threshold} for proposal {proposal.description!r}")
    return best


def propagate(
    proposal: ConsolidatedProposal,
    anchor_frame: int,
    box: BoundingBox,
    frames: FrameProvider,
    video_id: str,
    backend: PropagationBackend,
    cfg: LocalizationConfig,
    ledger: CallLedger,
) -> AnomalyInstance:
    """One propagation request over the proposal window; builds the instance.

    Masks whose area is positive but below min_mask_area are zeroed.
    """
    iv = proposal.interval
    if anchor_frame not in iv:
        raise ValueError("anchor frame outside the proposal interval")
    indices = list(iv.frames())
    window = [frames.get_frame(video_id, t) for t in indices]
    ledger.add("propagation_calls")
    t0 = time.monotonic()
    try:
        bitmaps = backend.propagate(
            window, anchor_frame - iv.start, box, frame_indices=indices
        )
    except Exception as exc:
        raise PropagationFailed(f"propagation backend failed: {exc}") from exc
    finally:
        ledger.add_wall(time.monotonic() - t0)
    if len(bitmaps) != len(indices):
        raise PropagationFailed(
            f"protocol error: {len(bitmaps)} masks for {len(indices)} frames"
        )
    masks = []
    for t, bitmap in zip(indices, bitmaps):
        bitmap = np.asarray(bitmap, dtype=bool)
        if 0 < bitmap.sum() < cfg.min_mask_area:
            bitmap = np.zeros_like(bitmap)
        masks.append(FrameMask.from_bitmap(t, bitmap))
    return AnomalyInstance(proposal=proposal, anchor_frame=anchor_frame, box=box, masks=tuple(masks))


def localize(
    proposal: ConsolidatedProposal,
    frames: FrameProvider,
    video_id: str,
    grounder: GroundingBackend,
    propagator: PropagationBackend,
    cfg: LocalizationConfig,
    ledger: CallLedger,
) -> AnomalyInstance:
    anchor, box = select_anchor(proposal, frames, video_id, grounder, cfg, ledger)
    return propagate(proposal, anchor, box, frames, video_id, propagator, cfg, ledger)


def _png_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class HttpGroundingBackend:
    """POST /ground {image_b64, text, box_threshold, text_threshold}."""

    def __init__(self, endpoint: str, timeout: float = 120.0, session=None):
        import requests

        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def ground(self, image, text, box_threshold, text_threshold, frame_index=None):
        body = {
            "image_b64": _png_b64(image),
            "text": text,
            "box_threshold": box_threshold,
            "text_threshold": text_threshold,
        }
        resp = self.session.post(self.endpoint, json=body, timeout=self.timeout)
        resp.raise_for_status()
        boxes = [
            BoundingBox(b["x0"], b["y0"], b["x1"], b["y1"], b["score"])
            for b in resp.json()["boxes"]
        ]
        return sorted(boxes, key=lambda b: -b.score)


class HttpPropagationBackend:
    """POST /propagate {frames_b64, anchor_index, box} -> {masks_rle}."""

    def __init__(self, endpoint: str, timeout: float = 300.0, session=None):
        import requests

        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def propagate(self, frames, anchor_index, box, frame_indices=None):
        body = {
            "frames_b64": [_png_b64(f) for f in frames],
            "anchor_index": anchor_index,
            "box": [box.x0, box.y0, box.x1, box.y1],
        }
        resp = self.session.post(self.endpoint, json=body, timeout=self.timeout)
        resp.raise_for_status()
        shape = frames[0].shape[:2]
        return [rle.decode(tuple(runs), shape) for runs in resp.json()["masks_rle"]]
