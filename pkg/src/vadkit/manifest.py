"""On-disk persistence for detected anomaly instances.

Layout under the output directory:

    manifest.json
    <video_id>/<instance_idx>/<frame:06d>.png     (0/255 single channel)

The manifest carries everything except the pixels; a write followed by
a read reproduces the instance list bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .metrics import GroundTruth
from .types import (
    AnomalyInstance,
    BoundingBox,
    ConsolidatedProposal,
    FrameMask,
    Proposal,
    TemporalInterval,
    VideoMeta,
)

MANIFEST_NAME = "manifest.json"


class ManifestError(Exception):
    """Raised when a manifest file violates the schema."""


def _require(entry: dict, field: str, idx: int):
    if field not in entry:
        raise ManifestError(f"instance {idx}: missing field {field!r}")
    return entry[field]


def write_manifest(instances: list[AnomalyInstance], video: VideoMeta, out_dir: str | Path) -> Path:
    """Write manifest.json plus one mask image per (instance, frame)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, inst in enumerate(instances):
        mask_files = []
        inst_dir = out_dir / video.id / str(idx)
        inst_dir.mkdir(parents=True, exist_ok=True)
        for mask in inst.masks:
            rel = f"{video.id}/{idx}/{mask.frame_index:06d}.png"
            img = Image.fromarray(mask.bitmap.astype(np.uint8) * 255, mode="L")
            img.save(out_dir / rel)
            mask_files.append(rel)
        p = inst.proposal
        entries.append(
            {
                "description": p.description,
                "start": p.interval.start,
                "end": p.interval.end,
                "support": p.support,
                "confidence": p.confidence,
                "members": [
                    {
                        "description": m.description,
                        "start": m.interval.start,
                        "end": m.interval.end,
                        "confidence": m.confidence,
                        "source_sampling": m.source_sampling,
                        "evidence_cells": sorted(m.evidence_cells),
                    }
                    for m in p.members
                ],
                "anchor_frame": inst.anchor_frame,
                "box": inst.box.as_list(),
                "mask_files": mask_files,
            }
        )
    doc = {
        "video_id": video.id,
        "frame_count": video.frame_count,
        "height": video.height,
        "width": video.width,
        "fps": video.fps,
        "instances": entries,
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2))
    return path


def read_manifest(out_dir: str | Path) -> tuple[VideoMeta, list[AnomalyInstance]]:
    """Read a manifest directory back into instances, validating the schema."""
    out_dir = Path(out_dir)
    try:
        doc = json.loads((out_dir / MANIFEST_NAME).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    for field in ("video_id", "frame_count", "height", "width", "instances"):
        if field not in doc:
            raise ManifestError(f"manifest: missing field {field!r}")
    video = VideoMeta(
        id=doc["video_id"],
        frame_count=doc["frame_count"],
        height=doc["height"],
        width=doc["width"],
        fps=doc.get("fps"),
    )
    instances = []
    for idx, entry in enumerate(doc["instances"]):
        members = []
        for m in _require(entry, "members", idx):
            members.append(
                Proposal(
                    description=m["description"],
                    interval=TemporalInterval(m["start"], m["end"]),
                    confidence=m["confidence"],
                    source_sampling=m["source_sampling"],
                    evidence_cells=frozenset(m["evidence_cells"]),
                )
            )
        proposal = ConsolidatedProposal(
            description=_require(entry, "description", idx),
            interval=TemporalInterval(_require(entry, "start", idx), _require(entry, "end", idx)),
            support=_require(entry, "support", idx),
            confidence=_require(entry, "confidence", idx),
            members=tuple(members),
        )
        box_fields = _require(entry, "box", idx)
        if len(box_fields) != 5:
            raise ManifestError(f"instance {idx}: field 'box' must have 5 entries")
        masks = []
        for rel in _require(entry, "mask_files", idx):
            with Image.open(out_dir / rel) as img:
                bitmap = np.asarray(img.convert("L")) > 127
            frame_index = int(Path(rel).stem)
            masks.append(FrameMask.from_bitmap(frame_index, bitmap))
        instances.append(
            AnomalyInstance(
                proposal=proposal,
                anchor_frame=_require(entry, "anchor_frame", idx),
                box=BoundingBox(*box_fields),
                masks=tuple(masks),
            )
        )
    return video, instances


def write_ground_truth(gt: GroundTruth, out_dir: str | Path) -> None:
    """Persist GT masks (and track-label maps) as per-frame images."""
    out_dir = Path(out_dir)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    if gt.tracks is not None:
        (out_dir / "tracks").mkdir(parents=True, exist_ok=True)
    meta = {"frame_count": gt.frame_count, "height": gt.height, "width": gt.width}
    (out_dir / "gt.json").write_text(json.dumps(meta))
    for t, mask in gt.frames.items():
        Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(
            out_dir / "masks" / f"{t:06d}.png"
        )
        if gt.tracks is not None:
            Image.fromarray(gt.tracks[t].astype(np.uint8), mode="L").save(
                out_dir / "tracks" / f"{t:06d}.png"
            )


def read_ground_truth(gt_dir: str | Path) -> GroundTruth:
    gt_dir = Path(gt_dir)
    meta = json.loads((gt_dir / "gt.json").read_text())
    frames: dict[int, np.ndarray] = {}
    tracks: dict[int, np.ndarray] = {}
    for path in sorted((gt_dir / "masks").glob("*.png")):
        with Image.open(path) as img:
            frames[int(path.stem)] = np.asarray(img.convert("L")) > 127
    tracks_dir = gt_dir / "tracks"
    if tracks_dir.is_dir():
        for path in sorted(tracks_dir.glob("*.png")):
            with Image.open(path) as img:
                tracks[int(path.stem)] = np.asarray(img.convert("L")).astype(np.int32)
    return GroundTruth(
        meta["frame_count"], meta["height"], meta["width"], frames, tracks or None
    )
