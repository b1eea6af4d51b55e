"""Model backends behind the wire protocol.

The real deployment binds an open-vocabulary detector and a video
segmentation tracker here. This module ships a toy backend that detects
saturated (non-achromatic) color blobs and tracks them by color, which
is enough to exercise the full wire contract and to serve the engine's
synthetic scenes, where anomalies are exactly the colored objects.
"""

from __future__ import annotations

import logging
from typing import Protocol

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
SATURATION_FLOOR = 40  # max-min channel spread marking a colored pixel


class GroundingModel(Protocol):
    def ground(self, image: np.ndarray, text: str, box_threshold: float,
               text_threshold: float) -> list[tuple[float, float, float, float, float]]:
        """(x0, y0, x1, y1, score) per detection, descending score."""
        ...


class PropagationModel(Protocol):
    def propagate(self, frames: list[np.ndarray], anchor_index: int,
                  box: tuple[float, float, float, float]) -> list[np.ndarray]:
        """One boolean mask per frame."""
        ...


def _saturation(image: np.ndarray) -> np.ndarray:
    img = image.astype(np.int16)
    return img.max(axis=2) - img.min(axis=2)


def _components(mask: np.ndarray):
    labeled, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    for r in range(1, n + 1):
        yield labeled == r


class ToySaturationBackend:
    """Grounds any text onto saturated color blobs; tracks them by color.

    Scores are blob area relative to the largest blob in the image, so
    the most prominent colored object wins regardless of the phrasing.
    """

    def ground(self, image, text, box_threshold, text_threshold):
        blobs = [c for c in _components(_saturation(image) > SATURATION_FLOOR)]
        if not blobs:
            return []
        largest = max(int(b.sum()) for b in blobs)
        out = []
        for blob in blobs:
            ys, xs = np.nonzero(blob)
            score = 0.5 + 0.5 * int(blob.sum()) / largest
            out.append(
                (float(xs.min()), float(ys.min()),
                 float(xs.max() + 1), float(ys.max() + 1), float(min(1.0, score)))
            )
        out.sort(key=lambda b: -b[4])
        return [b for b in out if b[4] >= box_threshold]

    def propagate(self, frames, anchor_index, box):
        anchor = frames[anchor_index]
        x0, y0, x1, y1 = (int(round(v)) for v in box)
        h, w = anchor.shape[:2]
        prompt = np.zeros((h, w), dtype=bool)
        prompt[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = True

        target_color = None
        best_overlap = 0
        for blob in _components(_saturation(anchor) > SATURATION_FLOOR):
            overlap = int(np.sum(blob & prompt))
            if overlap > best_overlap:
                best_overlap = overlap
                target_color = anchor[blob].mean(axis=0)
        if target_color is None:
            log.info("no saturated blob under the prompt box; returning empty masks")
            return [np.zeros((h, w), dtype=bool) for _ in frames]

        masks = []
        for frame in frames:
            dist = np.abs(frame.astype(np.int16) - target_color).sum(axis=2)
            candidate = (dist < 3 * SATURATION_FLOOR) & (
                _saturation(frame) > SATURATION_FLOOR
            )
            masks.append(candidate)
        return masks


def load_backend(name: str):
    """Resolve a model identifier to a backend instance."""
    if name == "toy-saturation":
        return ToySaturationBackend()
    raise ValueError(f"unknown model identifier {name!r}")
