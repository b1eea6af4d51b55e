"""Frame access abstraction.

Every pipeline stage fetches pixels through a FrameProvider so that
image directories, synthetic scenes, and (externally decoded) video
containers are interchangeable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image


class FrameProvider(Protocol):
    def get_frame(self, video_id: str, t: int) -> np.ndarray:
        """Return frame t as an H x W x 3 uint8 array."""
        ...


class ImageDirProvider:
    """Frames stored as <root>/<video_id>/<frame:06d>.png (or .jpg)."""

    def __init__(self, root: str | Path, extension: str = "png"):
        self.root = Path(root)
        self.extension = extension

    def get_frame(self, video_id: str, t: int) -> np.ndarray:
        path = self.root / video_id / f"{t:06d}.{self.extension}"
        if not path.exists():
            raise FileNotFoundError(f"frame {t} of video {video_id!r} not found at {path}")
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))


class ClampedProvider:
    """Repeats the frame at max_index for any request beyond it.

    Used to pad clips shorter than the grid: the sampler sees a virtual
    clip of full length whose tail frames are all the real final frame.
    """

    def __init__(self, base: FrameProvider, max_index: int):
        self.base = base
        self.max_index = max_index

    def get_frame(self, video_id: str, t: int) -> np.ndarray:
        return self.base.get_frame(video_id, min(t, self.max_index))
