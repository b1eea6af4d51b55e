"""Stratified temporal sampling and grid montage assembly.

A clip is split into K consecutive equal-width bins; each sampling
draws one frame per bin and tiles the K frames row-major into a single
g x g montage image. Evidence cell indices reported against a montage
decode back to frame intervals through the same bin table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .frames import FrameProvider
from .types import Clip, TemporalInterval


class ShortClipError(ValueError):
    """Clip has fewer frames than grid cells."""


class CellDecodeError(ValueError):
    """Evidence cell set is empty or out of range."""


@dataclass(frozen=True)
class BinPartition:
    """The K half-open frame ranges [start, stop) tiling one clip."""

    clip: Clip
    K: int
    bins: tuple[tuple[int, int], ...]

    def bin_of_frame(self, t: int) -> int:
        """1-based bin index containing frame t."""
        for k, (lo, hi) in enumerate(self.bins, start=1):
            if lo <= t < hi:
                return k
        raise ValueError(f"frame {t} outside clip {self.clip.interval}")


@dataclass(frozen=True)
class GridSample:
    """One stratified draw: K frame indices and their tiled montage."""

    sampling_index: int
    frame_indices: tuple[int, ...]
    montage: np.ndarray  # (g*H, g*W, 3) uint8
    grid_side: int


def partition(clip: Clip, K: int) -> BinPartition:
    """Split the clip into K consecutive bins of near-equal width.

    Bin k (1-based) is [s + floor((k-1)*L/K), s + floor(k*L/K)); the
    floors guarantee the bins tile the clip exactly.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    L = clip.length
    if L < K:
        raise ShortClipError("clip shorter than grid")
    s = clip.start
    edges = [s + (k * L) // K for k in range(K + 1)]
    bins = tuple((edges[k], edges[k + 1]) for k in range(K))
    return BinPartition(clip=clip, K=K, bins=bins)


def sample_grid(
    part: BinPartition,
    rng_seed: int,
    frames: FrameProvider,
    sampling_index: int = 1,
    annotate_cells: bool = True,
) -> GridSample:
    """Draw one frame uniformly from each bin and tile the montage.

    The draw is deterministic under rng_seed. Each cell is stamped with
    its 1-based index in the top-left corner (toggleable) so a proposer
    can reference cells unambiguously.
    """
    g = int(round(len(part.bins) ** 0.5))
    if g * g != len(part.bins):
        raise ValueError(f"K={len(part.bins)} is not a perfect square, cannot tile")
    rng = np.random.default_rng(rng_seed)
    indices = tuple(int(rng.integers(lo, hi)) for lo, hi in part.bins)

    cells = []
    for t in indices:
        frame = frames.get_frame(part.clip.video_id, t)
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise ValueError(f"frame {t} is not H x W x 3")
        cells.append(np.asarray(frame, dtype=np.uint8))
    h, w = cells[0].shape[:2]
    montage = np.zeros((g * h, g * w, 3), dtype=np.uint8)
    for k, cell in enumerate(cells):
        if cell.shape[:2] != (h, w):
            raise ValueError("all frames of one clip must share dimensions")
        r, c = divmod(k, g)
        montage[r * h : (r + 1) * h, c * w : (c + 1) * w] = cell
    if annotate_cells:
        montage = _annotate(montage, g, h, w)
    return GridSample(
        sampling_index=sampling_index,
        frame_indices=indices,
        montage=montage,
        grid_side=g,
    )


def _annotate(montage: np.ndarray, g: int, h: int, w: int) -> np.ndarray:
    img = Image.fromarray(montage)
    draw = ImageDraw.Draw(img)
    pad = max(2, h // 40)
    for k in range(g * g):
        r, c = divmod(k, g)
        x, y = c * w + pad, r * h + pad
        label = str(k + 1)
        bbox = draw.textbbox((x, y), label)
        draw.rectangle([bbox[0] - 1, bbox[1] - 1, bbox[2] + 1, bbox[3] + 1], fill=(0, 0, 0))
        draw.text((x, y), label, fill=(255, 255, 0))
    return np.asarray(img)


def decode_cells(part: BinPartition, cells: set[int]) -> TemporalInterval:
    """Tightest frame interval covering the given 1-based evidence cells."""
    if not cells:
        raise CellDecodeError("empty evidence cell set")
    if any(not (1 <= c <= part.K) for c in cells):
        raise CellDecodeError(f"cell index outside [1, {part.K}]: {sorted(cells)}")
    start = min(part.bins[c - 1][0] for c in cells)
    end = max(part.bins[c - 1][1] for c in cells) - 1
    return TemporalInterval(start, end)


def montage_png(grid: GridSample) -> bytes:
    """Encode the montage as PNG bytes for transmission to a backend."""
    import io

    buf = io.BytesIO()
    Image.fromarray(grid.montage).save(buf, format="PNG")
    return buf.getvalue()
