"""Shared helpers for building wire-format test payloads."""

import base64
import io

import numpy as np
from PIL import Image


def png_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def gray_frame(h=64, w=64, level=96) -> np.ndarray:
    return np.full((h, w, 3), level, dtype=np.uint8)


def colored_blob(frame: np.ndarray, y, x, side, color) -> np.ndarray:
    out = frame.copy()
    out[y : y + side, x : x + side] = color
    return out


def moving_blob_frames(n=6, h=64, w=64, side=10, color=(220, 40, 60)):
    """A colored square moving diagonally over a gray background."""
    frames = []
    for t in range(n):
        frames.append(colored_blob(gray_frame(h, w), 5 + 4 * t, 5 + 4 * t, side, color))
    return frames
