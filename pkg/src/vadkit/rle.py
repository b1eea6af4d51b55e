"""Run-length coding for binary masks.

Convention (shared with the HTTP wire format): pixels are walked in
row-major order and runs alternate zero/one, always starting with a
zero run (which may be empty).
"""

from __future__ import annotations

import numpy as np


def encode(bitmap: np.ndarray) -> tuple[int, ...]:
    """Encode a 2-D binary bitmap into alternating zero/one run lengths."""
    flat = np.asarray(bitmap, dtype=bool).ravel(order="C")
    if flat.size == 0:
        return ()
    # boundaries where the value changes, plus both ends
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return tuple(int(r) for r in runs)


def decode(runs: tuple[int, ...], shape: tuple[int, int]) -> np.ndarray:
    """Decode run lengths back into an H x W boolean bitmap."""
    h, w = shape
    total = sum(runs)
    if total != h * w:
        raise ValueError(f"run lengths sum to {total}, expected {h * w} for shape {shape}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    for i, run in enumerate(runs):
        if run < 0:
            raise ValueError("negative run length")
        if i % 2 == 1:
            flat[pos : pos + run] = True
        pos += run
    return flat.reshape(h, w)


def area(runs: tuple[int, ...]) -> int:
    """Number of one-pixels encoded by the runs."""
    return int(sum(runs[1::2]))
