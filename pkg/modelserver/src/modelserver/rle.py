"""Run-length coding matching the engine's wire convention.

Row-major pixel order; runs alternate zero/one and always start with a
zero run, which may be empty.
"""

from __future__ import annotations

import numpy as np


def encode(bitmap: np.ndarray) -> list[int]:
    flat = np.asarray(bitmap, dtype=bool).ravel(order="C")
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = [int(r) for r in np.diff(bounds)]
    if flat[0]:
        runs.insert(0, 0)
    return runs


def decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    if sum(runs) != h * w:
        raise ValueError(f"run lengths sum to {sum(runs)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    for i, run in enumerate(runs):
        if run < 0:
            raise ValueError("negative run length")
        if i % 2 == 1:
            flat[pos : pos + run] = True
        pos += run
    return flat.reshape(h, w)
