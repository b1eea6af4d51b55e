"""Synthetic scenes with known anomalies plus simulated backends.

Worlds are collections of moving rectangles and circles on a flat
background. Normal actors are achromatic; anomaly actors are rendered
in saturated colors and carry track ids, so exact ground-truth masks
and label maps fall out of the rasterizer. The simulated proposer,
grounder, propagator, and frame judge close the loop for desk-scale
verification: with zero noise the full pipeline reproduces the ground
truth bit-exactly.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import GroundTruth
from .sampler import BinPartition, GridSample
from .types import BoundingBox

BACKGROUND_GRAY = 96
NORMAL_GRAY = 190

_COLORS = [
    ("crimson", (220, 40, 60)),
    ("teal", (0, 170, 170)),
    ("amber", (250, 180, 20)),
    ("violet", (150, 60, 220)),
    ("lime", (120, 220, 40)),
    ("coral", (250, 110, 90)),
    ("azure", (40, 130, 240)),
    ("magenta", (230, 40, 200)),
]


@dataclass(frozen=True)
class NoiseProfile:
    """Controls how unfaithful the simulated proposer/grounder are."""

    miss_rate: float = 0.0
    halluc_rate: float = 0.0
    box_jitter: float = 0.0  # pixels
    interval_jitter: int = 0  # bins

    def __post_init__(self) -> None:
        if not (0 <= self.miss_rate <= 1 and 0 <= self.halluc_rate <= 1):
            raise ValueError("rates must be in [0, 1]")
        if self.box_jitter < 0 or self.interval_jitter < 0:
            raise ValueError("jitters must be >= 0")


@dataclass(frozen=True)
class Actor:
    """A moving shape; anomaly actors have track_id >= 1 and a color."""

    kind: str  # "rect" or "circle"
    x: float  # center at spawn
    y: float
    vx: float  # pixels per frame
    vy: float
    size: int  # rect side / circle diameter
    spawn: int
    despawn: int  # inclusive
    label: str
    track_id: int = 0  # 0 = normal background actor
    color: tuple[int, int, int] = (NORMAL_GRAY, NORMAL_GRAY, NORMAL_GRAY)
    description_variants: tuple[str, ...] = ()

    @property
    def is_anomaly(self) -> bool:
        return self.track_id >= 1

    def present(self, t: int) -> bool:
        return self.spawn <= t <= self.despawn

    def center(self, t: int) -> tuple[float, float]:
        dt = t - self.spawn
        return self.x + self.vx * dt, self.y + self.vy * dt

    def silhouette(self, t: int, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        if not self.present(t):
            return mask
        cx, cy = self.center(t)
        if self.kind == "rect":
            x0 = int(round(cx - self.size / 2))
            y0 = int(round(cy - self.size / 2))
            x1, y1 = x0 + self.size, y0 + self.size
            mask[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = True
        elif self.kind == "circle":
            r = self.size / 2
            yy, xx = np.ogrid[:height, :width]
            mask[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = True
        else:
            raise ValueError(f"unknown actor kind {self.kind!r}")
        return mask

    def bbox(self, t: int, height: int, width: int) -> tuple[float, float, float, float] | None:
        sil = self.silhouette(t, height, width)
        if not sil.any():
            return None
        ys, xs = np.nonzero(sil)
        return float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1)


@dataclass(frozen=True)
class SyntheticWorld:
    id: str
    frame_count: int
    height: int
    width: int
    actors: tuple[Actor, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        ids = [a.track_id for a in self.actors if a.is_anomaly]
        if len(ids) != len(set(ids)):
            raise ValueError("anomaly track ids must be unique")
        for a in self.actors:
            if a.is_anomaly and not (0 <= a.spawn <= a.despawn < self.frame_count):
                raise ValueError(f"actor {a.label!r} lifetime outside [0, {self.frame_count})")

    @property
    def anomalies(self) -> list[Actor]:
        return [a for a in self.actors if a.is_anomaly]


def render(world: SyntheticWorld, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(frame, gt mask, gt track-label map) at frame t; seed-deterministic."""
    if not 0 <= t < world.frame_count:
        raise ValueError(f"frame {t} outside [0, {world.frame_count})")
    h, w = world.height, world.width
    frame = np.full((h, w, 3), BACKGROUND_GRAY, dtype=np.uint8)
    mask = np.zeros((h, w), dtype=bool)
    labels = np.zeros((h, w), dtype=np.int32)
    for actor in world.actors:
        sil = actor.silhouette(t, h, w)
        if not sil.any():
            continue
        frame[sil] = actor.color
        if actor.is_anomaly:
            mask |= sil
            labels[sil] = actor.track_id
    return frame, mask, labels


def ground_truth(world: SyntheticWorld) -> GroundTruth:
    frames: dict[int, np.ndarray] = {}
    tracks: dict[int, np.ndarray] = {}
    for t in range(world.frame_count):
        _, mask, labels = render(world, t)
        if mask.any():
            frames[t] = mask
            tracks[t] = labels
    return GroundTruth(world.frame_count, world.height, world.width, frames, tracks)


class WorldFrameProvider:
    """FrameProvider over a synthetic world, with a render cache."""

    def __init__(self, world: SyntheticWorld):
        self.world = world
        self._cache: dict[int, np.ndarray] = {}

    def get_frame(self, video_id: str, t: int) -> np.ndarray:
        if video_id != self.world.id:
            raise KeyError(f"unknown video {video_id!r}")
        if t not in self._cache:
            self._cache[t] = render(self.world, t)[0]
        return self._cache[t]


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------


def save_world(world: SyntheticWorld, path: str | Path) -> None:
    doc = asdict(world)
    doc["actors"] = [asdict(a) for a in world.actors]
    Path(path).write_text(json.dumps(doc, indent=2))


def load_world(path: str | Path) -> SyntheticWorld:
    doc = json.loads(Path(path).read_text())
    actors = tuple(
        Actor(
            **{
                **a,
                "color": tuple(a["color"]),
                "description_variants": tuple(a["description_variants"]),
            }
        )
        for a in doc["actors"]
    )
    return SyntheticWorld(
        id=doc["id"],
        frame_count=doc["frame_count"],
        height=doc["height"],
        width=doc["width"],
        actors=actors,
        seed=doc.get("seed", 0),
    )


# ---------------------------------------------------------------------------
# world generation
# ---------------------------------------------------------------------------


def _trajectory(rng, size, height, width, duration):
    margin = size // 2 + 2
    x0 = float(rng.uniform(margin, width - margin))
    y0 = float(rng.uniform(margin, height - margin))
    x1 = float(rng.uniform(margin, width - margin))
    y1 = float(rng.uniform(margin, height - margin))
    steps = max(duration - 1, 1)
    return x0, y0, (x1 - x0) / steps, (y1 - y0) / steps


def _variants(color: str, shape: str, uid: str, n: int) -> tuple[str, ...]:
    """n phrasings with pairwise-disjoint token sets (never cross-cluster)."""
    # two uid tokens keep shared words a minority of each phrase, so
    # phrasings of different actors never reach the 0.5 similarity floor
    forms = [
        f"{color} {shape} intruding {uid}a",
        f"unusual moving object {uid}b {uid}e",
        f"unexpected visitor crossing {uid}c {uid}f",
    ]
    return tuple(forms[:n])


def random_world(
    seed: int,
    frame_count: int = 200,
    height: int = 128,
    width: int = 128,
    n_consistent: int = 2,
    n_inconsistent: int = 0,
    consistent_size: int = 16,
    inconsistent_size: int = 8,
    anomaly_length: int = 60,
    bin_align: int | None = None,
    n_background: int = 2,
) -> SyntheticWorld:
    """Random world with known anomalies.

    Consistent anomalies carry one description used by every sampling;
    inconsistent ones carry three disjoint phrasings, modeling a
    proposer that words the same event differently across samplings.
    When bin_align is given, anomaly lifetimes snap to multiples of it
    (useful to decouple tests from temporal bin quantization).
    """
    rng = np.random.default_rng(seed)
    actors = []
    for i in range(n_background):
        x0, y0, vx, vy = _trajectory(rng, 10, height, width, frame_count)
        actors.append(
            Actor(
                kind="rect" if rng.random() < 0.5 else "circle",
                x=x0, y=y0, vx=vx, vy=vy, size=10,
                spawn=0, despawn=frame_count - 1,
                label=f"pedestrian {i}",
            )
        )
    track_id = 1
    for kind_count, size, n_var in (
        (n_consistent, consistent_size, 1),
        (n_inconsistent, inconsistent_size, 3),
    ):
        for _ in range(kind_count):
            length = min(anomaly_length, frame_count)
            if bin_align:
                length = max(bin_align, (length // bin_align) * bin_align)
                max_start = frame_count - length
                spawn = int(rng.integers(0, max_start // bin_align + 1)) * bin_align
            else:
                spawn = int(rng.integers(0, frame_count - length + 1))
            despawn = spawn + length - 1
            shape = "rect" if rng.random() < 0.5 else "circle"
            color_name, color = _COLORS[(track_id - 1) % len(_COLORS)]
            uid = f"{zlib.crc32(f'{seed}:{track_id}'.encode()) & 0xFFFFF:05x}"
            x0, y0, vx, vy = _trajectory(rng, size, height, width, length)
            variants = _variants(color_name, "square" if shape == "rect" else "disc", uid, n_var)
            actors.append(
                Actor(
                    kind=shape,
                    x=x0, y=y0, vx=vx, vy=vy, size=size,
                    spawn=spawn, despawn=despawn,
                    label=variants[0],
                    track_id=track_id,
                    color=color,
                    description_variants=variants,
                )
            )
            track_id += 1
    return SyntheticWorld(
        id=f"synth-{seed}",
        frame_count=frame_count,
        height=height,
        width=width,
        actors=tuple(actors),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# simulated backends
# ---------------------------------------------------------------------------


def _rng_for(*parts) -> np.random.Generator:
    key = ":".join(str(p) for p in parts).encode()
    return np.random.default_rng(zlib.crc32(key))


class SimulatedProposerBackend:
    """Stands in for the VLM: emits the structured-array response as text.

    For every anomaly actor visible in at least one sampled frame it
    reports the cells showing it, with probability (1 - miss_rate), and
    adds a freshly-worded hallucination with probability halluc_rate.
    Deterministic under (seed, clip, sampling index).
    """

    def __init__(self, world: SyntheticWorld, noise: NoiseProfile, seed: int = 0):
        self.world = world
        self.noise = noise
        self.seed = seed

    def generate(self, grid: GridSample, part: BinPartition, prompt: str) -> str:
        rng = _rng_for(self.seed, part.clip.start, part.clip.end, grid.sampling_index)
        entries = []
        for actor in self.world.anomalies:
            cells = [
                k + 1
                for k, t in enumerate(grid.frame_indices)
                if t < self.world.frame_count
                and actor.silhouette(t, self.world.height, self.world.width).any()
            ]
            # the miss draw happens for every actor so the random stream
            # stays aligned across noise settings
            missed = rng.random() < self.noise.miss_rate
            variant = actor.description_variants[
                int(rng.integers(len(actor.description_variants) or 1))
            ] if actor.description_variants else actor.label
            confidence = float(0.7 + 0.3 * rng.random())
            if not cells or missed:
                continue
            if self.noise.interval_jitter:
                lo = max(1, min(cells) - int(rng.integers(0, self.noise.interval_jitter + 1)))
                hi = min(part.K, max(cells) + int(rng.integers(0, self.noise.interval_jitter + 1)))
                cells = list(range(lo, hi + 1))
            entries.append(
                {"description": variant, "evidence_cells": cells, "confidence": round(confidence, 4)}
            )
        if rng.random() < self.noise.halluc_rate:
            lo = int(rng.integers(1, part.K + 1))
            hi = int(rng.integers(lo, min(part.K, lo + 3) + 1))
            # both words carry a fresh hex suffix, so two hallucinations
            # never share a token and can never cluster with each other
            entries.append(
                {
                    "description": f"phantom{rng.integers(0, 1 << 32):08x} "
                    f"event{rng.integers(0, 1 << 32):08x}",
                    "evidence_cells": list(range(lo, hi + 1)),
                    "confidence": round(float(0.5 + 0.5 * rng.random()), 4),
                }
            )
        return json.dumps(entries)


def _match_actor(world: SyntheticWorld, text: str) -> Actor | None:
    from .scc import token_set_similarity

    for actor in world.anomalies:
        variants = actor.description_variants or (actor.label,)
        for v in variants:
            if token_set_similarity(v, text) >= 0.5:
                return actor
    return None


class SimulatedGrounder:
    """Returns the described actor's box when it is present in the frame.

    Unknown descriptions (hallucinations) behave like an over-eager
    open-vocabulary detector: with probability `salience` they lock onto
    some anomaly actor present in the frame, otherwise they produce a
    low-score box at a random location (or nothing).
    """

    def __init__(
        self,
        world: SyntheticWorld,
        noise: NoiseProfile = NoiseProfile(),
        seed: int = 0,
        salience: float = 0.5,
    ):
        self.world = world
        self.noise = noise
        self.seed = seed
        self.salience = salience
        self._max_area = {
            a.track_id: max(
                (a.silhouette(t, world.height, world.width).sum() for t in range(a.spawn, a.despawn + 1)),
                default=1,
            )
            for a in world.anomalies
        }

    def _jittered(self, bbox, rng) -> tuple[tuple[float, float, float, float], float]:
        j = self.noise.box_jitter
        if j <= 0:
            return bbox, 0.0
        dx, dy = rng.uniform(-j, j, size=2)
        x0, y0, x1, y1 = bbox
        x0 = min(max(0.0, x0 + dx), self.world.width - 1.0)
        x1 = max(x0 + 1.0, min(float(self.world.width), x1 + dx))
        y0 = min(max(0.0, y0 + dy), self.world.height - 1.0)
        y1 = max(y0 + 1.0, min(float(self.world.height), y1 + dy))
        norm = float(np.hypot(dx, dy) / np.hypot(self.world.width, self.world.height))
        return (x0, y0, x1, y1), norm

    def ground(self, image, text, box_threshold, text_threshold, frame_index=None):
        if frame_index is None:
            raise ValueError("the simulated grounder needs the frame index")
        rng = _rng_for(self.seed, "ground", text, frame_index)
        actor = _match_actor(self.world, text)
        if actor is not None:
            sil = actor.silhouette(frame_index, self.world.height, self.world.width)
            area = int(sil.sum())
            if area == 0:
                return []
            bbox = actor.bbox(frame_index, self.world.height, self.world.width)
            (x0, y0, x1, y1), jnorm = self._jittered(bbox, rng)
            score = max(0.05, (0.5 + 0.5 * area / self._max_area[actor.track_id]) * (1 - jnorm))
            boxes = [BoundingBox(x0, y0, x1, y1, min(1.0, score))]
        elif rng.random() < self.salience:
            present = [
                a for a in self.world.anomalies
                if a.silhouette(frame_index, self.world.height, self.world.width).any()
            ]
            if not present:
                return []
            target = present[int(rng.integers(len(present)))]
            x0, y0, x1, y1 = target.bbox(frame_index, self.world.height, self.world.width)
            boxes = [BoundingBox(x0, y0, x1, y1, 0.6)]
        else:
            side = 12.0
            x0 = float(rng.uniform(0, self.world.width - side))
            y0 = float(rng.uniform(0, self.world.height - side))
            boxes = [BoundingBox(x0, y0, x0 + side, y0 + side, 0.3)]
        return [b for b in boxes if b.score >= box_threshold]


class SimulatedPropagator:
    """Returns exact actor silhouettes for a box that matches an actor.

    A box matching no actor (a hallucination grounded in open space)
    drifts: the box rectangle is carried unchanged through the whole
    window, the way a tracker with a bad prompt would.
    """

    def __init__(self, world: SyntheticWorld, min_match_iou: float = 0.2):
        self.world = world
        self.min_match_iou = min_match_iou

    def propagate(self, frames, anchor_index, box, frame_indices=None):
        if frame_indices is None:
            raise ValueError("the simulated propagator needs the frame indices")
        h, w = self.world.height, self.world.width
        anchor_t = frame_indices[anchor_index]
        best, best_iou = None, 0.0
        for actor in self.world.anomalies:
            bbox = actor.bbox(anchor_t, h, w) if anchor_t < self.world.frame_count else None
            if bbox is None:
                continue
            iou = _box_iou(bbox, (box.x0, box.y0, box.x1, box.y1))
            if iou > best_iou:
                best, best_iou = actor, iou
        if best is not None and best_iou >= self.min_match_iou:
            return [
                best.silhouette(t, h, w) if t < self.world.frame_count else np.zeros((h, w), bool)
                for t in frame_indices
            ]
        blob = np.zeros((h, w), dtype=bool)
        x0, y0 = int(round(box.x0)), int(round(box.y0))
        x1, y1 = int(round(box.x1)), int(round(box.y1))
        blob[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = True
        return [blob.copy() for _ in frame_indices]


class SimulatedFrameJudge:
    """Single-frame anomaly score for the uniform-sampling paradigm."""

    def __init__(self, world: SyntheticWorld, noise: NoiseProfile = NoiseProfile(), seed: int = 0):
        self.world = world
        self.noise = noise
        self.seed = seed

    def judge(self, image, frame_index: int) -> float:
        rng = _rng_for(self.seed, "judge", frame_index)
        _, mask, _ = render(self.world, frame_index)
        anomalous = bool(mask.any())
        if anomalous and rng.random() < self.noise.miss_rate:
            anomalous = False
        elif not anomalous and rng.random() < self.noise.halluc_rate:
            anomalous = True
        low = 0.4 * rng.random()
        return float(0.6 + low) if anomalous else float(low)


def _box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def simulated_propose(grid: GridSample, part: BinPartition, world, noise, seed=0):
    """Convenience wrapper: one simulated proposer call, parsed."""
    from .proposer import parse_response

    backend = SimulatedProposerBackend(world, noise, seed)
    text = backend.generate(grid, part, "")
    return parse_response(text, part, grid.sampling_index)
