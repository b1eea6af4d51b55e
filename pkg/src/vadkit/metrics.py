"""Evaluation suite: frame, pixel, and object granularity.

Seven metrics are reported: Frame-AUROC, Pixel-AUROC, Pixel-AP,
Pixel-AUPRO, Pixel-F1, RBDC, TBDC. Pixel scores are the per-pixel
maximum of the covering instances' confidences (the pipeline emits
binary masks with instance-level confidences, so this is the natural
score field). Region and track criteria accumulate globally across the
whole test set, never per video.

Threshold conventions, shared with the brute-force test oracles:
  - AUROC / AP / max-F1 / RBDC / TBDC predict positive at score >= t;
  - AUPRO predicts positive at score > t (so an all-zero field scores 0);
  - detection-rate-vs-FPPF and overlap-vs-FPR curves are prepended with
    (0, 0), extended horizontally to the integration limit, and
    integrated by trapezoid, normalized by the limit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .types import AnomalyInstance, VideoMeta

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class GroundTruth:
    """Per-frame binary masks plus optional track-label maps for one video."""

    frame_count: int
    height: int
    width: int
    frames: dict[int, np.ndarray] = dc_field(default_factory=dict)  # t -> bool mask
    tracks: dict[int, np.ndarray] | None = None  # t -> int label map, 0 = background

    def __post_init__(self) -> None:
        for t, mask in self.frames.items():
            if mask.shape != (self.height, self.width):
                raise ValueError(f"gt mask at frame {t} has wrong shape")
        if self.tracks is not None:
            for t, labels in self.tracks.items():
                mask = self.mask_at(t)
                if np.any((labels != 0) != mask):
                    raise ValueError(f"label map at frame {t} disagrees with the binary mask")

    def mask_at(self, t: int) -> np.ndarray:
        return self.frames.get(t, np.zeros((self.height, self.width), dtype=bool))

    def frame_labels(self) -> np.ndarray:
        out = np.zeros(self.frame_count, dtype=bool)
        for t, mask in self.frames.items():
            out[t] = bool(mask.any())
        return out


@dataclass
class ScoredPixelField:
    """Per-frame real score maps; zero wherever no instance mask covers."""

    frame_count: int
    height: int
    width: int
    frames: dict[int, np.ndarray] = dc_field(default_factory=dict)

    @classmethod
    def from_instances(cls, instances: list[AnomalyInstance], video: VideoMeta) -> "ScoredPixelField":
        field = cls(video.frame_count, video.height, video.width)
        for inst in instances:
            for mask in inst.masks:
                bitmap = mask.bitmap
                if not bitmap.any():
                    continue
                cur = field.frames.setdefault(
                    mask.frame_index, np.zeros((video.height, video.width), dtype=float)
                )
                np.maximum(cur, np.where(bitmap, inst.confidence, 0.0), out=cur)
        return field

    def score_at(self, t: int) -> np.ndarray:
        return self.frames.get(t, np.zeros((self.height, self.width), dtype=float))


def frame_scores(instances: list[AnomalyInstance], video: VideoMeta) -> np.ndarray:
    """Per-frame score: max confidence of instances with a nonzero mask there."""
    scores = np.zeros(video.frame_count, dtype=float)
    for inst in instances:
        for mask in inst.masks:
            if mask.area > 0:
                scores[mask.frame_index] = max(scores[mask.frame_index], inst.confidence)
    return scores


# ---------------------------------------------------------------------------
# rank-statistic metrics over flat score/label arrays
# ---------------------------------------------------------------------------


def auroc(scores, labels) -> float | None:
    """Tie-aware AUROC (the Mann-Whitney statistic)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        log.warning("auroc undefined: labels are single-class")
        return None
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=float)
    sorted_scores = scores[order]
    # average ranks within tie groups
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = ranks[labels].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _pr_sweep(scores: np.ndarray, labels: np.ndarray):
    """Precision and recall at each descending unique score threshold (>=)."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order].astype(float)
    tp = np.cumsum(y)
    fp = np.cumsum(1.0 - y)
    # last index of each tie block = the cumulative counts at that threshold
    distinct = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp, fp = tp[distinct], fp[distinct]
    precision = tp / (tp + fp)
    recall = tp / labels.sum()
    return precision, recall


def average_precision(scores, labels) -> float | None:
    """AP = sum_k (R_k - R_{k-1}) * P_k over descending unique thresholds."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    if labels.sum() == 0:
        log.warning("average precision undefined: no positive labels")
        return None
    precision, recall = _pr_sweep(scores, labels)
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


def max_f1(scores, labels) -> float | None:
    """Maximum F1 over all distinct score thresholds."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    if labels.sum() == 0:
        log.warning("max F1 undefined: no positive labels")
        return None
    precision, recall = _pr_sweep(scores, labels)
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f1.max())


# ---------------------------------------------------------------------------
# curve helpers
# ---------------------------------------------------------------------------


def _area_under_limited_curve(xs: list[float], ys: list[float], limit: float) -> float:
    """Trapezoid area of the (0,0)-prepended curve up to x = limit, / limit.

    If the curve ends short of the limit it is extended horizontally at
    its last height; if it crosses the limit the crossing is
    interpolated.
    """
    pts_x, pts_y = [0.0], [0.0]
    for x, y in zip(xs, ys):
        if x >= pts_x[-1]:
            pts_x.append(x)
            pts_y.append(y)
    if pts_x[-1] < limit:
        pts_x.append(limit)
        pts_y.append(pts_y[-1])
    else:
        # truncate at the limit with linear interpolation
        cut_x, cut_y = [], []
        for i in range(len(pts_x)):
            if pts_x[i] <= limit:
                cut_x.append(pts_x[i])
                cut_y.append(pts_y[i])
            else:
                x0, y0 = pts_x[i - 1], pts_y[i - 1]
                x1, y1 = pts_x[i], pts_y[i]
                frac = (limit - x0) / (x1 - x0) if x1 > x0 else 0.0
                cut_x.append(limit)
                cut_y.append(y0 + frac * (y1 - y0))
                break
        pts_x, pts_y = cut_x, cut_y
    return float(np.trapezoid(pts_y, pts_x) / limit)


# ---------------------------------------------------------------------------
# AUPRO
# ---------------------------------------------------------------------------


def aupro(field: ScoredPixelField, gt: GroundTruth, fpr_limit: float = 0.3) -> float | None:
    """Area under the per-region-overlap vs FPR curve, up to fpr_limit.

    Regions are per-frame 8-connected components of the ground truth; a
    pixel counts as predicted at threshold t when its score is strictly
    above t.
    """
    if not 0 < fpr_limit <= 1:
        raise ValueError("fpr_limit must be in (0, 1]")
    region_scores: list[np.ndarray] = []
    normal_scores: list[np.ndarray] = []
    all_scores: list[np.ndarray] = []
    for t in range(gt.frame_count):
        mask = gt.mask_at(t)
        score = field.score_at(t)
        all_scores.append(np.unique(score))
        normal_scores.append(score[~mask])
        if mask.any():
            labeled, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
            for r in range(1, n + 1):
                region_scores.append(np.sort(score[labeled == r]))
    if not region_scores:
        log.warning("aupro undefined: ground truth has no anomalous region")
        return None
    thresholds = np.unique(np.concatenate(all_scores))[::-1]
    normal = np.sort(np.concatenate(normal_scores))
    n_normal = normal.size

    xs, ys = [], []
    for thr in thresholds:
        overlaps = [
            (rs.size - np.searchsorted(rs, thr, side="right")) / rs.size for rs in region_scores
        ]
        fpr = (n_normal - np.searchsorted(normal, thr, side="right")) / max(n_normal, 1)
        xs.append(float(fpr))
        ys.append(float(np.mean(overlaps)))
    return _area_under_limited_curve(xs, ys, fpr_limit)


# ---------------------------------------------------------------------------
# RBDC / TBDC
# ---------------------------------------------------------------------------


def _region_track(labels: np.ndarray | None, pixels: np.ndarray) -> int | None:
    if labels is None:
        return None
    vals = labels[pixels]
    vals = vals[vals != 0]
    if vals.size == 0:
        return None
    counts = np.bincount(vals)
    return int(counts.argmax())


def rbdc_tbdc(
    fields: "ScoredPixelField | list[ScoredPixelField]",
    gts: "GroundTruth | list[GroundTruth]",
    alpha: float = 0.1,
    fppf_limit: float = 1.0,
    track_fraction: float = 0.1,
) -> tuple[float | None, float | None]:
    """Region- and track-based detection criteria, accumulated globally.

    Detections are per-frame 8-connected components of the predicted
    mask (score > 0), scored by the maximum covering score. Sweeping
    score thresholds descending, a GT region counts as detected when an
    active detection in its frame reaches IoU >= alpha with it; a
    detection matching no region is a false positive. RBDC integrates
    the region detection rate against false positives per frame up to
    fppf_limit; TBDC does the same at track granularity, a track
    counting as detected once >= track_fraction of its regions are.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    if isinstance(fields, ScoredPixelField):
        fields = [fields]
    if isinstance(gts, GroundTruth):
        gts = [gts]
    if len(fields) != len(gts):
        raise ValueError("one score field per ground truth required")

    total_frames = sum(gt.frame_count for gt in gts)
    n_regions = 0
    track_sizes: dict[tuple[int, int], int] = {}
    tracks_available = all(gt.tracks is not None for gt in gts)
    # detection records: (score, matched region ids, is_fp)
    detections: list[tuple[float, list[int], bool]] = []
    region_track: dict[int, tuple[int, int] | None] = {}

    region_id = 0
    for vid, (field, gt) in enumerate(zip(fields, gts)):
        for t in range(gt.frame_count):
            score = field.score_at(t)
            gt_mask = gt.mask_at(t)
            regions = []
            if gt_mask.any():
                labeled, n = ndimage.label(gt_mask, structure=EIGHT_CONNECTED)
                label_map = gt.tracks.get(t) if gt.tracks is not None else None
                for r in range(1, n + 1):
                    pixels = labeled == r
                    track = _region_track(label_map, pixels)
                    key = (vid, track) if track is not None else None
                    region_track[region_id] = key
                    if key is not None:
                        track_sizes[key] = track_sizes.get(key, 0) + 1
                    regions.append((region_id, pixels))
                    region_id += 1
            pred_mask = score > 0
            if pred_mask.any():
                labeled_pred, n_pred = ndimage.label(pred_mask, structure=EIGHT_CONNECTED)
                for d in range(1, n_pred + 1):
                    det_pixels = labeled_pred == d
                    det_score = float(score[det_pixels].max())
                    matched = []
                    for rid, reg_pixels in regions:
                        inter = np.logical_and(det_pixels, reg_pixels).sum()
                        if inter == 0:
                            continue
                        union = np.logical_or(det_pixels, reg_pixels).sum()
                        if inter / union >= alpha:
                            matched.append(rid)
                    detections.append((det_score, matched, not matched))
    n_regions = region_id
    if n_regions == 0:
        log.warning("rbdc/tbdc undefined: ground truth has no regions")
        return None, None

    detections.sort(key=lambda rec: -rec[0])
    detected_regions: set[int] = set()
    track_hits: dict[tuple[int, int], int] = {}
    tracks_detected = 0
    fp_count = 0
    xs_r, ys_r, xs_t, ys_t = [], [], [], []
    i = 0
    n_tracks = len(track_sizes)
    while i < len(detections):
        thr = detections[i][0]
        while i < len(detections) and detections[i][0] == thr:
            _, matched, is_fp = detections[i]
            if is_fp:
                fp_count += 1
            for rid in matched:
                if rid not in detected_regions:
                    detected_regions.add(rid)
                    key = region_track.get(rid)
                    if key is not None:
                        before = track_hits.get(key, 0)
                        track_hits[key] = before + 1
                        need = track_sizes[key] * track_fraction
                        if before < need <= before + 1:
                            tracks_detected += 1
            i += 1
        fppf = fp_count / total_frames
        xs_r.append(fppf)
        ys_r.append(len(detected_regions) / n_regions)
        if n_tracks:
            xs_t.append(fppf)
            ys_t.append(tracks_detected / n_tracks)

    rbdc = _area_under_limited_curve(xs_r, ys_r, fppf_limit)
    if not tracks_available or n_tracks == 0:
        if not tracks_available:
            log.warning("tbdc unavailable: ground truth has no track labels")
        return rbdc, None
    tbdc = _area_under_limited_curve(xs_t, ys_t, fppf_limit)
    return rbdc, tbdc


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    frame_auroc: float | None
    pixel_auroc: float | None
    pixel_ap: float | None
    pixel_aupro: float | None
    pixel_f1: float | None
    rbdc: float | None
    tbdc: float | None
    params: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "frame_auroc": self.frame_auroc,
            "pixel_auroc": self.pixel_auroc,
            "pixel_ap": self.pixel_ap,
            "pixel_aupro": self.pixel_aupro,
            "pixel_f1": self.pixel_f1,
            "rbdc": self.rbdc,
            "tbdc": self.tbdc,
            "params": self.params,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def compute_report(
    instance_sets: list[list[AnomalyInstance]],
    videos: list[VideoMeta],
    gts: list[GroundTruth],
    alpha: float = 0.1,
    fppf_limit: float = 1.0,
    track_fraction: float = 0.1,
    aupro_fpr_limit: float = 0.3,
) -> MetricReport:
    """All seven metrics over a test set, with global accumulation."""
    fields = [
        ScoredPixelField.from_instances(insts, video)
        for insts, video in zip(instance_sets, videos)
    ]
    fscores = np.concatenate(
        [frame_scores(insts, video) for insts, video in zip(instance_sets, videos)]
    )
    flabels = np.concatenate([gt.frame_labels() for gt in gts])

    pixel_scores = []
    pixel_labels = []
    for field, gt in zip(fields, gts):
        for t in range(gt.frame_count):
            pixel_scores.append(field.score_at(t).ravel())
            pixel_labels.append(gt.mask_at(t).ravel())
    ps = np.concatenate(pixel_scores)
    pl = np.concatenate(pixel_labels)

    # AUPRO accumulates region overlaps globally: fold the set into one
    # virtual sequence by evaluating per video and pooling is incorrect
    # for FPR, so concatenate frames instead.
    merged_field, merged_gt = _concatenate(fields, gts)

    rbdc, tbdc = rbdc_tbdc(fields, gts, alpha, fppf_limit, track_fraction)
    return MetricReport(
        frame_auroc=auroc(fscores, flabels),
        pixel_auroc=auroc(ps, pl),
        pixel_ap=average_precision(ps, pl),
        pixel_aupro=aupro(merged_field, merged_gt, aupro_fpr_limit),
        pixel_f1=max_f1(ps, pl),
        rbdc=rbdc,
        tbdc=tbdc,
        params={
            "alpha": alpha,
            "fppf_limit": fppf_limit,
            "track_fraction": track_fraction,
            "aupro_fpr_limit": aupro_fpr_limit,
        },
    )


def _concatenate(
    fields: list[ScoredPixelField], gts: list[GroundTruth]
) -> tuple[ScoredPixelField, GroundTruth]:
    if len(fields) == 1:
        return fields[0], gts[0]
    h = max(gt.height for gt in gts)
    w = max(gt.width for gt in gts)
    total = sum(gt.frame_count for gt in gts)
    out_f = ScoredPixelField(total, h, w)
    out_g = GroundTruth(total, h, w)
    offset = 0
    for field, gt in zip(fields, gts):
        if (gt.height, gt.width) != (h, w):
            raise ValueError("videos of mixed resolution cannot share an AUPRO curve")
        for t, m in gt.frames.items():
            out_g.frames[offset + t] = m
        for t, s in field.frames.items():
            out_f.frames[offset + t] = s
        offset += gt.frame_count
    return out_f, out_g
