"""Pipeline orchestration: clip windowing, per-clip execution, paradigm
comparison, and ablation sweeps.

Per clip the budgeted sequence is: M grid samplings -> M proposer calls
-> 1 consolidation pass -> support filter -> per surviving proposal,
R grounding calls and one propagation pass. Instances from overlapping
clips merge implicitly at the mask level (pixelwise max confidence),
honoring clip independence.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .frames import ClampedProvider, FrameProvider
from .localization import (
    GroundingBackend,
    GroundingFailed,
    LocalizationConfig,
    PropagationBackend,
    PropagationFailed,
    localize,
)
from .metrics import GroundTruth, MetricReport, auroc, compute_report
from .proposer import CallLedger, ProposerBackend, propose
from .sampler import partition, sample_grid
from .scc import SccConfig, TextBackend, consolidate, filter_support
from .types import AnomalyInstance, Clip, Proposal, TemporalInterval, VideoMeta

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    grid_side: int = 3
    samplings: int = 5  # M
    tau: int = 3
    clip_length: int = 180
    clip_overlap: int = 30
    candidate_count: int = 5
    box_threshold: float = 0.05
    text_threshold: float = 0.05
    min_mask_area: int = 50
    paradigm: str = "gridvad"  # or "uniform"
    uniform_stride: int = 10
    scc_mode: str = "deterministic"
    similarity_floor: float = 0.5
    annotate_cells: bool = True
    parallelism: int = 1
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.grid_side < 1:
            raise ValueError("grid_side must be >= 1")
        if not 1 <= self.tau <= self.samplings:
            raise ValueError("need 1 <= tau <= samplings")
        if not 0 <= self.clip_overlap < self.clip_length:
            raise ValueError("need 0 <= clip_overlap < clip_length")
        if self.uniform_stride < 1:
            raise ValueError("uniform_stride must be >= 1")

    @property
    def K(self) -> int:
        return self.grid_side**2

    def scc_config(self) -> SccConfig:
        return SccConfig(tau=self.tau, mode=self.scc_mode, similarity_floor=self.similarity_floor)

    def localization_config(self) -> LocalizationConfig:
        return LocalizationConfig(
            candidate_count=self.candidate_count,
            box_threshold=self.box_threshold,
            text_threshold=self.text_threshold,
            min_mask_area=self.min_mask_area,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2))


class FrameJudge(Protocol):
    def judge(self, image: np.ndarray, frame_index: int) -> float: ...


@dataclass
class Backends:
    proposer: ProposerBackend
    grounder: GroundingBackend
    propagator: PropagationBackend
    text: TextBackend | None = None
    frame_judge: FrameJudge | None = None


def simulated_backends(world, noise=None, seed: int = 0, salience: float = 0.5) -> Backends:
    from .synth import (
        NoiseProfile,
        SimulatedFrameJudge,
        SimulatedGrounder,
        SimulatedPropagator,
        SimulatedProposerBackend,
    )

    noise = noise or NoiseProfile()
    return Backends(
        proposer=SimulatedProposerBackend(world, noise, seed),
        grounder=SimulatedGrounder(world, noise, seed, salience=salience),
        propagator=SimulatedPropagator(world),
        frame_judge=SimulatedFrameJudge(world, noise, seed),
    )


def segment_clips(video: VideoMeta, cfg: RunConfig) -> list[Clip]:
    """Sliding windows starting at multiples of (length - overlap).

    The final clip is clamped to the video end; every frame belongs to
    at least one clip.
    """
    stride = cfg.clip_length - cfg.clip_overlap
    clips = []
    for start in range(0, video.frame_count, stride):
        end = min(start + cfg.clip_length, video.frame_count) - 1
        clips.append(Clip(video.id, TemporalInterval(start, end)))
        if end == video.frame_count - 1:
            break
    return clips


def _sampling_seed(base_seed: int, clip: Clip, m: int) -> int:
    ss = np.random.SeedSequence([base_seed, clip.start, clip.end, m])
    return int(ss.generate_state(1)[0])


def process_clip(
    video: VideoMeta,
    clip: Clip,
    frames: FrameProvider,
    cfg: RunConfig,
    backends: Backends,
    ledger: CallLedger,
) -> list[AnomalyInstance]:
    """Run the full budgeted sequence on one clip."""
    provider = frames
    work_clip = clip
    if clip.length < cfg.K:
        # pad by repeating the final frame so montage geometry stays fixed
        provider = ClampedProvider(frames, clip.end)
        work_clip = Clip(clip.video_id, TemporalInterval(clip.start, clip.start + cfg.K - 1))
    part = partition(work_clip, cfg.K)

    pooled: list[Proposal] = []
    for m in range(1, cfg.samplings + 1):
        grid = sample_grid(
            part,
            _sampling_seed(cfg.seed, clip, m),
            provider,
            sampling_index=m,
            annotate_cells=cfg.annotate_cells,
        )
        for p in propose(grid, part, backends.proposer, ledger):
            if p.interval.end > clip.end or p.interval.start < clip.start:
                p = replace(p, interval=p.interval.clamp(clip.start, clip.end))
            pooled.append(p)

    consolidated = consolidate(pooled, cfg.samplings, cfg.scc_config(), ledger, backends.text)
    surviving = filter_support(consolidated, cfg.tau)

    loc_cfg = cfg.localization_config()
    instances = []
    for proposal in surviving:
        try:
            instances.append(
                localize(
                    proposal, frames, video.id, backends.grounder, backends.propagator, loc_cfg, ledger
                )
            )
        except (GroundingFailed, PropagationFailed) as exc:
            log.info("dropping proposal %r: %s", proposal.description, exc)
    return instances


def run_gridvad(
    video: VideoMeta,
    frames: FrameProvider,
    cfg: RunConfig,
    backends: Backends,
    gt: GroundTruth | None = None,
) -> tuple[list[AnomalyInstance], CallLedger, MetricReport | None]:
    ledger = CallLedger()
    clips = segment_clips(video, cfg)
    if cfg.parallelism > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(
                pool.map(lambda c: process_clip(video, c, frames, cfg, backends, ledger), clips)
            )
    else:
        results = [process_clip(video, c, frames, cfg, backends, ledger) for c in clips]
    instances = [inst for clip_instances in results for inst in clip_instances]
    report = None
    if gt is not None:
        report = compute_report([instances], [video], [gt])
    return instances, ledger, report


def run_uniform(
    video: VideoMeta,
    frames: FrameProvider,
    cfg: RunConfig,
    backends: Backends,
) -> tuple[np.ndarray, CallLedger]:
    """One single-frame judgment per sampled frame; no masks.

    Returns per-frame scores with each judged score held over its
    stride block.
    """
    if backends.frame_judge is None:
        raise ValueError("uniform paradigm requires a frame-judge backend")
    import time

    ledger = CallLedger()
    scores = np.zeros(video.frame_count, dtype=float)
    for start in range(0, video.frame_count, cfg.uniform_stride):
        image = frames.get_frame(video.id, start)
        ledger.add("vlm_calls")
        t0 = time.monotonic()
        score = backends.frame_judge.judge(image, start)
        ledger.add_wall(time.monotonic() - t0)
        scores[start : start + cfg.uniform_stride] = score
    return scores, ledger


def compare_paradigms(
    video: VideoMeta,
    frames: FrameProvider,
    cfg: RunConfig,
    backends: Backends,
    gt: GroundTruth,
) -> dict:
    """Both paradigms on one video; the four-column efficiency report.

    The call column counts every model invocation of the paradigm: for
    the grid pipeline that is the per-clip M proposer calls plus the one
    consolidation pass.
    """
    from .metrics import frame_scores

    labels = gt.frame_labels()

    u_scores, u_ledger = run_uniform(video, frames, cfg, backends)
    u_auroc = auroc(u_scores, labels)
    u_calls = u_ledger.vlm_calls

    instances, g_ledger, _ = run_gridvad(video, frames, cfg, backends)
    g_scores = frame_scores(instances, video)
    g_auroc = auroc(g_scores, labels)
    g_calls = g_ledger.vlm_calls + g_ledger.scc_calls

    def row(name, calls, frauc, seconds):
        return {
            "paradigm": name,
            "vlm_calls": calls,
            "frame_auroc": frauc,
            "time_s": round(seconds, 4),
            "frauc_per_call": (frauc / calls) if (frauc is not None and calls) else None,
        }

    return {
        "columns": ["VLM calls", "Frame-AUROC", "Time (s)", "Fr-AUC / call"],
        "rows": [
            row("uniform", u_calls, u_auroc, u_ledger.wall_time),
            row("gridvad", g_calls, g_auroc, g_ledger.wall_time),
        ],
    }


def ablate_scc(
    seeds: list[int],
    arms: list[tuple[int, int]],
    make_world: Callable[[int], "object"],
    noise,
    cfg_base: RunConfig,
    salience: float = 0.5,
) -> list[dict]:
    """Mean metrics per (M, tau) arm over seeded noisy worlds."""
    from .synth import WorldFrameProvider, ground_truth

    rows = []
    for m, tau in arms:
        cfg = replace(cfg_base, samplings=m, tau=tau)
        metrics_acc: dict[str, list[float]] = {}
        for seed in seeds:
            world = make_world(seed)
            video = VideoMeta(world.id, world.frame_count, world.height, world.width)
            backends = simulated_backends(world, noise, seed=seed, salience=salience)
            gt = ground_truth(world)
            _, _, report = run_gridvad(video, WorldFrameProvider(world), cfg, backends, gt)
            for key, value in report.to_dict().items():
                if key != "params" and value is not None:
                    metrics_acc.setdefault(key, []).append(value)
        rows.append(
            {
                "M": m,
                "tau": tau,
                **{k: float(np.mean(v)) for k, v in sorted(metrics_acc.items())},
            }
        )
    return rows
