import numpy as np
import pytest

from vadkit.harness import (
    Backends,
    RunConfig,
    compare_paradigms,
    process_clip,
    run_gridvad,
    run_uniform,
    segment_clips,
    simulated_backends,
)
from vadkit.proposer import CallLedger
from vadkit.synth import NoiseProfile, WorldFrameProvider, ground_truth, random_world
from vadkit.types import Clip, TemporalInterval, VideoMeta


def mk_video(n, h=128, w=128):
    return VideoMeta("v", n, h, w)


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.grid_side, cfg.samplings, cfg.tau) == (3, 5, 3)
        assert (cfg.clip_length, cfg.clip_overlap) == (180, 30)
        assert cfg.K == 9

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(tau=6, samplings=5)
        with pytest.raises(ValueError):
            RunConfig(clip_overlap=180, clip_length=180)
        with pytest.raises(ValueError):
            RunConfig(grid_side=0)
        with pytest.raises(ValueError):
            RunConfig(uniform_stride=0)

    def test_file_roundtrip(self, tmp_path):
        cfg = RunConfig(samplings=7, tau=4, seed=9)
        cfg.to_file(tmp_path / "c.json")
        assert RunConfig.from_file(tmp_path / "c.json") == cfg


class TestSegmentClips:
    def test_three_window_example(self):
        clips = segment_clips(mk_video(360), RunConfig())
        assert [(c.start, c.end) for c in clips] == [(0, 179), (150, 329), (300, 359)]

    def test_short_video_single_clip(self):
        clips = segment_clips(mk_video(100), RunConfig())
        assert [(c.start, c.end) for c in clips] == [(0, 99)]

    def test_exact_fit_no_overlap(self):
        clips = segment_clips(mk_video(180), RunConfig(clip_overlap=0))
        assert [(c.start, c.end) for c in clips] == [(0, 179)]

    def test_coverage_property(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 1200))
            length = int(rng.integers(2, 300))
            overlap = int(rng.integers(0, length))
            cfg = RunConfig(clip_length=length, clip_overlap=overlap)
            clips = segment_clips(mk_video(n), cfg)
            covered = np.zeros(n, dtype=bool)
            stride = length - overlap
            for c in clips:
                assert c.start % stride == 0
                assert c.end < n
                covered[c.start : c.end + 1] = True
            assert covered.all()


class TestProcessClip:
    def test_budget_zero_survivors(self):
        world = random_world(seed=1, n_consistent=0, n_background=1)
        video = mk_video(world.frame_count)
        cfg = RunConfig(seed=1)
        backends = simulated_backends(world, seed=1)
        ledger = CallLedger()
        out = process_clip(
            VideoMeta(world.id, world.frame_count, world.height, world.width),
            Clip(world.id, TemporalInterval(0, 179)),
            WorldFrameProvider(world), cfg, backends, ledger,
        )
        assert out == []
        snap = ledger.snapshot()
        assert snap["vlm_calls"] == 5
        assert snap["scc_calls"] == 1
        assert snap["grounding_calls"] == 0
        assert snap["propagation_calls"] == 0

    def test_budget_with_survivors(self):
        world = random_world(seed=2, n_consistent=2, anomaly_length=120, bin_align=20)
        cfg = RunConfig(seed=2)
        backends = simulated_backends(world, seed=2)
        ledger = CallLedger()
        out = process_clip(
            VideoMeta(world.id, world.frame_count, world.height, world.width),
            Clip(world.id, TemporalInterval(0, 179)),
            WorldFrameProvider(world), cfg, backends, ledger,
        )
        survivors = len(out)
        assert survivors >= 1
        snap = ledger.snapshot()
        assert snap["vlm_calls"] == 5
        assert snap["scc_calls"] == 1
        assert snap["grounding_calls"] == 5 * survivors
        assert snap["propagation_calls"] == survivors

    def test_short_clip_padded_and_clamped(self):
        world = random_world(seed=3, frame_count=40, anomaly_length=40, bin_align=None)
        cfg = RunConfig(seed=3, clip_length=180)
        backends = simulated_backends(world, seed=3)
        ledger = CallLedger()
        clip = Clip(world.id, TemporalInterval(35, 39))  # L=5 < K=9
        out = process_clip(
            VideoMeta(world.id, world.frame_count, world.height, world.width),
            clip, WorldFrameProvider(world), cfg, backends, ledger,
        )
        assert ledger.snapshot()["vlm_calls"] == 5
        for inst in out:
            assert inst.interval.start >= 35
            assert inst.interval.end <= 39


class TestRunGridvad:
    def test_ledger_arithmetic_multi_clip(self):
        world = random_world(seed=4, frame_count=360, n_consistent=0, n_background=1)
        video = VideoMeta(world.id, 360, world.height, world.width)
        cfg = RunConfig(seed=4)
        _, ledger, _ = run_gridvad(video, WorldFrameProvider(world), cfg, simulated_backends(world, seed=4))
        snap = ledger.snapshot()
        assert snap["vlm_calls"] == 15  # 3 clips x M=5
        assert snap["scc_calls"] == 3

    def test_parallel_matches_serial(self):
        world = random_world(seed=5, frame_count=360, bin_align=20)
        video = VideoMeta(world.id, 360, world.height, world.width)
        backends = simulated_backends(world, seed=5)
        serial, l1, _ = run_gridvad(video, WorldFrameProvider(world), RunConfig(seed=5), backends)
        parallel, l2, _ = run_gridvad(
            video, WorldFrameProvider(world), RunConfig(seed=5, parallelism=4), backends
        )
        key = lambda i: (i.interval.start, i.interval.end, i.proposal.description)
        assert sorted(map(key, serial)) == sorted(map(key, parallel))
        assert l1.snapshot()["vlm_calls"] == l2.snapshot()["vlm_calls"]

    def test_report_attached_when_gt_given(self):
        world = random_world(seed=6, bin_align=20)
        video = VideoMeta(world.id, world.frame_count, world.height, world.width)
        _, _, report = run_gridvad(
            video, WorldFrameProvider(world), RunConfig(seed=6),
            simulated_backends(world, seed=6), ground_truth(world),
        )
        assert report is not None
        assert report.frame_auroc == 1.0


class TestRunUniform:
    def test_call_count_and_score_holding(self):
        world = random_world(seed=7)
        video = VideoMeta(world.id, world.frame_count, world.height, world.width)
        cfg = RunConfig(seed=7, uniform_stride=10)
        scores, ledger = run_uniform(video, WorldFrameProvider(world), cfg, simulated_backends(world, seed=7))
        assert ledger.snapshot()["vlm_calls"] == 20  # 200 / 10
        assert scores.shape == (200,)
        for block in range(20):
            segment = scores[block * 10 : (block + 1) * 10]
            assert (segment == segment[0]).all()

    def test_requires_frame_judge(self):
        world = random_world(seed=8)
        video = VideoMeta(world.id, world.frame_count, world.height, world.width)
        backends = simulated_backends(world, seed=8)
        backends.frame_judge = None
        with pytest.raises(ValueError):
            run_uniform(video, WorldFrameProvider(world), RunConfig(), backends)


class TestCompareParadigms:
    def test_table_shape_and_call_columns(self):
        world = random_world(seed=9, bin_align=20)
        video = VideoMeta(world.id, world.frame_count, world.height, world.width)
        table = compare_paradigms(
            video, WorldFrameProvider(world), RunConfig(seed=9),
            simulated_backends(world, seed=9), ground_truth(world),
        )
        assert table["columns"] == ["VLM calls", "Frame-AUROC", "Time (s)", "Fr-AUC / call"]
        rows = {r["paradigm"]: r for r in table["rows"]}
        assert rows["uniform"]["vlm_calls"] == 20
        # 2 clips x (M + 1)
        assert rows["gridvad"]["vlm_calls"] == 12
        for r in rows.values():
            assert set(r) == {"paradigm", "vlm_calls", "frame_auroc", "time_s", "frauc_per_call"}
