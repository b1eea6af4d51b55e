import numpy as np
import pytest

from vadkit.proposer import parse_response
from vadkit.sampler import partition, sample_grid
from vadkit.scc import token_set_similarity
from vadkit.synth import (
    BACKGROUND_GRAY,
    Actor,
    NoiseProfile,
    SimulatedGrounder,
    SimulatedPropagator,
    SimulatedProposerBackend,
    SyntheticWorld,
    WorldFrameProvider,
    ground_truth,
    load_world,
    random_world,
    render,
    save_world,
)
from vadkit.types import BoundingBox, Clip, TemporalInterval


class TestWorldGeometry:
    def test_render_deterministic(self):
        w = random_world(seed=5)
        f1, m1, l1 = render(w, 10)
        f2, m2, l2 = render(w, 10)
        assert np.array_equal(f1, f2) and np.array_equal(m1, m2)

    def test_label_map_matches_mask(self):
        w = random_world(seed=6, n_inconsistent=2)
        for t in range(0, w.frame_count, 17):
            _, mask, labels = render(w, t)
            assert np.array_equal(labels != 0, mask)

    def test_anomaly_pixels_are_saturated(self):
        w = random_world(seed=7)
        for t in range(0, w.frame_count, 23):
            frame, mask, _ = render(w, t)
            if mask.any():
                pix = frame[mask].astype(int)
                assert (np.ptp(pix, axis=1) > 0).all()  # colored, not gray
            normal = frame[~mask]
            assert (normal[:, 0] == normal[:, 1]).all()  # achromatic elsewhere

    def test_rect_area_exact(self):
        a = Actor("rect", 20, 20, 0, 0, 8, 0, 9, "x", track_id=1, color=(200, 0, 0))
        sil = a.silhouette(5, 64, 64)
        assert sil.sum() == 64

    def test_ground_truth_only_anomalous_frames(self):
        w = random_world(seed=8)
        gt = ground_truth(w)
        spans = set()
        for a in w.anomalies:
            spans.update(range(a.spawn, a.despawn + 1))
        assert set(gt.frames) == {t for t in spans if render(w, t)[1].any()}

    def test_bin_align_snaps_lifetimes(self):
        w = random_world(seed=9, bin_align=20)
        for a in w.anomalies:
            assert a.spawn % 20 == 0
            assert (a.despawn - a.spawn + 1) % 20 == 0

    def test_duplicate_track_ids_rejected(self):
        a = Actor("rect", 5, 5, 0, 0, 4, 0, 9, "x", track_id=1, color=(200, 0, 0))
        with pytest.raises(ValueError):
            SyntheticWorld("w", 20, 32, 32, (a, a))

    def test_world_roundtrip(self, tmp_path):
        w = random_world(seed=10, n_inconsistent=1)
        save_world(w, tmp_path / "w.json")
        assert load_world(tmp_path / "w.json") == w

    def test_inconsistent_variants_pairwise_disjoint(self):
        w = random_world(seed=11, n_consistent=0, n_inconsistent=3)
        for a in w.anomalies:
            assert len(a.description_variants) == 3
            for i, u in enumerate(a.description_variants):
                for v in a.description_variants[i + 1 :]:
                    assert token_set_similarity(u, v) < 0.5
        # variants never collide across actors either
        for a in w.anomalies:
            for b in w.anomalies:
                if a is b:
                    continue
                for u in a.description_variants:
                    for v in b.description_variants:
                        assert token_set_similarity(u, v) < 0.5


class TestFrameProvider:
    def test_serves_rendered_frames(self):
        w = random_world(seed=12)
        p = WorldFrameProvider(w)
        assert np.array_equal(p.get_frame(w.id, 3), render(w, 3)[0])
        with pytest.raises(KeyError):
            p.get_frame("other", 0)


def _clip_part(world, start=None, end=None, K=9):
    start = 0 if start is None else start
    end = world.frame_count - 1 if end is None else end
    return partition(Clip(world.id, TemporalInterval(start, end)), K)


def _grid(world, part, seed=0, m=1):
    return sample_grid(part, seed, WorldFrameProvider(world), sampling_index=m,
                       annotate_cells=False)


class TestSimulatedProposer:
    def test_noiseless_reports_every_visible_anomaly(self):
        w = random_world(seed=13)
        part = _clip_part(w)
        grid = _grid(w, part)
        props = parse_response(
            SimulatedProposerBackend(w, NoiseProfile()).generate(grid, part, ""),
            part, 1,
        )
        visible = [
            a for a in w.anomalies
            if any(a.present(t) for t in grid.frame_indices)
        ]
        assert len(props) == len(visible)
        for p in props:
            # reported cells are exactly the sampled frames showing the actor
            actor = next(
                a for a in w.anomalies
                if p.description in (a.description_variants or (a.label,))
            )
            want = {
                k + 1 for k, t in enumerate(grid.frame_indices) if actor.present(t)
            }
            assert p.evidence_cells == want

    def test_deterministic_per_sampling(self):
        w = random_world(seed=14)
        part = _clip_part(w)
        grid = _grid(w, part, seed=3, m=2)
        b = SimulatedProposerBackend(w, NoiseProfile(miss_rate=0.3, halluc_rate=0.3), seed=1)
        assert b.generate(grid, part, "") == b.generate(grid, part, "")

    def test_hallucination_frequency_binomial(self):
        w = random_world(seed=15, n_consistent=0)
        part = _clip_part(w)
        rate = 0.3
        n = 400
        halluc = 0
        for m in range(1, n + 1):
            grid = _grid(w, part, seed=m, m=m)
            b = SimulatedProposerBackend(w, NoiseProfile(halluc_rate=rate), seed=0)
            text = b.generate(grid, part, "")
            if "phantom" in text:
                halluc += 1
        # 5 sigma band around n * rate
        sigma = (n * rate * (1 - rate)) ** 0.5
        assert abs(halluc - n * rate) < 5 * sigma

    def test_miss_rate_one_reports_nothing(self):
        w = random_world(seed=16)
        part = _clip_part(w)
        grid = _grid(w, part)
        text = SimulatedProposerBackend(w, NoiseProfile(miss_rate=1.0)).generate(grid, part, "")
        assert text == "[]"


class TestSimulatedGrounder:
    def test_known_description_yields_exact_box(self):
        w = random_world(seed=17)
        actor = w.anomalies[0]
        t = actor.spawn + 5
        g = SimulatedGrounder(w)
        (box,) = g.ground(None, actor.description_variants[0], 0.05, 0.05, frame_index=t)
        assert (box.x0, box.y0, box.x1, box.y1) == actor.bbox(t, w.height, w.width)

    def test_absent_actor_yields_nothing(self):
        w = random_world(seed=18)
        actor = w.anomalies[0]
        t = actor.despawn + 1 if actor.despawn + 1 < w.frame_count else actor.spawn - 1
        g = SimulatedGrounder(w)
        assert g.ground(None, actor.description_variants[0], 0.05, 0.05, frame_index=t) == []

    def test_unknown_description_deterministic(self):
        w = random_world(seed=19)
        g = SimulatedGrounder(w, seed=4, salience=0.5)
        t = w.anomalies[0].spawn
        b1 = g.ground(None, "phantom event 0001", 0.05, 0.05, frame_index=t)
        b2 = g.ground(None, "phantom event 0001", 0.05, 0.05, frame_index=t)
        assert b1 == b2


class TestSimulatedPropagator:
    def test_matching_box_returns_exact_silhouettes(self):
        w = random_world(seed=20)
        actor = w.anomalies[0]
        ts = list(range(actor.spawn, min(actor.spawn + 10, actor.despawn + 1)))
        anchor_t = ts[0]
        bbox = actor.bbox(anchor_t, w.height, w.width)
        box = BoundingBox(*bbox, 0.9)
        p = SimulatedPropagator(w)
        masks = p.propagate([None] * len(ts), 0, box, frame_indices=ts)
        for t, m in zip(ts, masks):
            assert np.array_equal(m, actor.silhouette(t, w.height, w.width))

    def test_empty_outside_lifetime(self):
        w = random_world(seed=21, anomaly_length=30)
        actor = w.anomalies[0]
        ts = [actor.spawn, actor.despawn, min(actor.despawn + 5, w.frame_count - 1)]
        box = BoundingBox(*actor.bbox(actor.spawn, w.height, w.width), 0.9)
        masks = SimulatedPropagator(w).propagate([None] * 3, 0, box, frame_indices=ts)
        if ts[2] > actor.despawn:
            assert not masks[2].any()

    def test_unmatched_box_drifts_as_static_blob(self):
        w = random_world(seed=22, n_consistent=0, n_background=0)
        box = BoundingBox(10, 10, 22, 22, 0.3)
        masks = SimulatedPropagator(w).propagate([None] * 4, 0, box, frame_indices=[0, 1, 2, 3])
        for m in masks:
            assert m.sum() == 144
            assert np.array_equal(m, masks[0])
