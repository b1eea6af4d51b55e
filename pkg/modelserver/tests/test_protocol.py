import numpy as np
import pytest

from helpers import colored_blob, gray_frame, moving_blob_frames, png_b64
from modelserver import rle
from modelserver.config import ServerConfig


def ground_body(image, text="red square", box_threshold=0.05, text_threshold=0.05):
    return {
        "image_b64": png_b64(image),
        "text": text,
        "box_threshold": box_threshold,
        "text_threshold": text_threshold,
    }


class TestHealthz:
    def test_reports_models(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["grounding_model"] == "toy-saturation"


class TestGroundValidation:
    def test_empty_text_is_400_naming_field(self, client):
        r = client.post("/ground", json=ground_body(gray_frame(), text=""))
        assert r.status_code == 400
        assert "text" in r.json()["error"]

    def test_blank_text_is_400(self, client):
        r = client.post("/ground", json=ground_body(gray_frame(), text="   "))
        assert r.status_code == 400

    def test_missing_field_is_400_naming_field(self, client):
        body = ground_body(gray_frame())
        del body["box_threshold"]
        r = client.post("/ground", json=body)
        assert r.status_code == 400
        assert "box_threshold" in r.json()["error"]

    def test_threshold_out_of_range_is_400(self, client):
        r = client.post("/ground", json=ground_body(gray_frame(), box_threshold=1.5))
        assert r.status_code == 400
        assert "box_threshold" in r.json()["error"]

    def test_undecodable_image_is_400(self, client):
        body = ground_body(gray_frame())
        body["image_b64"] = "bm90IGFuIGltYWdl"  # valid base64, not an image
        r = client.post("/ground", json=body)
        assert r.status_code == 400
        assert "image_b64" in r.json()["error"]


class TestGroundBehavior:
    def test_blank_image_yields_empty_boxes(self, client):
        r = client.post("/ground", json=ground_body(gray_frame()))
        assert r.status_code == 200
        assert r.json() == {"boxes": []}

    def test_colored_blob_found_with_exact_box(self, client):
        image = colored_blob(gray_frame(), 10, 20, 8, (220, 40, 60))
        r = client.post("/ground", json=ground_body(image))
        assert r.status_code == 200
        (box,) = r.json()["boxes"]
        assert (box["x0"], box["y0"], box["x1"], box["y1"]) == (20, 10, 28, 18)
        assert 0.05 <= box["score"] <= 1.0

    def test_boxes_sorted_descending(self, client):
        image = colored_blob(gray_frame(), 5, 5, 12, (220, 40, 60))
        image = colored_blob(image, 40, 40, 6, (0, 170, 170))
        r = client.post("/ground", json=ground_body(image))
        scores = [b["score"] for b in r.json()["boxes"]]
        assert len(scores) == 2
        assert scores == sorted(scores, reverse=True)

    def test_box_threshold_filters(self, client):
        image = colored_blob(gray_frame(), 5, 5, 12, (220, 40, 60))
        image = colored_blob(image, 40, 40, 4, (0, 170, 170))
        r = client.post("/ground", json=ground_body(image, box_threshold=0.9))
        assert len(r.json()["boxes"]) == 1


def propagate_body(frames, anchor_index, box):
    return {
        "frames_b64": [png_b64(f) for f in frames],
        "anchor_index": anchor_index,
        "box": list(box),
    }


class TestPropagateValidation:
    def test_malformed_box_is_400(self, client):
        frames = moving_blob_frames(2)
        for bad in ([1, 2, 3], [5, 5, 5, 10], [0, 0, -1, 4, 9]):
            r = client.post("/propagate", json=propagate_body(frames, 0, bad))
            assert r.status_code == 400
            assert "box" in r.json()["error"]

    def test_anchor_beyond_frames_is_400(self, client):
        r = client.post("/propagate", json=propagate_body(moving_blob_frames(2), 5, [0, 0, 10, 10]))
        assert r.status_code == 400
        assert "anchor_index" in r.json()["error"]

    def test_over_frame_limit_is_413(self, small_limit_client):
        r = small_limit_client.post(
            "/propagate", json=propagate_body(moving_blob_frames(4), 0, [0, 0, 10, 10])
        )
        assert r.status_code == 413

    def test_at_frame_limit_is_ok(self, small_limit_client):
        r = small_limit_client.post(
            "/propagate", json=propagate_body(moving_blob_frames(3), 0, [4, 4, 16, 16])
        )
        assert r.status_code == 200

    def test_mixed_dimensions_is_400(self, client):
        frames = [gray_frame(64, 64), gray_frame(32, 32)]
        r = client.post("/propagate", json=propagate_body(frames, 0, [0, 0, 10, 10]))
        assert r.status_code == 400


class TestPropagateBehavior:
    def test_one_mask_per_frame(self, client):
        frames = moving_blob_frames(6)
        r = client.post("/propagate", json=propagate_body(frames, 0, [4, 4, 16, 16]))
        assert r.status_code == 200
        masks = r.json()["masks_rle"]
        assert len(masks) == 6
        for runs in masks:
            assert sum(runs) == 64 * 64

    def test_single_frame_request(self, client):
        frames = moving_blob_frames(1)
        r = client.post("/propagate", json=propagate_body(frames, 0, [4, 4, 16, 16]))
        assert len(r.json()["masks_rle"]) == 1

    def test_anchor_mask_intersects_prompt_box(self, client):
        frames = moving_blob_frames(4)
        r = client.post("/propagate", json=propagate_body(frames, 1, [8, 8, 20, 20]))
        anchor_mask = rle.decode(r.json()["masks_rle"][1], (64, 64))
        assert anchor_mask[8:20, 8:20].any()

    def test_tracks_the_moving_blob(self, client):
        frames = moving_blob_frames(5)
        r = client.post("/propagate", json=propagate_body(frames, 0, [4, 4, 16, 16]))
        for t, runs in enumerate(r.json()["masks_rle"]):
            mask = rle.decode(runs, (64, 64))
            expect = np.zeros((64, 64), dtype=bool)
            expect[5 + 4 * t : 15 + 4 * t, 5 + 4 * t : 15 + 4 * t] = True
            assert np.array_equal(mask, expect)

    def test_no_blob_under_box_yields_empty_masks(self, client):
        frames = moving_blob_frames(3)
        r = client.post("/propagate", json=propagate_body(frames, 0, [40, 40, 60, 60]))
        for runs in r.json()["masks_rle"]:
            assert rle.decode(runs, (64, 64)).sum() == 0


class TestRleConvention:
    def test_starts_with_zero_run(self):
        bm = np.ones((2, 2), dtype=bool)
        assert rle.encode(bm) == [0, 4]

    def test_roundtrip(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            bm = rng.random((7, 5)) < 0.4
            assert np.array_equal(rle.decode(rle.encode(bm), (7, 5)), bm)


class TestServerConfig:
    def test_rejects_bad_limits(self):
        with pytest.raises(ValueError):
            ServerConfig(max_frames=0)
        with pytest.raises(ValueError):
            ServerConfig(port=0)
