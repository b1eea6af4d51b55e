"""FastAPI application exposing /ground, /propagate, and /healthz.

Stateless request/response; one model inference in flight at a time
(requests queue on a lock), so concurrent clients are safe on a single
device.
"""

from __future__ import annotations

import base64
import binascii
import io
import logging
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, Field, field_validator

from . import rle
from .backend import load_backend
from .config import ServerConfig

log = logging.getLogger(__name__)


class GroundRequest(BaseModel):
    image_b64: str = Field(min_length=1)
    text: str = Field(min_length=1)
    box_threshold: float = Field(ge=0.0, le=1.0)
    text_threshold: float = Field(ge=0.0, le=1.0)

    @field_validator("text")
    @classmethod
    def _nonblank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("text must not be blank")
        return v


class Box(BaseModel):
    x0: float
    y0: float
    x1: float
    y1: float
    score: float


class GroundResponse(BaseModel):
    boxes: list[Box]


class PropagateRequest(BaseModel):
    frames_b64: list[str] = Field(min_length=1)
    anchor_index: int = Field(ge=0)
    box: list[float]

    @field_validator("box")
    @classmethod
    def _box_shape(cls, v: list[float]) -> list[float]:
        if len(v) != 4:
            raise ValueError("box must have exactly 4 coordinates")
        if not (v[0] < v[2] and v[1] < v[3]):
            raise ValueError("box must have positive extent")
        return v


class PropagateResponse(BaseModel):
    masks_rle: list[list[int]]


def _decode_image(b64: str, field: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("RGB"))
    except (binascii.Error, OSError) as exc:
        raise ImageDecodeError(field) from exc


class ImageDecodeError(Exception):
    def __init__(self, field: str):
        super().__init__(field)
        self.field = field


def create_app(cfg: ServerConfig | None = None) -> FastAPI:
    cfg = cfg or ServerConfig()
    app = FastAPI(title="vad-modelserver")
    grounder = load_backend(cfg.grounding_model)
    propagator = load_backend(cfg.propagation_model)
    inference_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def _validation_to_400(request: Request, exc: RequestValidationError):
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err["loc"] if p != "body") or "body"
        return JSONResponse(
            status_code=400,
            content={"error": f"invalid field {field!r}: {err['msg']}"},
        )

    @app.exception_handler(ImageDecodeError)
    async def _bad_image_to_400(request: Request, exc: ImageDecodeError):
        return JSONResponse(
            status_code=400,
            content={"error": f"invalid field {exc.field!r}: not a decodable image"},
        )

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "grounding_model": cfg.grounding_model,
            "propagation_model": cfg.propagation_model,
            "device": cfg.device,
        }

    @app.post("/ground", response_model=GroundResponse)
    def ground(req: GroundRequest):
        image = _decode_image(req.image_b64, "image_b64")
        with inference_lock:
            dets = grounder.ground(image, req.text, req.box_threshold, req.text_threshold)
        return GroundResponse(
            boxes=[Box(x0=d[0], y0=d[1], x1=d[2], y1=d[3], score=d[4]) for d in dets]
        )

    @app.post("/propagate", response_model=PropagateResponse)
    def propagate(req: PropagateRequest):
        if len(req.frames_b64) > cfg.max_frames:
            return JSONResponse(
                status_code=413,
                content={
                    "error": f"{len(req.frames_b64)} frames exceeds the "
                    f"limit of {cfg.max_frames}"
                },
            )
        if req.anchor_index >= len(req.frames_b64):
            return JSONResponse(
                status_code=400,
                content={"error": "invalid field 'anchor_index': beyond the last frame"},
            )
        frames = [
            _decode_image(b64, f"frames_b64[{i}]")
            for i, b64 in enumerate(req.frames_b64)
        ]
        if any(f.shape != frames[0].shape for f in frames):
            return JSONResponse(
                status_code=400,
                content={"error": "invalid field 'frames_b64': mixed frame dimensions"},
            )
        with inference_lock:
            masks = propagator.propagate(frames, req.anchor_index, tuple(req.box))
        return PropagateResponse(masks_rle=[rle.encode(m) for m in masks])

    return app


def main() -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="grounding/propagation sidecar")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--grounding-model", default="toy-saturation")
    parser.add_argument("--propagation-model", default="toy-saturation")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-frames", type=int, default=600)
    args = parser.parse_args()
    cfg = ServerConfig(
        host=args.host,
        port=args.port,
        grounding_model=args.grounding_model,
        propagation_model=args.propagation_model,
        device=args.device,
        max_frames=args.max_frames,
    )
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)


if __name__ == "__main__":
    main()
