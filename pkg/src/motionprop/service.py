"""HTTP service over a frozen model: guided flow prediction, guided
frame generation, and the positive/negative-click mask workflow."""

from __future__ import annotations

import base64
import binascii
import io
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field
from scipy import ndimage

from .flow import FlowField, FlowImage, dequantize_flow, flow_to_color, warp_image, write_flo
from .flow import QuantizedFlow
from .guidance import GuidancePoint, GuidanceSet, rasterize_guidance
from .model import MotionPropNet, normalize_image

DEFAULT_DIRECTIONS = 8
DEFAULT_THRESHOLD = 0.4


# --- core operations (usable without HTTP) ---


def predict_flow_batch(model: MotionPropNet, image: FlowImage, guidance_maps) -> list[FlowField]:
    """One eval-mode forward for several guidance maps over one image."""
    n = len(guidance_maps)
    x = np.repeat(normalize_image(image.rgb, model.dtype)[None], n, axis=0)
    g = np.stack([gm.channels.transpose(2, 0, 1) for gm in guidance_maps])
    pred = model.forward(x, g, train=False)
    out = []
    for i in range(n):
        xb = pred.logits_x[i].argmax(axis=0).astype(np.int32)
        yb = pred.logits_y[i].argmax(axis=0).astype(np.int32)
        out.append(dequantize_flow(QuantizedFlow(xb, yb, model.arch.num_bins, model.arch.bound)))
    return out


@dataclass(frozen=True)
class AnnotationParams:
    direction_count: int = DEFAULT_DIRECTIONS
    threshold: float = DEFAULT_THRESHOLD
    dummy_magnitude: float | None = None  # None -> 0.75 * bound

    def __post_init__(self):
        if self.direction_count < 4:
            raise ValueError("direction_count must be >= 4")
        # 1.0 is allowed as the degenerate always-empty endpoint
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.dummy_magnitude is not None and not self.dummy_magnitude > 0:
            raise ValueError("dummy_magnitude must be positive")


def annotate_mask(
    model: MotionPropNet,
    image: FlowImage,
    positives: list[tuple[int, int]],
    negatives: list[tuple[int, int]],
    params: AnnotationParams = AnnotationParams(),
) -> np.ndarray:
    """Click-to-mask: probe the model with dummy guidance on the positive
    points in each of D directions (negatives pinned to zero motion),
    average the normalized response magnitudes, threshold, keep only
    connected components holding a positive point, and carve out every
    negative point's 8-neighborhood."""
    if not positives:
        raise ValueError("at least one positive point is required")
    h, w = image.height, image.width
    for x, y in list(positives) + list(negatives):
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"point ({x}, {y}) outside {w}x{h}")
    m = params.dummy_magnitude if params.dummy_magnitude is not None else 0.75 * model.arch.bound

    maps = []
    for j in range(params.direction_count):
        ang = 2.0 * np.pi * j / params.direction_count
        pts = [GuidancePoint(x, y, m * np.cos(ang), m * np.sin(ang), "user") for x, y in positives]
        pts += [GuidancePoint(x, y, 0.0, 0.0, "negative") for x, y in negatives if (x, y) not in set(positives)]
        maps.append(rasterize_guidance(GuidanceSet(tuple(pts)), w, h))

    score = np.zeros((h, w))
    for flow in predict_flow_batch(model, image, maps):
        score += np.clip(flow.magnitude() / m, 0.0, 1.0)
    score /= params.direction_count

    mask = score > params.threshold
    labels, n_labels = ndimage.label(mask, structure=np.ones((3, 3), dtype=np.int8))
    keep = {labels[y, x] for x, y in positives if labels[y, x] != 0}
    mask &= np.isin(labels, sorted(keep)) if keep else False
    for x, y in negatives:
        mask[max(0, y - 1) : y + 2, max(0, x - 1) : x + 2] = False
    return mask


# --- transport helpers ---


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def decode_image_b64(data: str, max_side: int, field: str = "image") -> FlowImage:
    try:
        raw = base64.b64decode(data, validate=True)
        img = Image.open(io.BytesIO(raw)).convert("RGB")
    except (binascii.Error, OSError, ValueError):
        raise HTTPException(status_code=400, detail={"error": "invalid base64 PNG", "field": field})
    if img.width > max_side or img.height > max_side:
        raise HTTPException(
            status_code=400,
            detail={"error": f"image exceeds max side {max_side}", "field": field},
        )
    return FlowImage(np.asarray(img))


def mask_to_png_b64(mask: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray((mask.astype(np.uint8)) * 255, mode="L").save(buf, format="PNG")
    return _b64(buf.getvalue())


# --- request/response schemas ---


class Arrow(BaseModel):
    x: int
    y: int
    u: float
    v: float


class PropagateRequest(BaseModel):
    image: str = Field(description="base64 PNG")
    arrows: list[Arrow] = Field(default_factory=list)


class PropagateResponse(BaseModel):
    width: int
    height: int
    flow_flo: str
    flow_png: str


class GenerateFrameResponse(BaseModel):
    image: str


class SessionState(BaseModel):
    image: str = Field(description="base64 PNG")
    positives: list[tuple[int, int]] = Field(default_factory=list)
    negatives: list[tuple[int, int]] = Field(default_factory=list)
    direction_count: int = DEFAULT_DIRECTIONS
    threshold: float = DEFAULT_THRESHOLD
    dummy_magnitude: float | None = None


class SessionResponse(BaseModel):
    session_id: str
    width: int
    height: int
    mask_png: str
    positives: list[tuple[int, int]]
    negatives: list[tuple[int, int]]
    direction_count: int
    threshold: float
    dummy_magnitude: float | None


# --- app ---


def create_app(ckpt=None, model: MotionPropNet | None = None, max_image_side: int = 512, ui_dir=None) -> FastAPI:
    app = FastAPI(title="motionprop annotation service")
    if model is None and ckpt is not None:
        model = MotionPropNet.load(ckpt)
    app.state.model = model
    app.state.max_image_side = max_image_side
    app.state.sessions = {}
    app.state.lock = threading.Lock()

    def require_model() -> MotionPropNet:
        if app.state.model is None:
            raise HTTPException(status_code=503, detail={"error": "model not loaded"})
        return app.state.model

    def arrows_to_guidance(arrows: list[Arrow], width: int, height: int) -> GuidanceSet:
        pts = []
        seen = set()
        for i, a in enumerate(arrows):
            if not (0 <= a.x < width and 0 <= a.y < height):
                raise HTTPException(
                    status_code=400,
                    detail={"error": f"point ({a.x}, {a.y}) outside {width}x{height}", "field": f"arrows[{i}]"},
                )
            if (a.x, a.y) in seen:
                raise HTTPException(
                    status_code=400,
                    detail={"error": f"duplicate arrow at ({a.x}, {a.y})", "field": f"arrows[{i}]"},
                )
            seen.add((a.x, a.y))
            pts.append(GuidancePoint(a.x, a.y, a.u, a.v, "user"))
        return GuidanceSet(tuple(pts))

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": app.state.model is not None}

    @app.post("/v1/propagate", response_model=PropagateResponse)
    def propagate(req: PropagateRequest):
        mdl = require_model()
        image = decode_image_b64(req.image, app.state.max_image_side)
        gset = arrows_to_guidance(req.arrows, image.width, image.height)
        flow = mdl.predict_flow(image, gset)
        return PropagateResponse(
            width=image.width,
            height=image.height,
            flow_flo=_b64(write_flo(flow)),
            flow_png=_b64(flow_to_color(flow).to_png_bytes()),
        )

    @app.post("/v1/generate-frame", response_model=GenerateFrameResponse)
    def generate_frame(req: PropagateRequest):
        mdl = require_model()
        image = decode_image_b64(req.image, app.state.max_image_side)
        gset = arrows_to_guidance(req.arrows, image.width, image.height)
        flow = mdl.predict_flow(image, gset)
        return GenerateFrameResponse(image=_b64(warp_image(image, flow).to_png_bytes()))

    def run_session(sid: str, state: SessionState) -> SessionResponse:
        mdl = require_model()
        image = decode_image_b64(state.image, app.state.max_image_side)
        try:
            params = AnnotationParams(state.direction_count, state.threshold, state.dummy_magnitude)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail={"error": str(exc), "field": "params"})
        try:
            mask = annotate_mask(mdl, image, state.positives, state.negatives, params)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail={"error": str(exc), "field": "positives/negatives"})
        return SessionResponse(
            session_id=sid,
            width=image.width,
            height=image.height,
            mask_png=mask_to_png_b64(mask),
            positives=state.positives,
            negatives=state.negatives,
            direction_count=params.direction_count,
            threshold=params.threshold,
            dummy_magnitude=params.dummy_magnitude,
        )

    @app.put("/v1/session/{sid}", response_model=SessionResponse)
    def put_session(sid: str, state: SessionState):
        resp = run_session(sid, state)
        with app.state.lock:
            app.state.sessions[sid] = (state, resp)
        return resp

    @app.get("/v1/session/{sid}", response_model=SessionResponse)
    def get_session(sid: str):
        with app.state.lock:
            entry = app.state.sessions.get(sid)
        if entry is None:
            raise HTTPException(status_code=404, detail={"error": f"unknown session {sid!r}"})
        return entry[1]

    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
