"""HTTP inference service for a trained generator checkpoint.

One checkpoint per process. Weights load once, stay in eval mode and are
shared read-only across request handlers, so identical requests return
identical bytes even under concurrency. Forward passes run on a worker
thread bounded by a timeout; the event loop never blocks on the model.
"""

import asyncio
import logging
import math
from base64 import b64encode
from pathlib import Path

import torch
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .explore import interpolate_labels, make_noise, sample_from_vector
from .imaging import encode_png
from .training import load_checkpoint

log = logging.getLogger(__name__)

MAX_BODY_BYTES = 1 << 20
DEFAULT_TIMEOUT_SECONDS = 30.0


class GenerateRequest(BaseModel):
    """Exactly one of seed or noise, plus a label of model length."""

    seed: int | None = None
    noise: list[float] | None = None
    label: list[float] | None = None


class InterpolateRequest(BaseModel):
    seed: int = 0
    source: list[float] = Field(alias="from")
    target: list[float] = Field(alias="to")
    steps: int = Field(default=5, ge=2, le=32)

    model_config = {"populate_by_name": True}


def _error_response(status, code, field, message):
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "field": field, "message": message}},
    )


def _finite(values):
    return all(math.isfinite(v) for v in values)


def create_app(checkpoint_path, ui_dir=None,
               timeout_seconds=DEFAULT_TIMEOUT_SECONDS,
               max_body_bytes=MAX_BODY_BYTES) -> FastAPI:
    """Build the service app around one loaded checkpoint.

    ui_dir, when given, is served statically at / (the API stays under
    /api). timeout_seconds bounds each model computation; requests that
    exceed it get a 503.
    """
    # deterministic kernels regardless of how many handlers run at once
    torch.set_num_threads(1)
    state = load_checkpoint(checkpoint_path)
    generator = state.generator
    generator.eval()
    net = state.config.network
    label_count = net.label_count
    info = {
        "classes": list(state.classes),
        "label_count": label_count,
        "image_size": net.image_size,
        "noise_dim": net.noise_dim,
        "variant": net.variant.value,
        "step": state.step,
    }

    app = FastAPI(title="citygan", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _on_validation_error(request, exc):
        field = None
        message = "invalid request body"
        errors = exc.errors()
        if errors:
            loc = [str(part) for part in errors[0].get("loc", ()) if part != "body"]
            field = loc[-1] if loc else None
            message = errors[0].get("msg", message)
        return _error_response(400, "validation", field, message)

    @app.middleware("http")
    async def _reject_oversized_bodies(request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > max_body_bytes:
            return _error_response(
                413, "payload_too_large", None,
                f"request body exceeds {max_body_bytes} bytes",
            )
        return await call_next(request)

    async def _bounded(func, *args):
        return await asyncio.wait_for(
            asyncio.to_thread(func, *args), timeout=timeout_seconds
        )

    def _check_label(label):
        """Normalized label list or an error response."""
        if label_count == 0:
            if label:
                return None, _error_response(
                    400, "validation", "label",
                    "model is unconditional, label must be absent or empty")
            return None, None
        if label is None:
            return None, _error_response(
                400, "validation", "label",
                f"label of length {label_count} required")
        if len(label) != label_count:
            return None, _error_response(
                400, "validation", "label",
                f"label length {len(label)} does not match model ({label_count})")
        if not _finite(label):
            return None, _error_response(
                400, "validation", "label", "label values must be finite")
        return [float(v) for v in label], None

    def _resolve_noise(req):
        """Noise tensor from seed or explicit vector, or an error response."""
        if (req.seed is None) == (req.noise is None):
            which = "both" if req.seed is not None else "neither"
            return None, _error_response(
                400, "validation", "seed",
                f"provide exactly one of seed or noise ({which} given)")
        if req.noise is not None:
            if len(req.noise) != net.noise_dim:
                return None, _error_response(
                    400, "validation", "noise",
                    f"noise length {len(req.noise)} does not match model ({net.noise_dim})")
            if not _finite(req.noise):
                return None, _error_response(
                    400, "validation", "noise", "noise values must be finite")
            return torch.tensor(req.noise, dtype=torch.float32).reshape(1, -1), None
        return make_noise(req.seed, net.noise_dim), None

    def _render_png(noise, label):
        return encode_png(sample_from_vector(generator, noise, label))

    @app.get("/api/model")
    async def model_info():
        return info

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/api/generate")
    async def generate(req: GenerateRequest):
        noise, problem = _resolve_noise(req)
        if problem is not None:
            return problem
        label, problem = _check_label(req.label)
        if problem is not None:
            return problem
        try:
            png = await _bounded(_render_png, noise, label)
        except asyncio.TimeoutError:
            return _error_response(
                503, "timeout", None,
                f"generation exceeded {timeout_seconds} seconds")
        return Response(content=png, media_type="image/png")

    @app.post("/api/interpolate")
    async def interpolate(req: InterpolateRequest):
        for name, value in (("from", req.source), ("to", req.target)):
            if len(value) != label_count:
                return _error_response(
                    400, "validation", name,
                    f"label length {len(value)} does not match model ({label_count})")
            if not _finite(value):
                return _error_response(
                    400, "validation", name, "label values must be finite")
        labels = interpolate_labels(req.source, req.target, req.steps)
        noise = make_noise(req.seed, net.noise_dim)

        def _render_all():
            out = []
            for vec in labels:
                png = _render_png(noise, vec)
                out.append({
                    "label": [float(v) for v in vec],
                    "image": b64encode(png).decode("ascii"),
                })
            return out

        try:
            steps = await _bounded(_render_all)
        except asyncio.TimeoutError:
            return _error_response(
                503, "timeout", None,
                f"interpolation exceeded {timeout_seconds} seconds")
        return {"steps": steps}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
