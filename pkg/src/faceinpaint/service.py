"""HTTP inference service.

Multipart upload of an image and a mask PNG plus a JSON ``params`` field;
responses carry base64 PNG composites whose known regions byte-match the
(possibly resized) input. The model is shared read-only; every request gets
its own torch generator, and a bounded admission counter sheds load with 429
once the queue is full.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time

import numpy as np
import torch
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .config import ServiceBlock
from .data import composite_uint8, load_mask_png, make_masked_input, normalize_uint8

MAX_SAMPLES = 4


class _Admission:
    """Counts in-flight requests; admits up to workers + queue slots."""

    def __init__(self, workers: int, queue_limit: int):
        self.capacity = workers + queue_limit
        self.workers = threading.BoundedSemaphore(workers)
        self.lock = threading.Lock()
        self.in_flight = 0

    def try_enter(self) -> bool:
        with self.lock:
            if self.in_flight >= self.capacity:
                return False
            self.in_flight += 1
            return True

    def leave(self) -> None:
        with self.lock:
            self.in_flight -= 1


def _model_digest(model: torch.nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()[:16]


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(
    bundle_path: str | None = None,
    model=None,
    run_cfg=None,
    service_cfg: ServiceBlock = ServiceBlock(),
) -> FastAPI:
    """Build the app around a loaded model (or a bundle file to load)."""
    if bundle_path is not None:
        from .build import load_model_checkpoint

        model, run_cfg = load_model_checkpoint(bundle_path)
        model_id = hashlib.sha256(open(bundle_path, "rb").read()).hexdigest()[:16]
    elif model is not None:
        model_id = _model_digest(model)
    else:
        model_id = None

    app = FastAPI(title="faceinpaint", version="1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(service_cfg.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    admission = _Admission(service_cfg.max_concurrency, service_cfg.queue_limit)
    max_bytes = service_cfg.max_payload_mb * 1024 * 1024

    @app.get("/v1/health")
    def health():
        if model is None:
            return _error(503, "model not loaded")
        return {"status": "ok", "model_id": model_id}

    @app.post("/v1/inpaint")
    def inpaint(
        request: Request,
        image: UploadFile = File(...),
        mask: UploadFile = File(...),
        params: str = Form("{}"),
    ):
        if model is None:
            return _error(503, "model not loaded")
        length = request.headers.get("content-length")
        if length is not None and int(length) > max_bytes:
            return _error(413, f"payload exceeds {service_cfg.max_payload_mb} MiB")

        try:
            opts = json.loads(params)
        except json.JSONDecodeError as exc:
            return _error(400, f"params is not valid JSON: {exc}")
        if not isinstance(opts, dict):
            return _error(400, "params must be a JSON object")
        unknown = set(opts) - {"sigma", "seed", "n_samples"}
        if unknown:
            return _error(400, f"unknown params {sorted(unknown)}")
        sigma = opts.get("sigma", 0.0)
        seed = opts.get("seed")
        n_samples = opts.get("n_samples", 1)
        if not isinstance(sigma, (int, float)) or isinstance(sigma, bool):
            return _error(400, "sigma must be a number")
        if sigma < 0:
            return _error(422, "sigma must be >= 0")
        if not isinstance(n_samples, int) or isinstance(n_samples, bool) \
                or not 1 <= n_samples <= MAX_SAMPLES:
            return _error(400, f"n_samples must be an integer in [1, {MAX_SAMPLES}]")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            return _error(400, "seed must be an integer")

        image_bytes = image.file.read(max_bytes + 1)
        mask_bytes = mask.file.read(max_bytes + 1)
        if len(image_bytes) + len(mask_bytes) > max_bytes:
            return _error(413, f"payload exceeds {service_cfg.max_payload_mb} MiB")
        try:
            with Image.open(io.BytesIO(image_bytes)) as im:
                src = im.convert("RGB")
                src.load()
        except Exception:
            return _error(400, "image is not a decodable image file")
        try:
            with Image.open(io.BytesIO(mask_bytes)) as mm:
                mask_im = mm.convert("L")
                mask_im.load()
        except Exception:
            return _error(400, "mask is not a decodable image file")
        if src.size != mask_im.size:
            return _error(400, f"image size {src.size} != mask size {mask_im.size}")

        res = run_cfg.data.resolution if run_cfg is not None else model.resolution
        resized = src.size != (res, res)
        if resized:
            src = src.resize((res, res), Image.BILINEAR)
            mask_im = mask_im.resize((res, res), Image.NEAREST)
        src_arr = np.asarray(src, dtype=np.uint8)
        mask_t = torch.from_numpy(
            (np.asarray(mask_im, dtype=np.uint8) > 127).astype(np.float32)
        )[None, None]
        image_t = normalize_uint8(src_arr).unsqueeze(0)

        if not admission.try_enter():
            return _error(429, "too many queued requests, retry later")
        try:
            t0 = time.perf_counter()
            base_seed = seed if seed is not None else int.from_bytes(
                hashlib.sha256(image_bytes + str(time.time_ns()).encode()).digest()[:4], "little"
            )
            results, seeds = [], []
            masked = make_masked_input(image_t, mask_t)
            # per-request generators keep concurrent inference reproducible
            with admission.workers, torch.no_grad():
                for i in range(n_samples):
                    sample_seed = base_seed + i
                    rng = torch.Generator().manual_seed(sample_seed)
                    _, pred, _ = model(masked, sigma=float(sigma), rng=rng)
                    out_arr = composite_uint8(src_arr, pred, mask_t)
                    buf = io.BytesIO()
                    Image.fromarray(out_arr, mode="RGB").save(buf, format="PNG")
                    results.append(base64.b64encode(buf.getvalue()).decode("ascii"))
                    seeds.append(sample_seed)
            return {
                "results": results,
                "seeds": seeds,
                "timing_ms": (time.perf_counter() - t0) * 1000.0,
                "model_id": model_id,
                "resized": resized,
            }
        finally:
            admission.leave()

    return app
