"""Session-oriented HTTP service for interactive segmentation.

Sessions live in memory behind per-session locks; handlers are plain sync
functions so the framework runs them in its threadpool and the event loop
(and /healthz) stays responsive while a click computes.  The expensive
matrix preparation happens once at session creation; each click then costs
one chain run plus the fusion stages, or less on cache hits.
"""

from __future__ import annotations

import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import __version__
from .errors import M2N2Error, StateError, ValidationError
from .evaluation import build_method_session
from .jbu import GuideImage, guide_from_array
from .markov import MarkovParams
from .rle import encode_mask
from .segmenter import (
    PromptPoint,
    Segmentation,
    SessionContext,
    add_point,
    remove_last_point,
    score_curve,
    segment,
)
from .tensor_io import (
    AttentionStack,
    SyntheticSpec,
    generate_synthetic_stack,
    guillotine_partition,
    read_attention_file,
    synthetic_guide_image,
)

MAX_UPLOAD_BYTES = 128 * 1024 * 1024
MAX_SYNTHETIC_CELLS = 64 * 64
MAX_IMAGE_PIXELS = 4096 * 4096
DEFAULT_TTL_SECONDS = 3600.0
DEFAULT_MAX_SESSIONS = 64


@dataclass
class _Session:
    ctx: SessionContext
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = field(default_factory=time.monotonic)
    seg: Segmentation | None = None


class SessionStore:
    """Bounded in-memory session table with TTL and LRU eviction."""

    def __init__(self, ttl_seconds: float, max_sessions: int):
        self.ttl = ttl_seconds
        self.max_sessions = max_sessions
        self._lock = threading.Lock()
        self._table: dict[str, _Session] = {}

    def sweep(self) -> None:
        now = time.monotonic()
        with self._lock:
            dead = [k for k, s in self._table.items() if now - s.last_used > self.ttl]
            for k in dead:
                del self._table[k]

    def put(self, session: _Session) -> str:
        self.sweep()
        sid = uuid.uuid4().hex
        with self._lock:
            while len(self._table) >= self.max_sessions:
                oldest = min(self._table, key=lambda k: self._table[k].last_used)
                del self._table[oldest]
            self._table[sid] = session
        return sid

    def get(self, sid: str) -> _Session:
        self.sweep()
        with self._lock:
            session = self._table.get(sid)
            if session is None:
                raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
            session.last_used = time.monotonic()
            return session

    def __len__(self) -> int:
        with self._lock:
            return len(self._table)


def _read_upload(upload: UploadFile, what: str) -> bytes:
    data = upload.file.read(MAX_UPLOAD_BYTES + 1)
    if len(data) > MAX_UPLOAD_BYTES:
        raise HTTPException(
            status_code=413, detail=f"{what} exceeds {MAX_UPLOAD_BYTES} bytes"
        )
    return data


def _parse_synthetic(raw: str) -> tuple[AttentionStack, SyntheticSpec]:
    try:
        body = json.loads(raw)
        if not isinstance(body, dict):
            raise ValueError("expected a JSON object")
        h = int(body["h"])
        w = int(body["w"])
        mass = float(body.get("in_region_mass", 0.8))
        seed = int(body.get("seed", body.get("noise_seed", 0)))
        if "partition" in body:
            partition = np.asarray(body["partition"], dtype=np.int64)
        else:
            regions = int(body.get("regions", 2))
            rng = np.random.default_rng(seed)
            partition = guillotine_partition(h, w, regions, rng)
    except (KeyError, ValueError, TypeError) as e:
        raise HTTPException(status_code=422, detail=f"bad synthetic spec: {e}")
    if h * w > MAX_SYNTHETIC_CELLS:
        raise HTTPException(
            status_code=413,
            detail=f"synthetic grid {h}x{w} exceeds {MAX_SYNTHETIC_CELLS} cells",
        )
    spec = SyntheticSpec(h=h, w=w, partition=partition, in_region_mass=mass, noise_seed=seed)
    try:
        return generate_synthetic_stack(spec), spec
    except M2N2Error as e:
        raise HTTPException(status_code=422, detail=str(e))


def _decode_image(data: bytes) -> GuideImage:
    from PIL import Image

    try:
        with Image.open(io.BytesIO(data)) as img:
            arr = np.array(img.convert("RGB"))
    except Exception as e:
        raise HTTPException(status_code=422, detail=f"image does not decode: {e}")
    if arr.shape[0] * arr.shape[1] > MAX_IMAGE_PIXELS:
        raise HTTPException(status_code=413, detail="image too large")
    return guide_from_array(arr)


def _point_payload(p: PromptPoint) -> dict:
    return {"id": p.id, "x": p.x, "y": p.y, "label": int(p.label)}


def _state_payload(session: _Session, timing_ms: float | None = None) -> dict:
    ctx = session.ctx
    seg = session.seg
    if seg is None:
        seg = segment(ctx, [])
    body = {
        "points": [_point_payload(p) for p in ctx.points],
        "mask": encode_mask(seg.mask),
        "lambdas": {str(k): v for k, v in seg.per_point_lambda.items()},
        "cache_size": len(ctx.cache),
        "image": {"h": ctx.guide.H, "w": ctx.guide.W},
        "grid": {"h": ctx.matrix.h, "w": ctx.matrix.w},
    }
    if timing_ms is not None:
        body["timing_ms"] = timing_ms
    return body


def create_app(
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    max_sessions: int = DEFAULT_MAX_SESSIONS,
) -> FastAPI:
    app = FastAPI(title="m2n2", version=__version__)
    # the browser client is typically served from a separate static origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = SessionStore(ttl_seconds, max_sessions)
    app.state.store = store

    @app.exception_handler(M2N2Error)
    def _domain_error(request, exc: M2N2Error):
        status = 409 if isinstance(exc, StateError) else 422
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(store), "version": __version__}

    @app.post("/sessions", status_code=201)
    def create_session(
        image: UploadFile | None = File(default=None),
        attn: UploadFile | None = File(default=None),
        synthetic: str | None = Form(default=None),
        method: str = Form(default="m2n2"),
        params: str | None = Form(default=None),
        height: int = Form(default=256),
        width: int = Form(default=256),
    ):
        if (attn is None) == (synthetic is None):
            raise HTTPException(
                status_code=422,
                detail="provide exactly one attention source: attn file or synthetic spec",
            )
        if attn is not None:
            data = _read_upload(attn, "attention file")
            import tempfile

            with tempfile.NamedTemporaryFile(suffix=".atn1") as tmp:
                tmp.write(data)
                tmp.flush()
                try:
                    stack = read_attention_file(tmp.name)
                except M2N2Error as e:
                    raise HTTPException(status_code=422, detail=str(e))
            spec = None
        else:
            stack, spec = _parse_synthetic(synthetic)

        if image is not None:
            guide = _decode_image(_read_upload(image, "image"))
        elif spec is not None:
            if height * width > MAX_IMAGE_PIXELS:
                raise HTTPException(status_code=413, detail="requested image too large")
            guide = GuideImage(rgb=synthetic_guide_image(spec, height, width))
        else:
            raise HTTPException(
                status_code=422, detail="an image upload is required with an attn file"
            )

        mk = MarkovParams()
        if params:
            try:
                overrides = json.loads(params)
                mk = MarkovParams(**{**mk.__dict__, **overrides})
            except (TypeError, ValueError, M2N2Error) as e:
                raise HTTPException(status_code=422, detail=f"bad params: {e}")
        try:
            ctx = build_method_session(method, stack, guide, params=mk)
        except M2N2Error as e:
            raise HTTPException(status_code=422, detail=str(e))
        sid = store.put(_Session(ctx=ctx))
        body = _state_payload(store.get(sid))
        body["session_id"] = sid
        return body

    @app.post("/sessions/{sid}/clicks")
    def click(sid: str, body: dict):
        session = store.get(sid)
        try:
            x, y, label = int(body["x"]), int(body["y"]), int(body["label"])
        except (KeyError, TypeError, ValueError) as e:
            raise HTTPException(status_code=400, detail=f"bad click body: {e}")
        with session.lock:
            ctx = session.ctx
            if not (0 <= x < ctx.guide.W and 0 <= y < ctx.guide.H) or label not in (0, 1):
                raise HTTPException(
                    status_code=400,
                    detail=f"click ({x}, {y}, {label}) invalid for "
                    f"{ctx.guide.W}x{ctx.guide.H} image",
                )
            t0 = time.perf_counter()
            add_point(ctx, PromptPoint(x=x, y=y, label=label))
            session.seg = segment(ctx)
            dt = (time.perf_counter() - t0) * 1000.0
            return _state_payload(session, timing_ms=dt)

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str):
        session = store.get(sid)
        with session.lock:
            ctx = session.ctx
            if not ctx.points:
                raise HTTPException(status_code=409, detail="no points to undo")
            t0 = time.perf_counter()
            remove_last_point(ctx)
            session.seg = segment(ctx)
            dt = (time.perf_counter() - t0) * 1000.0
            return _state_payload(session, timing_ms=dt)

    @app.get("/sessions/{sid}")
    def get_state(sid: str):
        session = store.get(sid)
        with session.lock:
            return _state_payload(session)

    @app.get("/sessions/{sid}/mask.png")
    def mask_png(sid: str):
        from PIL import Image

        session = store.get(sid)
        with session.lock:
            seg = session.seg
            if seg is None:
                seg = segment(session.ctx, [])
            img = Image.fromarray(seg.mask.astype(np.uint8) * 255, mode="L")
            buf = io.BytesIO()
            img.save(buf, format="PNG")
            return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/sessions/{sid}/diagnostics")
    def diagnostics(sid: str):
        session = store.get(sid)
        with session.lock:
            ctx = session.ctx
            seg = session.seg
            out = []
            for p in ctx.points:
                row = _point_payload(p)
                if seg is not None and p.id in seg.per_point_lambda:
                    row["lambda"] = seg.per_point_lambda[p.id]
                m = ctx.cache.get(p.id)
                if m is not None:
                    curve = score_curve(m, ctx.points, p.id, ctx.lambda_grid_size)
                    row["curve"] = {
                        "lam": [round(float(v), 6) for v in curve.lam],
                        "total": [round(float(v), 6) for v in curve.total],
                    }
                out.append(row)
            return {"points": out}

    return app
