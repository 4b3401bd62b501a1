"""HTTP face of the engine.

Sessions wrap a :class:`PipelineSession`: create one with a config, push
frames in order, read per-frame artifacts from the responses, close to get
the run summary. One-shot endpoints cover bootstrap saliency, artifact
re-scoring and overlay rendering. All binary payloads travel base64-encoded
inside JSON, byte-identical to what the library runner writes to disk.
"""

from __future__ import annotations

import base64
import binascii
import threading
import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import PipelineConfig, config_from_dict
from .detectors import DetectionVector
from .errors import (
    DetectorUnavailable,
    FrameOrderError,
    IncxError,
    InputOutputError,
    ProtocolError,
    ZeroMass,
)
from .explain import ExplanationMask, decode_mask_bits, encode_mask_bits, mask_sidecar
from .geometry import BBox
from .images import Image, encode_png
from .metrics import dice, epg, explanation_proportion, jaccard, pearson_cc, ssim
from .pipeline import FrameResult, PipelineSession, build_detector
from .render import render_overlay
from .saliency import SaliencyField, decode_grid, encode_grid, grid_sidecar
from .drise import drise_saliency


# -- wire models ---------------------------------------------------------------

class ImagePayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    width: int
    height: int
    b64: str

    def to_image(self) -> Image:
        try:
            data = base64.b64decode(self.b64, validate=True)
        except (binascii.Error, ValueError) as e:
            raise HTTPException(422, f"bad image base64: {e}") from e
        try:
            return Image.from_bytes(self.width, self.height, data)
        except InputOutputError as e:
            raise HTTPException(422, str(e)) from e

    @classmethod
    def from_image(cls, img: Image) -> "ImagePayload":
        return cls(width=img.width, height=img.height,
                   b64=base64.b64encode(img.to_bytes()).decode("ascii"))


class GridMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")
    width: int
    height: int
    frame_index: int
    track_id: int
    normalized: bool
    pre_renorm_mass: Optional[float] = None


class GridPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    b64: str
    meta: GridMeta

    def to_field(self) -> SaliencyField:
        try:
            data = base64.b64decode(self.b64, validate=True)
            return decode_grid(data, self.meta.width, self.meta.height,
                               normalized=self.meta.normalized,
                               pre_renorm_mass=self.meta.pre_renorm_mass)
        except (binascii.Error, ValueError, InputOutputError) as e:
            raise HTTPException(422, f"bad grid payload: {e}") from e

    @classmethod
    def from_field(cls, field: SaliencyField, frame_index: int,
                   track_id: int) -> "GridPayload":
        return cls(b64=base64.b64encode(encode_grid(field)).decode("ascii"),
                   meta=GridMeta(**grid_sidecar(field, frame_index, track_id)))


class MaskMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")
    width: int
    height: int
    threshold: float
    sufficient: bool
    fallback_used: bool
    frame_index: int
    track_id: int


class MaskPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    b64: str
    meta: MaskMeta

    def to_mask(self) -> ExplanationMask:
        try:
            data = base64.b64decode(self.b64, validate=True)
            bits = decode_mask_bits(data, self.meta.width, self.meta.height)
        except (binascii.Error, ValueError, InputOutputError) as e:
            raise HTTPException(422, f"bad mask payload: {e}") from e
        return ExplanationMask(bits=bits, threshold=self.meta.threshold,
                               sufficient=self.meta.sufficient,
                               fallback_used=self.meta.fallback_used)

    @classmethod
    def from_mask(cls, mask: ExplanationMask, frame_index: int,
                  track_id: int) -> "MaskPayload":
        return cls(
            b64=base64.b64encode(encode_mask_bits(mask.bits)).decode("ascii"),
            meta=MaskMeta(**mask_sidecar(mask, frame_index, track_id)))


class DetectionModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    bbox: tuple[float, float, float, float]
    objectness: float
    probs: list[float]
    label: int

    @classmethod
    def from_detection(cls, det: DetectionVector) -> "DetectionModel":
        b = det.bbox
        return cls(bbox=(b.u_min, b.v_min, b.u_max, b.v_max),
                   objectness=det.objectness,
                   probs=[float(p) for p in det.class_probs],
                   label=det.label)


# Config mirror: same keys and defaults as config_from_dict understands.

class DetectorModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: str = "synthetic:rectangle"
    color: tuple[int, int, int] = (200, 60, 60)
    class_id: int = 0
    theta: float = 0.5
    expected_area: int = 0
    pixels: list[tuple[int, int]] = Field(default_factory=list)
    k: int = 1
    command: Optional[str] = None


class BootstrapModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n_masks: int = 1000
    grid: tuple[int, int] = (4, 4)
    p: float = 0.5
    seed: Optional[int] = None  # defaults to the run seed


class SearchModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    levels_initial: int = 32
    levels_update: int = 8
    margin: float = 0.1
    iou_match: float = 0.5


class TrackerModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    iou_min: float = 0.3
    timeout: int = 5
    measurement_noise: tuple[float, float, float, float] = (1.0, 1.0, 10.0, 10.0)
    process_noise: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001)


class MetricsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    enabled: bool = True
    steps: int = 100
    curves: bool = False
    compare_drise: bool = False


class OutputModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    fields: bool = True
    masks: bool = True
    overlays: bool = True
    include_timing: bool = True
    report_path: Optional[str] = None
    csv_mirror: bool = False


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    detector: DetectorModel = Field(default_factory=DetectorModel)
    bootstrap: BootstrapModel = Field(default_factory=BootstrapModel)
    search: SearchModel = Field(default_factory=SearchModel)
    tracker: TrackerModel = Field(default_factory=TrackerModel)
    metrics: MetricsModel = Field(default_factory=MetricsModel)
    output: OutputModel = Field(default_factory=OutputModel)
    seed: int = 0
    mass_floor: float = 1e-6
    workers: int = 0
    baseline: str = "black"

    def to_pipeline_config(self) -> PipelineConfig:
        doc = self.model_dump()
        if doc["bootstrap"]["seed"] is None:
            del doc["bootstrap"]["seed"]
        doc["detector"]["pixels"] = [tuple(p) for p in doc["detector"]["pixels"]]
        return config_from_dict(doc)


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: ConfigModel = Field(default_factory=ConfigModel)


class CreateSessionResponse(BaseModel):
    session_id: str
    classes: list[str]


class FrameRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    index: int
    image: ImagePayload


class EventModel(BaseModel):
    kind: str
    track_id: int


class TrackOutputModel(BaseModel):
    track_id: int
    bbox: tuple[float, float, float, float]
    born: bool
    field: Optional[GridPayload] = None
    mask: Optional[MaskPayload] = None
    overlay_png_b64: Optional[str] = None
    metrics: Optional[dict] = None


class FrameResponse(BaseModel):
    index: int
    detections: list[DetectionModel]
    events: list[EventModel]
    outputs: list[TrackOutputModel]
    ops_calls: int
    curve_calls: int
    compare_calls: int
    wall_ms_ops: float
    wall_ms_compare: float


class SessionInfo(BaseModel):
    session_id: str
    frames_processed: int
    active_tracks: int
    detector_calls: int


class CloseSessionResponse(BaseModel):
    summary: dict


class DriseRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    image: ImagePayload
    detector: DetectorModel = Field(default_factory=DetectorModel)
    bootstrap: BootstrapModel = Field(default_factory=BootstrapModel)
    target_index: int = 0  # which detection on the image to explain
    dump_masks: bool = False  # return the raw occlusion masks for debugging


class DriseResponse(BaseModel):
    detections: list[DetectionModel]
    field: GridPayload
    detector_calls: int
    masks: Optional[list[GridPayload]] = None


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    field_a: Optional[GridPayload] = None
    field_b: Optional[GridPayload] = None
    mask_a: Optional[MaskPayload] = None
    mask_b: Optional[MaskPayload] = None
    bbox: Optional[tuple[float, float, float, float]] = None


class CompareResponse(BaseModel):
    cc: Optional[float] = None
    ssim: Optional[float] = None
    ji: Optional[float] = None
    dc: Optional[float] = None
    epg: Optional[float] = None
    ep: Optional[float] = None


class RenderRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    image: ImagePayload
    field: Optional[GridPayload] = None
    mask: Optional[MaskPayload] = None
    bbox: Optional[tuple[float, float, float, float]] = None


class RenderResponse(BaseModel):
    png_b64: str


# -- session store --------------------------------------------------------------

class _Session:
    def __init__(self, session_id: str, config: PipelineConfig):
        self.session_id = session_id
        self.config = config
        self.pipeline = PipelineSession(config)
        self.lock = threading.Lock()


class SessionStore:
    def __init__(self) -> None:
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    def create(self, config: PipelineConfig) -> _Session:
        session = _Session(uuid.uuid4().hex, config)
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> _Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    def remove(self, session_id: str) -> _Session:
        with self._lock:
            session = self._sessions.pop(session_id, None)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    def close_all(self) -> None:
        with self._lock:
            sessions = list(self._sessions.values())
            self._sessions.clear()
        for session in sessions:
            session.pipeline.close()


def _frame_response(result: FrameResult, config: PipelineConfig,
                    img: Image) -> FrameResponse:
    outputs = []
    for out in result.outputs:
        field_payload = (GridPayload.from_field(out.field, result.index,
                                                out.track_id)
                         if config.output.fields else None)
        mask_payload = (MaskPayload.from_mask(out.mask, result.index,
                                              out.track_id)
                        if config.output.masks else None)
        overlay_b64 = None
        if config.output.overlays:
            overlay = render_overlay(img, out.field, out.mask, out.bbox)
            overlay_b64 = base64.b64encode(encode_png(overlay)).decode("ascii")
        metrics_row = (out.metrics.as_row(result.index, out.track_id)
                       if out.metrics is not None else None)
        b = out.bbox
        outputs.append(TrackOutputModel(
            track_id=out.track_id,
            bbox=(b.u_min, b.v_min, b.u_max, b.v_max),
            born=out.born, field=field_payload, mask=mask_payload,
            overlay_png_b64=overlay_b64, metrics=metrics_row))
    return FrameResponse(
        index=result.index,
        detections=[DetectionModel.from_detection(d) for d in result.detections],
        events=[EventModel(kind=e.kind, track_id=e.track_id)
                for e in result.events],
        outputs=outputs,
        ops_calls=result.ops_calls,
        curve_calls=result.curve_calls,
        compare_calls=result.compare_calls,
        wall_ms_ops=result.wall_ms_ops,
        wall_ms_compare=result.wall_ms_compare)


def _bbox_from_tuple(t) -> BBox:
    try:
        return BBox(*(float(x) for x in t))
    except ValueError as e:
        raise HTTPException(422, f"bad bbox {t}: {e}") from e


def create_app() -> FastAPI:
    app = FastAPI(title="incx", version=__version__,
                  description="Incremental explanations for object detectors")
    store = SessionStore()
    app.state.sessions = store

    @app.exception_handler(IncxError)
    async def incx_error_handler(request: Request, exc: IncxError):
        status = 400
        if isinstance(exc, FrameOrderError):
            status = 409
        elif isinstance(exc, (DetectorUnavailable, ProtocolError)):
            status = 502
        elif isinstance(exc, ZeroMass):
            status = 422
        return JSONResponse(
            status_code=status,
            content={"error": {"kind": type(exc).__name__, "message": str(exc)}})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/sessions", response_model=CreateSessionResponse)
    def create_session(req: CreateSessionRequest) -> CreateSessionResponse:
        config = req.config.to_pipeline_config()
        session = store.create(config)
        return CreateSessionResponse(
            session_id=session.session_id,
            classes=list(session.pipeline.detector.classes))

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        session = store.get(session_id)
        with session.lock:
            return SessionInfo(
                session_id=session_id,
                frames_processed=session.pipeline.summary.frames,
                active_tracks=len(session.pipeline.tracker.tracks),
                detector_calls=session.pipeline.call_log.calls)

    @app.get("/sessions/{session_id}/checkpoint")
    def session_checkpoint(session_id: str) -> dict:
        session = store.get(session_id)
        with session.lock:
            return session.pipeline.checkpoint()

    # Note: no exclude_none here — metric rows must keep their null-valued
    # keys so a thin client writes reports byte-identical to the library.
    @app.post("/sessions/{session_id}/frames", response_model=FrameResponse)
    def push_frame(session_id: str, req: FrameRequest) -> FrameResponse:
        session = store.get(session_id)
        img = req.image.to_image()
        with session.lock:
            result = session.pipeline.process_frame(img, req.index)
            return _frame_response(result, session.config, img)

    @app.post("/sessions/{session_id}/close", response_model=CloseSessionResponse)
    def close_session(session_id: str) -> CloseSessionResponse:
        session = store.remove(session_id)
        with session.lock:
            summary = session.pipeline.finish()
        return CloseSessionResponse(summary=summary.as_dict())

    @app.post("/drise", response_model=DriseResponse)
    def drise(req: DriseRequest) -> DriseResponse:
        img = req.image.to_image()
        cfg = ConfigModel(detector=req.detector, bootstrap=req.bootstrap)
        pipeline_cfg = cfg.to_pipeline_config()
        detector = build_detector(pipeline_cfg.detector)
        detections = detector.detect(img)
        if not detections:
            raise HTTPException(422, "the detector found nothing to explain")
        if not 0 <= req.target_index < len(detections):
            raise HTTPException(422, f"target_index {req.target_index} out of "
                                     f"range for {len(detections)} detections")
        spec = pipeline_cfg.bootstrap
        field = drise_saliency(img, detections[req.target_index], detector, spec)
        mask_payloads = None
        if req.dump_masks:
            from .drise import generate_masks

            mask_payloads = [
                GridPayload.from_field(SaliencyField(m.astype("float64")), 0, i)
                for i, m in enumerate(generate_masks(spec, img.width, img.height))
            ]
        return DriseResponse(
            detections=[DetectionModel.from_detection(d) for d in detections],
            field=GridPayload.from_field(field, 0, 0),
            detector_calls=spec.n_masks + 1,
            masks=mask_payloads)

    @app.post("/metrics/compare", response_model=CompareResponse)
    def compare(req: CompareRequest) -> CompareResponse:
        resp = CompareResponse()
        fa = req.field_a.to_field() if req.field_a is not None else None
        fb = req.field_b.to_field() if req.field_b is not None else None
        ma = req.mask_a.to_mask() if req.mask_a is not None else None
        mb = req.mask_b.to_mask() if req.mask_b is not None else None
        if fa is not None and fb is not None:
            resp.cc = pearson_cc(fa, fb)
            resp.ssim = ssim(fa, fb)
        if ma is not None and mb is not None:
            resp.ji = jaccard(ma, mb)
            resp.dc = dice(ma, mb)
        if fa is not None and req.bbox is not None:
            resp.epg = epg(fa, _bbox_from_tuple(req.bbox))
        if ma is not None:
            resp.ep = explanation_proportion(ma)
        return resp

    @app.post("/render", response_model=RenderResponse)
    def render(req: RenderRequest) -> RenderResponse:
        img = req.image.to_image()
        field = req.field.to_field() if req.field is not None else None
        mask = req.mask.to_mask() if req.mask is not None else None
        bbox = _bbox_from_tuple(req.bbox) if req.bbox is not None else None
        overlay = render_overlay(img, field, mask, bbox)
        return RenderResponse(
            png_b64=base64.b64encode(encode_png(overlay)).decode("ascii"))

    return app


app = create_app()
