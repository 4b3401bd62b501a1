"""Per-frame orchestration: detect, track, bootstrap-or-warp, explain,
measure, emit.

A newborn track pays the one-time mask-based bootstrap for its saliency
field; from then on the field is propagated with the closed-form
scale/translation derived from the track's consecutive detection boxes, and
the explanation threshold is re-searched in a small window around the
previous one. Everything an object produces (fields, masks, metric rows,
events) is emitted per frame, never buffered to the end of the run.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

from .config import DetectorConfig, PipelineConfig
from .detectors import (
    Detector,
    DetectionVector,
    DetectorCallLog,
    LockedDetector,
    LoggedDetector,
    RemoteDetector,
    RectangleDetector,
    RectangleSpec,
    make_topk_pixel_detector,
)
from .drise import drise_saliency
from .errors import (
    ConfigError,
    DegenerateBox,
    FrameOrderError,
    MassLost,
    ZeroFullImageScore,
    ZeroMass,
)
from .explain import ExplanationMask, explain
from .geometry import BBox, transform_from_boxes
from .images import Image
from .metrics import MetricReport, deletion, dice, epg, explanation_proportion, insertion, jaccard, pearson_cc, ssim
from .saliency import SaliencyField, warp
from .tracking import KalmanTrack, SortTracker

log = logging.getLogger("incx.pipeline")


def build_detector(cfg: DetectorConfig) -> Detector:
    if cfg.kind == "synthetic:rectangle":
        if cfg.expected_area <= 0:
            raise ConfigError(
                "synthetic:rectangle requires a positive expected_area")
        return RectangleDetector(RectangleSpec(
            color=tuple(cfg.color), class_id=cfg.class_id, theta=cfg.theta,
            expected_area=cfg.expected_area))
    if cfg.kind == "synthetic:topk":
        if not cfg.pixels:
            raise ConfigError("synthetic:topk requires designated pixels")
        return make_topk_pixel_detector(cfg.pixels, cfg.k,
                                        class_id=cfg.class_id)
    if cfg.kind == "cmd":
        return RemoteDetector(cfg.command)
    raise ConfigError(f"unknown detector kind {cfg.kind!r}")


@dataclass
class TrackedExplanation:
    """Everything the pipeline carries per live explanation stream."""

    track_id: int
    field: SaliencyField | None
    mask: ExplanationMask | None
    bbox: BBox                      # last *measured* box (warp source)
    bootstrap_frame: int
    thresholds: list[float] = dataclass_field(default_factory=list)
    frames_explained: int = 0       # the t passed to the search
    staleness: int = 0
    ended: bool = False


@dataclass
class FrameEvent:
    kind: str  # born|retired|mass_lost|bootstrap_failed|fallback|degenerate_box
    track_id: int

    def as_dict(self) -> dict:
        return {"kind": self.kind, "track_id": self.track_id}


@dataclass
class TrackFrameOutput:
    track_id: int
    bbox: BBox
    born: bool
    field: SaliencyField
    mask: ExplanationMask
    metrics: MetricReport | None
    ops_calls: int
    wall_ms: float


@dataclass
class FrameResult:
    index: int
    detections: list[DetectionVector]
    outputs: list[TrackFrameOutput]
    events: list[FrameEvent]
    ops_calls: int
    compare_calls: int
    curve_calls: int
    wall_ms_ops: float
    wall_ms_compare: float


@dataclass
class RunSummary:
    frames: int = 0
    tracks: int = 0
    bootstraps: int = 0
    detector_calls: int = 0
    wall_ms_total: float = 0.0
    per_frame: list[dict] = dataclass_field(default_factory=list)

    def as_dict(self) -> dict:
        per_frame_ms = self.wall_ms_total / self.frames if self.frames else 0.0
        return {
            "frames": self.frames,
            "tracks": self.tracks,
            "bootstraps": self.bootstraps,
            "detector_calls": self.detector_calls,
            "wall_ms_total": self.wall_ms_total,
            "wall_ms_per_frame": per_frame_ms,
            "per_frame": self.per_frame,
        }


class PipelineSession:
    """Stateful engine for one video: feed frames in order, read results.

    Owns the tracker and the per-track explanation streams. One session is
    confined to one caller at a time; per-track work inside a frame may fan
    out to a thread pool (config.workers), and all of frame t's outputs are
    complete before frame t+1 is accepted.
    """

    def __init__(self, config: PipelineConfig, detector: Detector | None = None):
        config.validate()
        self.config = config
        raw = detector if detector is not None else build_detector(config.detector)
        if config.workers > 0:
            raw = LockedDetector(raw)
        self.call_log = DetectorCallLog()
        self.detector = LoggedDetector(raw, self.call_log)
        self.tracker = SortTracker(config.tracker)
        self.tracked: dict[int, TrackedExplanation] = {}
        self.expected_index = 0
        self.summary = RunSummary()
        self._pool = (ThreadPoolExecutor(max_workers=config.workers)
                      if config.workers > 0 else None)
        self._closed = False
        self._last_checkpoint = self._capture_checkpoint()

    # -- per-track work ---------------------------------------------------

    def _bootstrap_track(self, track: KalmanTrack, det: DetectionVector,
                         img: Image, index: int,
                         events: list[FrameEvent]) -> TrackFrameOutput | None:
        scoped = LoggedDetector(self.detector)
        t0 = time.perf_counter()
        try:
            field = drise_saliency(img, det, scoped, self.config.bootstrap)
        except ZeroMass:
            log.warning("track %d: bootstrap produced no mass", track.track_id)
            events.append(FrameEvent("bootstrap_failed", track.track_id))
            self.tracked[track.track_id] = TrackedExplanation(
                track_id=track.track_id, field=None, mask=None, bbox=det.bbox,
                bootstrap_frame=index, ended=True)
            return None
        mask = explain(field, scoped, img, t=0, prev=None, target=det,
                       cfg=self.config.search)
        state = TrackedExplanation(
            track_id=track.track_id, field=field, mask=mask, bbox=det.bbox,
            bootstrap_frame=index, thresholds=[mask.threshold],
            frames_explained=1)
        self.tracked[track.track_id] = state
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return TrackFrameOutput(
            track_id=track.track_id, bbox=det.bbox, born=True, field=field,
            mask=mask, metrics=None, ops_calls=scoped.log.calls,
            wall_ms=wall_ms)

    def _propagate_track(self, state: TrackedExplanation, det: DetectionVector,
                         img: Image, events: list[FrameEvent]) -> TrackFrameOutput | None:
        scoped = LoggedDetector(self.detector)
        t0 = time.perf_counter()
        try:
            transform = transform_from_boxes(state.bbox, det.bbox)
            field = warp(state.field, transform, self.config.mass_floor)
        except DegenerateBox:
            log.warning("track %d: degenerate box, cannot derive a transform",
                        state.track_id)
            events.append(FrameEvent("degenerate_box", state.track_id))
            state.ended = True
            return None
        except MassLost:
            log.info("track %d: saliency mass left the frame", state.track_id)
            events.append(FrameEvent("mass_lost", state.track_id))
            state.ended = True
            return None
        mask = explain(field, scoped, img, t=state.frames_explained,
                       prev=state.mask, target=det, cfg=self.config.search)
        if mask.fallback_used:
            events.append(FrameEvent("fallback", state.track_id))
        state.field = field
        state.mask = mask
        state.bbox = det.bbox
        state.thresholds.append(mask.threshold)
        state.frames_explained += 1
        state.staleness = 0
        wall_ms = (time.perf_counter() - t0) * 1000.0
        return TrackFrameOutput(
            track_id=state.track_id, bbox=det.bbox, born=False, field=field,
            mask=mask, metrics=None, ops_calls=scoped.log.calls,
            wall_ms=wall_ms)

    def _measure(self, output: TrackFrameOutput, det: DetectionVector,
                 img: Image, index: int) -> tuple[int, int, float]:
        """Fills output.metrics; returns (curve_calls, compare_calls,
        compare wall ms)."""
        mcfg = self.config.metrics
        report = MetricReport()
        t0 = time.perf_counter()
        report.epg = epg(output.field, det.bbox)
        report.ep = explanation_proportion(output.mask)

        curve_calls = 0
        if mcfg.curves:
            scoped = LoggedDetector(self.detector)
            try:
                _, report.insertion = insertion(img, output.field, scoped, det,
                                                mcfg.steps)
                _, report.deletion = deletion(img, output.field, scoped, det,
                                              mcfg.steps)
            except ZeroFullImageScore:
                log.warning("track %d: zero full-image score, curves skipped",
                            output.track_id)
            curve_calls = scoped.log.calls

        compare_calls = 0
        compare_ms = 0.0
        if mcfg.compare_drise:
            c0 = time.perf_counter()
            scoped = LoggedDetector(self.detector)
            try:
                fresh_field = drise_saliency(img, det, scoped,
                                             self.config.bootstrap)
                fresh_mask = explain(fresh_field, scoped, img, t=0, prev=None,
                                     target=det, cfg=self.config.search)
            except ZeroMass:
                log.warning("track %d: reference explainer produced no mass",
                            output.track_id)
            else:
                report.cc = pearson_cc(output.field, fresh_field)
                report.ssim = ssim(output.field, fresh_field)
                report.ji = jaccard(output.mask, fresh_mask)
                report.dc = dice(output.mask, fresh_mask)
            compare_calls = scoped.log.calls
            compare_ms = (time.perf_counter() - c0) * 1000.0

        report.detector_calls = output.ops_calls
        wall = (time.perf_counter() - t0) * 1000.0
        if self.config.output.include_timing:
            report.wall_ms = output.wall_ms + wall - compare_ms
        output.metrics = report
        return curve_calls, compare_calls, compare_ms

    # -- the frame loop ----------------------------------------------------

    def process_frame(self, img: Image, index: int) -> FrameResult:
        if self._closed:
            raise RuntimeError("session is closed")
        if index != self.expected_index:
            raise FrameOrderError(
                f"got frame {index}, expected {self.expected_index}; frames "
                f"must arrive in order with consecutive indices")

        frame_start = time.perf_counter()
        calls_before = self.call_log.calls
        events: list[FrameEvent] = []

        detections = self.detector.detect(img)
        step = self.tracker.step(detections)

        for track in step.retired:
            events.append(FrameEvent("retired", track.track_id))
            self.tracked.pop(track.track_id, None)
        for track in step.missed:
            state = self.tracked.get(track.track_id)
            if state is not None:
                state.staleness = track.misses
        for track, _ in step.born:
            events.append(FrameEvent("born", track.track_id))

        work: list[tuple[str, KalmanTrack, DetectionVector]] = []
        for track, det in step.matched:
            state = self.tracked.get(track.track_id)
            if state is None or state.ended:
                continue
            work.append(("propagate", track, det))
        for track, det in step.born:
            work.append(("bootstrap", track, det))

        def run_item(item) -> TrackFrameOutput | None:
            kind, track, det = item
            if kind == "bootstrap":
                return self._bootstrap_track(track, det, img, index, events)
            return self._propagate_track(self.tracked[track.track_id], det,
                                         img, events)

        if self._pool is not None and len(work) > 1:
            outputs = list(self._pool.map(run_item, work))
        else:
            outputs = [run_item(item) for item in work]

        produced = [o for o in outputs if o is not None]
        produced.sort(key=lambda o: o.track_id)
        events.sort(key=lambda e: (e.track_id, e.kind))

        bootstraps = sum(1 for o in produced if o.born)
        self.summary.bootstraps += bootstraps
        self.summary.tracks = self.tracker.ids_issued

        curve_calls = 0
        compare_calls = 0
        compare_ms = 0.0
        if self.config.metrics.enabled:
            by_id = {t.track_id: d for t, d in step.matched + step.born}
            for output in produced:
                cc_calls, cmp_calls, cmp_ms = self._measure(
                    output, by_id[output.track_id], img, index)
                curve_calls += cc_calls
                compare_calls += cmp_calls
                compare_ms += cmp_ms

        total_calls = self.call_log.calls - calls_before
        ops_calls = total_calls - curve_calls - compare_calls
        wall_ms = (time.perf_counter() - frame_start) * 1000.0

        # the frame cursor advances only once the frame fully completed, so
        # a failed frame can be resumed from a checkpoint
        self.expected_index += 1
        self._last_checkpoint = self._capture_checkpoint()
        self.summary.frames += 1
        self.summary.detector_calls = self.call_log.calls
        self.summary.wall_ms_total += wall_ms
        self.summary.per_frame.append({
            "frame": index,
            "ops_calls": ops_calls,
            "curve_calls": curve_calls,
            "compare_calls": compare_calls,
            "bootstraps": bootstraps,
            "wall_ms_ops": wall_ms - compare_ms,
            "wall_ms_compare": compare_ms,
        })

        return FrameResult(
            index=index, detections=detections, outputs=produced,
            events=events, ops_calls=ops_calls, compare_calls=compare_calls,
            curve_calls=curve_calls, wall_ms_ops=wall_ms - compare_ms,
            wall_ms_compare=compare_ms)

    def checkpoint(self) -> dict:
        """Serializable session state as of the last *completed* frame (a
        failed frame may already have advanced the tracker, so the snapshot
        taken at frame boundaries is the consistent resume point). Fields
        and masks themselves live in the artifact files already written."""
        return self._last_checkpoint

    def _capture_checkpoint(self) -> dict:
        tracks = []
        for t in self.tracker.tracks:
            tracks.append({
                "track_id": t.track_id,
                "state": t.state.tolist(),
                "covariance": t.covariance.tolist(),
                "age": t.age,
                "hits": t.hits,
                "misses": t.misses,
            })
        explanations = []
        for s in sorted(self.tracked.values(), key=lambda s: s.track_id):
            explanations.append({
                "track_id": s.track_id,
                "bbox": [s.bbox.u_min, s.bbox.v_min, s.bbox.u_max, s.bbox.v_max],
                "bootstrap_frame": s.bootstrap_frame,
                "frames_explained": s.frames_explained,
                "thresholds": s.thresholds,
                "staleness": s.staleness,
                "ended": s.ended,
            })
        return {
            "frames_completed": self.expected_index,
            "next_track_id": self.tracker.ids_issued,
            "tracks": tracks,
            "explanations": explanations,
        }

    def finish(self) -> RunSummary:
        self.close()
        return self.summary

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._pool is not None:
            self._pool.shutdown(wait=True)
        self.detector.close()
