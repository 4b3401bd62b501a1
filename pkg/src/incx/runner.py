"""The library run loop: frames in, artifact tree + summary out.

The HTTP service and the CLI wrap the same session; this module is the
direct (in-process) driver used by tests and by anything embedding the
engine as a library.
"""

from __future__ import annotations

import json
import logging
import os

from . import artifacts
from .config import PipelineConfig
from .detectors import Detector
from .errors import DetectorUnavailable
from .explain import encode_mask_bits, mask_sidecar
from .images import encode_png, open_frame_source
from .pipeline import FrameResult, PipelineSession, RunSummary
from .render import render_overlay
from .saliency import encode_grid, grid_sidecar

log = logging.getLogger("incx.runner")

CHECKPOINT_NAME = "checkpoint.json"


def write_frame_outputs(out_dir: str, result: FrameResult, config: PipelineConfig,
                        report: artifacts.ReportWriter | None,
                        frame_img=None) -> None:
    out_cfg = config.output
    for output in result.outputs:
        if out_cfg.fields:
            artifacts.write_payload_with_sidecar(
                artifacts.grid_path(out_dir, result.index, output.track_id),
                encode_grid(output.field),
                grid_sidecar(output.field, result.index, output.track_id))
        if out_cfg.masks:
            artifacts.write_payload_with_sidecar(
                artifacts.mask_path(out_dir, result.index, output.track_id),
                encode_mask_bits(output.mask.bits),
                mask_sidecar(output.mask, result.index, output.track_id))
        if out_cfg.overlays and frame_img is not None:
            overlay = render_overlay(frame_img, output.field, output.mask,
                                     output.bbox)
            artifacts.write_bytes(
                artifacts.overlay_path(out_dir, result.index, output.track_id),
                encode_png(overlay))
        if report is not None and output.metrics is not None:
            report.write_row(output.metrics.as_row(result.index, output.track_id))


def run(config: PipelineConfig, frames: str, out_dir: str,
        detector: Detector | None = None) -> RunSummary:
    """Process every frame from ``frames`` (directory or raw stream) and
    write fields, masks, overlays, the metric report and a run summary
    under ``out_dir``."""
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    artifacts.ensure_out_dirs(out_dir)
    report_path = config.output.report_path or os.path.join(
        out_dir, artifacts.REPORT_NAME)

    session = PipelineSession(config, detector=detector)
    report = artifacts.ReportWriter(report_path, config.output.csv_mirror)
    try:
        for index, img in open_frame_source(frames):
            result = session.process_frame(img, index)
            write_frame_outputs(out_dir, result, config, report, frame_img=img)
    except DetectorUnavailable:
        # leave a resumable checkpoint next to the artifacts already emitted
        checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
        with open(checkpoint_path, "w", encoding="utf-8") as fh:
            json.dump(session.checkpoint(), fh, indent=2)
            fh.write("\n")
        log.error("detector unavailable; checkpoint written to %s",
                  checkpoint_path)
        raise
    finally:
        report.close()
        summary = session.finish()

    artifacts.write_summary(out_dir, summary.as_dict())
    log.info("processed %d frames, %d tracks, %d bootstraps",
             summary.frames, summary.tracks, summary.bootstraps)
    return summary
