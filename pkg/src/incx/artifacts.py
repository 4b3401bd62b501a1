"""Artifact writers shared by the library runner and the thin-client CLI.

Both paths funnel through the same byte encoders, so a run driven through
the HTTP service writes files byte-identical to a library run.
"""

from __future__ import annotations

import csv
import json
import os

from .explain import MASK_SUFFIX, SIDECAR_SUFFIX
from .saliency import GRID_SUFFIX

REPORT_NAME = "report.ndjson"
SUMMARY_NAME = "summary.json"

REPORT_COLUMNS = ("frame", "track_id", "insertion", "deletion", "epg", "ep",
                  "cc", "ssim", "ji", "dc", "detector_calls", "wall_ms")


def artifact_stem(frame_index: int, track_id: int) -> str:
    return f"frame{frame_index:05d}_track{track_id:04d}"


def grid_path(out_dir: str, frame_index: int, track_id: int) -> str:
    return os.path.join(out_dir, "fields",
                        artifact_stem(frame_index, track_id) + GRID_SUFFIX)


def mask_path(out_dir: str, frame_index: int, track_id: int) -> str:
    return os.path.join(out_dir, "masks",
                        artifact_stem(frame_index, track_id) + MASK_SUFFIX)


def overlay_path(out_dir: str, frame_index: int, track_id: int) -> str:
    return os.path.join(out_dir, "overlays",
                        artifact_stem(frame_index, track_id) + ".png")


def ensure_out_dirs(out_dir: str) -> None:
    for sub in ("fields", "masks", "overlays"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)


def write_payload_with_sidecar(path: str, payload: bytes, sidecar: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)
    with open(path + SIDECAR_SUFFIX, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def write_bytes(path: str, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)


class ReportWriter:
    """Streaming NDJSON metric report, with an optional CSV mirror."""

    def __init__(self, path: str, csv_mirror: bool = False):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")
        self._csv_fh = None
        self._csv = None
        if csv_mirror:
            self._csv_fh = open(os.path.splitext(path)[0] + ".csv", "w",
                                encoding="utf-8", newline="")
            self._csv = csv.DictWriter(self._csv_fh, fieldnames=REPORT_COLUMNS)
            self._csv.writeheader()

    def write_row(self, row: dict) -> None:
        self._fh.write(json.dumps(row))
        self._fh.write("\n")
        if self._csv is not None:
            self._csv.writerow({k: row.get(k) for k in REPORT_COLUMNS})

    def close(self) -> None:
        self._fh.close()
        if self._csv_fh is not None:
            self._csv_fh.close()

    def __enter__(self) -> "ReportWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_summary(out_dir: str, summary: dict) -> str:
    path = os.path.join(out_dir, SUMMARY_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return path
