"""RGB frames: the in-memory type, masking helpers, and frame sources.

Frames come either from a directory of numbered .png/.ppm files or from a
raw stream file (one JSON header line, then back-to-back RGB24 frames).
There is deliberately no video-codec dependency; decoding happens upstream.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from PIL import Image as PILImage

from .errors import InputOutputError

RAW_STREAM_MAGIC = "incx-raw"
OCCLUSION_BASELINE = 0  # black, matching the insertion metric's starting image


@dataclass
class Image:
    """An 8-bit RGB frame, pixels shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixels, got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "Image":
        expected = width * height * 3
        if len(data) != expected:
            raise InputOutputError(
                f"image payload is {len(data)} bytes, expected {expected} "
                f"for {width}x{height}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3))

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


def occlude_except(img: Image, keep: np.ndarray) -> Image:
    """Keep the pixels where ``keep`` is true, set the rest to the black
    occlusion baseline."""
    out = np.where(keep[:, :, None], img.pixels, np.uint8(OCCLUSION_BASELINE))
    return Image(out)


def apply_soft_mask(img: Image, mask: np.ndarray) -> Image:
    """Elementwise product with a fractional [0,1] mask over the black
    baseline (round-half-even quantization back to 8 bit)."""
    out = np.rint(img.pixels.astype(np.float64) * mask[:, :, None])
    return Image(out.astype(np.uint8))


# -- frame sources ------------------------------------------------------------

_FRAME_FILE = re.compile(r"^(\d+)\.(png|ppm)$", re.IGNORECASE)


def load_frame(path: str) -> Image:
    try:
        with PILImage.open(path) as im:
            rgb = im.convert("RGB")
            return Image(np.asarray(rgb, dtype=np.uint8))
    except OSError as e:
        raise InputOutputError(f"cannot read frame {path}: {e}") from e


def save_png(path: str, img: Image) -> None:
    PILImage.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def encode_png(img: Image) -> bytes:
    import io

    buf = io.BytesIO()
    PILImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def iter_frame_dir(directory: str) -> Iterator[tuple[int, Image]]:
    """Frames from numbered image files, ordered by their numeric stem."""
    try:
        entries = os.listdir(directory)
    except OSError as e:
        raise InputOutputError(f"cannot list frame directory {directory}: {e}") from e
    numbered = []
    for name in entries:
        m = _FRAME_FILE.match(name)
        if m:
            numbered.append((int(m.group(1)), name))
    if not numbered:
        raise InputOutputError(f"no frames (NNN.png / NNN.ppm) in {directory}")
    numbered.sort()
    for index, (_, name) in enumerate(numbered):
        yield index, load_frame(os.path.join(directory, name))


def iter_raw_stream(path: str) -> Iterator[tuple[int, Image]]:
    """Frames from a raw stream: a JSON header line, then RGB24 planes."""
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise InputOutputError(f"cannot open raw stream {path}: {e}") from e
    with fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise InputOutputError(f"bad raw stream header in {path}: {e}") from e
        if header.get("type") != RAW_STREAM_MAGIC:
            raise InputOutputError(
                f"raw stream {path} has type {header.get('type')!r}, "
                f"expected {RAW_STREAM_MAGIC!r}")
        width = int(header["width"])
        height = int(header["height"])
        frame_bytes = width * height * 3
        index = 0
        while True:
            data = fh.read(frame_bytes)
            if not data:
                break
            if len(data) != frame_bytes:
                raise InputOutputError(
                    f"raw stream {path} ends with a partial frame "
                    f"({len(data)} of {frame_bytes} bytes)")
            yield index, Image.from_bytes(width, height, data)
            index += 1
        if index == 0:
            raise InputOutputError(f"raw stream {path} contains no frames")


def write_raw_stream(path: str, frames: list[Image]) -> None:
    if not frames:
        raise InputOutputError("refusing to write an empty raw stream")
    header = {"type": RAW_STREAM_MAGIC, "version": 1,
              "width": frames[0].width, "height": frames[0].height}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for img in frames:
            fh.write(img.to_bytes())


def open_frame_source(path: str) -> Iterator[tuple[int, Image]]:
    """Directory of numbered images, or a raw stream file."""
    if os.path.isdir(path):
        return iter_frame_dir(path)
    if os.path.isfile(path):
        return iter_raw_stream(path)
    raise InputOutputError(f"frame source {path} does not exist")
