"""Wire-protocol client for external detectors.

The bridge is a child process speaking line-delimited JSON over stdio:

    -> {"type":"hello","version":1}
    <- {"type":"hello","classes":["car", ...]}
    -> {"type":"detect","id":7,"image":{"w":64,"h":64,"b64":"..."}}
    <- {"type":"detections","id":7,"items":[{"bbox":[u0,v0,u1,v1],
        "objectness":0.9,"probs":[...]}]}
    <- {"type":"error","id":7,"message":"..."}   (instead of detections)

Images are base64 of raw row-major RGB24. One request per image; responses
arrive in request order. Request serialization is byte-stable (compact
separators, fixed key order) so transcripts can be golden-tested.
"""

from __future__ import annotations

import base64
import json
import os
import shlex
import subprocess
from typing import Sequence

from ..errors import DetectorUnavailable, ProtocolError
from ..geometry import BBox
from ..images import Image
from .base import Detector, DetectionVector, make_detection

PROTOCOL_VERSION = 1
DETECTOR_CMD_ENV = "INCX_DETECTOR_CMD"


def encode_hello() -> bytes:
    return json.dumps({"type": "hello", "version": PROTOCOL_VERSION},
                      separators=(",", ":")).encode("utf-8")


def encode_detect(request_id: int, img: Image) -> bytes:
    payload = {
        "type": "detect",
        "id": request_id,
        "image": {
            "w": img.width,
            "h": img.height,
            "b64": base64.b64encode(img.to_bytes()).decode("ascii"),
        },
    }
    return json.dumps(payload, separators=(",", ":")).encode("utf-8")


def parse_detection_item(item: dict) -> DetectionVector:
    try:
        u0, v0, u1, v1 = (float(x) for x in item["bbox"])
        objectness = float(item["objectness"])
        probs = [float(p) for p in item["probs"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"malformed detection item {item!r}: {e}") from e
    try:
        return make_detection(BBox(u0, v0, u1, v1), objectness, probs)
    except ValueError as e:
        raise ProtocolError(f"invalid detection values: {e}") from e


class RemoteDetector(Detector):
    """Detector handle backed by a bridge subprocess.

    Safe for one caller at a time; wrap in LockedDetector to share.
    """

    def __init__(self, cmd: str | Sequence[str] | None = None):
        if cmd is None:
            cmd = os.environ.get(DETECTOR_CMD_ENV, "")
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        if not argv:
            raise DetectorUnavailable(
                f"no bridge command given (set {DETECTOR_CMD_ENV} or pass cmd)")
        self._argv = argv
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=None, text=False)
        except OSError as e:
            raise DetectorUnavailable(f"cannot start bridge {argv!r}: {e}") from e
        self._next_id = 0
        self.classes = tuple(self._handshake())

    # -- plumbing -------------------------------------------------------------

    def _send(self, line: bytes) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(line + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise DetectorUnavailable(f"bridge pipe closed: {e}") from e

    def _read_message(self) -> dict:
        assert self._proc.stdout is not None
        while True:
            line = self._proc.stdout.readline()
            if not line:
                code = self._proc.poll()
                raise DetectorUnavailable(
                    f"bridge stream ended (exit code {code})")
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise ProtocolError(f"undecodable bridge message {line!r}: {e}") from e
            if not isinstance(msg, dict) or "type" not in msg:
                raise ProtocolError(f"bridge message without a type: {msg!r}")
            return msg

    def _handshake(self) -> list[str]:
        self._send(encode_hello())
        msg = self._read_message()
        if msg.get("type") != "hello" or "classes" not in msg:
            raise ProtocolError(f"bad handshake response: {msg!r}")
        classes = msg["classes"]
        if (not isinstance(classes, list) or not classes
                or not all(isinstance(c, str) for c in classes)):
            raise ProtocolError(f"bad class vocabulary: {classes!r}")
        return classes

    # -- detector surface -----------------------------------------------------

    def detect(self, img: Image) -> list[DetectionVector]:
        request_id = self._next_id
        self._next_id += 1
        self._send(encode_detect(request_id, img))
        msg = self._read_message()
        if msg.get("type") == "error":
            if msg.get("id") not in (request_id, None):
                raise ProtocolError(
                    f"error for id {msg.get('id')}, expected {request_id}")
            raise ProtocolError(f"bridge error: {msg.get('message')!r}")
        if msg.get("type") != "detections":
            raise ProtocolError(f"unexpected message type {msg.get('type')!r}")
        if msg.get("id") != request_id:
            raise ProtocolError(
                f"response id {msg.get('id')} does not match request {request_id}")
        items = msg.get("items")
        if not isinstance(items, list):
            raise ProtocolError(f"detections without an items list: {msg!r}")
        return [parse_detection_item(item) for item in items]

    def close(self) -> None:
        proc = self._proc
        if proc.poll() is None:
            try:
                if proc.stdin is not None:
                    proc.stdin.close()
                proc.wait(timeout=5.0)
            except (OSError, subprocess.TimeoutExpired):
                proc.kill()
                proc.wait(timeout=5.0)
