"""Minimal scriptable bridge for exercising the wire-protocol client.

Modes (argv[1]):
  echo       detections derived deterministically from the image bytes
  error      every detect request answered with an error message
  mismatch   responses carry a wrong id
  fragment   valid responses written in two chunks with separate flushes
  die        exits after the handshake
"""

import base64
import hashlib
import json
import sys


def reply(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")))
    sys.stdout.write("\n")
    sys.stdout.flush()


def detections_for(image):
    data = base64.b64decode(image["b64"])
    digest = hashlib.sha256(data).digest()
    u0 = digest[0] % 8
    v0 = digest[1] % 8
    objectness = round(0.5 + (digest[2] % 50) / 100.0, 2)
    return [{
        "bbox": [u0, v0, u0 + 4, v0 + 4],
        "objectness": objectness,
        "probs": [0.05, 0.8, 0.1, 0.05],
    }]


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "echo"
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        if msg.get("type") == "hello":
            reply({"type": "hello", "classes": ["a", "b", "c", "d"]})
            if mode == "die":
                return
            continue
        if msg.get("type") != "detect":
            reply({"type": "error", "id": msg.get("id", -1),
                   "message": "unknown type"})
            continue
        rid = msg["id"]
        if mode == "error":
            reply({"type": "error", "id": rid, "message": "scripted failure"})
            continue
        response = {"type": "detections",
                    "id": rid + 1 if mode == "mismatch" else rid,
                    "items": detections_for(msg["image"])}
        if mode == "fragment":
            text = json.dumps(response, separators=(",", ":")) + "\n"
            half = len(text) // 2
            sys.stdout.write(text[:half])
            sys.stdout.flush()
            sys.stdout.write(text[half:])
            sys.stdout.flush()
        else:
            reply(response)


if __name__ == "__main__":
    main()
