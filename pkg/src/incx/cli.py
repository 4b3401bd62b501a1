"""Thin-client CLI.

Every subcommand talks to the HTTP service: against a remote engine when
``--server`` is given, otherwise against an in-process instance of the app
(same code path, same validation). The client side only marshals files to
payloads and payloads back to files.

Exit codes: 0 ok, 2 config error, 3 detector error, 4 I/O error.
"""

from __future__ import annotations

import base64
import json
import os
import sys

import click

from . import __version__, artifacts
from .config import config_from_dict
from .errors import ConfigError, DetectorUnavailable, IncxError, InputOutputError, ProtocolError
from .images import Image, load_frame, open_frame_source

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DETECTOR = 3
EXIT_IO = 4


def _fail(code: int, kind: str, message: str) -> None:
    error = {"error": {"code": code, "kind": kind, "message": message}}
    click.echo(json.dumps(error), err=True)
    sys.exit(code)


def make_client(server: str | None):
    """An httpx-compatible client: remote when a base URL is given, an
    in-process ASGI client otherwise."""
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        # starlette warns about its httpx-based test client at import time;
        # irrelevant noise for the in-process transport
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _check(resp) -> dict:
    if resp.status_code < 400:
        return resp.json()
    try:
        body = resp.json()
    except ValueError:
        body = {"error": {"message": resp.text}}
    message = json.dumps(body)
    if resp.status_code == 502:
        _fail(EXIT_DETECTOR, "detector", message)
    _fail(EXIT_CONFIG, "config", message)
    raise AssertionError("unreachable")


def _image_payload(img: Image) -> dict:
    return {"width": img.width, "height": img.height,
            "b64": base64.b64encode(img.to_bytes()).decode("ascii")}


def _parse_bootstrap_knob(text: str) -> dict:
    """``masks=N,grid=RxC,p=P,seed=S`` (any subset) to a bootstrap block."""
    out: dict = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad --bootstrap entry {part!r}")
        key, value = part.split("=", 1)
        key = key.strip()
        if key == "masks":
            out["n_masks"] = int(value)
        elif key == "grid":
            rows, _, cols = value.partition("x")
            out["grid"] = [int(rows), int(cols)]
        elif key == "p":
            out["p"] = float(value)
        elif key == "seed":
            out["seed"] = int(value)
        else:
            raise ConfigError(f"unknown --bootstrap key {key!r}")
    return out


def _load_config_doc(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return doc


def _set_nested(doc: dict, section: str, key: str, value) -> None:
    doc.setdefault(section, {})[key] = value


def _assemble_config(config_path, detector, seed, compare_drise, curves,
                     bootstrap, overlays, timing, report, workers) -> dict:
    doc = _load_config_doc(config_path)
    if detector is not None:
        _set_nested(doc, "detector", "kind", detector)
    if seed is not None:
        doc["seed"] = seed
    if compare_drise:
        _set_nested(doc, "metrics", "compare_drise", True)
    if curves is not None:
        _set_nested(doc, "metrics", "curves", curves)
    if bootstrap is not None:
        for key, value in _parse_bootstrap_knob(bootstrap).items():
            _set_nested(doc, "bootstrap", key, value)
    if overlays is not None:
        _set_nested(doc, "output", "overlays", overlays)
    if timing is not None:
        _set_nested(doc, "output", "include_timing", timing)
    if report is not None:
        _set_nested(doc, "output", "report_path", report)
    if workers is not None:
        doc["workers"] = workers
    config_from_dict(doc)  # validate locally for a fast, clear failure
    return doc


def _read_grid_payload(path: str) -> dict:
    sidecar = path + ".json"
    if not os.path.exists(path) or not os.path.exists(sidecar):
        raise InputOutputError(f"grid {path} (or its sidecar) does not exist")
    with open(path, "rb") as fh:
        b64 = base64.b64encode(fh.read()).decode("ascii")
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    return {"b64": b64, "meta": meta}


def _read_mask_payload(path: str) -> dict:
    return _read_grid_payload(path)  # same layout: payload + sidecar


def _parse_bbox(text: str | None):
    if text is None:
        return None
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ConfigError(f"bbox must be u0,v0,u1,v1 — got {text!r}")
    return parts


@click.group()
@click.version_option(version=__version__, prog_name="incx")
def main() -> None:
    """Incremental explanations for black-box object detectors."""


@main.command("run")
@click.option("--frames", required=True, help="Frame directory or raw stream file.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--detector", default=None,
              help="synthetic:rectangle | synthetic:topk | cmd")
@click.option("--config", "config_path", default=None, help="JSON config file.")
@click.option("--compare-drise", is_flag=True, default=False,
              help="Recompute the reference explainer per frame and report "
                   "field/mask similarity.")
@click.option("--curves/--no-curves", default=None,
              help="Insertion/deletion curves (many detector calls).")
@click.option("--report", default=None, help="Metric report path (NDJSON).")
@click.option("--seed", type=int, default=None)
@click.option("--bootstrap", default=None, help="masks=N,grid=RxC,p=P,seed=S")
@click.option("--overlays/--no-overlays", default=None)
@click.option("--timing/--no-timing", default=None,
              help="Include wall-clock in report rows (off for byte-stable runs).")
@click.option("--workers", type=int, default=None)
@click.option("--server", default=None, help="Remote engine base URL.")
def run_cmd(frames, out_dir, detector, config_path, compare_drise, curves,
            report, seed, bootstrap, overlays, timing, workers, server) -> None:
    """Process a frame sequence and write all artifacts."""
    try:
        config_doc = _assemble_config(config_path, detector, seed,
                                      compare_drise, curves, bootstrap,
                                      overlays, timing, report, workers)
    except ConfigError as e:
        _fail(EXIT_CONFIG, "config", str(e))

    try:
        frame_iter = open_frame_source(frames)
    except InputOutputError as e:
        _fail(EXIT_IO, "io", str(e))

    os.makedirs(out_dir, exist_ok=True)
    artifacts.ensure_out_dirs(out_dir)
    report_path = report or os.path.join(out_dir, artifacts.REPORT_NAME)
    csv_mirror = bool(config_doc.get("output", {}).get("csv_mirror", False))

    client = make_client(server)
    session_id = None
    try:
        created = _check(client.post("/sessions", json={"config": config_doc}))
        session_id = created["session_id"]
        with artifacts.ReportWriter(report_path, csv_mirror) as report_writer:
            for index, img in frame_iter:
                resp = client.post(
                    f"/sessions/{session_id}/frames",
                    json={"index": index, "image": _image_payload(img)})
                if resp.status_code == 502:
                    _write_checkpoint(client, session_id, out_dir)
                _write_frame_payloads(out_dir, _check(resp), report_writer)
        closed = _check(client.post(f"/sessions/{session_id}/close"))
        session_id = None
        summary = closed["summary"]
        artifacts.write_summary(out_dir, summary)
        click.echo(json.dumps(summary))
    except InputOutputError as e:
        _fail(EXIT_IO, "io", str(e))
    finally:
        if session_id is not None:
            client.post(f"/sessions/{session_id}/close")
        client.close()


def _write_checkpoint(client, session_id: str, out_dir: str) -> None:
    """Pull the session's resumable state before reporting a detector
    failure."""
    resp = client.get(f"/sessions/{session_id}/checkpoint")
    if resp.status_code < 400:
        path = os.path.join(out_dir, "checkpoint.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(resp.json(), fh, indent=2)
            fh.write("\n")
        click.echo(json.dumps({"checkpoint": path}), err=True)


def _write_frame_payloads(out_dir: str, resp: dict,
                          report_writer: artifacts.ReportWriter) -> None:
    index = resp["index"]
    for out in resp["outputs"]:
        track_id = out["track_id"]
        if out.get("field"):
            artifacts.write_payload_with_sidecar(
                artifacts.grid_path(out_dir, index, track_id),
                base64.b64decode(out["field"]["b64"]),
                out["field"]["meta"])
        if out.get("mask"):
            artifacts.write_payload_with_sidecar(
                artifacts.mask_path(out_dir, index, track_id),
                base64.b64decode(out["mask"]["b64"]),
                out["mask"]["meta"])
        if out.get("overlay_png_b64"):
            artifacts.write_bytes(
                artifacts.overlay_path(out_dir, index, track_id),
                base64.b64decode(out["overlay_png_b64"]))
        if out.get("metrics") is not None:
            report_writer.write_row(out["metrics"])


@main.command("drise")
@click.option("--image", "image_path", required=True)
@click.option("--out", "out_path", required=True,
              help="Saliency grid output path.")
@click.option("--detector", default=None)
@click.option("--config", "config_path", default=None)
@click.option("--bootstrap", default=None, help="masks=N,grid=RxC,p=P,seed=S")
@click.option("--target-index", type=int, default=0)
@click.option("--dump-masks", "dump_masks_dir", default=None,
              help="Also write every occlusion mask to this directory.")
@click.option("--server", default=None)
def drise_cmd(image_path, out_path, detector, config_path, bootstrap,
              target_index, dump_masks_dir, server) -> None:
    """One-shot bootstrap saliency for a single image."""
    try:
        doc = _assemble_config(config_path, detector, None, False, None,
                               bootstrap, None, None, None, None)
        img = load_frame(image_path)
    except ConfigError as e:
        _fail(EXIT_CONFIG, "config", str(e))
    except InputOutputError as e:
        _fail(EXIT_IO, "io", str(e))

    payload = {"image": _image_payload(img), "target_index": target_index,
               "dump_masks": dump_masks_dir is not None}
    if "detector" in doc:
        payload["detector"] = doc["detector"]
    if "bootstrap" in doc:
        payload["bootstrap"] = doc["bootstrap"]

    client = make_client(server)
    try:
        resp = _check(client.post("/drise", json=payload))
        artifacts.write_payload_with_sidecar(
            out_path, base64.b64decode(resp["field"]["b64"]),
            resp["field"]["meta"])
        if dump_masks_dir is not None:
            os.makedirs(dump_masks_dir, exist_ok=True)
            for i, mask in enumerate(resp.get("masks") or []):
                artifacts.write_payload_with_sidecar(
                    os.path.join(dump_masks_dir, f"mask{i:04d}.sal"),
                    base64.b64decode(mask["b64"]), mask["meta"])
        click.echo(json.dumps({"detections": resp["detections"],
                               "detector_calls": resp["detector_calls"],
                               "field": out_path}))
    finally:
        client.close()


@main.command("metrics")
@click.option("--field-a", default=None, help="Stored saliency grid.")
@click.option("--field-b", default=None)
@click.option("--mask-a", default=None, help="Stored explanation mask.")
@click.option("--mask-b", default=None)
@click.option("--bbox", default=None, help="u0,v0,u1,v1 for EPG of field A.")
@click.option("--server", default=None)
def metrics_cmd(field_a, field_b, mask_a, mask_b, bbox, server) -> None:
    """Re-score stored fields/masks (CC/SSIM, JI/DC, EPG, EP)."""
    try:
        payload: dict = {}
        if field_a:
            payload["field_a"] = _read_grid_payload(field_a)
        if field_b:
            payload["field_b"] = _read_grid_payload(field_b)
        if mask_a:
            payload["mask_a"] = _read_mask_payload(mask_a)
        if mask_b:
            payload["mask_b"] = _read_mask_payload(mask_b)
        box = _parse_bbox(bbox)
        if box is not None:
            payload["bbox"] = box
    except ConfigError as e:
        _fail(EXIT_CONFIG, "config", str(e))
    except InputOutputError as e:
        _fail(EXIT_IO, "io", str(e))

    client = make_client(server)
    try:
        resp = _check(client.post("/metrics/compare", json=payload))
        click.echo(json.dumps(resp))
    finally:
        client.close()


@main.command("render")
@click.option("--image", "image_path", required=True)
@click.option("--field", "field_path", default=None)
@click.option("--mask", "mask_path", default=None)
@click.option("--bbox", default=None, help="u0,v0,u1,v1")
@click.option("--out", "out_path", required=True)
@click.option("--server", default=None)
def render_cmd(image_path, field_path, mask_path, bbox, out_path, server) -> None:
    """Render a heatmap/mask/box overlay from stored artifacts."""
    try:
        img = load_frame(image_path)
        payload: dict = {"image": _image_payload(img)}
        if field_path:
            payload["field"] = _read_grid_payload(field_path)
        if mask_path:
            payload["mask"] = _read_mask_payload(mask_path)
        box = _parse_bbox(bbox)
        if box is not None:
            payload["bbox"] = box
    except ConfigError as e:
        _fail(EXIT_CONFIG, "config", str(e))
    except InputOutputError as e:
        _fail(EXIT_IO, "io", str(e))

    client = make_client(server)
    try:
        resp = _check(client.post("/render", json=payload))
        artifacts.write_bytes(out_path, base64.b64decode(resp["png_b64"]))
        click.echo(json.dumps({"overlay": out_path}))
    finally:
        client.close()


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve_cmd(host, port) -> None:
    """Run the engine as an HTTP service."""
    import uvicorn

    uvicorn.run("incx.service:app", host=host, port=port, log_level="info")


def entrypoint() -> None:  # pragma: no cover - console-script shim
    try:
        main(standalone_mode=True)
    except IncxError as e:
        if isinstance(e, (DetectorUnavailable, ProtocolError)):
            _fail(EXIT_DETECTOR, "detector", str(e))
        if isinstance(e, InputOutputError):
            _fail(EXIT_IO, "io", str(e))
        _fail(EXIT_CONFIG, "config", str(e))


if __name__ == "__main__":
    entrypoint()
