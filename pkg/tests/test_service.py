import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from incx.config import config_from_dict
from incx.explain import ExplanationMask, encode_mask_bits, mask_sidecar
from incx.geometry import BBox
from incx.images import Image, encode_png
from incx.metrics import dice, epg, jaccard, pearson_cc, ssim
from incx.pipeline import PipelineSession
from incx.render import render_overlay
from incx.saliency import SaliencyField, encode_grid, grid_sidecar, normalize
from incx.service import create_app
from scenes import RECT_COLOR, rect_at, rect_pixel_count, render_rect_frame


@pytest.fixture
def client():
    with TestClient(create_app()) as c:
        yield c


def image_payload(img: Image) -> dict:
    return {"width": img.width, "height": img.height,
            "b64": base64.b64encode(img.to_bytes()).decode("ascii")}


def scenario_doc(expected_area, n_masks=48):
    return {
        "seed": 3,
        "detector": {"kind": "synthetic:rectangle", "color": list(RECT_COLOR),
                     "class_id": 1, "theta": 0.3,
                     "expected_area": expected_area},
        "bootstrap": {"n_masks": n_masks, "grid": [4, 4], "p": 0.5},
        "output": {"include_timing": False},
    }


def grid_payload(field, frame_index=0, track_id=0):
    return {"b64": base64.b64encode(encode_grid(field)).decode("ascii"),
            "meta": grid_sidecar(field, frame_index, track_id)}


def mask_payload(mask, frame_index=0, track_id=0):
    return {"b64": base64.b64encode(encode_mask_bits(mask.bits)).decode("ascii"),
            "meta": mask_sidecar(mask, frame_index, track_id)}


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_session_lifecycle_matches_library(client):
    rect = rect_at(12.0, 14.0, 10.0, 8.0)
    frames = [render_rect_frame(32, 32, rect) for _ in range(3)]
    area = rect_pixel_count(32, 32, rect)
    doc = scenario_doc(area)

    created = client.post("/sessions", json={"config": doc})
    assert created.status_code == 200
    session_id = created.json()["session_id"]
    assert created.json()["classes"] == ["square", "disc", "bar", "stripe"]

    library = PipelineSession(config_from_dict(doc))
    for i, img in enumerate(frames):
        resp = client.post(f"/sessions/{session_id}/frames",
                           json={"index": i, "image": image_payload(img)})
        assert resp.status_code == 200, resp.text
        body = resp.json()
        lib_result = library.process_frame(img, i)
        assert len(body["outputs"]) == len(lib_result.outputs) == 1
        out = body["outputs"][0]
        lib_out = lib_result.outputs[0]
        assert out["track_id"] == lib_out.track_id
        assert base64.b64decode(out["field"]["b64"]) == encode_grid(lib_out.field)
        assert base64.b64decode(out["mask"]["b64"]) == encode_mask_bits(lib_out.mask.bits)
        assert out["metrics"] == lib_out.metrics.as_row(i, lib_out.track_id)
        assert out["field"]["meta"] == grid_sidecar(lib_out.field, i,
                                                    lib_out.track_id)

    info = client.get(f"/sessions/{session_id}").json()
    assert info["frames_processed"] == 3
    assert info["active_tracks"] == 1

    closed = client.post(f"/sessions/{session_id}/close")
    assert closed.status_code == 200
    assert closed.json()["summary"]["frames"] == 3
    assert client.get(f"/sessions/{session_id}").status_code == 404
    library.close()


def test_out_of_order_frame_conflict(client):
    rect = rect_at(12.0, 14.0, 10.0, 8.0)
    img = render_rect_frame(32, 32, rect)
    area = rect_pixel_count(32, 32, rect)
    session_id = client.post(
        "/sessions", json={"config": scenario_doc(area)}).json()["session_id"]
    ok = client.post(f"/sessions/{session_id}/frames",
                     json={"index": 0, "image": image_payload(img)})
    assert ok.status_code == 200
    bad = client.post(f"/sessions/{session_id}/frames",
                      json={"index": 2, "image": image_payload(img)})
    assert bad.status_code == 409
    assert bad.json()["error"]["kind"] == "FrameOrderError"


def test_unknown_session_404(client):
    img = render_rect_frame(8, 8, None)
    resp = client.post("/sessions/deadbeef/frames",
                       json={"index": 0, "image": image_payload(img)})
    assert resp.status_code == 404


def test_semantic_config_error_400(client):
    doc = scenario_doc(100)
    doc["bootstrap"]["p"] = 0.0
    resp = client.post("/sessions", json={"config": doc})
    assert resp.status_code == 400
    assert resp.json()["error"]["kind"] == "ConfigError"


def test_unknown_config_key_422(client):
    resp = client.post("/sessions", json={"config": {"bogus": 1}})
    assert resp.status_code == 422


def test_bad_image_payload_422(client):
    session_id = client.post(
        "/sessions", json={"config": scenario_doc(100)}).json()["session_id"]
    resp = client.post(f"/sessions/{session_id}/frames",
                       json={"index": 0,
                             "image": {"width": 4, "height": 4, "b64": "xx"}})
    assert resp.status_code == 422


def test_drise_endpoint(client):
    rect = rect_at(12.0, 14.0, 10.0, 8.0)
    img = render_rect_frame(32, 32, rect)
    area = rect_pixel_count(32, 32, rect)
    doc = scenario_doc(area, n_masks=32)
    resp = client.post("/drise", json={"image": image_payload(img),
                                       "detector": doc["detector"],
                                       "bootstrap": doc["bootstrap"]})
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert len(body["detections"]) == 1
    assert body["detector_calls"] == 33
    data = base64.b64decode(body["field"]["b64"])
    values = np.frombuffer(data, dtype="<f4").reshape(32, 32)
    assert values.sum() == pytest.approx(1.0, abs=1e-5)


def test_drise_endpoint_nothing_to_explain(client):
    img = render_rect_frame(16, 16, None)
    doc = scenario_doc(100)
    resp = client.post("/drise", json={"image": image_payload(img),
                                       "detector": doc["detector"]})
    assert resp.status_code == 422


def test_metrics_compare_endpoint(client, rng):
    a = normalize(SaliencyField(rng.random((16, 16))))
    b = normalize(SaliencyField(rng.random((16, 16))))
    bits_a = rng.random((16, 16)) < 0.4
    bits_b = rng.random((16, 16)) < 0.4
    mask_a = ExplanationMask(bits=bits_a, threshold=0.1, sufficient=True)
    mask_b = ExplanationMask(bits=bits_b, threshold=0.2, sufficient=True)
    box = (2.0, 2.0, 10.0, 10.0)
    resp = client.post("/metrics/compare", json={
        "field_a": grid_payload(a), "field_b": grid_payload(b),
        "mask_a": mask_payload(mask_a), "mask_b": mask_payload(mask_b),
        "bbox": box})
    assert resp.status_code == 200, resp.text
    body = resp.json()
    # float32 round trip on the grids, so compare against the rounded fields
    a32 = SaliencyField(a.values.astype(np.float32).astype(np.float64))
    b32 = SaliencyField(b.values.astype(np.float32).astype(np.float64))
    assert body["cc"] == pytest.approx(pearson_cc(a32, b32), abs=1e-12)
    assert body["ssim"] == pytest.approx(ssim(a32, b32), abs=1e-12)
    assert body["ji"] == pytest.approx(jaccard(bits_a, bits_b), abs=1e-12)
    assert body["dc"] == pytest.approx(dice(bits_a, bits_b), abs=1e-12)
    assert body["epg"] == pytest.approx(epg(a32, BBox(*box)), abs=1e-12)
    assert body["ep"] == pytest.approx(bits_a.mean(), abs=1e-12)


def test_render_endpoint_matches_library(client, rng):
    rect = rect_at(10.0, 10.0, 8.0, 6.0)
    img = render_rect_frame(24, 24, rect)
    field = normalize(SaliencyField(rng.random((24, 24))))
    bits = rng.random((24, 24)) < 0.3
    mask = ExplanationMask(bits=bits, threshold=0.5, sufficient=True)
    box = (7.0, 8.0, 15.0, 14.0)
    resp = client.post("/render", json={
        "image": image_payload(img), "field": grid_payload(field),
        "mask": mask_payload(mask), "bbox": box})
    assert resp.status_code == 200, resp.text
    got = base64.b64decode(resp.json()["png_b64"])
    field32 = SaliencyField(field.values.astype(np.float32).astype(np.float64),
                            normalized=True)
    expected = encode_png(render_overlay(img, field32, mask, BBox(*box)))
    assert got == expected
