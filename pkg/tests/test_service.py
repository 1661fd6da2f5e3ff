"""HTTP job API: lifecycle, validation codes, determinism, persistence."""

import base64
import io
import json
import time

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from outpaintkit import (
    GeneratorConfig,
    GridSpec,
    PatchGenerator,
    estimate_prior,
    image_sha256,
    save_generator,
    save_prior,
)
from outpaintkit.data import image_to_png_bytes, png_bytes_to_image
from outpaintkit.service import create_app

GRID = GridSpec(n=2, patch_h=8, patch_w=8)


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, tiny_generator, tiny_stats, tiny_categorical_generator):
    root = tmp_path_factory.mktemp("models")
    plain = root / "plain"
    save_generator(plain / "generator.zip", tiny_generator)
    save_prior(plain / "prior.npz", tiny_stats)
    cat = root / "toy-cat"
    save_generator(cat / "generator.zip", tiny_categorical_generator)
    save_prior(cat / "prior.npz", estimate_prior(tiny_categorical_generator, 1000, seed=9))
    return root


@pytest.fixture()
def client(model_dir, tmp_path):
    app = create_app(model_dir, run_dir=tmp_path / "runs", workers=2)
    with TestClient(app) as c:
        yield c


def b64_png(image: np.ndarray) -> str:
    return base64.b64encode(image_to_png_bytes(image)).decode("ascii")


def reference_image(seed: int = 30, shape=(3, 16, 8)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.9, 0.9, size=shape).astype(np.float32)


def outpaint_body(**payload_overrides):
    payload = {
        "reference_png": b64_png(reference_image()),
        "direction": "right",
        "m": 2,
        "steps": 5,
        "seed": 1,
    }
    payload.update(payload_overrides)
    return {"kind": "outpaint", "model": "plain", "payload": payload}


def wait_done(client, job_id, timeout=60.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["status"] in ("done", "failed"):
            return status
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish")


# --- discovery endpoints ---


def test_models_endpoint(client):
    body = client.get("/models").json()
    names = [m["name"] for m in body["models"]]
    assert set(names) == {"plain", "toy-cat"}
    assert body["default"] == "plain"
    assert body["api_version"] == "1"
    cat = next(m for m in body["models"] if m["name"] == "toy-cat")
    assert cat["categorical"] is True and len(cat["class_names"]) == 8


def test_categories_endpoint(client):
    body = client.get("/categories", params={"model": "toy-cat"}).json()
    assert body["categorical"] is True
    assert body["grid_n"] == 2
    assert body["classes"][0] == {"index": 0, "name": "background"}
    assert len(body["classes"]) == 8
    plain = client.get("/categories", params={"model": "plain"}).json()
    assert plain["categorical"] is False and plain["classes"] == []


# --- lifecycle ---


def test_full_job_lifecycle(client):
    body = outpaint_body()
    created = client.post("/jobs", json=body)
    assert created.status_code == 201
    job_id = created.json()["id"]
    assert created.json()["status"] == "queued"

    status = wait_done(client, job_id)
    assert status["status"] == "done"
    assert status["progress"] == 1.0
    assert len(status["results"]) == 2
    assert status["report"]["known_cells"] == [[1, 1], [1, 2]]
    # report hashes the reference exactly as uploaded
    decoded = png_bytes_to_image(base64.b64decode(body["payload"]["reference_png"]))
    assert status["report"]["reference_sha256"] == image_sha256(torch.as_tensor(decoded))
    # loss trace tail carries the per-term inversion history
    assert "percept" in status["loss_trace"] and "total" in status["loss_trace"]
    assert len(status["loss_trace"]["total"]) >= 1

    for k in range(2):
        png = client.get(f"/jobs/{job_id}/results/{k}")
        assert png.status_code == 200
        assert png.headers["content-type"] == "image/png"
        image = png_bytes_to_image(png.content)
        assert image.shape == (3, 16, 16)
    assert client.get(f"/jobs/{job_id}/results/2").status_code == 404


def test_identical_payloads_identical_pixels(client):
    body = outpaint_body(seed=5)
    first = client.post("/jobs", json=body).json()["id"]
    second = client.post("/jobs", json=body).json()["id"]
    assert wait_done(client, first)["status"] == "done"
    assert wait_done(client, second)["status"] == "done"
    for k in range(2):
        a = client.get(f"/jobs/{first}/results/{k}").content
        b = client.get(f"/jobs/{second}/results/{k}").content
        assert a == b


def test_panorama_step_returns_canvas_candidates(client):
    body = {
        "kind": "panorama_step",
        "model": "plain",
        "payload": {
            "reference_png": b64_png(reference_image(31, (3, 16, 16))),
            "direction": "right",
            "m": 2,
            "steps": 4,
            "seed": 2,
        },
    }
    job_id = client.post("/jobs", json=body).json()["id"]
    status = wait_done(client, job_id)
    assert status["status"] == "done"
    image = png_bytes_to_image(client.get(f"/jobs/{job_id}/results/0").content)
    assert image.shape == (3, 16, 16)
    # the hash covers the full uploaded canvas, not the strip sliced from it
    decoded = png_bytes_to_image(base64.b64decode(body["payload"]["reference_png"]))
    assert status["report"]["reference_sha256"] == image_sha256(torch.as_tensor(decoded))


def test_evaluate_job(client):
    rng = np.random.default_rng(32)
    pngs = [
        b64_png(rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)) for _ in range(10)
    ]
    body = {
        "kind": "evaluate",
        "payload": {"real_pngs": pngs, "fake_pngs": pngs, "d_f": 4},
    }
    job_id = client.post("/jobs", json=body).json()["id"]
    status = wait_done(client, job_id)
    assert status["status"] == "done"
    assert abs(status["report"]["fid"]) <= 1e-6
    assert status["report"]["sample_count"] == 10


def test_categorical_job_runs(client):
    body = {
        "kind": "outpaint",
        "model": "toy-cat",
        "payload": {
            "reference_png": b64_png(reference_image()),
            "direction": "right",
            "m": 1,
            "steps": 3,
            "seed": 3,
            "categories": {"2,1": ["tower"], "2,2": ["water", "terrain"]},
        },
    }
    job_id = client.post("/jobs", json=body).json()["id"]
    assert wait_done(client, job_id)["status"] == "done"


# --- validation errors ---


def test_unknown_class_name_echoed(client):
    body = {
        "kind": "outpaint",
        "model": "toy-cat",
        "payload": {
            "reference_png": b64_png(reference_image()),
            "m": 1,
            "categories": {"2,1": ["dragon"]},
        },
    }
    response = client.post("/jobs", json=body)
    assert response.status_code == 422
    assert "dragon" in response.json()["detail"]


def test_invalid_m_rejected(client):
    response = client.post("/jobs", json=outpaint_body(m=0))
    assert response.status_code == 422
    assert "m" in response.json()["detail"]


def test_bad_mask_rejected(client):
    wrong = np.zeros((4, 4), dtype=np.uint8)
    buf = io.BytesIO()
    from PIL import Image

    Image.fromarray(wrong, mode="L").save(buf, format="PNG")
    body = outpaint_body(reference_mask_png=base64.b64encode(buf.getvalue()).decode())
    response = client.post("/jobs", json=body)
    assert response.status_code == 422
    assert "mask" in response.json()["detail"]


def test_undecodable_reference_rejected(client):
    response = client.post("/jobs", json=outpaint_body(reference_png="not-base64!"))
    assert response.status_code == 422


def test_unknown_kind_and_model_rejected(client):
    assert client.post("/jobs", json={"kind": "sing", "payload": {}}).status_code == 422
    body = outpaint_body()
    body["model"] = "missing"
    response = client.post("/jobs", json=body)
    assert response.status_code == 422
    assert "missing" in response.json()["detail"]


def test_api_version_mismatch_rejected(client):
    body = outpaint_body()
    body["api_version"] = "99"
    assert client.post("/jobs", json=body).status_code == 422


def test_unknown_job_404(client):
    assert client.get("/jobs/nope").status_code == 404
    assert client.get("/jobs/nope/results/0").status_code == 404
    assert client.post("/jobs/nope/cancel").status_code == 404


def test_cancel_finished_job_conflict(client):
    job_id = client.post("/jobs", json=outpaint_body(m=1, steps=2)).json()["id"]
    wait_done(client, job_id)
    response = client.post(f"/jobs/{job_id}/cancel")
    assert response.status_code == 409


def test_cancel_running_job(client):
    job_id = client.post("/jobs", json=outpaint_body(m=1, steps=400)).json()["id"]
    # let it enter the pool, then cancel
    time.sleep(0.05)
    response = client.post(f"/jobs/{job_id}/cancel")
    assert response.status_code == 200
    status = wait_done(client, job_id)
    assert status["status"] == "failed"
    assert status["error"] == "cancelled"


# --- persistence ---


def test_jobs_survive_restart_as_history(model_dir, tmp_path):
    run_dir = tmp_path / "runs"
    app = create_app(model_dir, run_dir=run_dir, workers=1)
    with TestClient(app) as client:
        job_id = client.post("/jobs", json=outpaint_body(m=1, steps=3)).json()["id"]
        wait_done(client, job_id)
        png = client.get(f"/jobs/{job_id}/results/0").content

    fresh = create_app(model_dir, run_dir=run_dir, workers=1)
    with TestClient(fresh) as client:
        status = client.get(f"/jobs/{job_id}").json()
        assert status["status"] == "done"
        assert client.get(f"/jobs/{job_id}/results/0").content == png


def test_interrupted_job_marked_failed(model_dir, tmp_path):
    run_dir = tmp_path / "runs"
    app = create_app(model_dir, run_dir=run_dir, workers=1)
    with TestClient(app) as client:
        job_id = client.post("/jobs", json=outpaint_body(m=1, steps=2000)).json()["id"]
        time.sleep(0.1)  # let it persist a running snapshot
    # simulate a crash: rebuild the service over the same run dir while the
    # persisted snapshot still says queued/running
    fresh = create_app(model_dir, run_dir=run_dir, workers=1)
    with TestClient(fresh) as client:
        status = client.get(f"/jobs/{job_id}").json()
        assert status["status"] == "failed"
        assert "interrupted" in status["error"]
