"""Asynchronous job service over the outpainting library.

HTTP handlers never compute: POST /jobs validates, persists and enqueues;
a small FIFO worker pool executes. Job state lives on the filesystem under
the run directory, one subdirectory per job id, so a restart can list
historical jobs. Images cross the API as PNG (base64 inside JSON bodies,
raw bytes on result downloads).

State machine: queued -> running -> {done, failed}. Nothing else. Results
are write-once; cancelling a finished job is a conflict.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel

from .checkpoint import load_generator
from .composer import (
    API_VERSION,
    LossWeights,
    OutpaintRequest,
    image_sha256,
    canonical_json,
    run_outpaint,
)
from .data import category_payload_to_vectors, image_to_png_bytes, png_bytes_to_image
from .evaluation import FeatureEmbedder, fid, inception_score
from .generator import PatchGenerator
from .inversion import PriorStats, load_prior

GENERATOR_FILE = "generator.zip"
PRIOR_FILE = "prior.npz"
JOB_KINDS = ("outpaint", "panorama_step", "evaluate")
TRACE_TAIL = 20


class JobCancelled(Exception):
    pass


class JobCreate(BaseModel):
    kind: str
    model: str | None = None
    api_version: str | None = None
    payload: dict = {}


class ModelBundle:
    """A loaded generator plus its latent prior, shared read-only."""

    def __init__(self, name: str, generator: PatchGenerator, stats: PriorStats):
        self.name = name
        self.generator = generator
        self.stats = stats

    def describe(self) -> dict:
        config = self.generator.config
        grid = config.grid
        return {
            "name": self.name,
            "d_w": config.d_w,
            "grid": {"n": grid.n, "patch_h": grid.patch_h, "patch_w": grid.patch_w},
            "categorical": config.categorical,
            "class_names": list(config.class_names) if config.categorical else [],
        }


def load_model_dir(model_dir: str | Path) -> dict[str, ModelBundle]:
    """Load every bundle subdirectory (generator.zip + prior.npz)."""
    model_dir = Path(model_dir)
    bundles: dict[str, ModelBundle] = {}
    candidates = [model_dir] + sorted(p for p in model_dir.iterdir() if p.is_dir())
    for path in candidates:
        gen_path = path / GENERATOR_FILE
        prior_path = path / PRIOR_FILE
        if gen_path.exists() and prior_path.exists():
            name = path.name if path != model_dir else (path.resolve().name or "default")
            bundles[name] = ModelBundle(name, load_generator(gen_path), load_prior(prior_path))
    if not bundles:
        raise FileNotFoundError(
            f"no model bundles under {model_dir} (need {GENERATOR_FILE} + {PRIOR_FILE})"
        )
    return bundles


class Job:
    """Mutable job record; a single lock guards mutation + persistence."""

    def __init__(self, job_id: str, kind: str, model: str, payload: dict, job_dir: Path):
        self.id = job_id
        self.kind = kind
        self.model = model
        self.payload = payload
        self.dir = job_dir
        self.status = "queued"
        self.progress = 0.0
        self.error: str | None = None
        self.result_count = 0
        self.report: dict | None = None
        self.loss_trace: dict[str, list[float]] = {}
        self.cancel_requested = threading.Event()
        self.lock = threading.Lock()

    def snapshot(self) -> dict:
        return {
            "api_version": API_VERSION,
            "id": self.id,
            "kind": self.kind,
            "model": self.model,
            "status": self.status,
            "progress": self.progress,
            "error": self.error,
            "cancel_requested": self.cancel_requested.is_set(),
            "results": [f"/jobs/{self.id}/results/{k}" for k in range(self.result_count)],
            "loss_trace": self.loss_trace,
            "report": self.report,
        }

    def persist(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        tmp = self.dir / "job.json.tmp"
        tmp.write_text(canonical_json({**self.snapshot(), "payload": self.payload}))
        tmp.replace(self.dir / "job.json")

    def update(self, persist: bool = True, **fields) -> None:
        with self.lock:
            for key, value in fields.items():
                setattr(self, key, value)
            if persist:
                self.persist()


def _b64_image(field: str, payload: dict) -> np.ndarray:
    raw = payload.get(field)
    if not isinstance(raw, str) or not raw:
        raise HTTPException(422, detail=f"payload field {field!r} must be base64 PNG data")
    try:
        data = base64.b64decode(raw, validate=True)
        return png_bytes_to_image(data)
    except (binascii.Error, OSError, ValueError) as exc:
        raise HTTPException(422, detail=f"field {field!r} is not a decodable PNG: {exc}")


def _decode_mask(payload: dict, shape: tuple[int, int]) -> np.ndarray | None:
    raw = payload.get("reference_mask_png")
    if raw is None:
        return None
    if not isinstance(raw, str):
        raise HTTPException(422, detail="reference_mask_png must be base64 PNG data")
    try:
        from PIL import Image
        import io

        with Image.open(io.BytesIO(base64.b64decode(raw, validate=True))) as im:
            mask = np.asarray(im.convert("L")) > 0
    except (binascii.Error, OSError, ValueError) as exc:
        raise HTTPException(422, detail=f"reference_mask_png is not a decodable PNG: {exc}")
    if mask.shape != shape:
        raise HTTPException(
            422, detail=f"mask shape {mask.shape} does not match reference {shape}"
        )
    return mask


class Service:
    def __init__(self, model_dir: str | Path, run_dir: str | Path = "runs", workers: int = 2):
        self.models = load_model_dir(model_dir)
        self.default_model = sorted(self.models)[0]
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.jobs: dict[str, Job] = {}
        self.jobs_lock = threading.Lock()
        self.pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="job")
        self._recover()

    def _recover(self) -> None:
        """Load historical job records; anything unfinished was interrupted."""
        for job_file in self.run_dir.glob("*/job.json"):
            data = json.loads(job_file.read_text())
            job = Job(
                data["id"], data["kind"], data.get("model", ""), data.get("payload", {}),
                job_file.parent,
            )
            job.status = data["status"]
            job.progress = data["progress"]
            job.error = data["error"]
            job.result_count = len(data.get("results", []))
            job.report = data.get("report")
            job.loss_trace = data.get("loss_trace", {})
            if job.status in ("queued", "running"):
                job.status = "failed"
                job.error = "interrupted by service restart"
                job.persist()
            self.jobs[job.id] = job

    # --- request validation ---

    def _resolve_model(self, name: str | None) -> ModelBundle:
        name = name or self.default_model
        if name not in self.models:
            raise HTTPException(422, detail=f"unknown model {name!r}")
        return self.models[name]

    def _validate_outpaint(self, bundle: ModelBundle, payload: dict, kind: str) -> None:
        m = payload.get("m", 3)
        if not isinstance(m, int) or m < 1:
            raise HTTPException(422, detail=f"m must be an integer >= 1, got {m!r}")
        for field in ("restarts", "warmup_steps"):
            value = payload.get(field, 1)
            if not isinstance(value, int) or value < 1:
                raise HTTPException(422, detail=f"{field} must be an integer >= 1, got {value!r}")
        reference = _b64_image("reference_png", payload)
        grid = bundle.generator.config.grid
        h, w = reference.shape[1:]
        if kind == "panorama_step" and (h, w) != (grid.full_h, grid.full_w):
            raise HTTPException(
                422,
                detail=f"panorama_step reference must be ({grid.full_h}, {grid.full_w}), "
                f"got ({h}, {w})",
            )
        if h > grid.full_h or w > grid.full_w:
            raise HTTPException(
                422, detail=f"reference ({h}, {w}) exceeds canvas ({grid.full_h}, {grid.full_w})"
            )
        _decode_mask(payload, reference.shape[1:])
        categories = payload.get("categories")
        if categories is not None:
            if not bundle.generator.config.categorical:
                raise HTTPException(422, detail="model has no category conditioning")
            try:
                category_payload_to_vectors(
                    categories, bundle.generator.config.class_names, bundle.generator.config.grid
                )
            except (ValueError, AttributeError, TypeError) as exc:
                raise HTTPException(422, detail=str(exc))
        direction = payload.get("direction", "right")
        if payload.get("known_cells") is None and direction not in ("left", "right", "up", "down"):
            raise HTTPException(422, detail=f"invalid direction {direction!r}")

    def _validate_evaluate(self, payload: dict) -> None:
        for field in ("real_pngs", "fake_pngs"):
            items = payload.get(field)
            if not isinstance(items, list) or not items:
                raise HTTPException(422, detail=f"payload field {field!r} must be a nonempty list")

    def create_job(self, body: JobCreate) -> Job:
        if body.api_version is not None and body.api_version != API_VERSION:
            raise HTTPException(
                422, detail=f"api_version {body.api_version!r} unsupported (want {API_VERSION!r})"
            )
        if body.kind not in JOB_KINDS:
            raise HTTPException(422, detail=f"unknown job kind {body.kind!r}")
        bundle = self._resolve_model(body.model)
        if body.kind in ("outpaint", "panorama_step"):
            self._validate_outpaint(bundle, body.payload, body.kind)
        else:
            self._validate_evaluate(body.payload)

        job_id = uuid.uuid4().hex
        job = Job(job_id, body.kind, bundle.name, body.payload, self.run_dir / job_id)
        job.persist()
        with self.jobs_lock:
            self.jobs[job_id] = job
        self.pool.submit(self._execute, job)
        return job

    def get_job(self, job_id: str) -> Job:
        job = self.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, detail=f"unknown job {job_id!r}")
        return job

    def cancel(self, job_id: str) -> Job:
        job = self.get_job(job_id)
        with job.lock:
            if job.status in ("done", "failed"):
                raise HTTPException(409, detail=f"job is already {job.status}")
            job.cancel_requested.set()
            job.persist()
        return job

    # --- execution ---

    def _execute(self, job: Job) -> None:
        job.update(status="running")
        try:
            if job.cancel_requested.is_set():
                raise JobCancelled()
            if job.kind in ("outpaint", "panorama_step"):
                self._run_outpaint(job)
            else:
                self._run_evaluate(job)
            job.update(status="done", progress=1.0)
        except JobCancelled:
            job.update(status="failed", error="cancelled")
        except Exception as exc:
            job.update(status="failed", error=f"{type(exc).__name__}: {exc}")

    def _run_outpaint(self, job: Job) -> None:
        bundle = self.models[job.model]
        payload = job.payload
        reference = _b64_image("reference_png", payload)
        # hash of the reference exactly as received, so a client chaining
        # panorama steps can record a replayable manifest without pixel math
        reference_sha256 = image_sha256(torch.as_tensor(reference))
        grid = bundle.generator.config.grid
        if job.kind == "panorama_step":
            # one recursive-extension step: the client sends its current
            # canvas; we re-invert the strip at the growth edge and return
            # canvas-sized candidates the client appends itself.
            if reference.shape[1:] != (grid.full_h, grid.full_w):
                raise ValueError(
                    f"panorama_step reference must be canvas-sized "
                    f"({grid.full_h}, {grid.full_w}), got {reference.shape[1:]}"
                )
            direction = payload.get("direction", "right")
            strip = (grid.n - 1) * (
                grid.patch_w if direction in ("left", "right") else grid.patch_h
            )
            if direction == "right":
                reference = reference[:, :, -strip:]
            elif direction == "left":
                reference = reference[:, :, :strip]
            elif direction == "down":
                reference = reference[:, -strip:, :]
            else:
                reference = reference[:, :strip, :]
        categories = None
        if payload.get("categories") is not None:
            categories = category_payload_to_vectors(
                payload["categories"],
                bundle.generator.config.class_names,
                grid,
            )
        known_cells = payload.get("known_cells")
        request = OutpaintRequest(
            reference=reference,
            direction=None if known_cells else payload.get("direction", "right"),
            known_cells=[tuple(c) for c in known_cells] if known_cells else None,
            reference_mask=_decode_mask(payload, reference.shape[1:]),
            m=payload.get("m", 3),
            categories=categories,
            blend=payload.get("blend", True),
            steps=payload.get("steps", 800),
            lr=payload.get("lr", 0.05),
            seed=payload.get("seed", 0),
            restarts=payload.get("restarts", 8),
            warmup_steps=payload.get("warmup_steps", 100),
            weights=LossWeights(**payload.get("weights", {})),
        )

        def on_step(step: int, total: int, breakdown: dict[str, float]) -> None:
            if job.cancel_requested.is_set():
                raise JobCancelled()
            trace = {
                term: job.loss_trace.get(term, [])[-(TRACE_TAIL - 1):] + [value]
                for term, value in breakdown.items()
            }
            # in-memory progress every step; disk snapshot only occasionally
            job.update(
                persist=(step % 25 == 0 or step == total),
                progress=step / max(total, 1),
                loss_trace=trace,
            )

        outcome = run_outpaint(request, bundle.generator, bundle.stats, callback=on_step)
        for k in range(request.m):
            png = image_to_png_bytes(outcome.candidates[k].numpy())
            (job.dir / f"result_{k}.png").write_bytes(png)
        job.update(
            result_count=request.m,
            report={
                "objective": outcome.inversion.objective,
                "candidate_mse": outcome.candidate_mse,
                "known_cells": [list(c) for c in outcome.plan.known_cells],
                "outpaint_cells": [list(c) for c in outcome.plan.outpaint_cells],
                "reference_sha256": reference_sha256,
            },
        )

    def _run_evaluate(self, job: Job) -> None:
        payload = job.payload
        def decode_list(field: str) -> torch.Tensor:
            images = []
            for idx, raw in enumerate(payload[field]):
                try:
                    images.append(torch.from_numpy(png_bytes_to_image(base64.b64decode(raw))))
                except (binascii.Error, OSError, ValueError) as exc:
                    raise ValueError(f"{field}[{idx}] is not a decodable PNG: {exc}")
            return torch.stack(images)

        real = decode_list("real_pngs")
        fake = decode_list("fake_pngs")
        if job.cancel_requested.is_set():
            raise JobCancelled()
        embedder = FeatureEmbedder(d_f=int(payload.get("d_f", 64)))
        job.update(progress=0.5)
        report = {
            "fid": fid(embedder.embed(real), embedder.embed(fake)),
            "inception_score": inception_score(embedder.class_probs(fake)),
            "embedder_id": embedder.embedder_id,
            "sample_count": int(fake.shape[0]),
        }
        job.update(report=report)

    def result_png(self, job_id: str, k: int) -> bytes:
        job = self.get_job(job_id)
        path = job.dir / f"result_{k}.png"
        if job.status != "done" or k < 0 or k >= job.result_count or not path.exists():
            raise HTTPException(404, detail=f"job {job_id!r} has no result {k}")
        return path.read_bytes()


def create_app(model_dir: str | Path, run_dir: str | Path = "runs", workers: int = 2) -> FastAPI:
    """Build the FastAPI app around a Service instance."""
    service = Service(model_dir, run_dir=run_dir, workers=workers)
    app = FastAPI(title="outpaintkit", version=API_VERSION)
    app.state.service = service

    @app.post("/jobs", status_code=201)
    def create_job(body: JobCreate):
        job = service.create_job(body)
        # jobs are born queued; job.status may already say running by now
        return {"api_version": API_VERSION, "id": job.id, "status": "queued"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        return service.get_job(job_id).snapshot()

    @app.get("/jobs/{job_id}/results/{k}")
    def job_result(job_id: str, k: int):
        return Response(content=service.result_png(job_id, k), media_type="image/png")

    @app.post("/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        return service.cancel(job_id).snapshot()

    @app.get("/categories")
    def categories(model: str | None = None):
        bundle = service._resolve_model(model)
        config = bundle.generator.config
        names = list(config.class_names) if config.categorical else []
        return {
            "api_version": API_VERSION,
            "model": bundle.name,
            "categorical": config.categorical,
            "classes": [{"index": k, "name": name} for k, name in enumerate(names)],
            "grid_n": config.grid.n,
        }

    @app.get("/models")
    def models():
        return {
            "api_version": API_VERSION,
            "default": service.default_model,
            "models": [service.models[name].describe() for name in sorted(service.models)],
        }

    return app
