"""Command line entry points.

Each command is a thin adapter over a library function. Failures print a
single machine-readable JSON line to stderr and exit nonzero; every
randomized command takes --seed and replays exactly.

A model bundle is a directory holding `generator.zip` (checkpoint archive)
and `prior.npz` (latent moments), which is everything inversion needs.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from .checkpoint import load_generator, save_generator
from .composer import (
    API_VERSION,
    LossWeights,
    OutpaintRequest,
    canonical_json,
    panorama as run_panorama,
    replay_panorama,
    run_outpaint,
)
from .data import (
    category_payload_to_vectors,
    image_to_png_bytes,
    png_bytes_to_image,
    load_dataset,
    save_dataset,
    synth_scenery_dataset,
)
from .evaluation import FeatureEmbedder, MetricReport, fid, inception_score, seam_gradient_ratio
from .generator import GeneratorConfig
from .grids import GridSpec
from .inversion import estimate_prior, load_prior, save_prior
from .training import TrainingConfig, train

GENERATOR_FILE = "generator.zip"
PRIOR_FILE = "prior.npz"


def _fail(exc: BaseException) -> None:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    click.echo(line, err=True)
    sys.exit(1)


def guarded(fn):
    """Convert exceptions into the machine-readable failure contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SystemExit, KeyboardInterrupt, click.ClickException):
            raise
        except Exception as exc:
            _fail(exc)

    return wrapper


def load_bundle(path: str | Path):
    """Load (generator, prior stats) from a model bundle directory."""
    path = Path(path)
    gen_path = path / GENERATOR_FILE
    if not gen_path.exists():
        raise FileNotFoundError(f"no generator checkpoint at {gen_path}")
    prior_path = path / PRIOR_FILE
    if not prior_path.exists():
        raise FileNotFoundError(f"no prior stats at {prior_path}; run estimate-prior first")
    return load_generator(gen_path), load_prior(prior_path)


def _parse_categories(raw: str | None, generator) -> dict | None:
    if raw is None:
        return None
    if not generator.config.categorical:
        raise ValueError("model is not categorical; remove --categories")
    text = raw if raw.lstrip().startswith("{") else Path(raw).read_text()
    payload = json.loads(text)
    return category_payload_to_vectors(
        payload, generator.config.class_names, generator.config.grid
    )


def _weights_from_options(mse, percept, prior, div, ms) -> LossWeights:
    return LossWeights(mse=mse, percept=percept, prior=prior, div=div, ms=ms)


def _load_image(path: str | Path) -> np.ndarray:
    return png_bytes_to_image(Path(path).read_bytes())


@click.group()
@click.version_option(package_name="outpaintkit")
def main():
    """Coordinate-conditioned patch generation and outpainting toolkit."""


@main.command("make-dataset")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--count", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--grid-n", default=2, show_default=True, type=int)
@click.option("--patch", default=32, show_default=True, type=int, help="Patch side in pixels.")
@guarded
def make_dataset_cmd(out, count, seed, grid_n, patch):
    """Generate a procedural scenery dataset with segmentations."""
    grid = GridSpec(n=grid_n, patch_h=patch, patch_w=patch)
    records = synth_scenery_dataset(count, seed=seed, grid=grid)
    save_dataset(out, records)
    click.echo(json.dumps({"written": len(records), "dir": str(out)}))


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Model bundle directory.")
@click.option("--steps", default=5000, show_default=True, type=int)
@click.option("--batch", default=8, show_default=True, type=int)
@click.option("--lr", default=2e-3, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--d-z", default=128, show_default=True, type=int)
@click.option("--d-w", default=128, show_default=True, type=int)
@click.option("--grid-n", default=2, show_default=True, type=int)
@click.option(
    "--channels",
    default="48,48,32,24",
    show_default=True,
    help="Synthesis channels per scale; the patch side is 4*2^(len-1).",
)
@click.option("--mapping-layers", default=4, show_default=True, type=int)
@click.option("--categorical/--no-categorical", default=False, show_default=True)
@click.option("--r1-weight", default=10.0, show_default=True, type=float)
@click.option("--r1-interval", default=16, show_default=True, type=int)
@click.option("--cls-weight", default=1.0, show_default=True, type=float)
@click.option("--log-every", default=100, show_default=True, type=int)
@click.option("--quiet", is_flag=True, default=False)
@guarded
def train_cmd(
    data,
    out,
    steps,
    batch,
    lr,
    seed,
    d_z,
    d_w,
    grid_n,
    channels,
    mapping_layers,
    categorical,
    r1_weight,
    r1_interval,
    cls_weight,
    log_every,
    quiet,
):
    """Train a generator/critic pair on a dataset directory."""
    records = load_dataset(data)
    chan = tuple(int(c) for c in channels.split(","))
    patch = 4 * 2 ** (len(chan) - 1)
    gen_config = GeneratorConfig(
        d_z=d_z,
        d_w=d_w,
        grid=GridSpec(n=grid_n, patch_h=patch, patch_w=patch),
        channels=chan,
        mapping_layers=mapping_layers,
        categorical=categorical,
    )
    train_config = TrainingConfig(
        steps=steps,
        batch_size=batch,
        lr=lr,
        r1_weight=r1_weight,
        r1_interval=r1_interval,
        cls_weight=cls_weight,
        seed=seed,
        log_every=log_every,
    )

    def progress(entry: dict) -> None:
        if not quiet:
            click.echo(json.dumps(entry))

    generator, _, history = train(records, gen_config, train_config, callback=progress)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_generator(out_dir / GENERATOR_FILE, generator)
    (out_dir / "training_log.json").write_text(canonical_json(history))
    click.echo(json.dumps({"model": str(out_dir / GENERATOR_FILE), "steps": steps}))


@main.command("estimate-prior")
@click.option("--model", required=True, type=click.Path(exists=True), help="Model bundle directory.")
@click.option("--out", default=None, type=click.Path(), help="Defaults to <model>/prior.npz.")
@click.option("--samples", default=100_000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@guarded
def estimate_prior_cmd(model, out, samples, seed):
    """Estimate gaussianized-latent moments for a trained generator."""
    generator = load_generator(Path(model) / GENERATOR_FILE)
    stats = estimate_prior(generator, sample_count=samples, seed=seed)
    target = Path(out) if out else Path(model) / PRIOR_FILE
    save_prior(target, stats)
    click.echo(json.dumps({"prior": str(target), "samples": samples, "dim": stats.dim}))


_weight_options = [
    click.option("--lambda-mse", default=0.01, show_default=True, type=float),
    click.option("--lambda-percept", default=1.0, show_default=True, type=float),
    click.option("--lambda-prior", default=0.001, show_default=True, type=float),
    click.option("--lambda-div", default=0.001, show_default=True, type=float),
    click.option("--lambda-ms", default=0.001, show_default=True, type=float),
]


def weight_options(fn):
    for opt in reversed(_weight_options):
        fn = opt(fn)
    return fn


@main.command("outpaint")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--image", required=True, type=click.Path(exists=True), help="Reference PNG.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--direction", default="right", show_default=True)
@click.option("--m", default=3, show_default=True, type=int, help="Number of candidates.")
@click.option("--steps", default=800, show_default=True, type=int)
@click.option("--lr", default=0.05, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--restarts", default=8, show_default=True, type=int, help="Seeded inits raced during warmup.")
@click.option("--warmup-steps", default=100, show_default=True, type=int)
@click.option("--blend/--no-blend", default=True, show_default=True)
@click.option("--categories", default=None, help='JSON {"i,j": [names]} or a path to it.')
@weight_options
@guarded
def outpaint_cmd(
    model,
    image,
    out,
    direction,
    m,
    steps,
    lr,
    seed,
    restarts,
    warmup_steps,
    blend,
    categories,
    lambda_mse,
    lambda_percept,
    lambda_prior,
    lambda_div,
    lambda_ms,
):
    """Outpaint a reference image into m diverse candidates."""
    generator, stats = load_bundle(model)
    reference = _load_image(image)
    request = OutpaintRequest(
        reference=reference,
        direction=direction,
        m=m,
        categories=_parse_categories(categories, generator),
        blend=blend,
        steps=steps,
        lr=lr,
        seed=seed,
        restarts=restarts,
        warmup_steps=warmup_steps,
        weights=_weights_from_options(
            lambda_mse, lambda_percept, lambda_prior, lambda_div, lambda_ms
        ),
    )
    outcome = run_outpaint(request, generator, stats)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(m):
        png = image_to_png_bytes(outcome.candidates[k].numpy())
        (out_dir / f"candidate_{k}.png").write_bytes(png)
    summary = {
        "api_version": API_VERSION,
        "m": m,
        "seed": seed,
        "direction": direction,
        "objective": outcome.inversion.objective,
        "best_step": outcome.inversion.best_step,
        "candidate_mse": outcome.candidate_mse,
        "known_cells": [list(c) for c in outcome.plan.known_cells],
        "outpaint_cells": [list(c) for c in outcome.plan.outpaint_cells],
        "weights": request.weights.as_dict(),
    }
    (out_dir / "result.json").write_text(canonical_json(summary))
    click.echo(json.dumps({"out": str(out_dir), "candidates": m}))


@main.command("panorama")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--image", required=True, type=click.Path(exists=True), help="Canvas-sized start PNG.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--steps", default=4, show_default=True, type=int, help="Extension steps.")
@click.option("--direction", default="right", show_default=True)
@click.option("--m", default=3, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--inversion-steps", default=800, show_default=True, type=int)
@click.option("--lr", default=0.05, show_default=True, type=float)
@click.option("--restarts", default=8, show_default=True, type=int, help="Seeded inits raced during warmup.")
@click.option("--warmup-steps", default=100, show_default=True, type=int)
@click.option("--blend/--no-blend", default=True, show_default=True)
@click.option("--replay", default=None, type=click.Path(exists=True), help="Manifest to replay.")
@weight_options
@guarded
def panorama_cmd(
    model,
    image,
    out,
    steps,
    direction,
    m,
    seed,
    inversion_steps,
    lr,
    restarts,
    warmup_steps,
    blend,
    replay,
    lambda_mse,
    lambda_percept,
    lambda_prior,
    lambda_div,
    lambda_ms,
):
    """Grow a panorama by recursive outpainting, or replay a manifest."""
    generator, stats = load_bundle(model)
    initial = torch.from_numpy(_load_image(image))
    if replay is not None:
        manifest = json.loads(Path(replay).read_text())
        result = replay_panorama(manifest, generator, stats, initial)
    else:
        result = run_panorama(
            generator,
            stats,
            initial,
            steps=steps,
            direction=direction,
            m=m,
            seed=seed,
            blend=blend,
            inversion_steps=inversion_steps,
            lr=lr,
            restarts=restarts,
            warmup_steps=warmup_steps,
            weights=_weights_from_options(
                lambda_mse, lambda_percept, lambda_prior, lambda_div, lambda_ms
            ),
        )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "panorama.png").write_bytes(image_to_png_bytes(result.image.numpy()))
    (out_dir / "manifest.json").write_text(canonical_json(result.manifest))
    click.echo(
        json.dumps({"out": str(out_dir), "width": result.image.shape[-1], "steps": len(result.manifest["steps"])})
    )


def _load_image_dir(directory: str | Path) -> torch.Tensor:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no .png images in {directory}")
    return torch.stack([torch.from_numpy(_load_image(p)) for p in paths])


@main.command("evaluate")
@click.option("--real", required=True, type=click.Path(exists=True), help="Reference image dir.")
@click.option("--fake", required=True, type=click.Path(exists=True), help="Generated image dir.")
@click.option("--out", default=None, type=click.Path(), help="Report JSON path (default stdout).")
@click.option("--d-f", default=64, show_default=True, type=int, help="Feature dimension.")
@click.option("--grid-n", default=None, type=int, help="Enable seam ratio for an n x n grid.")
@guarded
def evaluate_cmd(real, fake, out, d_f, grid_n):
    """Compute the metric report between two image directories."""
    real_images = _load_image_dir(real)
    fake_images = _load_image_dir(fake)
    embedder = FeatureEmbedder(d_f=d_f)
    report_fid = fid(embedder.embed(real_images), embedder.embed(fake_images))
    score = inception_score(embedder.class_probs(fake_images))
    seam = None
    if grid_n is not None:
        h, w = fake_images.shape[-2:]
        if h % grid_n or w % grid_n:
            raise ValueError(f"images {h}x{w} not divisible into a {grid_n}x{grid_n} grid")
        seam = seam_gradient_ratio(fake_images, GridSpec(grid_n, h // grid_n, w // grid_n))
    report = MetricReport(
        fid=report_fid,
        inception_score=score,
        diversity=None,
        seam_ratio=seam,
        embedder_id=embedder.embedder_id,
        sample_count=int(fake_images.shape[0]),
    )
    text = canonical_json(report.as_dict())
    if out:
        Path(out).write_text(text)
    click.echo(text, nl=False)


@main.command("serve")
@click.option(
    "--model-dir",
    envvar="OUTPAINTKIT_MODEL_DIR",
    required=True,
    type=click.Path(exists=True),
    help="Directory of model bundles (env OUTPAINTKIT_MODEL_DIR).",
)
@click.option("--run-dir", default="runs", show_default=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--workers", default=2, show_default=True, type=int, help="Job worker threads.")
@guarded
def serve_cmd(model_dir, run_dir, host, port, workers):
    """Serve the outpainting job API over HTTP."""
    import uvicorn

    from .service import create_app

    app = create_app(model_dir, run_dir=run_dir, workers=workers)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
