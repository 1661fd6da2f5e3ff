"""Command line contract: determinism, defaults, error lines, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from outpaintkit import save_generator, save_prior
from outpaintkit.cli import main
from outpaintkit.data import image_to_png_bytes, png_bytes_to_image


@pytest.fixture(scope="module")
def bundle(tmp_path_factory, tiny_generator, tiny_stats):
    path = tmp_path_factory.mktemp("bundle")
    save_generator(path / "generator.zip", tiny_generator)
    save_prior(path / "prior.npz", tiny_stats)
    return path


@pytest.fixture(scope="module")
def reference_png(tmp_path_factory):
    path = tmp_path_factory.mktemp("refs") / "ref.png"
    rng = np.random.default_rng(21)
    image = rng.uniform(-0.9, 0.9, size=(3, 16, 8)).astype(np.float32)
    path.write_bytes(image_to_png_bytes(image))
    return path


def run(args, **kw):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False, **kw)


def test_outpaint_identical_seeds_byte_identical(bundle, reference_png, tmp_path):
    common = [
        "outpaint", "--model", bundle, "--image", reference_png,
        "--direction", "right", "--m", "2", "--steps", "6", "--seed", "7",
    ]
    first = run(common + ["--out", tmp_path / "a"])
    second = run(common + ["--out", tmp_path / "b"])
    assert first.exit_code == 0 and second.exit_code == 0
    for k in range(2):
        a = (tmp_path / "a" / f"candidate_{k}.png").read_bytes()
        b = (tmp_path / "b" / f"candidate_{k}.png").read_bytes()
        assert a == b


def test_outpaint_different_seed_changes_output(bundle, reference_png, tmp_path):
    base = ["outpaint", "--model", bundle, "--image", reference_png,
            "--m", "1", "--steps", "6", "--out"]
    run(base + [tmp_path / "a", "--seed", "1"])
    run(base + [tmp_path / "b", "--seed", "2"])
    assert (tmp_path / "a" / "candidate_0.png").read_bytes() != (
        tmp_path / "b" / "candidate_0.png"
    ).read_bytes()


def test_outpaint_default_weights(bundle, reference_png, tmp_path):
    result = run([
        "outpaint", "--model", bundle, "--image", reference_png,
        "--out", tmp_path / "o", "--m", "1", "--steps", "2",
    ])
    assert result.exit_code == 0
    summary = json.loads((tmp_path / "o" / "result.json").read_text())
    assert summary["weights"] == {
        "mse": 0.01, "percept": 1.0, "prior": 0.001, "div": 0.001, "ms": 0.001,
    }


def test_outpaint_writes_m_pngs_with_canvas_size(bundle, reference_png, tmp_path):
    run([
        "outpaint", "--model", bundle, "--image", reference_png,
        "--out", tmp_path / "o", "--m", "3", "--steps", "2",
    ])
    pngs = sorted((tmp_path / "o").glob("candidate_*.png"))
    assert len(pngs) == 3
    image = png_bytes_to_image(pngs[0].read_bytes())
    assert image.shape == (3, 16, 16)


def test_missing_model_machine_readable_error(reference_png, tmp_path):
    result = run([
        "outpaint", "--model", tmp_path, "--image", reference_png, "--out", tmp_path / "o",
    ])
    assert result.exit_code == 1
    line = json.loads(result.stderr.strip().splitlines()[-1])
    assert line["error"] == "FileNotFoundError"
    assert "generator" in line["message"]


def test_categories_rejected_for_plain_model(bundle, reference_png, tmp_path):
    result = run([
        "outpaint", "--model", bundle, "--image", reference_png, "--out", tmp_path / "o",
        "--steps", "2", "--categories", '{"1,1": ["sky"]}',
    ])
    assert result.exit_code == 1
    line = json.loads(result.stderr.strip().splitlines()[-1])
    assert "categorical" in line["message"]


def test_panorama_and_replay_byte_identical(bundle, tmp_path):
    rng = np.random.default_rng(22)
    start = tmp_path / "start.png"
    start.write_bytes(
        image_to_png_bytes(rng.uniform(-0.9, 0.9, size=(3, 16, 16)).astype(np.float32))
    )
    first = run([
        "panorama", "--model", bundle, "--image", start, "--out", tmp_path / "p1",
        "--steps", "2", "--m", "2", "--inversion-steps", "4", "--seed", "3",
    ])
    assert first.exit_code == 0
    assert json.loads(first.output.strip().splitlines()[-1])["width"] == 16 + 2 * 8
    replay = run([
        "panorama", "--model", bundle, "--image", start, "--out", tmp_path / "p2",
        "--replay", tmp_path / "p1" / "manifest.json",
    ])
    assert replay.exit_code == 0
    assert (tmp_path / "p1" / "panorama.png").read_bytes() == (
        tmp_path / "p2" / "panorama.png"
    ).read_bytes()
    assert (tmp_path / "p1" / "manifest.json").read_bytes() == (
        tmp_path / "p2" / "manifest.json"
    ).read_bytes()


def test_make_dataset_and_train_smoke(tmp_path):
    made = run(["make-dataset", "--out", tmp_path / "data", "--count", "4",
                "--seed", "1", "--grid-n", "2", "--patch", "8"])
    assert made.exit_code == 0
    assert len(list((tmp_path / "data").glob("*.png"))) == 4

    trained = run([
        "train", "--data", tmp_path / "data", "--out", tmp_path / "model",
        "--steps", "3", "--batch", "2", "--d-z", "8", "--d-w", "8",
        "--channels", "8,8", "--mapping-layers", "2", "--quiet",
    ])
    assert trained.exit_code == 0
    assert (tmp_path / "model" / "generator.zip").exists()

    prior = run([
        "estimate-prior", "--model", tmp_path / "model", "--samples", "500", "--seed", "2",
    ])
    assert prior.exit_code == 0
    assert (tmp_path / "model" / "prior.npz").exists()
    out = json.loads(prior.output.strip().splitlines()[-1])
    assert out["dim"] == 8


def test_evaluate_directory_against_itself(tmp_path):
    data_dir = tmp_path / "imgs"
    data_dir.mkdir()
    rng = np.random.default_rng(23)
    for k in range(20):
        image = rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        (data_dir / f"im_{k}.png").write_bytes(image_to_png_bytes(image))
    result = run([
        "evaluate", "--real", data_dir, "--fake", data_dir,
        "--out", tmp_path / "report.json", "--d-f", "8", "--grid-n", "2",
    ])
    assert result.exit_code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert abs(report["fid"]) <= 1e-6
    assert report["inception_score"] >= 1.0
    assert report["sample_count"] == 20
    assert report["seam_ratio"] is not None


def test_evaluate_empty_directory_fails(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    result = run(["evaluate", "--real", empty, "--fake", empty])
    assert result.exit_code == 1
    line = json.loads(result.stderr.strip().splitlines()[-1])
    assert line["error"] == "FileNotFoundError"
