"""Checkpoint archives: manifest.json + a single raw little-endian f32 blob.

An archive is a directory (or a .zip) holding exactly two entries:

    manifest.json   tensor names, shapes, byte offsets, dtype tag "f32",
                    and a model metadata block
    weights.bin     all tensors concatenated, little-endian float32, C order

Round-trips are bit-exact for float32 parameters.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .grids import GridSpec
from .generator import GeneratorConfig, PatchGenerator

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "weights.bin"
FORMAT_VERSION = 1


def _serialize_tensors(tensors: dict[str, torch.Tensor]) -> tuple[dict, bytes]:
    entries = {}
    blob = io.BytesIO()
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        entries[name] = {"shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        blob.write(raw)
        offset += len(raw)
    return entries, blob.getvalue()


def save_archive(path: str | Path, tensors: dict[str, torch.Tensor], meta: dict) -> None:
    """Write a tensor archive to a directory, or a zip if path ends in .zip."""
    path = Path(path)
    entries, blob = _serialize_tensors(tensors)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "f32",
        "tensors": entries,
        "meta": meta,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if path.suffix == ".zip":
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            zf.writestr(MANIFEST_NAME, text)
            zf.writestr(BLOB_NAME, blob)
    else:
        path.mkdir(parents=True, exist_ok=True)
        (path / MANIFEST_NAME).write_text(text)
        (path / BLOB_NAME).write_bytes(blob)


def load_archive(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    """Read back (tensors, meta) from a directory or zip archive."""
    path = Path(path)
    if path.suffix == ".zip" or zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read(MANIFEST_NAME))
            blob = zf.read(BLOB_NAME)
    else:
        manifest = json.loads((path / MANIFEST_NAME).read_text())
        blob = (path / BLOB_NAME).read_bytes()
    if manifest.get("dtype") != "f32":
        raise ValueError(f"unsupported archive dtype {manifest.get('dtype')!r}")
    tensors = {}
    for name, entry in manifest["tensors"].items():
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
        tensors[name] = torch.from_numpy(arr)
    return tensors, manifest["meta"]


def generator_meta(config: GeneratorConfig) -> dict:
    return {
        "kind": "generator",
        "d_z": config.d_z,
        "d_w": config.d_w,
        "grid": {"n": config.grid.n, "patch_h": config.grid.patch_h, "patch_w": config.grid.patch_w},
        "channels": list(config.channels),
        "mapping_layers": config.mapping_layers,
        "categorical": config.categorical,
        "num_classes": config.num_classes,
        "class_names": list(config.class_names),
    }


def config_from_meta(meta: dict) -> GeneratorConfig:
    grid = meta["grid"]
    return GeneratorConfig(
        d_z=meta["d_z"],
        d_w=meta["d_w"],
        grid=GridSpec(n=grid["n"], patch_h=grid["patch_h"], patch_w=grid["patch_w"]),
        channels=tuple(meta["channels"]),
        mapping_layers=meta["mapping_layers"],
        categorical=meta["categorical"],
        num_classes=meta["num_classes"],
        class_names=tuple(meta["class_names"]),
    )


def save_generator(path: str | Path, generator: PatchGenerator) -> None:
    save_archive(path, dict(generator.state_dict()), generator_meta(generator.config))


def load_generator(path: str | Path) -> PatchGenerator:
    """Load a generator and freeze its parameters for inversion use."""
    tensors, meta = load_archive(path)
    if meta.get("kind") != "generator":
        raise ValueError(f"archive at {path} is not a generator checkpoint")
    generator = PatchGenerator(config_from_meta(meta))
    generator.load_state_dict(tensors)
    generator.requires_grad_(False)
    generator.eval()
    return generator
