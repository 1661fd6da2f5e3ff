"""Synthetic scenery dataset and per-patch label derivation.

Images are float32 arrays shaped (3, H, W) with values in [-1, 1].
Segmentation maps are uint8 arrays shaped (H, W) whose entries index into
the class list of the model config (see DESK_CLASS_NAMES).
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image

from .generator import DESK_CLASS_NAMES
from .grids import GridSpec

CLASS_BACKGROUND = 0
CLASS_SKY = 1
CLASS_TERRAIN = 2
CLASS_WATER = 3
CLASS_SUN = 4
CLASS_CLOUD = 5
CLASS_TREE = 6
CLASS_TOWER = 7


@dataclasses.dataclass
class DatasetRecord:
    """One training sample: an image and its aligned segmentation."""

    image: np.ndarray
    segmentation: np.ndarray

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be (3, H, W), got {self.image.shape}")
        if self.segmentation.shape != self.image.shape[1:]:
            raise ValueError(
                f"segmentation shape {self.segmentation.shape} does not match "
                f"image spatial shape {self.image.shape[1:]}"
            )


def _sky_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if rng.random() < 0.25:
        # sunset palette
        top = np.array([0.25, -0.1, 0.3]) + rng.uniform(-0.1, 0.1, 3)
        low = np.array([0.9, 0.35, -0.1]) + rng.uniform(-0.1, 0.1, 3)
    else:
        top = np.array([-0.45, -0.05, 0.55]) + rng.uniform(-0.1, 0.1, 3)
        low = np.array([0.25, 0.55, 0.85]) + rng.uniform(-0.1, 0.1, 3)
    return top, low


def _render_scene(rng: np.random.Generator, height: int, width: int) -> DatasetRecord:
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]

    # Wavy horizon somewhere in the middle band so every column mixes sky
    # and ground, giving the generator horizontal variation to learn.
    base = rng.uniform(0.4, 0.6) * height
    amp = rng.uniform(0.04, 0.14) * height
    freq = rng.uniform(0.5, 2.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    horizon = base + amp * np.sin(2.0 * np.pi * freq * xs[0] / width + phase)
    horizon = np.clip(horizon, 0.25 * height, 0.78 * height)

    sky_mask = ys < horizon[None, :]
    ground_mask = ~sky_mask

    image = np.zeros((height, width, 3), dtype=np.float64)
    seg = np.zeros((height, width), dtype=np.uint8)

    t = ys / max(height - 1, 1)
    sky_top, sky_low = _sky_colors(rng)
    sky_grad = sky_top[None, None, :] * (1.0 - 2.0 * t[..., None]) + sky_low[None, None, :] * (2.0 * t[..., None])
    sky_grad = np.broadcast_to(np.clip(sky_grad, -1.0, 1.0), (height, width, 3))
    image[sky_mask] = sky_grad[sky_mask]
    seg[sky_mask] = CLASS_SKY

    watery = rng.random() < 0.3
    if watery:
        deep = np.array([-0.7, -0.3, 0.3]) + rng.uniform(-0.08, 0.08, 3)
        shallow = np.array([-0.2, 0.35, 0.65]) + rng.uniform(-0.08, 0.08, 3)
        streak = 0.08 * np.sin(ys * rng.uniform(0.5, 1.5) + rng.uniform(0, 6.0))
        ground = shallow[None, None, :] * (1.0 - t[..., None]) + deep[None, None, :] * t[..., None]
        ground = ground + streak[..., None]
        seg_ground = CLASS_WATER
    else:
        light = np.array([0.1, 0.45, -0.25]) + rng.uniform(-0.12, 0.12, 3)
        dark = np.array([-0.25, 0.1, -0.45]) + rng.uniform(-0.12, 0.12, 3)
        band = 0.06 * np.sin(ys * rng.uniform(0.3, 1.0) + xs * rng.uniform(0.0, 0.15))
        ground = light[None, None, :] * (1.0 - t[..., None]) + dark[None, None, :] * t[..., None]
        ground = ground + band[..., None]
        seg_ground = CLASS_TERRAIN
    ground = np.broadcast_to(np.clip(ground, -1.0, 1.0), (height, width, 3))
    image[ground_mask] = ground[ground_mask]
    seg[ground_mask] = seg_ground

    if rng.random() < 0.7:
        radius = rng.uniform(0.05, 0.11) * height
        sun_x = rng.uniform(0.1, 0.9) * width
        sun_y = rng.uniform(0.08, 0.3) * height
        disk = ((xs - sun_x) ** 2 + (ys - sun_y) ** 2) <= radius**2
        disk &= sky_mask
        sun_color = np.array([1.0, 0.85, 0.3]) + rng.uniform(-0.05, 0.05, 3)
        image[disk] = np.clip(sun_color, -1.0, 1.0)
        seg[disk] = CLASS_SUN

    for _ in range(rng.integers(0, 3)):
        cx = rng.uniform(0.0, width)
        cy = rng.uniform(0.05, 0.3) * height
        a = rng.uniform(0.1, 0.22) * width
        b = rng.uniform(0.03, 0.07) * height
        cloud = ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0
        cloud &= sky_mask
        shade = rng.uniform(0.75, 0.95)
        image[cloud] = np.array([shade, shade, shade + 0.02])
        seg[cloud] = CLASS_CLOUD

    if not watery:
        for _ in range(rng.integers(0, 3)):
            tx = int(rng.uniform(0.08, 0.92) * width)
            th = rng.uniform(0.12, 0.24) * height
            bw = rng.uniform(0.5, 0.9) * th
            apex = horizon[tx] - th
            tri = (ys >= apex) & (ys < horizon[None, :] + 2) & (
                np.abs(xs - tx) <= (ys - apex) / th * (bw / 2.0)
            )
            tri &= ys < horizon[tx] + 2
            color = np.array([-0.5, 0.15, -0.5]) + rng.uniform(-0.08, 0.08, 3)
            image[tri] = np.clip(color, -1.0, 1.0)
            seg[tri] = CLASS_TREE

    if rng.random() < 0.4:
        for _ in range(rng.integers(1, 3)):
            tx = int(rng.uniform(0.1, 0.85) * width)
            tw = max(2, int(rng.uniform(0.03, 0.06) * width))
            th = rng.uniform(0.18, 0.35) * height
            top = max(0.0, horizon[tx] - th)
            box = (
                (xs >= tx)
                & (xs < tx + tw)
                & (ys >= top)
                & (ys < horizon[None, :] + 1)
                & (ys < horizon[tx] + 1)
            )
            shade = rng.uniform(-0.3, 0.1)
            image[box] = np.array([shade, shade, shade + 0.05])
            seg[box] = CLASS_TOWER

    image += rng.uniform(-0.03, 0.03, size=image.shape)
    image = np.clip(image, -1.0, 1.0)
    return DatasetRecord(
        image=np.ascontiguousarray(image.transpose(2, 0, 1).astype(np.float32)),
        segmentation=seg,
    )


def synth_scenery_dataset(
    count: int, seed: int = 0, grid: GridSpec | None = None
) -> list[DatasetRecord]:
    """Generate `count` procedural landscape images with aligned segmentations.

    Scenes combine a wavy horizon, sky gradients, terrain or water, and a
    random subset of sun, clouds, trees and towers, so content varies both
    vertically and horizontally. Deterministic in (count, seed, grid).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    grid = grid or GridSpec()
    rng = np.random.default_rng(seed)
    return [_render_scene(rng, grid.full_h, grid.full_w) for _ in range(count)]


def image_to_png_bytes(image: np.ndarray) -> bytes:
    """Encode a (3, H, W) [-1, 1] float image as PNG bytes."""
    import io

    arr = np.clip((image.transpose(1, 2, 0) + 1.0) * 127.5, 0.0, 255.0)
    arr = np.round(arr).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_image(data: bytes) -> np.ndarray:
    """Decode PNG bytes to a (3, H, W) float32 image in [-1, 1]."""
    import io

    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return np.ascontiguousarray(arr.transpose(2, 0, 1) / 127.5 - 1.0)


def save_dataset(directory: str | Path, records: list[DatasetRecord]) -> None:
    """Write records as img_XXXXX.png plus img_XXXXX.seg (8-bit PNG payload)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for idx, rec in enumerate(records):
        stem = f"img_{idx:05d}"
        (directory / f"{stem}.png").write_bytes(image_to_png_bytes(rec.image))
        import io

        buf = io.BytesIO()
        Image.fromarray(rec.segmentation, mode="L").save(buf, format="PNG")
        (directory / f"{stem}.seg").write_bytes(buf.getvalue())


def load_dataset(directory: str | Path) -> list[DatasetRecord]:
    """Load records written by save_dataset, sorted by filename."""
    import io

    directory = Path(directory)
    records = []
    for png_path in sorted(directory.glob("*.png")):
        seg_path = png_path.with_suffix(".seg")
        if not seg_path.exists():
            raise FileNotFoundError(f"missing segmentation for {png_path.name}")
        image = png_bytes_to_image(png_path.read_bytes())
        with Image.open(io.BytesIO(seg_path.read_bytes())) as im:
            seg = np.asarray(im, dtype=np.uint8)
        records.append(DatasetRecord(image=image, segmentation=seg))
    if not records:
        raise FileNotFoundError(f"no .png records found in {directory}")
    return records


def derive_patch_labels(
    segmentation: np.ndarray,
    grid: GridSpec | None = None,
    threshold: float = 0.01,
    num_classes: int = len(DESK_CLASS_NAMES),
) -> dict[tuple[int, int], np.ndarray]:
    """Turn a segmentation map into per-patch multi-hot class vectors.

    Bit k (k >= 1) is set when class k covers at least `threshold` of the
    patch area. Coverage from classes below the threshold is treated as
    background, so the background bit is set when background pixels plus
    all sub-threshold pixels together reach the threshold.
    """
    grid = grid or GridSpec()
    if segmentation.shape != (grid.full_h, grid.full_w):
        raise ValueError(
            f"segmentation shape {segmentation.shape} does not match grid "
            f"canvas ({grid.full_h}, {grid.full_w})"
        )
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if segmentation.size and int(segmentation.max()) >= num_classes:
        bad = int(segmentation.max())
        raise ValueError(f"segmentation contains class id {bad} >= num_classes {num_classes}")

    labels: dict[tuple[int, int], np.ndarray] = {}
    area = grid.patch_h * grid.patch_w
    for i, j in grid.cells():
        rows, cols = grid.cell_block(i, j)
        block = segmentation[rows, cols]
        counts = np.bincount(block.ravel(), minlength=num_classes).astype(np.float64)
        frac = counts / area
        vec = np.zeros(num_classes, dtype=np.uint8)
        background_frac = frac[CLASS_BACKGROUND]
        for k in range(1, num_classes):
            if frac[k] >= threshold:
                vec[k] = 1
            else:
                background_frac += frac[k]
        if background_frac >= threshold:
            vec[CLASS_BACKGROUND] = 1
        labels[(i, j)] = vec
    return labels


def category_payload_to_vectors(
    payload: dict[str, list[str]],
    class_names: tuple[str, ...],
    grid: GridSpec,
) -> dict[tuple[int, int], np.ndarray]:
    """Parse a {"i,j": [class names]} mapping into per-cell multi-hot vectors.

    Cells absent from the payload get the background-only vector. Unknown
    class names and malformed or out-of-range cell keys raise ValueError
    naming the offending entry.
    """
    index = {name: k for k, name in enumerate(class_names)}
    vectors: dict[tuple[int, int], np.ndarray] = {}
    for i, j in grid.cells():
        vec = np.zeros(len(class_names), dtype=np.float32)
        vec[CLASS_BACKGROUND] = 1.0
        vectors[(i, j)] = vec
    for key, names in payload.items():
        try:
            i_str, j_str = key.split(",")
            cell = (int(i_str), int(j_str))
        except ValueError:
            raise ValueError(f"cell key {key!r} is not of the form 'i,j'") from None
        if not (1 <= cell[0] <= grid.n and 1 <= cell[1] <= grid.n):
            raise ValueError(f"cell key {key!r} outside the 1..{grid.n} grid")
        vec = np.zeros(len(class_names), dtype=np.float32)
        for name in names:
            if name not in index:
                raise ValueError(f"unknown class name {name!r}")
            vec[index[name]] = 1.0
        if not vec.any():
            vec[CLASS_BACKGROUND] = 1.0
        vectors[cell] = vec
    return vectors


def labels_to_array(
    labels: dict[tuple[int, int], np.ndarray], grid: GridSpec
) -> np.ndarray:
    """Pack a per-cell label dict into an (n, n, K) float32 array.

    Entry [i-1, j-1] holds the vector for cell (i, j), matching the code
    layout accepted by the generator.
    """
    sample = next(iter(labels.values()))
    out = np.zeros((grid.n, grid.n, len(sample)), dtype=np.float32)
    for (i, j), vec in labels.items():
        out[i - 1, j - 1] = vec
    return out
