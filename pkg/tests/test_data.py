"""Synthetic scenery dataset and patch-label derivation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outpaintkit import (
    DESK_CLASS_NAMES,
    GridSpec,
    derive_patch_labels,
    labels_to_array,
    load_dataset,
    save_dataset,
    synth_scenery_dataset,
)
from outpaintkit.data import image_to_png_bytes, png_bytes_to_image


def brute_force_labels(seg, grid, threshold=0.01, num_classes=len(DESK_CLASS_NAMES)):
    """Independent oracle: explicit python loops over pixels."""
    out = {}
    for i in range(1, grid.n + 1):
        for j in range(1, grid.n + 1):
            counts = [0] * num_classes
            for r in range((j - 1) * grid.patch_h, j * grid.patch_h):
                for c in range((i - 1) * grid.patch_w, i * grid.patch_w):
                    counts[int(seg[r, c])] += 1
            area = grid.patch_h * grid.patch_w
            vec = [0] * num_classes
            background = counts[0]
            for k in range(1, num_classes):
                if counts[k] / area >= threshold:
                    vec[k] = 1
                else:
                    background += counts[k]
            vec[0] = 1 if background / area >= threshold else 0
            out[(i, j)] = np.array(vec, dtype=np.uint8)
    return out


GRID = GridSpec(n=2, patch_h=32, patch_w=32)


def test_patch_entirely_one_class():
    seg = np.full((64, 64), 3, dtype=np.uint8)
    labels = derive_patch_labels(seg, GRID)
    expected = np.zeros(8, dtype=np.uint8)
    expected[3] = 1
    for vec in labels.values():
        assert np.array_equal(vec, expected)


def test_one_percent_rule_sub_threshold_class_dropped():
    # 0.5% of a 32x32 patch is ~5 pixels; class 5 must not be set, and its
    # pixels count toward background.
    seg = np.full((64, 64), 1, dtype=np.uint8)
    seg[0, 0:5] = 5
    labels = derive_patch_labels(seg, GRID, threshold=0.01)
    vec = labels[(1, 1)]
    assert vec[5] == 0
    assert vec[1] == 1
    assert vec[0] == 0  # 5/1024 < 1%


def test_one_percent_exact_boundary():
    # 1024 pixels per patch: 10 pixels = 0.977% (below), 11 = 1.074% (above).
    for count, expected_bit in ((10, 0), (11, 1)):
        seg = np.full((64, 64), 1, dtype=np.uint8)
        seg[0, 0:count] = 4
        vec = derive_patch_labels(seg, GRID)[(1, 1)]
        assert vec[4] == expected_bit, f"{count} pixels -> bit {vec[4]}"


def test_multi_label_patch():
    seg = np.full((64, 64), 2, dtype=np.uint8)
    seg[: int(64 * 0.6)] = 1
    labels = derive_patch_labels(seg, GRID)
    vec = labels[(1, 1)]
    assert vec[1] == 1 and vec[2] == 0  # top-left patch: rows 0..31 all class 1
    vec_bottom = labels[(1, 2)]
    assert vec_bottom[1] == 1 and vec_bottom[2] == 1


def test_unknown_class_id_rejected():
    seg = np.full((64, 64), 9, dtype=np.uint8)
    with pytest.raises(ValueError):
        derive_patch_labels(seg, GRID, num_classes=8)


def test_labels_match_brute_force_oracle_on_100_records():
    rng = np.random.default_rng(7)
    records = synth_scenery_dataset(50, seed=21, grid=GRID)
    segs = [r.segmentation for r in records]
    # add adversarial maps with classes planted right at the threshold
    for _ in range(50):
        seg = rng.integers(0, 8, size=(64, 64)).astype(np.uint8)
        seg[(rng.integers(0, 64), rng.integers(0, 54))] = 7
        segs.append(seg)
    for seg in segs:
        got = derive_patch_labels(seg, GRID)
        want = brute_force_labels(seg, GRID)
        for cell in want:
            assert np.array_equal(got[cell], want[cell]), cell


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_threshold_monotone(seed):
    """Raising the threshold can only clear non-background bits."""
    rng = np.random.default_rng(seed)
    seg = rng.integers(0, 8, size=(64, 64)).astype(np.uint8)
    lo = derive_patch_labels(seg, GRID, threshold=0.01)
    hi = derive_patch_labels(seg, GRID, threshold=0.05)
    for cell in lo:
        assert (hi[cell][1:] <= lo[cell][1:]).all()


def test_dataset_deterministic():
    a = synth_scenery_dataset(5, seed=3)
    b = synth_scenery_dataset(5, seed=3)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.image, rb.image)
        assert np.array_equal(ra.segmentation, rb.segmentation)
    c = synth_scenery_dataset(5, seed=4)
    assert not np.array_equal(a[0].image, c[0].image)


def test_dataset_classes_within_configured_set():
    for rec in synth_scenery_dataset(20, seed=9):
        assert rec.segmentation.max() < len(DESK_CLASS_NAMES)
        assert rec.image.min() >= -1.0 and rec.image.max() <= 1.0


def test_save_load_round_trip(tmp_path):
    records = synth_scenery_dataset(3, seed=13)
    save_dataset(tmp_path, records)
    loaded = load_dataset(tmp_path)
    assert len(loaded) == 3
    for orig, back in zip(records, loaded):
        assert np.array_equal(orig.segmentation, back.segmentation)
        # images pass through 8-bit quantization
        assert np.abs(orig.image - back.image).max() <= 1.0 / 127.5


def test_png_round_trip_of_quantized_image():
    rng = np.random.default_rng(0)
    img = rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
    once = png_bytes_to_image(image_to_png_bytes(img))
    twice = png_bytes_to_image(image_to_png_bytes(once))
    assert np.array_equal(once, twice)


def test_labels_to_array_layout():
    grid = GridSpec(n=2, patch_h=8, patch_w=8)
    labels = {
        (1, 1): np.array([1, 0], dtype=np.uint8),
        (2, 1): np.array([0, 1], dtype=np.uint8),
        (1, 2): np.array([1, 1], dtype=np.uint8),
        (2, 2): np.array([0, 0], dtype=np.uint8),
    }
    arr = labels_to_array(labels, grid)
    assert arr.shape == (2, 2, 2)
    assert np.array_equal(arr[1, 0], [0, 1])  # cell (2,1) at [i-1, j-1]


def test_category_payload_round_trip():
    from outpaintkit.data import category_payload_to_vectors

    grid = GridSpec(n=2, patch_h=8, patch_w=8)
    payload = {"2,1": ["tower"], "1,2": ["water", "terrain"]}
    vectors = category_payload_to_vectors(payload, DESK_CLASS_NAMES, grid)
    assert set(vectors) == {(1, 1), (2, 1), (1, 2), (2, 2)}
    tower = DESK_CLASS_NAMES.index("tower")
    assert vectors[(2, 1)][tower] == 1.0 and vectors[(2, 1)].sum() == 1.0
    water = DESK_CLASS_NAMES.index("water")
    terrain = DESK_CLASS_NAMES.index("terrain")
    assert vectors[(1, 2)][water] == 1.0 and vectors[(1, 2)][terrain] == 1.0
    # unassigned cells fall back to background only
    assert vectors[(1, 1)][0] == 1.0 and vectors[(1, 1)].sum() == 1.0


def test_category_payload_errors_name_offender():
    from outpaintkit.data import category_payload_to_vectors

    grid = GridSpec(n=2, patch_h=8, patch_w=8)
    with pytest.raises(ValueError, match="dragon"):
        category_payload_to_vectors({"1,1": ["dragon"]}, DESK_CLASS_NAMES, grid)
    with pytest.raises(ValueError, match="3,1"):
        category_payload_to_vectors({"3,1": ["sky"]}, DESK_CLASS_NAMES, grid)
    with pytest.raises(ValueError, match="not of the form"):
        category_payload_to_vectors({"one": ["sky"]}, DESK_CLASS_NAMES, grid)
