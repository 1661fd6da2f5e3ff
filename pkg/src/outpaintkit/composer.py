"""Canvas planning, composition, seam blending and panorama stitching.

The planner maps a partial reference onto the patch grid and tags each
cell as known or to-outpaint. Composition overwrites generated pixels
with known ones. Blending decodes extra patches at coordinates halfway
between adjacent known/outpainted cells and cross-fades them over the
seam with a triangular ramp.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Callable, Sequence

import numpy as np
import torch

from .generator import PatchGenerator, gaussianize
from .grids import GridSpec, halfway_coordinate
from .inversion import (
    InversionProblem,
    InversionResult,
    LossWeights,
    PriorStats,
    invert,
)

API_VERSION = "1"

DIRECTIONS = ("left", "right", "up", "down")


@dataclasses.dataclass
class GridPlan:
    """Placement of a reference on the canvas and the cell partition."""

    grid: GridSpec
    anchor: tuple[int, int]
    known_mask: np.ndarray
    known_cells: list[tuple[int, int]]
    outpaint_cells: list[tuple[int, int]]
    direction: str | None = None


def plan_grid(
    grid: GridSpec,
    reference_hw: tuple[int, int],
    direction: str | None = None,
    known_cells: Sequence[tuple[int, int]] | None = None,
    reference_mask: np.ndarray | None = None,
) -> GridPlan:
    """Decide where the reference sits and which cells need outpainting.

    Exactly one of `direction` / `known_cells` selects the placement mode.
    With a direction, new content grows toward it, so the reference is
    anchored at the opposite edge (centered on the other axis). With
    explicit cells the reference must be canvas-sized and the given cells
    are taken as known. `reference_mask` restricts known pixels to an
    irregular region within the reference extent.

    A cell counts as known when any of its pixels is known; the known and
    outpaint cell lists always partition the grid.
    """
    h, w = reference_hw
    if (direction is None) == (known_cells is None):
        raise ValueError("specify exactly one of direction or known_cells")
    if h < 1 or w < 1:
        raise ValueError(f"reference extent must be positive, got {reference_hw}")
    if h > grid.full_h or w > grid.full_w:
        raise ValueError(
            f"reference {reference_hw} exceeds canvas ({grid.full_h}, {grid.full_w})"
        )

    if direction is not None:
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
        row = (grid.full_h - h) // 2
        col = (grid.full_w - w) // 2
        if direction == "right":
            col = 0
        elif direction == "left":
            col = grid.full_w - w
        elif direction == "down":
            row = 0
        elif direction == "up":
            row = grid.full_h - h
        anchor = (row, col)
    else:
        if (h, w) != (grid.full_h, grid.full_w):
            raise ValueError(
                "explicit known_cells require a canvas-sized reference, "
                f"got {reference_hw} for ({grid.full_h}, {grid.full_w})"
            )
        anchor = (0, 0)

    known = np.zeros((grid.full_h, grid.full_w), dtype=bool)
    if known_cells is not None:
        cells = list(dict.fromkeys(tuple(c) for c in known_cells))
        if not cells:
            raise ValueError("known_cells must be nonempty")
        for i, j in cells:
            if not (1 <= i <= grid.n and 1 <= j <= grid.n):
                raise ValueError(f"cell {(i, j)} outside 1..{grid.n} grid")
            rows, cols = grid.cell_block(i, j)
            known[rows, cols] = True
        if reference_mask is not None:
            if reference_mask.shape != (h, w):
                raise ValueError("reference_mask must match the reference extent")
            known &= reference_mask.astype(bool)
    else:
        if reference_mask is not None:
            if reference_mask.shape != (h, w):
                raise ValueError("reference_mask must match the reference extent")
            known[anchor[0] : anchor[0] + h, anchor[1] : anchor[1] + w] = reference_mask.astype(bool)
        else:
            known[anchor[0] : anchor[0] + h, anchor[1] : anchor[1] + w] = True
    if not known.any():
        raise ValueError("plan has no known pixels")

    known_list: list[tuple[int, int]] = []
    outpaint_list: list[tuple[int, int]] = []
    for i, j in grid.cells():
        rows, cols = grid.cell_block(i, j)
        (known_list if known[rows, cols].any() else outpaint_list).append((i, j))
    return GridPlan(
        grid=grid,
        anchor=anchor,
        known_mask=known,
        known_cells=known_list,
        outpaint_cells=outpaint_list,
        direction=direction,
    )


def reference_canvas(reference: torch.Tensor, plan: GridPlan) -> torch.Tensor:
    """Place a (3, h, w) reference on a zeroed canvas at the plan anchor."""
    grid = plan.grid
    canvas = reference.new_zeros(3, grid.full_h, grid.full_w)
    r, c = plan.anchor
    canvas[:, r : r + reference.shape[1], c : c + reference.shape[2]] = reference
    return canvas


def compose(reference: torch.Tensor, generated: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Known pixels from the reference, everything else from the generated
    canvas. Idempotent: composing the output again changes nothing."""
    if reference.shape[-3:] != generated.shape[-3:]:
        raise ValueError(
            f"shape mismatch: reference {tuple(reference.shape)} vs generated {tuple(generated.shape)}"
        )
    if mask.shape != reference.shape[-2:]:
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match spatial dims")
    mask = mask.bool().to(generated.device)
    return torch.where(mask, reference.to(generated.dtype), generated)


@dataclasses.dataclass
class BlendSeam:
    """One known/outpaint boundary plus the halfway patch that covers it."""

    orientation: str  # "vertical" (seam is a column) or "horizontal" (a row)
    cell_known: tuple[int, int]
    cell_new: tuple[int, int]
    coordinate: tuple[float, float]
    seam_pos: int  # pixel column (vertical) or row (horizontal) of the boundary
    span: tuple[int, int]  # [start, stop) rows (vertical) or cols (horizontal)


@dataclasses.dataclass
class BlendPlan:
    grid: GridSpec
    seams: list[BlendSeam]

    @property
    def overlap(self) -> int:
        """Half-width of the cross-fade region on each side of a seam."""
        return self.grid.patch_w // 2


def build_blend_plan(plan: GridPlan) -> BlendPlan:
    """Collect seams where a known cell touches an outpaint cell."""
    grid = plan.grid
    known = set(plan.known_cells)
    new = set(plan.outpaint_cells)
    seams: list[BlendSeam] = []
    for i, j in grid.cells():
        for di, dj in ((1, 0), (0, 1)):
            a, b = (i, j), (i + di, j + dj)
            if not (1 <= b[0] <= grid.n and 1 <= b[1] <= grid.n):
                continue
            if a in known and b in new:
                cell_known, cell_new = a, b
            elif a in new and b in known:
                cell_known, cell_new = b, a
            else:
                continue
            coord = halfway_coordinate(grid, a, b)
            if di == 1:
                rows, _ = grid.cell_block(i, j)
                seams.append(
                    BlendSeam(
                        orientation="vertical",
                        cell_known=cell_known,
                        cell_new=cell_new,
                        coordinate=coord,
                        seam_pos=i * grid.patch_w,
                        span=(rows.start, rows.stop),
                    )
                )
            else:
                _, cols = grid.cell_block(i, j)
                seams.append(
                    BlendSeam(
                        orientation="horizontal",
                        cell_known=cell_known,
                        cell_new=cell_new,
                        coordinate=coord,
                        seam_pos=j * grid.patch_h,
                        span=(cols.start, cols.stop),
                    )
                )
    return BlendPlan(grid=grid, seams=seams)


def decode_halfway_patches(
    generator: PatchGenerator,
    code: torch.Tensor,
    blend_plan: BlendPlan,
    categories: dict[tuple[int, int], np.ndarray] | None = None,
) -> list[torch.Tensor]:
    """Decode one patch per seam at its halfway coordinate.

    In categorical mode the patch uses the outpainted cell's category
    vector (the content being faded in).
    """
    patches = []
    with torch.no_grad():
        for seam in blend_plan.seams:
            w = code.unsqueeze(0)
            if generator.config.categorical:
                if categories is None:
                    raise ValueError("categorical generator requires categories for blending")
                y = torch.as_tensor(
                    np.asarray(categories[seam.cell_new]), dtype=code.dtype
                ).unsqueeze(0)
                w = generator.fuse_category(w, y)
            v = gaussianize(w)
            patches.append(generator.synthesize_patch(v, seam.coordinate)[0])
    return patches


def _triangle_alpha(width2: int, half: int, dtype: torch.dtype) -> torch.Tensor:
    t = torch.arange(width2, dtype=dtype)
    return (torch.minimum(t, width2 - 1 - t) + 0.5) / half


def blend(
    image: torch.Tensor,
    halfway_patches: Sequence[torch.Tensor],
    blend_plan: BlendPlan,
) -> torch.Tensor:
    """Cross-fade halfway patches over each seam.

    The fade weight ramps from ~0 at both edges of the overlap region to
    ~1 at the seam line, so each output pixel is a convex combination of
    the composed image and the halfway patch. Seams are applied in plan
    order; overlapping corner regions take the later seam's fade on top.
    """
    if len(halfway_patches) != len(blend_plan.seams):
        raise ValueError(
            f"{len(halfway_patches)} patches for {len(blend_plan.seams)} seams"
        )
    grid = blend_plan.grid
    half = blend_plan.overlap
    out = image.clone()
    for patch, seam in zip(halfway_patches, blend_plan.seams):
        if patch.shape != (3, grid.patch_h, grid.patch_w):
            raise ValueError(f"halfway patch must be (3, {grid.patch_h}, {grid.patch_w})")
        if seam.orientation == "vertical":
            lo, hi = seam.seam_pos - half, seam.seam_pos + half
            if lo < 0 or hi > grid.full_w:
                raise ValueError(f"seam overlap [{lo}, {hi}) outside canvas")
            region = out[:, seam.span[0] : seam.span[1], lo:hi]
            alpha = _triangle_alpha(2 * half, half, image.dtype).view(1, 1, -1)
        else:
            lo, hi = seam.seam_pos - half, seam.seam_pos + half
            if lo < 0 or hi > grid.full_h:
                raise ValueError(f"seam overlap [{lo}, {hi}) outside canvas")
            region = out[:, lo:hi, seam.span[0] : seam.span[1]]
            alpha = _triangle_alpha(2 * half, half, image.dtype).view(1, -1, 1)
        # r + a*(p - r) instead of a*p + (1-a)*r: exact when p == r, so a
        # halfway patch equal to the image leaves it untouched.
        region.add_(alpha * (patch - region))
    return out


@dataclasses.dataclass
class OutpaintRequest:
    """One outpainting job: a reference plus placement and sampling knobs."""

    reference: np.ndarray
    direction: str | None = "right"
    known_cells: list[tuple[int, int]] | None = None
    reference_mask: np.ndarray | None = None
    m: int = 3
    categories: dict[tuple[int, int], np.ndarray] | None = None
    blend: bool = True
    steps: int = 800
    lr: float = 0.05
    seed: int = 0
    restarts: int = 8
    warmup_steps: int = 100
    weights: LossWeights = dataclasses.field(default_factory=LossWeights)

    def __post_init__(self):
        ref = np.asarray(self.reference)
        if ref.ndim != 3 or ref.shape[0] != 3:
            raise ValueError(f"reference must be (3, h, w), got {ref.shape}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        self.reference = ref


@dataclasses.dataclass
class OutpaintOutcome:
    """Final candidates plus everything needed to inspect the run."""

    candidates: torch.Tensor
    plan: GridPlan
    inversion: InversionResult
    candidate_mse: list[float]


def run_outpaint(
    request: OutpaintRequest,
    generator: PatchGenerator,
    stats: PriorStats,
    callback: Callable[[int, int, dict[str, float]], None] | None = None,
) -> OutpaintOutcome:
    """Plan, invert and compose one outpainting request."""
    grid = generator.config.grid
    plan = plan_grid(
        grid,
        (request.reference.shape[1], request.reference.shape[2]),
        direction=request.direction,
        known_cells=request.known_cells,
        reference_mask=request.reference_mask,
    )
    dtype = next(generator.parameters()).dtype
    reference = torch.as_tensor(request.reference, dtype=dtype)
    if request.known_cells is None:
        canvas_ref = reference_canvas(reference, plan)
    else:
        canvas_ref = reference
    mask = torch.from_numpy(plan.known_mask)
    problem = InversionProblem(
        reference=canvas_ref,
        mask=mask,
        m=request.m,
        weights=request.weights,
        steps=request.steps,
        lr=request.lr,
        seed=request.seed,
        categories=request.categories,
        restarts=request.restarts,
        warmup_steps=request.warmup_steps,
    )
    result = invert(problem, generator, stats, callback=callback)

    candidates = result.composed
    if request.blend:
        blend_plan = build_blend_plan(plan)
        if blend_plan.seams:
            blended = []
            for idx in range(request.m):
                patches = decode_halfway_patches(
                    generator, result.codes[idx], blend_plan, request.categories
                )
                blended.append(blend(candidates[idx], patches, blend_plan))
            candidates = torch.stack(blended)

    mask_f = mask.to(candidates.dtype)
    denom = mask_f.sum() * 3
    mse = [
        float(((canvas_ref - result.images[k]).pow(2) * mask_f).sum() / denom)
        for k in range(request.m)
    ]
    return OutpaintOutcome(candidates=candidates, plan=plan, inversion=result, candidate_mse=mse)


def canonical_json(obj) -> str:
    """Stable JSON encoding: sorted keys, two-space indent, newline at end.

    Byte-for-byte reproducible across processes and languages that follow
    the same rules.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def image_sha256(image: torch.Tensor) -> str:
    arr = np.ascontiguousarray(image.detach().cpu().numpy().astype(np.float32))
    return hashlib.sha256(arr.tobytes()).hexdigest()


_STEP_SEED_STRIDE = 9973


@dataclasses.dataclass
class PanoramaResult:
    image: torch.Tensor
    manifest: dict


def panorama(
    generator: PatchGenerator,
    stats: PriorStats,
    initial: torch.Tensor,
    steps: int,
    direction: str = "right",
    m: int = 3,
    seed: int = 0,
    blend: bool = True,
    inversion_steps: int = 800,
    lr: float = 0.05,
    restarts: int = 8,
    warmup_steps: int = 100,
    weights: LossWeights | None = None,
    categories: dict[tuple[int, int], np.ndarray] | None = None,
    selector: Callable[[OutpaintOutcome], int] | None = None,
    callback: Callable[[int, int], None] | None = None,
    selected_override: Sequence[int] | None = None,
) -> PanoramaResult:
    """Extend a canvas-sized image one patch column (or row) at a time.

    Each step re-inverts the strip nearest the growth edge, outpaints one
    new patch line, picks one of the m candidates (lowest masked
    reconstruction error by default) and appends it. The manifest records
    every per-step seed and selection so the exact panorama can be
    replayed later.
    """
    grid = generator.config.grid
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if initial.shape != (3, grid.full_h, grid.full_w):
        raise ValueError(
            f"initial must be (3, {grid.full_h}, {grid.full_w}), got {tuple(initial.shape)}"
        )
    if selected_override is not None and len(selected_override) != steps:
        raise ValueError("selected_override must list one index per step")
    weights = weights or LossWeights()
    dtype = next(generator.parameters()).dtype
    canvas = initial.to(dtype).clone()
    horizontal = direction in ("left", "right")
    strip = (grid.n - 1) * (grid.patch_w if horizontal else grid.patch_h)

    manifest_steps = []
    for s in range(steps):
        if direction == "right":
            tail = canvas[:, :, -strip:]
        elif direction == "left":
            tail = canvas[:, :, :strip]
        elif direction == "down":
            tail = canvas[:, -strip:, :]
        else:
            tail = canvas[:, :strip, :]
        step_seed = seed + s * _STEP_SEED_STRIDE
        request = OutpaintRequest(
            reference=tail.detach().cpu().numpy(),
            direction=direction,
            m=m,
            categories=categories,
            blend=blend,
            steps=inversion_steps,
            lr=lr,
            seed=step_seed,
            restarts=restarts,
            warmup_steps=warmup_steps,
            weights=weights,
        )
        outcome = run_outpaint(request, generator, stats)
        if selected_override is not None:
            chosen = int(selected_override[s])
        elif selector is not None:
            chosen = int(selector(outcome))
        else:
            chosen = int(np.argmin(outcome.candidate_mse))
        if not (0 <= chosen < m):
            raise ValueError(f"selected candidate {chosen} outside 0..{m - 1}")
        picked = outcome.candidates[chosen]
        if direction == "right":
            canvas = torch.cat([canvas[:, :, :-strip], picked], dim=2)
        elif direction == "left":
            canvas = torch.cat([picked, canvas[:, :, strip:]], dim=2)
        elif direction == "down":
            canvas = torch.cat([canvas[:, :-strip, :], picked], dim=1)
        else:
            canvas = torch.cat([picked, canvas[:, strip:, :]], dim=1)
        manifest_steps.append(
            {
                "step": s,
                "seed": step_seed,
                "selected": chosen,
                "objective": outcome.inversion.objective,
                "candidate_mse": outcome.candidate_mse,
            }
        )
        if callback is not None:
            callback(s + 1, steps)

    manifest = {
        "kind": "panorama_manifest",
        "api_version": API_VERSION,
        "direction": direction,
        "m": m,
        "blend": blend,
        "seed": seed,
        "inversion_steps": inversion_steps,
        "lr": lr,
        "restarts": restarts,
        "warmup_steps": warmup_steps,
        "weights": weights.as_dict(),
        "grid": {"n": grid.n, "patch_h": grid.patch_h, "patch_w": grid.patch_w},
        "initial_sha256": image_sha256(initial),
        "steps": manifest_steps,
    }
    return PanoramaResult(image=canvas, manifest=manifest)


def replay_panorama(
    manifest: dict,
    generator: PatchGenerator,
    stats: PriorStats,
    initial: torch.Tensor,
) -> PanoramaResult:
    """Rebuild a panorama from its manifest, honoring recorded selections.

    Raises if the initial image hash or grid does not match the manifest.
    """
    if manifest.get("kind") != "panorama_manifest":
        raise ValueError("not a panorama manifest")
    grid = generator.config.grid
    mg = manifest["grid"]
    if (mg["n"], mg["patch_h"], mg["patch_w"]) != (grid.n, grid.patch_h, grid.patch_w):
        raise ValueError("manifest grid does not match the generator grid")
    if image_sha256(initial) != manifest["initial_sha256"]:
        raise ValueError("initial image does not match manifest hash")
    return panorama(
        generator,
        stats,
        initial,
        steps=len(manifest["steps"]),
        direction=manifest["direction"],
        m=manifest["m"],
        seed=manifest["seed"],
        blend=manifest["blend"],
        inversion_steps=manifest["inversion_steps"],
        lr=manifest["lr"],
        restarts=manifest.get("restarts", 1),
        warmup_steps=manifest.get("warmup_steps", 100),
        selected_override=[entry["selected"] for entry in manifest["steps"]],
        weights=LossWeights(**manifest["weights"]),
    )
