"""Coordinate-conditioned patch generator.

A style-based decoder maps a latent z through a fully connected mapping
network to a style code w, reshapes w into a Gaussian-friendly code v with a
slope-5 leaky rectifier, and synthesizes one micro-patch per call conditioned
on a patch coordinate c in [-1, 1]^2. Full images are plain concatenations of
independently generated patches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .grids import GridSpec, cell_coordinate

GAUSSIANIZE_SLOPE = 5.0

DESK_CLASS_NAMES = (
    "background",
    "sky",
    "terrain",
    "water",
    "sun",
    "cloud",
    "tree",
    "tower",
)


def gaussianize(w: torch.Tensor) -> torch.Tensor:
    """Elementwise slope-5 leaky rectifier: v = w if w >= 0 else 5 w."""
    return torch.where(w >= 0, w, GAUSSIANIZE_SLOPE * w)


def degaussianize(v: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`gaussianize` (slope 1/5 on the negative branch)."""
    return torch.where(v >= 0, v, v / GAUSSIANIZE_SLOPE)


@dataclass(frozen=True)
class GeneratorConfig:
    d_z: int = 128
    d_w: int = 128
    grid: GridSpec = field(default_factory=GridSpec)
    channels: tuple[int, ...] = (48, 48, 32, 24)
    mapping_layers: int = 4
    categorical: bool = False
    num_classes: int = 8
    class_names: tuple[str, ...] = DESK_CLASS_NAMES

    def __post_init__(self):
        if self.grid.patch_h != self.grid.patch_w:
            raise ValueError("synthesis network requires square patches")
        size = 4 * 2 ** (len(self.channels) - 1)
        if size != self.grid.patch_h:
            raise ValueError(
                f"channels imply {size}x{size} patches, grid wants "
                f"{self.grid.patch_h}x{self.grid.patch_w}"
            )
        if self.categorical and len(self.class_names) != self.num_classes:
            raise ValueError("class_names length must equal num_classes")


class MappingNetwork(nn.Module):
    """Fully connected z -> w mapping with leaky-0.2 activations between layers."""

    def __init__(self, d_z: int, d_w: int, num_layers: int = 4):
        super().__init__()
        dims = [d_z] + [d_w] * num_layers
        self.layers = nn.ModuleList(
            nn.Linear(dims[k], dims[k + 1]) for k in range(num_layers)
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = z
        for k, layer in enumerate(self.layers):
            h = layer(h)
            if k < len(self.layers) - 1:
                h = F.leaky_relu(h, 0.2)
        return h


class CategoryFuser(nn.Module):
    """Affine fusion of an intermediate style code with a multi-hot label."""

    def __init__(self, d_w: int, num_classes: int):
        super().__init__()
        self.fuse = nn.Linear(d_w + num_classes, d_w)

    def forward(self, w_inter: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return self.fuse(torch.cat([w_inter, y], dim=-1))


def modulated_conv2d(
    x: torch.Tensor,
    weight: torch.Tensor,
    style: torch.Tensor,
    demodulate: bool = True,
    eps: float = 1e-8,
) -> torch.Tensor:
    """Per-sample style-modulated convolution (grouped-conv implementation)."""
    batch, in_ch, h, w = x.shape
    out_ch = weight.shape[0]
    wgt = weight.unsqueeze(0) * style.reshape(batch, 1, in_ch, 1, 1)
    if demodulate:
        norm = torch.rsqrt((wgt * wgt).sum(dim=(2, 3, 4)) + eps)
        wgt = wgt * norm.reshape(batch, out_ch, 1, 1, 1)
    x = x.reshape(1, batch * in_ch, h, w)
    wgt = wgt.reshape(batch * out_ch, in_ch, *weight.shape[2:])
    out = F.conv2d(x, wgt, padding=weight.shape[-1] // 2, groups=batch)
    return out.reshape(batch, out_ch, *out.shape[2:])


class SynthesisLayer(nn.Module):
    """Upsample (optional) + modulated 3x3 conv + bias + leaky activation."""

    def __init__(self, in_ch: int, out_ch: int, style_dim: int, upsample: bool):
        super().__init__()
        self.upsample = upsample
        # Style projection: random weight, bias 1 so modulation starts near
        # identity but still responds to the latent before any training.
        self.affine = nn.Linear(style_dim, in_ch)
        nn.init.normal_(self.affine.weight, std=1.0 / math.sqrt(style_dim))
        nn.init.ones_(self.affine.bias)
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, 3, 3) / math.sqrt(in_ch * 9))
        self.bias = nn.Parameter(torch.zeros(out_ch))

    def forward(self, x: torch.Tensor, style_in: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = modulated_conv2d(x, self.weight, self.affine(style_in))
        return F.leaky_relu(x + self.bias.reshape(1, -1, 1, 1), 0.2)


class PatchGenerator(nn.Module):
    """Full generator: mapping network + coordinate-conditioned synthesis.

    The coordinate enters the synthesis twice: tiled as two constant channels
    on the learned 4x4 input, and concatenated to v ahead of every per-layer
    style projection. Patches are therefore pure functions of (params, v, c).
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.mapping = MappingNetwork(config.d_z, config.d_w, config.mapping_layers)
        self.category_fuser = (
            CategoryFuser(config.d_w, config.num_classes) if config.categorical else None
        )
        c0 = config.channels[0]
        self.const = nn.Parameter(torch.randn(c0, 4, 4))
        style_dim = config.d_w + 2
        layers = []
        in_ch = c0 + 2
        for k, out_ch in enumerate(config.channels):
            layers.append(SynthesisLayer(in_ch, out_ch, style_dim, upsample=k > 0))
            in_ch = out_ch
        self.layers = nn.ModuleList(layers)
        self.rgb_affine = nn.Linear(style_dim, in_ch)
        nn.init.normal_(self.rgb_affine.weight, std=1.0 / math.sqrt(style_dim))
        nn.init.ones_(self.rgb_affine.bias)
        self.rgb_weight = nn.Parameter(torch.randn(3, in_ch, 1, 1) / math.sqrt(in_ch))
        self.rgb_bias = nn.Parameter(torch.zeros(3))

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    @property
    def dtype(self) -> torch.dtype:
        return self.const.dtype

    def map_latent(self, z: torch.Tensor) -> torch.Tensor:
        """z -> style code w. Accepts (d_z,) or (batch, d_z)."""
        z = torch.as_tensor(z, dtype=self.dtype)
        single = z.ndim == 1
        if single:
            z = z.unsqueeze(0)
        if z.ndim != 2 or z.shape[1] != self.config.d_z:
            raise ValueError(f"latent must have length {self.config.d_z}, got shape {tuple(z.shape)}")
        w = self.mapping(z)
        return w.squeeze(0) if single else w

    def fuse_category(self, w_inter: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """Per-patch style code from an intermediate code and a multi-hot label."""
        if self.category_fuser is None:
            raise ValueError("fuse_category requires a categorical model")
        w_inter = torch.as_tensor(w_inter, dtype=self.dtype)
        y = torch.as_tensor(y, dtype=self.dtype)
        single = w_inter.ndim == 1
        if single:
            w_inter = w_inter.unsqueeze(0)
        if y.ndim == 1:
            y = y.unsqueeze(0).expand(w_inter.shape[0], -1)
        if y.shape[-1] != self.config.num_classes:
            raise ValueError(
                f"category vector must have length {self.config.num_classes}, got {y.shape[-1]}"
            )
        w = self.category_fuser(w_inter, y)
        return w.squeeze(0) if single else w

    def synthesize_patch(self, v: torch.Tensor, c) -> torch.Tensor:
        """Decode one micro-patch per (v, c) pair.

        v: (d_w,) or (batch, d_w); c: (x, y) pair or (batch, 2) tensor with
        both components in [-1, 1]. Off-grid coordinates (e.g. halfway points)
        are valid.
        """
        v = torch.as_tensor(v, dtype=self.dtype)
        c = torch.as_tensor(c, dtype=self.dtype)
        single = v.ndim == 1
        if single:
            v = v.unsqueeze(0)
        if c.ndim == 1:
            c = c.unsqueeze(0).expand(v.shape[0], -1)
        if v.shape[1] != self.config.d_w:
            raise ValueError(f"code must have length {self.config.d_w}, got {v.shape[1]}")
        if c.shape != (v.shape[0], 2):
            raise ValueError(f"coordinates must be (batch, 2), got {tuple(c.shape)}")
        if bool((c.abs() > 1.0).any()):
            raise ValueError("patch coordinate outside [-1, 1]^2")
        batch = v.shape[0]
        style_in = torch.cat([v, c], dim=1)
        cmap = c.reshape(batch, 2, 1, 1).expand(batch, 2, 4, 4)
        x = torch.cat([self.const.unsqueeze(0).expand(batch, -1, -1, -1), cmap], dim=1)
        for layer in self.layers:
            x = layer(x, style_in)
        rgb = modulated_conv2d(x, self.rgb_weight, self.rgb_affine(style_in), demodulate=False)
        out = torch.tanh(rgb + self.rgb_bias.reshape(1, -1, 1, 1))
        return out.squeeze(0) if single else out

    def synthesize_full(self, codes: torch.Tensor) -> torch.Tensor:
        """Concatenate independently generated patches into a full image.

        codes: a single code (d_w,) / batch (batch, d_w) shared by all cells,
        or per-cell codes (n, n, d_w) / (batch, n, n, d_w) where
        codes[i-1, j-1] belongs to cell (i, j).
        """
        codes = torch.as_tensor(codes, dtype=self.dtype)
        grid = self.grid
        n = grid.n
        if codes.ndim == 1:
            codes = codes.unsqueeze(0)
            batched = False
        elif codes.ndim == 3:
            codes = codes.unsqueeze(0)
            batched = False
        else:
            batched = True
        if codes.ndim == 2:
            codes = codes.reshape(-1, 1, 1, self.config.d_w).expand(-1, n, n, -1)
        if codes.shape[1:] != (n, n, self.config.d_w):
            raise ValueError(
                f"per-cell codes must be shaped ({n}, {n}, {self.config.d_w}), "
                f"got {tuple(codes.shape[1:])}"
            )
        batch = codes.shape[0]
        # One synthesis call per cell at the caller's batch size, so each
        # block is bit-identical to the matching synthesize_patch call
        # (fusing cells into one bigger batch can change GEMM paths).
        full = codes.new_empty(batch, 3, grid.full_h, grid.full_w)
        for i, j in grid.cells():
            patch = self.synthesize_patch(codes[:, i - 1, j - 1], cell_coordinate(grid, i, j))
            rows, cols = grid.cell_block(i, j)
            full[:, :, rows, cols] = patch
        return full if batched else full.squeeze(0)

    def generate_full(self, z: torch.Tensor, labels: torch.Tensor | None = None) -> torch.Tensor:
        """z -> full image through the whole pipeline (training-time path).

        labels: (batch, n, n, K) per-cell multi-hot labels, required iff the
        model is categorical; labels[:, i-1, j-1] belongs to cell (i, j).
        """
        z = torch.as_tensor(z, dtype=self.dtype)
        single = z.ndim == 1
        if single:
            z = z.unsqueeze(0)
        w = self.map_latent(z)
        if self.config.categorical:
            if labels is None:
                raise ValueError("categorical model requires per-cell labels")
            labels = torch.as_tensor(labels, dtype=self.dtype)
            if single and labels.ndim == 3:
                labels = labels.unsqueeze(0)
            n = self.grid.n
            if labels.shape != (z.shape[0], n, n, self.config.num_classes):
                raise ValueError(
                    f"labels must be shaped (batch, {n}, {n}, {self.config.num_classes})"
                )
            w_cells = self.fuse_category(
                w.repeat_interleave(n * n, dim=0),
                labels.reshape(-1, self.config.num_classes),
            ).reshape(z.shape[0], n, n, self.config.d_w)
            codes = gaussianize(w_cells)
        else:
            if labels is not None:
                raise ValueError("labels only apply to categorical models")
            codes = gaussianize(w)
        full = self.synthesize_full(codes)
        return full.squeeze(0) if single else full
