"""Shared test doubles: a smooth low-dimensional generator for gradient
checks and small analytic mocks for the pairwise losses."""

from __future__ import annotations

import torch
from torch import nn

from outpaintkit import GeneratorConfig, GridSpec


class SmoothMockGenerator(nn.Module):
    """Tiny differentiable stand-in for the patch generator.

    Matches the surface invert/total_objective need (config, map_latent,
    synthesize_full) but uses only smooth ops (affine + tanh) so central
    finite differences of the objective are well conditioned. float64.
    """

    def __init__(self, d: int = 6, seed: int = 0):
        super().__init__()
        self.config = GeneratorConfig(
            d_z=d, d_w=d, grid=GridSpec(n=2, patch_h=4, patch_w=4), channels=(8,),
            mapping_layers=1,
        )
        g = torch.Generator().manual_seed(seed)
        hidden = 24
        pixels = 3 * self.config.grid.full_h * self.config.grid.full_w
        self.w_map = nn.Parameter(torch.randn(d, d, generator=g, dtype=torch.float64) / d**0.5)
        self.a = nn.Parameter(torch.randn(d, hidden, generator=g, dtype=torch.float64) / d**0.5)
        self.b = nn.Parameter(torch.randn(hidden, generator=g, dtype=torch.float64) * 0.1)
        self.c = nn.Parameter(torch.randn(hidden, pixels, generator=g, dtype=torch.float64) / hidden**0.5)
        self.d_out = nn.Parameter(torch.randn(pixels, generator=g, dtype=torch.float64) * 0.1)
        for p in self.parameters():
            p.requires_grad_(False)

    def map_latent(self, z: torch.Tensor) -> torch.Tensor:
        return z @ self.w_map

    def synthesize_full(self, codes: torch.Tensor) -> torch.Tensor:
        single = codes.dim() == 1
        if single:
            codes = codes.unsqueeze(0)
        grid = self.config.grid
        h = torch.tanh(codes @ self.a + self.b)
        img = 0.9 * torch.tanh(h @ self.c + self.d_out)
        img = img.reshape(-1, 3, grid.full_h, grid.full_w)
        return img.squeeze(0) if single else img


class BroadcastMockGenerator(nn.Module):
    """G_full(v) tiles each code entry over `repeat` pixels."""

    def __init__(self, repeat: int):
        super().__init__()
        self.repeat = repeat

    def synthesize_full(self, codes: torch.Tensor) -> torch.Tensor:
        return codes.repeat_interleave(self.repeat, dim=-1)


def finite_difference_gradient(fn, x: torch.Tensor, h: float = 1e-3) -> torch.Tensor:
    """Central differences of a scalar function over every coordinate."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.numel()):
        orig = float(flat[k])
        flat[k] = orig + h
        up = float(fn(x))
        flat[k] = orig - h
        down = float(fn(x))
        flat[k] = orig
        gflat[k] = (up - down) / (2 * h)
    return grad
