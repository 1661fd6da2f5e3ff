"""Perceptual distance from a fixed, seed-frozen convolutional pyramid.

The backend is deliberately training-free: weights are drawn once from a
seeded RNG, so distances are reproducible across processes and machines
running the same torch build. Activations are smooth (tanh) so gradients
of the distance are well behaved under finite-difference checks.

Any callable (a, b) -> scalar tensor with the same contract can be plugged
in wherever a `backend` argument is accepted.
"""

from __future__ import annotations

import functools

import torch
from torch import nn

DEFAULT_SEED = 1234
_EPS = 1e-8


class FrozenPyramid(nn.Module):
    """Multi-scale conv features with frozen random weights.

    Stage outputs are channel-unit-normalized (LPIPS style); the distance
    between two images is the sum over stages of the mean squared
    difference of the normalized maps.
    """

    def __init__(
        self,
        seed: int = DEFAULT_SEED,
        channels: tuple[int, ...] = (16, 24, 32, 48),
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        rng = torch.Generator().manual_seed(seed)
        stages = []
        prev = 3
        for k, cur in enumerate(channels):
            stride = 1 if k == 0 else 2
            conv = nn.Conv2d(prev, cur, 3, stride=stride, padding=1)
            fan_in = prev * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=rng) / fan_in**0.5)
                conv.bias.copy_(torch.randn(conv.bias.shape, generator=rng) * 0.1)
            stages.append(conv)
            prev = cur
        self.stages = nn.ModuleList(stages)
        self.to(dtype)
        for p in self.parameters():
            p.requires_grad_(False)

    def extract(self, images: torch.Tensor) -> list[torch.Tensor]:
        """Normalized feature maps per stage for (B, 3, H, W) input."""
        feats = []
        x = images
        for conv in self.stages:
            x = torch.tanh(conv(x))
            norm = torch.sqrt(x.pow(2).sum(dim=1, keepdim=True) + _EPS)
            feats.append(x / norm)
        return feats

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return self.distance(a, b)

    def distance(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        """Scalar distance; for batched input the mean over the batch."""
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        squeeze = a.dim() == 3
        if squeeze:
            a = a.unsqueeze(0)
            b = b.unsqueeze(0)
        total = a.new_zeros(())
        for fa, fb in zip(self.extract(a), self.extract(b)):
            total = total + (fa - fb).pow(2).mean()
        return total


@functools.lru_cache(maxsize=4)
def default_backend(dtype: torch.dtype = torch.float32) -> FrozenPyramid:
    return FrozenPyramid(dtype=dtype)


def perceptual_distance(
    a: torch.Tensor, b: torch.Tensor, backend: FrozenPyramid | None = None
) -> torch.Tensor:
    """Symmetric, nonnegative feature-space distance between images.

    Accepts (3, H, W) or (B, 3, H, W) tensors in [-1, 1]. Zero when the
    two inputs produce identical features (in particular when a == b).
    """
    if backend is None:
        backend = default_backend(a.dtype if a.dtype.is_floating_point else torch.float32)
    return backend.distance(a, b)
