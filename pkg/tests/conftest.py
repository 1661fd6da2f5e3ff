"""Shared fixtures: a tiny fast generator for unit tests and result-line
reporting for the acceptance suite."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from outpaintkit import GeneratorConfig, GridSpec, PatchGenerator, estimate_prior


@pytest.fixture(scope="session")
def tiny_config() -> GeneratorConfig:
    """16x16 canvas, 2x2 grid of 8x8 patches, 16-dim latents."""
    return GeneratorConfig(
        d_z=16,
        d_w=16,
        grid=GridSpec(n=2, patch_h=8, patch_w=8),
        channels=(8, 8),
        mapping_layers=2,
    )


@pytest.fixture(scope="session")
def tiny_generator(tiny_config) -> PatchGenerator:
    torch.manual_seed(77)
    gen = PatchGenerator(tiny_config)
    gen.eval()
    for p in gen.parameters():
        p.requires_grad_(False)
    return gen


@pytest.fixture(scope="session")
def tiny_stats(tiny_generator):
    return estimate_prior(tiny_generator, sample_count=2000, seed=5)


@pytest.fixture(scope="session")
def tiny_categorical_generator() -> PatchGenerator:
    torch.manual_seed(78)
    gen = PatchGenerator(
        GeneratorConfig(
            d_z=16,
            d_w=16,
            grid=GridSpec(n=2, patch_h=8, patch_w=8),
            channels=(8, 8),
            mapping_layers=2,
            categorical=True,
        )
    )
    gen.eval()
    for p in gen.parameters():
        p.requires_grad_(False)
    return gen


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(123)
