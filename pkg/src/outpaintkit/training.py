"""Adversarial training for the coordinate-conditioned patch generator.

The critic always scores full assembled canvases, never lone patches, so
seam artifacts between patches are penalized. Losses follow the
Wasserstein formulation with a lazily applied R1 gradient penalty on real
images. In categorical mode an auxiliary head on the critic's last feature
map predicts the per-patch multi-hot class vectors and both players add a
binary cross-entropy term.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .data import DatasetRecord, derive_patch_labels, labels_to_array
from .errors import DivergenceError
from .generator import GeneratorConfig, PatchGenerator

Scores = Sequence[float] | np.ndarray | torch.Tensor


def _as_score_tensor(scores: Scores, name: str) -> torch.Tensor:
    if isinstance(scores, torch.Tensor):
        t = scores
    else:
        t = torch.as_tensor(np.asarray(scores), dtype=torch.get_default_dtype())
    t = t.reshape(-1)
    if t.numel() == 0:
        raise ValueError(f"{name} must be nonempty")
    return t


def wgan_losses(d_real: Scores, d_fake: Scores) -> tuple[torch.Tensor, torch.Tensor]:
    """Critic and generator objectives for Wasserstein training.

    loss_d = mean(d_fake) - mean(d_real), minimized by the critic;
    loss_g = -mean(d_fake), minimized by the generator.
    """
    real = _as_score_tensor(d_real, "d_real")
    fake = _as_score_tensor(d_fake, "d_fake")
    if real.device != fake.device:
        raise ValueError("d_real and d_fake must live on the same device")
    loss_d = fake.mean() - real.mean()
    loss_g = -fake.mean()
    return loss_d, loss_g


def aux_classification_loss(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy between per-patch class probabilities
    and multi-hot targets.

    `probs` entries must lie strictly inside (0, 1); `targets` entries must
    be 0 or 1. Shapes must match; the mean runs over every element.
    """
    probs = torch.as_tensor(probs)
    targets = torch.as_tensor(targets, dtype=probs.dtype, device=probs.device)
    if probs.shape != targets.shape:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs targets {tuple(targets.shape)}")
    if probs.numel() == 0:
        raise ValueError("probs must be nonempty")
    with torch.no_grad():
        if not bool(((probs > 0) & (probs < 1)).all()):
            raise ValueError("probabilities must lie strictly in (0, 1)")
        if not bool(((targets == 0) | (targets == 1)).all()):
            raise ValueError("targets must be 0 or 1")
    return -(targets * torch.log(probs) + (1.0 - targets) * torch.log1p(-probs)).mean()


def r1_penalty(critic: Callable[[torch.Tensor], torch.Tensor], real: torch.Tensor) -> torch.Tensor:
    """Mean squared gradient norm of the critic at real samples.

    Returns mean over the batch of sum_i (d score / d pixel_i)^2.
    """
    x = real.detach().requires_grad_(True)
    scores = critic(x)
    (grad,) = torch.autograd.grad(scores.sum(), x, create_graph=True)
    return grad.pow(2).reshape(grad.shape[0], -1).sum(dim=1).mean()


class Discriminator(nn.Module):
    """Convolutional critic over full canvases with an optional class head.

    The auxiliary head pools the last feature map to the patch grid
    resolution and emits one logit per class per cell, so cell (i, j) of
    the canvas is classified from the features above it.
    """

    def __init__(self, config: GeneratorConfig, channels: tuple[int, ...] = (16, 32, 64, 96)):
        super().__init__()
        self.config = config
        grid = config.grid
        layers: list[nn.Module] = [
            nn.Conv2d(3, channels[0], 3, padding=1),
            nn.LeakyReLU(0.2),
        ]
        size = grid.full_h
        for prev, cur in zip(channels[:-1], channels[1:]):
            layers += [nn.Conv2d(prev, cur, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            size = (size + 1) // 2
        if size < grid.n:
            raise ValueError(
                f"feature map {size}x{size} is finer than the {grid.n}x{grid.n} "
                "patch grid; use fewer downsampling stages"
            )
        self.features = nn.Sequential(*layers)
        self.critic_head = nn.Linear(channels[-1] * size * size, 1)
        hidden = 64
        self.aux_head = nn.Sequential(
            nn.Conv2d(channels[-1], hidden, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(hidden, config.num_classes, 1),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.critic(images)

    def critic(self, images: torch.Tensor) -> torch.Tensor:
        feats = self.features(images)
        return self.critic_head(feats.flatten(1)).squeeze(1)

    def aux_logits(self, images: torch.Tensor) -> torch.Tensor:
        """Per-cell class logits shaped (B, n, n, K) with [:, i-1, j-1]
        covering grid cell (i, j)."""
        n = self.config.grid.n
        feats = self.features(images)
        pooled = torch.nn.functional.adaptive_avg_pool2d(feats, (n, n))
        logits = self.aux_head(pooled)
        # (B, K, row, col) -> (B, col, row, K) so axis 1 indexes i (x).
        return logits.permute(0, 3, 2, 1)


@dataclasses.dataclass
class TrainingConfig:
    steps: int = 5000
    batch_size: int = 8
    lr: float = 2e-3
    beta1: float = 0.0
    beta2: float = 0.99
    r1_weight: float = 10.0
    r1_interval: int = 16
    cls_weight: float = 1.0
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.r1_interval < 1:
            raise ValueError("r1_interval must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


_PROB_EPS = 1e-6


class AdversarialTrainer:
    """Alternating critic/generator updates with bookkeeping.

    One `step` call consumes one real batch: the critic update (with R1
    every `r1_interval` steps, scaled by the interval to keep its effective
    strength) followed by the generator update on fresh noise.
    """

    def __init__(
        self,
        generator: PatchGenerator,
        discriminator: Discriminator,
        config: TrainingConfig,
    ):
        self.generator = generator
        self.discriminator = discriminator
        self.config = config
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=betas)
        self.noise_rng = torch.Generator().manual_seed(config.seed)
        self.step_count = 0
        self.history: list[dict[str, float]] = []

    def _sample_z(self, batch: int) -> torch.Tensor:
        return torch.randn(batch, self.generator.config.d_z, generator=self.noise_rng)

    def _aux_probs(self, images: torch.Tensor) -> torch.Tensor:
        logits = self.discriminator.aux_logits(images)
        return torch.sigmoid(logits).clamp(_PROB_EPS, 1.0 - _PROB_EPS)

    def step(self, images: torch.Tensor, labels: torch.Tensor | None = None) -> dict[str, float]:
        """Run one critic update and one generator update on a real batch.

        `labels` is required in categorical mode: (B, n, n, K) multi-hot
        vectors aligned with the images. Raises DivergenceError if any
        tracked metric goes non-finite.
        """
        cfg = self.config
        categorical = self.generator.config.categorical
        if categorical and labels is None:
            raise ValueError("categorical training requires per-patch labels")
        metrics: dict[str, float] = {"step": float(self.step_count)}

        z = self._sample_z(images.shape[0])
        with torch.no_grad():
            fake = self.generator.generate_full(z, labels)
        d_real = self.discriminator.critic(images)
        d_fake = self.discriminator.critic(fake)
        loss_d, _ = wgan_losses(d_real, d_fake)
        metrics["loss_d"] = float(loss_d.detach())
        metrics["d_real"] = float(d_real.detach().mean())
        metrics["d_fake"] = float(d_fake.detach().mean())
        if categorical:
            cls_real = aux_classification_loss(self._aux_probs(images), labels)
            cls_fake = aux_classification_loss(self._aux_probs(fake), labels)
            loss_d = loss_d + cfg.cls_weight * (cls_real + cls_fake)
            metrics["cls_real"] = float(cls_real.detach())
            metrics["cls_fake"] = float(cls_fake.detach())
        if self.step_count % cfg.r1_interval == 0:
            penalty = r1_penalty(self.discriminator.critic, images)
            loss_d = loss_d + 0.5 * cfg.r1_weight * cfg.r1_interval * penalty
            metrics["r1"] = float(penalty.detach())
        self.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        self.opt_d.step()

        z = self._sample_z(images.shape[0])
        fake = self.generator.generate_full(z, labels)
        d_fake = self.discriminator.critic(fake)
        _, loss_g = wgan_losses(d_fake.detach(), d_fake)
        metrics["loss_g"] = float(loss_g.detach())
        if categorical:
            cls_gen = aux_classification_loss(self._aux_probs(fake), labels)
            loss_g = loss_g + cfg.cls_weight * cls_gen
            metrics["cls_gen"] = float(cls_gen.detach())
        self.opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        self.opt_g.step()

        if not all(np.isfinite(v) for v in metrics.values()):
            raise DivergenceError(
                f"non-finite metric at step {self.step_count}: {metrics}",
                diagnostics={"metrics": metrics, "history_tail": self.history[-20:]},
            )
        self.step_count += 1
        self.history.append(metrics)
        return metrics


def train(
    records: list[DatasetRecord],
    gen_config: GeneratorConfig,
    train_config: TrainingConfig,
    callback: Callable[[dict[str, float]], None] | None = None,
) -> tuple[PatchGenerator, Discriminator, list[dict[str, float]]]:
    """Train a generator/critic pair from scratch on in-memory records.

    Deterministic in (records, configs): model init, batch sampling and
    noise are all derived from train_config.seed.
    """
    if not records:
        raise ValueError("records must be nonempty")
    grid = gen_config.grid
    for rec in records:
        if rec.image.shape != (3, grid.full_h, grid.full_w):
            raise ValueError(
                f"record image shape {rec.image.shape} does not match grid "
                f"canvas (3, {grid.full_h}, {grid.full_w})"
            )

    torch.manual_seed(train_config.seed)
    generator = PatchGenerator(gen_config)
    discriminator = Discriminator(gen_config)
    trainer = AdversarialTrainer(generator, discriminator, train_config)

    images = torch.from_numpy(np.stack([rec.image for rec in records]))
    labels_all: torch.Tensor | None = None
    if gen_config.categorical:
        packed = [
            labels_to_array(
                derive_patch_labels(rec.segmentation, grid, num_classes=gen_config.num_classes),
                grid,
            )
            for rec in records
        ]
        labels_all = torch.from_numpy(np.stack(packed))

    sampler = np.random.default_rng(train_config.seed)
    for step in range(train_config.steps):
        idx = sampler.integers(0, len(records), size=train_config.batch_size)
        batch = images[idx]
        batch_labels = labels_all[idx] if labels_all is not None else None
        metrics = trainer.step(batch, batch_labels)
        if callback is not None and (step % train_config.log_every == 0 or step == train_config.steps - 1):
            callback(metrics)
    generator.eval()
    return generator, discriminator, trainer.history
