"""Multi-code latent inversion for outpainting.

Given a reference covering part of the canvas, jointly optimize m latent
codes so each decoded canvas reproduces the known pixels while a prior
term keeps codes near the training distribution (measured in the
gaussianized space) and two diversity terms spread the codes apart.

Codes live in the mapped latent space; in categorical mode they are the
pre-fusion intermediate latents and each cell's code is produced by the
category fuser before decoding.
"""

from __future__ import annotations

import dataclasses
import math
import time
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .errors import DivergenceError
from .generator import PatchGenerator, degaussianize, gaussianize
from .perceptual import FrozenPyramid, default_backend

MS_EPS = 1e-5


@dataclasses.dataclass
class LossWeights:
    """Term weights for the inversion objective."""

    mse: float = 0.01
    percept: float = 1.0
    prior: float = 0.001
    div: float = 0.001
    ms: float = 0.001

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if value < 0:
                raise ValueError(f"weight {field.name} must be >= 0, got {value}")

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class PriorStats:
    """Gaussianized-latent moments: mean, covariance and its inverse."""

    mu: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    sample_count: int

    def __post_init__(self):
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d) or self.sigma_inv.shape != (d, d):
            raise ValueError("sigma and sigma_inv must be (d, d) matching mu")
        residual = np.abs(self.sigma @ self.sigma_inv - np.eye(d)).max()
        if not np.isfinite(residual) or residual > 1e-6:
            raise ValueError(f"sigma_inv is not an inverse of sigma (residual {residual:.3g})")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def save_prior(path: str | Path, stats: PriorStats) -> None:
    np.savez(
        Path(path),
        mu=stats.mu,
        sigma=stats.sigma,
        sigma_inv=stats.sigma_inv,
        sample_count=np.asarray(stats.sample_count),
    )


def load_prior(path: str | Path) -> PriorStats:
    with np.load(Path(path)) as data:
        return PriorStats(
            mu=data["mu"],
            sigma=data["sigma"],
            sigma_inv=data["sigma_inv"],
            sample_count=int(data["sample_count"]),
        )


def estimate_prior(
    generator: PatchGenerator,
    sample_count: int = 100_000,
    seed: int = 0,
    batch_size: int = 4096,
    label_sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None,
) -> PriorStats:
    """Estimate mean and covariance of the gaussianized latents.

    Draws z ~ N(0, I), maps through the generator and gaussianizes. In
    categorical mode each sample is fused with a category vector first
    (uniform one-hot by default; pass `label_sampler(batch, rng) -> (batch, K)`
    to match a dataset's label statistics). A small ridge proportional to
    the mean variance keeps the covariance invertible.
    """
    d_w = generator.config.d_w
    if sample_count < 10 * d_w:
        raise ValueError(
            f"sample_count {sample_count} is too small for d_w={d_w}; need at least {10 * d_w}"
        )
    torch_rng = torch.Generator().manual_seed(seed)
    np_rng = np.random.default_rng(seed)
    dim = d_w
    total = np.zeros(dim, dtype=np.float64)
    outer = np.zeros((dim, dim), dtype=np.float64)
    remaining = sample_count
    with torch.no_grad():
        while remaining > 0:
            batch = min(batch_size, remaining)
            z = torch.randn(batch, generator.config.d_z, generator=torch_rng)
            w = generator.map_latent(z)
            if generator.config.categorical:
                if label_sampler is None:
                    k = generator.config.num_classes
                    picks = np_rng.integers(0, k, size=batch)
                    y = np.eye(k, dtype=np.float32)[picks]
                else:
                    y = np.asarray(label_sampler(batch, np_rng), dtype=np.float32)
                w = generator.fuse_category(w, torch.from_numpy(y))
            v = gaussianize(w).double().numpy()
            total += v.sum(axis=0)
            outer += v.T @ v
            remaining -= batch
    mu = total / sample_count
    sigma = (outer - sample_count * np.outer(mu, mu)) / (sample_count - 1)
    sigma = 0.5 * (sigma + sigma.T)
    ridge = 1e-4 * np.trace(sigma) / dim
    sigma = sigma + ridge * np.eye(dim)
    sigma_inv = np.linalg.inv(sigma)
    return PriorStats(mu=mu, sigma=sigma, sigma_inv=sigma_inv, sample_count=sample_count)


def recon_losses(
    reference: torch.Tensor,
    image: torch.Tensor,
    mask: torch.Tensor,
    backend: FrozenPyramid | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Masked reconstruction terms between a reference and a decoded canvas.

    Returns (l_mse, l_percept): mean squared error over known pixels (all
    channels) and the perceptual distance between the masked images.
    """
    if reference.shape != image.shape:
        raise ValueError(f"shape mismatch: {tuple(reference.shape)} vs {tuple(image.shape)}")
    if mask.shape != reference.shape[-2:]:
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match image spatial dims")
    mask = mask.to(dtype=reference.dtype, device=reference.device)
    count = mask.sum()
    if count == 0:
        raise ValueError("mask selects no pixels")
    diff2 = (reference - image).pow(2) * mask
    l_mse = diff2.sum() / (count * reference.shape[-3])
    l_percept = _masked_percept(reference, image, mask, backend)
    return l_mse, l_percept


def _masked_percept(
    reference: torch.Tensor,
    image: torch.Tensor,
    mask: torch.Tensor,
    backend: FrozenPyramid | None,
) -> torch.Tensor:
    if backend is None:
        backend = default_backend(reference.dtype)
    return backend.distance(reference * mask, image * mask)


def prior_loss(v: torch.Tensor, stats: PriorStats) -> torch.Tensor:
    """Squared Mahalanobis distance of a gaussianized code from the prior."""
    if v.shape[-1] != stats.dim:
        raise ValueError(f"code dim {v.shape[-1]} does not match prior dim {stats.dim}")
    mu = torch.as_tensor(stats.mu, dtype=v.dtype, device=v.device)
    sigma_inv = torch.as_tensor(stats.sigma_inv, dtype=v.dtype, device=v.device)
    delta = v - mu
    return torch.einsum("...i,ij,...j->...", delta, sigma_inv, delta)


def diversity_loss(codes: torch.Tensor) -> torch.Tensor:
    """Negative sum of pairwise L1 distances between codes (m, d)."""
    m = codes.shape[0]
    total = codes.new_zeros(())
    for i in range(m):
        for j in range(i + 1, m):
            total = total + (codes[i] - codes[j]).abs().sum()
    return -total


def mode_seeking_loss(
    codes: torch.Tensor,
    generator: PatchGenerator | None = None,
    images: torch.Tensor | None = None,
) -> torch.Tensor:
    """Sum over code pairs of image L1 distance per unit code L1 distance.

    `images` are the decoded full canvases aligned with `codes`; when
    omitted they are decoded through the generator (non-categorical path).
    """
    if images is None:
        if generator is None:
            raise ValueError("either images or a generator is required")
        images = generator.synthesize_full(gaussianize(codes))
    if images.shape[0] != codes.shape[0]:
        raise ValueError("images and codes must have the same leading dimension")
    m = codes.shape[0]
    total = codes.new_zeros(())
    for i in range(m):
        for j in range(i + 1, m):
            num = (images[i] - images[j]).abs().sum()
            den = (codes[i] - codes[j]).abs().sum() + MS_EPS
            total = total + num / den
    return total


@dataclasses.dataclass
class InversionProblem:
    """Specification of one inversion run.

    reference: (3, H, W) canvas holding the known pixels (values outside
    the mask are ignored). mask: (H, W) boolean, True at known pixels.
    categories: per-cell multi-hot vectors, required for categorical
    generators, keyed by 1-based (i, j).

    The objective has init-dependent local minima, so the run launches
    `restarts` seeded candidates, optimizes each for `warmup_steps`, then
    spends the remaining budget on the one with the lowest objective so
    far. restarts=1 disables the warmup race and runs straight through.
    """

    reference: torch.Tensor
    mask: torch.Tensor
    m: int = 3
    weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    steps: int = 800
    lr: float = 0.05
    seed: int = 0
    categories: dict[tuple[int, int], np.ndarray] | None = None
    restarts: int = 8
    warmup_steps: int = 100

    def __post_init__(self):
        if self.reference.dim() != 3 or self.reference.shape[0] != 3:
            raise ValueError(f"reference must be (3, H, W), got {tuple(self.reference.shape)}")
        if self.mask.shape != self.reference.shape[-2:]:
            raise ValueError("mask must match reference spatial dims")
        if self.mask.dtype != torch.bool:
            self.mask = self.mask.bool()
        if not bool(self.mask.any()):
            raise ValueError("mask selects no pixels; nothing to invert")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")

    @property
    def full_reconstruction(self) -> bool:
        """True when every pixel is known (no region left to outpaint)."""
        return bool(self.mask.all())


def _category_tensor(
    problem: InversionProblem, generator: PatchGenerator, dtype: torch.dtype
) -> torch.Tensor:
    grid = generator.config.grid
    k = generator.config.num_classes
    if problem.categories is None:
        raise ValueError("categorical generator requires problem.categories")
    missing = [cell for cell in grid.cells() if cell not in problem.categories]
    if missing:
        raise ValueError(f"categories missing for cells {missing}")
    out = torch.zeros(grid.n, grid.n, k, dtype=dtype)
    for (i, j), vec in problem.categories.items():
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (k,):
            raise ValueError(f"category vector for cell {(i, j)} must have length {k}")
        out[i - 1, j - 1] = torch.as_tensor(vec, dtype=dtype)
    return out


def decode_codes(
    codes: torch.Tensor,
    generator: PatchGenerator,
    categories: torch.Tensor | None = None,
) -> torch.Tensor:
    """Decode (m, d_w) codes to (m, 3, H, W) canvases.

    With `categories` (n, n, K), each cell's latent is fused with its
    category vector before gaussianization.
    """
    if categories is None:
        return generator.synthesize_full(gaussianize(codes))
    m = codes.shape[0]
    grid = generator.config.grid
    n = grid.n
    w_inter = codes.repeat_interleave(n * n, dim=0)
    y = categories.reshape(n * n, -1).repeat(m, 1)
    w_cells = generator.fuse_category(w_inter, y)
    v = gaussianize(w_cells).reshape(m, n, n, -1)
    return generator.synthesize_full(v)


def total_objective(
    problem: InversionProblem,
    codes: torch.Tensor,
    generator: PatchGenerator,
    stats: PriorStats,
    backend: FrozenPyramid | None = None,
    categories: torch.Tensor | None = None,
    images: torch.Tensor | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted inversion objective and its per-term breakdown.

    The breakdown maps each term name to its unweighted value plus the
    weighted "total"; total = sum_k weights[k] * breakdown[k].
    """
    if codes.dim() != 2 or codes.shape[0] != problem.m:
        raise ValueError(f"codes must be ({problem.m}, d_w), got {tuple(codes.shape)}")
    if categories is None and generator.config.categorical:
        categories = _category_tensor(problem, generator, codes.dtype)
    if images is None:
        images = decode_codes(codes, generator, categories)

    w = problem.weights
    mse_sum = codes.new_zeros(())
    percept_sum = codes.new_zeros(())
    for idx in range(problem.m):
        l_mse, l_percept = recon_losses(problem.reference, images[idx], problem.mask, backend)
        mse_sum = mse_sum + l_mse
        percept_sum = percept_sum + l_percept

    if generator.config.categorical:
        grid = generator.config.grid
        n = grid.n
        w_inter = codes.repeat_interleave(n * n, dim=0)
        y = categories.reshape(n * n, -1).repeat(problem.m, 1)
        v_cells = gaussianize(generator.fuse_category(w_inter, y))
        prior_sum = prior_loss(v_cells, stats).reshape(problem.m, n * n).mean(dim=1).sum()
    else:
        prior_sum = prior_loss(gaussianize(codes), stats).sum()

    div = diversity_loss(codes)
    ms = mode_seeking_loss(codes, generator, images=images)

    total = (
        w.mse * mse_sum
        + w.percept * percept_sum
        + w.prior * prior_sum
        + w.div * div
        + w.ms * ms
    )
    breakdown = {
        "mse": float(mse_sum.detach()),
        "percept": float(percept_sum.detach()),
        "prior": float(prior_sum.detach()),
        "div": float(div.detach()),
        "ms": float(ms.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown


@dataclasses.dataclass
class InversionResult:
    """Best-objective snapshot from an inversion run."""

    codes: torch.Tensor
    images: torch.Tensor
    composed: torch.Tensor
    objective: float
    best_step: int
    traces: dict[str, list[float]]
    seconds: float


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Ramp from base_lr at step 0 down to ~0 at the final step."""
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


# Seed offset between restart candidates; any large prime works, it only
# has to keep the candidate init streams distinct.
_RESTART_SEED_STRIDE = 7919


class _Candidate:
    """One optimization trajectory: codes, optimizer and best-so-far state."""

    __slots__ = ("codes", "optimizer", "traces", "best_total", "best_codes", "best_step")

    def __init__(self, codes: torch.Tensor, lr: float):
        self.codes = codes
        self.optimizer = torch.optim.Adam([codes], lr=lr)
        self.traces: dict[str, list[float]] = {
            key: [] for key in ("mse", "percept", "prior", "div", "ms", "total", "lr")
        }
        self.best_total = math.inf
        self.best_codes = codes.detach().clone()
        self.best_step = 0

    def advance(
        self,
        step: int,
        problem: InversionProblem,
        generator: PatchGenerator,
        stats: PriorStats,
        backend: FrozenPyramid | None,
        categories: torch.Tensor | None,
        callback: Callable[[int, int, dict[str, float]], None] | None,
    ) -> None:
        lr_t = cosine_lr(problem.lr, step, problem.steps)
        for group in self.optimizer.param_groups:
            group["lr"] = lr_t
        total, breakdown = total_objective(
            problem, self.codes, generator, stats, backend=backend, categories=categories
        )
        if not math.isfinite(breakdown["total"]):
            raise DivergenceError(
                f"non-finite inversion objective at step {step}",
                diagnostics={"step": step, "breakdown": breakdown, "traces": self.traces},
            )
        for key in ("mse", "percept", "prior", "div", "ms", "total"):
            self.traces[key].append(breakdown[key])
        self.traces["lr"].append(lr_t)
        if breakdown["total"] < self.best_total:
            self.best_total = breakdown["total"]
            self.best_codes = self.codes.detach().clone()
            self.best_step = step
        if callback is not None:
            callback(step, problem.steps, breakdown)
        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        self.optimizer.step()


def invert(
    problem: InversionProblem,
    generator: PatchGenerator,
    stats: PriorStats,
    backend: FrozenPyramid | None = None,
    callback: Callable[[int, int, dict[str, float]], None] | None = None,
) -> InversionResult:
    """Optimize m codes with Adam under a cosine learning-rate ramp-down.

    Each restart candidate starts from its own seeded mapped Gaussian
    draws and runs for `warmup_steps`; the candidate with the lowest
    objective so far keeps the remaining budget. The returned snapshot is
    the winner's best-objective iterate, so the reported objective never
    exceeds its initial one. `callback(step, steps, breakdown)` runs
    every optimization step (including warmups of discarded candidates,
    whose step indices restart from 0) and may raise to abort (e.g. for
    cancellation).
    """
    dtype = next(generator.parameters()).dtype
    reference = problem.reference.to(dtype)
    mask = problem.mask
    problem = dataclasses.replace(problem, reference=reference, mask=mask)
    if backend is None:
        backend = default_backend(dtype)

    categories = None
    if generator.config.categorical:
        categories = _category_tensor(problem, generator, dtype)

    candidates = []
    for r in range(problem.restarts):
        torch_rng = torch.Generator().manual_seed(problem.seed + r * _RESTART_SEED_STRIDE)
        with torch.no_grad():
            z = torch.randn(problem.m, generator.config.d_z, generator=torch_rng, dtype=dtype)
            codes = generator.map_latent(z).detach().clone()
        codes.requires_grad_(True)
        candidates.append(_Candidate(codes, problem.lr))

    started = time.monotonic()
    warmup = problem.steps if problem.restarts == 1 else min(problem.warmup_steps, problem.steps)
    survivors = []
    failure: DivergenceError | None = None
    for candidate in candidates:
        try:
            for step in range(warmup):
                candidate.advance(step, problem, generator, stats, backend, categories, callback)
        except DivergenceError as exc:
            # a diverging start is just a lost race unless every start loses
            failure = exc
            continue
        survivors.append(candidate)
    if not survivors:
        assert failure is not None
        raise failure
    winner = min(survivors, key=lambda c: c.best_total)
    for step in range(warmup, problem.steps):
        winner.advance(step, problem, generator, stats, backend, categories, callback)

    with torch.no_grad():
        images = decode_codes(winner.best_codes, generator, categories)
        composed = torch.where(mask.unsqueeze(0).unsqueeze(0), reference.unsqueeze(0), images)
    return InversionResult(
        codes=winner.best_codes,
        images=images,
        composed=composed,
        objective=winner.best_total,
        best_step=winner.best_step,
        traces=winner.traces,
        seconds=time.monotonic() - started,
    )


@dataclasses.dataclass
class GaussianityReport:
    """Per-dimension shape statistics before and after gaussianization."""

    skew_v: np.ndarray
    excess_kurtosis_v: np.ndarray
    skew_w: np.ndarray
    excess_kurtosis_w: np.ndarray
    degenerate: np.ndarray
    sample_count: int

    @property
    def any_degenerate(self) -> bool:
        """True when some dimension has (numerically) zero variance, making
        its moment statistics meaningless."""
        return bool(self.degenerate.any())

    @property
    def max_abs_skew_v(self) -> float:
        valid = self.skew_v[~self.degenerate]
        return float(np.abs(valid).max()) if valid.size else 0.0

    @property
    def max_abs_excess_kurtosis_v(self) -> float:
        valid = self.excess_kurtosis_v[~self.degenerate]
        return float(np.abs(valid).max()) if valid.size else 0.0


def gaussianity_check(v_samples: np.ndarray | torch.Tensor) -> GaussianityReport:
    """Skewness and excess kurtosis per dimension of gaussianized samples
    and of the corresponding raw latents.

    Values near zero in the v block indicate the piecewise-linear map did
    its job; raw w latents keep visibly non-Gaussian moments.
    """
    from scipy import stats as sstats

    if isinstance(v_samples, torch.Tensor):
        v = v_samples.detach().cpu().double().numpy()
    else:
        v = np.asarray(v_samples, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"v_samples must be (N, d), got {v.shape}")
    if v.shape[0] < 1000:
        raise ValueError(f"need at least 1000 samples, got {v.shape[0]}")
    w = degaussianize(torch.from_numpy(v)).numpy()
    degenerate = v.std(axis=0) < 1e-12
    import warnings

    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        # constant dimensions are reported via the degenerate flag instead
        warnings.simplefilter("ignore", RuntimeWarning)
        report = GaussianityReport(
            skew_v=sstats.skew(v, axis=0),
            excess_kurtosis_v=sstats.kurtosis(v, axis=0, fisher=True),
            skew_w=sstats.skew(w, axis=0),
            excess_kurtosis_w=sstats.kurtosis(w, axis=0, fisher=True),
            degenerate=degenerate,
            sample_count=v.shape[0],
        )
    return report
