"""Sample-quality metrics with a seed-frozen feature embedder.

The embedder is a fixed random conv net: useless for absolute quality
judgments but fully reproducible, which is what the numeric contracts
(Frechet distance identities, score ranges) are written against. Any
callable with the same interface can replace it.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch
from torch import nn

from .grids import GridSpec
from .perceptual import FrozenPyramid, perceptual_distance

EMBEDDER_SEED = 4321


class FeatureEmbedder(nn.Module):
    """Frozen random conv net exposing features and class probabilities."""

    def __init__(self, d_f: int = 64, num_classes: int = 8, seed: int = EMBEDDER_SEED):
        super().__init__()
        self.d_f = d_f
        self.num_classes = num_classes
        self.seed = seed
        rng = torch.Generator().manual_seed(seed)

        def init(layer: nn.Module, gain: float = 1.0):
            fan_in = layer.weight[0].numel()
            with torch.no_grad():
                layer.weight.copy_(
                    torch.randn(layer.weight.shape, generator=rng) * gain / fan_in**0.5
                )
                layer.bias.copy_(torch.randn(layer.bias.shape, generator=rng) * 0.1)
            return layer

        self.convs = nn.ModuleList(
            [
                init(nn.Conv2d(3, 16, 3, stride=1, padding=1)),
                init(nn.Conv2d(16, 32, 3, stride=2, padding=1)),
                init(nn.Conv2d(32, 48, 3, stride=2, padding=1)),
            ]
        )
        self.proj = init(nn.Linear(48, d_f))
        self.head = init(nn.Linear(d_f, num_classes), gain=2.0)
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def embedder_id(self) -> str:
        return f"frozen-conv-seed{self.seed}-df{self.d_f}"

    def embed(self, images: torch.Tensor) -> np.ndarray:
        """(B, 3, H, W) images -> (B, d_f) float64 features."""
        if images.dim() != 4 or images.shape[1] != 3:
            raise ValueError(f"images must be (B, 3, H, W), got {tuple(images.shape)}")
        x = images.float()
        with torch.no_grad():
            for conv in self.convs:
                x = torch.tanh(conv(x))
            pooled = x.mean(dim=(2, 3))
            feats = self.proj(pooled)
        return feats.double().numpy()

    def class_probs(self, images: torch.Tensor) -> np.ndarray:
        """(B, 3, H, W) images -> (B, K) rows on the probability simplex."""
        feats = torch.from_numpy(self.embed(images)).float()
        with torch.no_grad():
            probs = torch.softmax(self.head(feats), dim=1)
        return probs.double().numpy()


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with unbiased
    covariances and the matrix square root taken through symmetric
    eigendecompositions (negative eigenvalues from roundoff are clipped).
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature sets must be (N, d) with matching d, got {a.shape} and {b.shape}")
    d = a.shape[1]
    for name, x in (("a", a), ("b", b)):
        if x.shape[0] < d + 1:
            raise ValueError(
                f"feature set {name} has {x.shape[0]} rows; need at least d+1={d + 1} "
                "for a full-rank covariance"
            )
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    sigma_a = np.cov(a, rowvar=False)
    sigma_b = np.cov(b, rowvar=False)
    sqrt_a = _sqrtm_psd(sigma_a)
    inner = sqrt_a @ sigma_b @ sqrt_a
    vals = np.linalg.eigvalsh(inner)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    value = float(
        np.sum((mu_a - mu_b) ** 2) + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * tr_sqrt
    )
    return max(value, 0.0)


def inception_score(probs: np.ndarray) -> float:
    """exp(mean KL(p(y|x) || p(y))) over per-sample class distributions.

    1.0 when every sample yields the marginal; K when samples are
    confidently spread over K classes uniformly.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError(f"probs must be a nonempty (N, K) array, got {p.shape}")
    if (p < 0).any():
        raise ValueError("probabilities must be nonnegative")
    row_sums = p.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-6:
        raise ValueError("each row must sum to 1 within 1e-6")
    marginal = p.mean(axis=0)
    from scipy.special import rel_entr

    kl = rel_entr(p, marginal[None, :]).sum(axis=1)
    return float(np.exp(kl.mean()))


def diversity_score(
    candidate_sets: list[torch.Tensor],
    masks: list[torch.Tensor],
    backend: FrozenPyramid | None = None,
) -> float:
    """Mean pairwise perceptual distance over outpainted regions.

    Each candidate set holds the m outpainted results for one reference;
    its mask is True on the generated (unknown) region. The score averages
    pairwise distances within each set, then across sets.
    """
    if not candidate_sets:
        raise ValueError("candidate_sets must be nonempty")
    if len(candidate_sets) != len(masks):
        raise ValueError("one mask per candidate set is required")
    m = candidate_sets[0].shape[0]
    if m < 2:
        raise ValueError("need at least 2 candidates per set for pairwise distances")
    per_set = []
    for cands, mask in zip(candidate_sets, masks):
        if cands.shape[0] != m:
            raise ValueError("all candidate sets must share the same m")
        region = mask.to(cands.dtype)
        dists = []
        for i in range(m):
            for j in range(i + 1, m):
                dists.append(
                    float(perceptual_distance(cands[i] * region, cands[j] * region, backend))
                )
        per_set.append(float(np.mean(dists)))
    return float(np.mean(per_set))


def seam_gradient_ratio(images: torch.Tensor, grid: GridSpec) -> float:
    """Mean absolute pixel jump across patch boundaries relative to the
    mean jump everywhere else.

    Values near 1 mean seams are no sharper than ordinary neighboring
    pixels; large values expose visible patch borders.
    """
    if images.dim() == 3:
        images = images.unsqueeze(0)
    h, w = images.shape[-2:]
    if (h, w) != (grid.full_h, grid.full_w):
        raise ValueError(f"images {h}x{w} do not match grid canvas {grid.full_h}x{grid.full_w}")
    col_jumps = (images[..., :, 1:] - images[..., :, :-1]).abs()
    row_jumps = (images[..., 1:, :] - images[..., :-1, :]).abs()
    seam_cols = [k * grid.patch_w - 1 for k in range(1, grid.n)]
    seam_rows = [k * grid.patch_h - 1 for k in range(1, grid.n)]
    col_mask = torch.zeros(w - 1, dtype=torch.bool)
    col_mask[seam_cols] = True
    row_mask = torch.zeros(h - 1, dtype=torch.bool)
    row_mask[seam_rows] = True

    seam_vals = torch.cat(
        [col_jumps[..., :, col_mask].reshape(-1), row_jumps[..., row_mask, :].reshape(-1)]
    )
    other_vals = torch.cat(
        [col_jumps[..., :, ~col_mask].reshape(-1), row_jumps[..., ~row_mask, :].reshape(-1)]
    )
    other_mean = float(other_vals.mean())
    if other_mean == 0.0:
        return float("inf") if float(seam_vals.mean()) > 0 else 1.0
    return float(seam_vals.mean()) / other_mean


@dataclasses.dataclass
class MetricReport:
    """Bundle of evaluation numbers plus the embedder that produced them."""

    fid: float
    inception_score: float
    diversity: float | None
    seam_ratio: float | None
    embedder_id: str
    sample_count: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)
