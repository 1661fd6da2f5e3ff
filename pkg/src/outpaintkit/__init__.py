"""Coordinate-conditioned patch GAN with latent inversion for diverse
image outpainting."""

from .checkpoint import load_archive, load_generator, save_archive, save_generator
from .composer import (
    API_VERSION,
    BlendPlan,
    GridPlan,
    OutpaintOutcome,
    OutpaintRequest,
    PanoramaResult,
    blend,
    build_blend_plan,
    canonical_json,
    compose,
    image_sha256,
    panorama,
    plan_grid,
    reference_canvas,
    replay_panorama,
    run_outpaint,
)
from .data import (
    DatasetRecord,
    derive_patch_labels,
    labels_to_array,
    load_dataset,
    save_dataset,
    synth_scenery_dataset,
)
from .errors import DivergenceError
from .evaluation import (
    FeatureEmbedder,
    MetricReport,
    diversity_score,
    fid,
    inception_score,
    seam_gradient_ratio,
)
from .generator import (
    DESK_CLASS_NAMES,
    GeneratorConfig,
    PatchGenerator,
    degaussianize,
    gaussianize,
)
from .grids import GridSpec, cell_coordinate, coordinate_grid, halfway_coordinate
from .inversion import (
    GaussianityReport,
    InversionProblem,
    InversionResult,
    LossWeights,
    PriorStats,
    diversity_loss,
    estimate_prior,
    gaussianity_check,
    invert,
    load_prior,
    mode_seeking_loss,
    prior_loss,
    recon_losses,
    save_prior,
    total_objective,
)
from .perceptual import FrozenPyramid, perceptual_distance
from .training import (
    AdversarialTrainer,
    Discriminator,
    TrainingConfig,
    aux_classification_loss,
    r1_penalty,
    train,
    wgan_losses,
)

__all__ = [
    "API_VERSION",
    "AdversarialTrainer",
    "BlendPlan",
    "DESK_CLASS_NAMES",
    "DatasetRecord",
    "Discriminator",
    "DivergenceError",
    "FeatureEmbedder",
    "FrozenPyramid",
    "GaussianityReport",
    "GeneratorConfig",
    "GridPlan",
    "GridSpec",
    "InversionProblem",
    "InversionResult",
    "LossWeights",
    "MetricReport",
    "OutpaintOutcome",
    "OutpaintRequest",
    "PanoramaResult",
    "PatchGenerator",
    "PriorStats",
    "TrainingConfig",
    "aux_classification_loss",
    "blend",
    "build_blend_plan",
    "canonical_json",
    "cell_coordinate",
    "compose",
    "coordinate_grid",
    "degaussianize",
    "derive_patch_labels",
    "diversity_loss",
    "diversity_score",
    "estimate_prior",
    "fid",
    "gaussianity_check",
    "gaussianize",
    "halfway_coordinate",
    "image_sha256",
    "inception_score",
    "invert",
    "labels_to_array",
    "load_archive",
    "load_dataset",
    "load_generator",
    "load_prior",
    "mode_seeking_loss",
    "panorama",
    "perceptual_distance",
    "plan_grid",
    "prior_loss",
    "r1_penalty",
    "recon_losses",
    "reference_canvas",
    "replay_panorama",
    "run_outpaint",
    "save_archive",
    "save_dataset",
    "save_generator",
    "save_prior",
    "seam_gradient_ratio",
    "synth_scenery_dataset",
    "total_objective",
    "train",
    "wgan_losses",
]

__version__ = "0.1.0"
