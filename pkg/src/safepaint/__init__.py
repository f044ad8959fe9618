"""Anti-forensic two-stage image inpainting with domain adaptation, classical
inpainting baselines, and statistical forensic probes."""

__version__ = "0.1.0"

from .classical import DiffusionConfig, diffuse_inpaint, exemplar_inpaint, patch_distance
from .losses import LossWeights
from .masks import MaskBucket, composite, generate_irregular, make_input, ratio_bucket
from .probes import detection_metrics, kl_domain_gap, local_variance_map, patch_similarity_map
from .train import TrainConfig, antiforensic_eval, jpeg_roundtrip, psnr, train_run

__all__ = [
    "DiffusionConfig",
    "LossWeights",
    "MaskBucket",
    "TrainConfig",
    "antiforensic_eval",
    "composite",
    "detection_metrics",
    "diffuse_inpaint",
    "exemplar_inpaint",
    "generate_irregular",
    "jpeg_roundtrip",
    "kl_domain_gap",
    "local_variance_map",
    "make_input",
    "patch_distance",
    "patch_similarity_map",
    "psnr",
    "ratio_bucket",
    "train_run",
]
