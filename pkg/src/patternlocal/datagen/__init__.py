"""Synthetic datasets with exact ground-truth attribution masks."""
from .dataset import LabeledImageDataset, load_dataset, save_dataset, split_dataset
from .lesion import (
    LesionConfig,
    compactness,
    compose_lesion_image,
    gen_lesions,
    procedural_background,
    synth_lesion_masks,
)
from .toy import ToyConfig, gen_toy_xor, toy_covariance
from .tris import TrisConfig, gen_tris, gen_tris_beta, ground_truth_mask

__all__ = [
    "LabeledImageDataset",
    "LesionConfig",
    "ToyConfig",
    "TrisConfig",
    "compactness",
    "compose_lesion_image",
    "gen_lesions",
    "gen_toy_xor",
    "gen_tris",
    "gen_tris_beta",
    "ground_truth_mask",
    "load_dataset",
    "procedural_background",
    "save_dataset",
    "split_dataset",
    "synth_lesion_masks",
    "toy_covariance",
]
