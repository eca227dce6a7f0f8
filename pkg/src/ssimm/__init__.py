"""Image structure manifolds: SSIM-based locally linear embedding of image blocks."""

from .distortion_lab import DistortionKind, DistortionSpec, apply, calibrate_to_mse, synth_dataset
from .image_blocks import GrayImage, read_pgm, write_pgm
from .model import ExperimentConfig, TrainedModel, embed_images, load_model, save_model, train
from .ssim import SsimConstants, ssim_distance

__version__ = "0.1.0"

__all__ = [
    "DistortionKind",
    "DistortionSpec",
    "ExperimentConfig",
    "GrayImage",
    "SsimConstants",
    "TrainedModel",
    "apply",
    "calibrate_to_mse",
    "embed_images",
    "load_model",
    "read_pgm",
    "save_model",
    "ssim_distance",
    "synth_dataset",
    "train",
    "write_pgm",
]
