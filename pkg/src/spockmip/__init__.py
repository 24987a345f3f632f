"""Patch-based 3D vessel segmentation with MIP-loss supervision."""

__version__ = "0.1.0"

from .volumes import (  # noqa: F401
    Axis,
    BinaryMask,
    MipImage,
    PatchBox,
    ProbabilityVolume,
    ScalarVolume,
    extract_patch,
    load_volume,
    maxpool2d,
    maxpool3d,
    mip,
    mip_patch_region,
    save_volume,
)
from .losses import LossConfig, MipMode  # noqa: F401
from .model import ModelConfig, Variant, build_model  # noqa: F401
