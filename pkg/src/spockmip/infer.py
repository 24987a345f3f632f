"""Whole-volume prediction: sliding-window patching with mean overlap fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import enumerate_patch_boxes
from .volumes import BinaryMask, ProbabilityVolume, ScalarVolume, VolumeError


@dataclass(frozen=True)
class InferenceConfig:
    patch_size: int = 64
    stride: tuple[int, int, int] = (32, 32, 32)
    threshold: float = 0.5

    def __post_init__(self):
        if any(s > self.patch_size for s in self.stride):
            raise ValueError(
                f"stride {self.stride} must not exceed patch size {self.patch_size}"
            )
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold {self.threshold} outside (0, 1)")


def sliding_window_predict(
    model, volume: ScalarVolume, config: InferenceConfig, batch_size: int = 4
) -> ProbabilityVolume:
    """Mean-fused full-resolution model output over all covering patches.

    model maps a (B, 1, p, p, p) float tensor to a list of probability
    tensors whose first entry is full resolution.
    """
    if any(d < config.patch_size for d in volume.dims):
        raise VolumeError(
            f"volume dims {volume.dims} smaller than patch size {config.patch_size}"
        )
    boxes = enumerate_patch_boxes(volume.dims, config.patch_size, config.stride)
    acc = np.zeros(volume.dims, dtype=np.float64)
    cnt = np.zeros(volume.dims, dtype=np.int32)

    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    try:
        with torch.no_grad():
            for start in range(0, len(boxes), batch_size):
                chunk = boxes[start : start + batch_size]
                batch = torch.from_numpy(
                    np.stack([volume.data[b.slices] for b in chunk])
                ).float().unsqueeze(1)
                outputs = model(batch)
                full = outputs[0] if isinstance(outputs, (list, tuple)) else outputs
                full = full.squeeze(1).cpu().numpy()
                for b, patch_prob in zip(chunk, full):
                    acc[b.slices] += patch_prob
                    cnt[b.slices] += 1
    finally:
        if was_training and hasattr(model, "train"):
            model.train()

    fused = acc / np.maximum(cnt, 1)
    return ProbabilityVolume(
        data=np.clip(fused, 0.0, 1.0).astype(np.float32), spacing=volume.spacing
    )


def binarize(prob: ProbabilityVolume, threshold: float = 0.5) -> BinaryMask:
    """Voxel is foreground iff its probability is >= threshold."""
    return BinaryMask(
        data=(prob.data >= threshold).astype(np.uint8), spacing=prob.spacing
    )
