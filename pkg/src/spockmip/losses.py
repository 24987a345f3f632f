"""Focal Tversky base loss, multi-scale supervision loss, and MIP losses.

All losses take torch tensors and stay differentiable in the prediction.
Projections use torch.max along the projected dimension, so the gradient
flows to the single max-attaining voxel per ray (lowest index on ties).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import torch
import torch.nn.functional as F

from .volumes import Axis


class MipMode(Enum):
    NONE = "none"
    SINGLE = "single"
    MULTI = "multi"


@dataclass(frozen=True)
class LossConfig:
    mu: float = 0.7
    learnable_mu: bool = False
    level_weights: tuple[float, ...] = (1.0, 0.66, 0.34)
    axis_weight: float = 1.0 / 3.0
    tversky_alpha: float = 0.7
    tversky_beta: float = 0.3
    tversky_gamma: float = 4.0 / 3.0
    smooth_eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu {self.mu} outside (0, 1)")
        if any(w <= 0 for w in self.level_weights):
            raise ValueError("level weights must be positive")


# tensor dim that Axis projection removes, for (..., D, H, W) layouts
_AXIS_DIM = {Axis.Z: -3, Axis.Y: -2, Axis.X: -1}


def project_max(pred: torch.Tensor, axis: Axis) -> torch.Tensor:
    """MIP of a (..., D, H, W) tensor; keeps the surviving dims in order."""
    return pred.max(dim=_AXIS_DIM[axis]).values


def focal_tversky(
    pred: torch.Tensor, target: torch.Tensor, config: LossConfig
) -> torch.Tensor:
    """Focal Tversky loss over soft TP/FN/FP counts, in [0, 1]."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs target "
                         f"{tuple(target.shape)}")
    target = target.to(pred.dtype)
    tp = (pred * target).sum()
    fn = ((1 - pred) * target).sum()
    fp = (pred * (1 - target)).sum()
    eps = config.smooth_eps
    ti = (tp + eps) / (tp + config.tversky_alpha * fn + config.tversky_beta * fp + eps)
    return (1 - ti).clamp_min(0) ** (1.0 / config.tversky_gamma)


def _check_levels(preds: list[torch.Tensor], config: LossConfig) -> None:
    if len(config.level_weights) < len(preds):
        raise ValueError(
            f"{len(preds)} prediction levels but only "
            f"{len(config.level_weights)} level weights configured"
        )


def _downsample_label3d(label: torch.Tensor, factor: int) -> torch.Tensor:
    if factor == 1:
        return label
    return F.max_pool3d(label, kernel_size=factor)


def _downsample_label2d(label: torch.Tensor, factor: int) -> torch.Tensor:
    if factor == 1:
        return label
    return F.max_pool2d(label, kernel_size=factor)


def mss_loss(
    preds: list[torch.Tensor], label_patch: torch.Tensor, config: LossConfig
) -> torch.Tensor:
    """Weighted mean of per-level focal Tversky terms against max-pooled labels."""
    _check_levels(preds, config)
    m = len(preds)
    total = preds[0].new_zeros(())
    for i, pred in enumerate(preds):
        factor = label_patch.shape[-1] // pred.shape[-1]
        level_label = _downsample_label3d(label_patch, factor)
        total = total + config.level_weights[i] * focal_tversky(pred, level_label, config)
    return total / m


def _mip_loss_axis(
    preds: list[torch.Tensor],
    label_mip_patch: torch.Tensor,
    axis: Axis,
    config: LossConfig,
) -> torch.Tensor:
    total = preds[0].new_zeros(())
    for i, pred in enumerate(preds):
        factor = label_mip_patch.shape[-1] // pred.shape[-1]
        level_label = _downsample_label2d(label_mip_patch, factor)
        pred_mip = project_max(pred, axis)
        total = total + config.level_weights[i] * focal_tversky(
            pred_mip, level_label, config
        )
    return total / len(preds)


def mip_loss_single(
    preds: list[torch.Tensor],
    label_mip_patch_z: torch.Tensor,
    config: LossConfig,
) -> torch.Tensor:
    """MIP loss along z only: per-level projections vs. the full-volume
    z-MIP crop, which may contain vessels outside the patch slab."""
    _check_levels(preds, config)
    return _mip_loss_axis(preds, label_mip_patch_z, Axis.Z, config)


def mip_loss_multi(
    preds: list[torch.Tensor],
    label_mip_patches: dict[Axis, torch.Tensor],
    config: LossConfig,
) -> torch.Tensor:
    """Equally weighted sum of the per-axis MIP losses over x, y, z."""
    _check_levels(preds, config)
    missing = [a.name for a in Axis if a not in label_mip_patches]
    if missing:
        raise ValueError(f"multi-axis MIP loss missing axes: {missing}")
    total = preds[0].new_zeros(())
    for axis in (Axis.X, Axis.Y, Axis.Z):
        total = total + _mip_loss_axis(preds, label_mip_patches[axis], axis, config)
    return config.axis_weight * total


def combined_loss(
    preds: list[torch.Tensor],
    label_patch: torch.Tensor,
    label_mip_patches: dict[Axis, torch.Tensor] | None,
    config: LossConfig,
    mode: MipMode,
    mu: torch.Tensor | float | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """mu * MSS + (1 - mu) * MIP; mode NONE is the plain MSS baseline.

    mu may be a tensor (learnable); defaults to config.mu. Returns the total
    plus a float breakdown for logging.
    """
    l_mss = mss_loss(preds, label_patch, config)
    if mode is MipMode.NONE:
        v = float(l_mss.detach())
        return l_mss, {"l_mss": v, "l_mip": 0.0, "total": v}
    if mode is MipMode.SINGLE:
        l_mip = mip_loss_single(preds, label_mip_patches[Axis.Z], config)
    else:
        l_mip = mip_loss_multi(preds, label_mip_patches, config)
    if mu is None:
        mu = config.mu
    total = mu * l_mss + (1 - mu) * l_mip
    return total, {
        "l_mss": float(l_mss.detach()),
        "l_mip": float(l_mip.detach()),
        "total": float(total.detach()),
        "mu": float(mu.detach()) if isinstance(mu, torch.Tensor) else float(mu),
    }
