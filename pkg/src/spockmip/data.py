"""Patch enumeration, epoch sampling, and training-sample assembly.

Full-volume label MIPs are computed once per volume and cached; each sample
carries the crops of those MIPs that its patch footprint addresses. That is
what lets the loss see vessels outside the patch slab.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .volumes import (
    Axis,
    BinaryMask,
    MipImage,
    PatchBox,
    ScalarVolume,
    VolumeError,
    crop_mip,
    extract_patch,
    load_volume,
    mip,
    mip_patch_region,
)


@dataclass(frozen=True)
class SamplerConfig:
    patch_size: int = 64
    stride: tuple[int, int, int] = (16, 32, 32)
    samples_per_epoch: int = 8000
    seed: int = 0
    mip_axes: tuple[Axis, ...] = (Axis.Z,)

    def __post_init__(self):
        if any(s < 1 for s in self.stride):
            raise ValueError(f"stride components must be >= 1, got {self.stride}")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")


@dataclass(frozen=True)
class PatchSample:
    image_patch: ScalarVolume
    label_patch: BinaryMask
    label_mip_patches: dict[Axis, np.ndarray]
    box: PatchBox
    volume_id: str


def enumerate_patch_boxes(
    dims: tuple[int, int, int],
    patch_size: int,
    stride: tuple[int, int, int],
) -> list[PatchBox]:
    """All stride-aligned boxes plus a clamped final box per axis, z/y/x order."""
    if any(patch_size > d for d in dims):
        raise VolumeError(f"patch size {patch_size} exceeds volume dims {dims}")
    origins = []
    for d, s in zip(dims, stride):
        last = d - patch_size
        axis_origins = sorted(set(range(0, last + 1, s)) | {last})
        origins.append(axis_origins)
    size = (patch_size, patch_size, patch_size)
    return [
        PatchBox(origin=(z, y, x), size=size)
        for z in origins[0]
        for y in origins[1]
        for x in origins[2]
    ]


def sample_epoch(
    boxes_by_volume: dict[str, list[PatchBox]],
    n: int,
    seed: int,
) -> list[tuple[str, PatchBox]]:
    """Draw n (volume_id, box) pairs uniformly over the pooled boxes.

    Without replacement when n <= pool size, with replacement otherwise.
    """
    pool = [
        (vid, box) for vid, boxes in boxes_by_volume.items() for box in boxes
    ]
    if not pool:
        raise VolumeError("empty patch-box pool")
    rng = np.random.default_rng(seed)
    if n <= len(pool):
        idx = rng.permutation(len(pool))[:n]
    else:
        idx = rng.integers(0, len(pool), size=n)
    return [pool[i] for i in idx]


def compute_label_mips(label: BinaryMask, axes) -> dict[Axis, MipImage]:
    return {axis: mip(label, axis) for axis in axes}


def make_sample(
    image: ScalarVolume,
    label: BinaryMask,
    label_mips: dict[Axis, MipImage],
    box: PatchBox,
    volume_id: str = "",
) -> PatchSample:
    """Assemble one training sample from cached full-volume label MIPs."""
    image_patch = extract_patch(image, box)
    label_patch = extract_patch(label, box)
    mip_patches = {}
    for axis, full_mip in label_mips.items():
        region = mip_patch_region(box, axis)
        crop = crop_mip(full_mip, region)
        if crop.shape != (region[2], region[3]):
            raise VolumeError(
                f"MIP crop shape {crop.shape} inconsistent with box {box}"
            )
        mip_patches[axis] = crop
    return PatchSample(
        image_patch=image_patch,
        label_patch=label_patch,
        label_mip_patches=mip_patches,
        box=box,
        volume_id=volume_id,
    )


@dataclass
class VolumeRecord:
    volume_id: str
    image: ScalarVolume
    label: BinaryMask
    label_mips: dict[Axis, MipImage]
    boxes: list[PatchBox]


def load_manifest(path: str | Path) -> list[dict]:
    """Dataset manifest: JSON list of {volume_id, image_path, label_path}."""
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list):
        raise ValueError(f"manifest {path} must hold a JSON list")
    for e in entries:
        for key in ("volume_id", "image_path", "label_path"):
            if key not in e:
                raise ValueError(f"manifest entry missing '{key}': {e}")
    return entries


def build_volume_records(
    entries: list[dict], config: SamplerConfig, base_dir: str | Path | None = None
) -> list[VolumeRecord]:
    base = Path(base_dir) if base_dir else None
    records = []
    for e in entries:
        img_path = Path(e["image_path"])
        lbl_path = Path(e["label_path"])
        if base is not None:
            img_path = img_path if img_path.is_absolute() else base / img_path
            lbl_path = lbl_path if lbl_path.is_absolute() else base / lbl_path
        image = load_volume(img_path)
        if isinstance(image, BinaryMask):
            image = ScalarVolume(data=image.data.astype(np.float32))
        label = load_volume(lbl_path, as_mask=True)
        boxes = enumerate_patch_boxes(image.dims, config.patch_size, config.stride)
        records.append(
            VolumeRecord(
                volume_id=str(e["volume_id"]),
                image=image,
                label=label,
                label_mips=compute_label_mips(label, config.mip_axes),
                boxes=boxes,
            )
        )
    return records
