"""Synthetic vascular phantoms: tube masks, noisy intensities, label corruption.

Vessels are tubes around random cubic Bezier centerlines whose endpoints sit
on opposite faces of the volume, with radius varying linearly along the
curve. Label corruption removes small foreground clusters, mimicking missed
voxels in semi-automated annotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from . import kernels
from .volumes import BinaryMask, ScalarVolume, VolumeError


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (64, 64, 64)
    n_vessels: int = 6
    radius_range: tuple[float, float] = (0.8, 2.5)
    curvature: float = 0.25
    intensity_vessel: float = 1.0
    noise_sigma: float = 0.05
    background_level: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.radius_range[0] > self.radius_range[1]:
            raise ValueError(f"radius_range {self.radius_range} has r_min > r_max")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class CorruptionConfig:
    drop_fraction: float = 0.05
    cluster_size_range: tuple[int, int] = (1, 5)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ValueError(f"drop_fraction {self.drop_fraction} outside [0, 1]")
        if self.cluster_size_range[0] < 1:
            raise ValueError("cluster sizes must be >= 1")


def _bezier_points(rng: np.random.Generator, dims, curvature: float) -> np.ndarray:
    """Control points of one cubic Bezier spanning the volume, (4, 3) zyx."""
    dims = np.asarray(dims, dtype=float)
    span_axis = rng.integers(0, 3)
    p0 = rng.uniform(0, dims - 1)
    p3 = rng.uniform(0, dims - 1)
    p0[span_axis] = 0.0
    p3[span_axis] = dims[span_axis] - 1
    # interior control points near the chord, displaced by curvature
    wobble = curvature * dims
    p1 = p0 + (p3 - p0) / 3 + rng.uniform(-1, 1, 3) * wobble
    p2 = p0 + 2 * (p3 - p0) / 3 + rng.uniform(-1, 1, 3) * wobble
    return np.stack([p0, p1, p2, p3])


def _bezier_eval(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[:, None]
    u = 1 - t
    return (
        u**3 * ctrl[0]
        + 3 * u**2 * t * ctrl[1]
        + 3 * u * t**2 * ctrl[2]
        + t**3 * ctrl[3]
    )


def generate_phantom(config: PhantomConfig) -> tuple[ScalarVolume, BinaryMask]:
    """Build a noisy intensity volume and its clean tube mask, seeded."""
    dims = tuple(int(d) for d in config.dims)
    if any(d < 16 for d in dims):
        raise VolumeError(f"phantom dims {dims} must each be >= 16")
    rng = np.random.default_rng(config.seed)

    mask = np.zeros(dims, dtype=bool)
    n_samples = 4 * max(dims)
    t = np.linspace(0.0, 1.0, n_samples)
    for _ in range(config.n_vessels):
        ctrl = _bezier_points(rng, dims, config.curvature)
        points = _bezier_eval(ctrl, t)
        r0, r1 = rng.uniform(*config.radius_range, size=2)
        radii = r0 + (r1 - r0) * t
        kernels.stamp_tube(mask, points, radii)

    volume = np.full(dims, config.background_level, dtype=np.float64)
    volume[mask] += config.intensity_vessel
    if config.noise_sigma > 0:
        volume += rng.normal(0.0, config.noise_sigma, dims)
    np.clip(volume, 0.0, None, out=volume)

    return (
        ScalarVolume(data=volume.astype(np.float32)),
        BinaryMask(data=mask.astype(np.uint8)),
    )


_FACE_NEIGHBOURS = np.array(
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
)


def corrupt_labels(mask: BinaryMask, config: CorruptionConfig) -> BinaryMask:
    """Delete small random foreground clusters until ~drop_fraction is gone."""
    data = mask.astype_bool().copy()
    total = int(data.sum())
    target = config.drop_fraction * total
    if total == 0 or target == 0:
        return BinaryMask(data=data.astype(np.uint8), spacing=mask.spacing)
    if config.drop_fraction >= 1.0:
        return BinaryMask(data=np.zeros_like(mask.data), spacing=mask.spacing)

    rng = np.random.default_rng(config.seed)
    removed = 0
    dims = data.shape
    while removed < target:
        fg = np.argwhere(data)
        if fg.size == 0:
            break
        seed_voxel = fg[rng.integers(0, fg.shape[0])]
        size = int(rng.integers(config.cluster_size_range[0],
                                config.cluster_size_range[1] + 1))
        cluster = [tuple(seed_voxel)]
        in_cluster = {tuple(seed_voxel)}
        # grow by random face-adjacent accretion inside the mask; bounded
        # attempts so isolated seeds cannot stall the loop
        attempts = 0
        while len(cluster) < size and attempts < 20 * size:
            attempts += 1
            base = cluster[rng.integers(0, len(cluster))]
            step = _FACE_NEIGHBOURS[rng.integers(0, 6)]
            cand = (base[0] + step[0], base[1] + step[1], base[2] + step[2])
            if cand in in_cluster:
                continue
            if any(c < 0 or c >= d for c, d in zip(cand, dims)):
                continue
            if not data[cand]:
                continue
            cluster.append(cand)
            in_cluster.add(cand)
        for vox in in_cluster:
            data[vox] = False
        removed += len(in_cluster)

    return BinaryMask(data=data.astype(np.uint8), spacing=mask.spacing)


def centerline_of(mask: BinaryMask) -> set[tuple[int, int, int]]:
    """Voxel coordinates of the 3D thinning skeleton of the mask."""
    if not mask.data.any():
        return set()
    skel = skeletonize(mask.astype_bool())
    return {tuple(int(c) for c in v) for v in np.argwhere(skel)}


def skeleton_mask(mask: BinaryMask) -> BinaryMask:
    """Skeleton as a BinaryMask (convenience for metric code)."""
    if not mask.data.any():
        return BinaryMask(data=np.zeros_like(mask.data), spacing=mask.spacing)
    skel = skeletonize(mask.astype_bool())
    return BinaryMask(data=skel.astype(np.uint8), spacing=mask.spacing)
