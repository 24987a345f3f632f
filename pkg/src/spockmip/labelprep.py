"""Morphological cleanup of binary vessel labels.

Connectivity follows the scikit-image integer convention for 3D:
1 = face neighbours (6), 2 = face+edge (18), 3 = face+edge+corner (26).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volumes import BinaryMask


@dataclass(frozen=True)
class MorphologyParams:
    open_area: int = 7
    open_connectivity: int = 2
    close_area: int = 60
    close_connectivity: int = 4  # >3 is clamped to 3 at use (see _structure)

    def __post_init__(self):
        if self.open_area < 1 or self.close_area < 1:
            raise ValueError("area thresholds must be >= 1")


def _structure(connectivity: int) -> np.ndarray:
    if connectivity > 3:
        warnings.warn(
            f"3D connectivity {connectivity} out of range, clamping to 3",
            stacklevel=3,
        )
        connectivity = 3
    if connectivity < 1:
        raise ValueError(f"connectivity must be >= 1, got {connectivity}")
    return ndimage.generate_binary_structure(3, connectivity)


def connected_components(
    mask: BinaryMask, connectivity: int = 3
) -> tuple[np.ndarray, np.ndarray]:
    """Label foreground components; returns (label volume, size per label).

    Labels run 1..n; sizes[i] is the voxel count of label i+1.
    """
    labels, n = ndimage.label(mask.astype_bool(), structure=_structure(connectivity))
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return labels, sizes


def area_opening(mask: BinaryMask, params: MorphologyParams) -> BinaryMask:
    """Drop foreground components smaller than open_area voxels."""
    labels, sizes = connected_components(mask, params.open_connectivity)
    keep = np.zeros(sizes.size + 1, dtype=bool)
    keep[1:] = sizes >= params.open_area
    return BinaryMask(data=keep[labels].astype(np.uint8), spacing=mask.spacing)


def area_closing(mask: BinaryMask, params: MorphologyParams) -> BinaryMask:
    """Fill background cavities smaller than close_area voxels.

    Background components touching the volume border count as connected to
    the exterior and are never filled.
    """
    bg = ~mask.astype_bool()
    labels, n = ndimage.label(bg, structure=_structure(params.close_connectivity))
    if n == 0:
        return mask
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    border = np.zeros(n + 1, dtype=bool)
    for face in (
        labels[0], labels[-1], labels[:, 0], labels[:, -1],
        labels[:, :, 0], labels[:, :, -1],
    ):
        border[np.unique(face)] = True
    fill = np.zeros(n + 1, dtype=bool)
    fill[1:] = (sizes[1:] < params.close_area) & ~border[1:]
    out = mask.astype_bool() | fill[labels]
    return BinaryMask(data=out.astype(np.uint8), spacing=mask.spacing)
