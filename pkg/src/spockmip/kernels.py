"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set ``SPOCKMIP_NO_NUMBA=1`` to force the numpy path (useful for debugging
and as the reference in ``benchmarks/bench_kernels.py``). Both paths are
exact, so the flag never changes results.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("SPOCKMIP_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "mip_project",
    "maxpool3d_blocks",
    "maxpool2d_blocks",
    "stamp_tube",
]


# ---------------------------------------------------------------------------
# axis projection (maximum intensity)

def _mip_numpy(data: np.ndarray, axis: int) -> np.ndarray:
    return np.max(data, axis=axis)


if USE_NUMBA:

    @njit(cache=True)
    def _mip_numba(data, axis):
        d, h, w = data.shape
        if axis == 0:
            out = np.full((h, w), -np.inf)
            for z in range(d):
                for y in range(h):
                    for x in range(w):
                        v = data[z, y, x]
                        if v > out[y, x]:
                            out[y, x] = v
        elif axis == 1:
            out = np.full((d, w), -np.inf)
            for z in range(d):
                for y in range(h):
                    for x in range(w):
                        v = data[z, y, x]
                        if v > out[z, x]:
                            out[z, x] = v
        else:
            out = np.full((d, h), -np.inf)
            for z in range(d):
                for y in range(h):
                    for x in range(w):
                        v = data[z, y, x]
                        if v > out[z, y]:
                            out[z, y] = v
        return out


def mip_project(data: np.ndarray, axis: int) -> np.ndarray:
    """Maximum along one axis of a (D, H, W) array. axis: 0=z, 1=y, 2=x."""
    if USE_NUMBA:
        return _mip_numba(np.ascontiguousarray(data, dtype=np.float64), axis).astype(
            data.dtype, copy=False
        )
    return _mip_numpy(data, axis)


# ---------------------------------------------------------------------------
# block max-pooling

def _maxpool3d_numpy(data: np.ndarray, k: int) -> np.ndarray:
    d, h, w = data.shape
    return data.reshape(d // k, k, h // k, k, w // k, k).max(axis=(1, 3, 5))


def _maxpool2d_numpy(data: np.ndarray, k: int) -> np.ndarray:
    h, w = data.shape
    return data.reshape(h // k, k, w // k, k).max(axis=(1, 3))


if USE_NUMBA:

    @njit(cache=True)
    def _maxpool3d_numba(data, k):
        d, h, w = data.shape
        out = np.empty((d // k, h // k, w // k), dtype=data.dtype)
        for zo in range(d // k):
            for yo in range(h // k):
                for xo in range(w // k):
                    m = data[zo * k, yo * k, xo * k]
                    for dz in range(k):
                        for dy in range(k):
                            for dx in range(k):
                                v = data[zo * k + dz, yo * k + dy, xo * k + dx]
                                if v > m:
                                    m = v
                    out[zo, yo, xo] = m
        return out

    @njit(cache=True)
    def _maxpool2d_numba(data, k):
        h, w = data.shape
        out = np.empty((h // k, w // k), dtype=data.dtype)
        for yo in range(h // k):
            for xo in range(w // k):
                m = data[yo * k, xo * k]
                for dy in range(k):
                    for dx in range(k):
                        v = data[yo * k + dy, xo * k + dx]
                        if v > m:
                            m = v
                out[yo, xo] = m
        return out


def maxpool3d_blocks(data: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping k-cubed block maximum; extents must divide by k."""
    if USE_NUMBA:
        return _maxpool3d_numba(np.ascontiguousarray(data), k)
    return _maxpool3d_numpy(data, k)


def maxpool2d_blocks(data: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping k-squared block maximum; extents must divide by k."""
    if USE_NUMBA:
        return _maxpool2d_numba(np.ascontiguousarray(data), k)
    return _maxpool2d_numpy(data, k)


# ---------------------------------------------------------------------------
# tube rasterization for the phantom generator

def _stamp_tube_numpy(mask: np.ndarray, points: np.ndarray, radii: np.ndarray) -> None:
    d, h, w = mask.shape
    for (cz, cy, cx), r in zip(points, radii):
        z0, z1 = max(0, int(np.floor(cz - r))), min(d - 1, int(np.ceil(cz + r)))
        y0, y1 = max(0, int(np.floor(cy - r))), min(h - 1, int(np.ceil(cy + r)))
        x0, x1 = max(0, int(np.floor(cx - r))), min(w - 1, int(np.ceil(cx + r)))
        if z1 < z0 or y1 < y0 or x1 < x0:
            continue
        zz, yy, xx = np.ogrid[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1]
        ball = (zz - cz) ** 2 + (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        mask[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1] |= ball


if USE_NUMBA:

    @njit(cache=True)
    def _stamp_tube_numba(mask, points, radii):
        d, h, w = mask.shape
        for i in range(points.shape[0]):
            cz, cy, cx = points[i, 0], points[i, 1], points[i, 2]
            r = radii[i]
            r2 = r * r
            z0 = max(0, int(np.floor(cz - r)))
            z1 = min(d - 1, int(np.ceil(cz + r)))
            y0 = max(0, int(np.floor(cy - r)))
            y1 = min(h - 1, int(np.ceil(cy + r)))
            x0 = max(0, int(np.floor(cx - r)))
            x1 = min(w - 1, int(np.ceil(cx + r)))
            for z in range(z0, z1 + 1):
                for y in range(y0, y1 + 1):
                    for x in range(x0, x1 + 1):
                        dz = z - cz
                        dy = y - cy
                        dx = x - cx
                        if dz * dz + dy * dy + dx * dx <= r2:
                            mask[z, y, x] = True


def stamp_tube(mask: np.ndarray, points: np.ndarray, radii: np.ndarray) -> None:
    """Union balls of the given radii centred on dense curve samples into mask.

    mask is a bool (D, H, W) array modified in place; points is (N, 3) float
    voxel coordinates in (z, y, x) order; radii is (N,) float.
    """
    if USE_NUMBA:
        _stamp_tube_numba(mask, np.ascontiguousarray(points, dtype=np.float64),
                          np.ascontiguousarray(radii, dtype=np.float64))
    else:
        _stamp_tube_numpy(mask, points, radii)
