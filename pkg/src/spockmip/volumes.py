"""Volumetric containers, axis projections, patch geometry, and file I/O.

Index order is (z, y, x) throughout, with z the slice dimension. MIP images
keep the orientation of the surviving axes: Z -> (H, W), Y -> (D, W),
X -> (D, H).
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels


class VolumeError(ValueError):
    """Invalid volume data or geometry."""


class VolumeIOError(IOError):
    """Unreadable, unwritable, or malformed volume file."""


class Axis(Enum):
    """Projection axis. Each value is the (z, y, x) array dimension it removes."""

    Z = 0
    Y = 1
    X = 2


@dataclass(frozen=True)
class ScalarVolume:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        _check_3d(self.data)
        if not np.all(np.isfinite(self.data)):
            raise VolumeError("scalar volume contains non-finite intensities")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class BinaryMask:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        _check_3d(self.data)
        bad = (self.data != 0) & (self.data != 1)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise VolumeError(
                f"mask value {self.data[idx]} at voxel {idx} is not in {{0, 1}}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def astype_bool(self) -> np.ndarray:
        return self.data.astype(bool)


@dataclass(frozen=True)
class ProbabilityVolume:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        _check_3d(self.data)
        if np.any(self.data < 0) or np.any(self.data > 1):
            raise VolumeError("probability volume has values outside [0, 1]")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


Volume = ScalarVolume | BinaryMask | ProbabilityVolume


@dataclass(frozen=True)
class PatchBox:
    origin: tuple[int, int, int]
    size: tuple[int, int, int]

    def __post_init__(self):
        if any(o < 0 for o in self.origin):
            raise VolumeError(f"negative patch origin {self.origin}")
        if any(s < 1 for s in self.size):
            raise VolumeError(f"non-positive patch size {self.size}")

    def check_within(self, dims: tuple[int, int, int]) -> None:
        for o, s, d in zip(self.origin, self.size, dims):
            if o + s > d:
                raise VolumeError(
                    f"patch box origin={self.origin} size={self.size} "
                    f"exceeds volume dims {dims}"
                )

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(o, o + s) for o, s in zip(self.origin, self.size))


@dataclass(frozen=True)
class MipImage:
    data: np.ndarray
    axis: Axis
    source_dims: tuple[int, int, int]

    def __post_init__(self):
        if self.data.ndim != 2:
            raise VolumeError(f"MIP image must be 2D, got shape {self.data.shape}")
        if self.data.shape != mip_shape(self.source_dims, self.axis):
            raise VolumeError(
                f"MIP shape {self.data.shape} does not match axis {self.axis.name} "
                f"of source dims {self.source_dims}"
            )


def _check_3d(data: np.ndarray) -> None:
    if not isinstance(data, np.ndarray) or data.ndim != 3:
        raise VolumeError("volume data must be a 3D numpy array")
    if data.size == 0:
        raise VolumeError("volume is empty")


def mip_shape(dims: tuple[int, int, int], axis: Axis) -> tuple[int, int]:
    d, h, w = dims
    return {Axis.Z: (h, w), Axis.Y: (d, w), Axis.X: (d, h)}[axis]


def mip(volume: Volume, axis: Axis) -> MipImage:
    """Maximum intensity projection along the given axis."""
    proj = kernels.mip_project(volume.data, axis.value)
    return MipImage(data=proj, axis=axis, source_dims=volume.dims)


def extract_patch(volume: Volume, box: PatchBox) -> Volume:
    """Copy the sub-volume addressed by box; returns the same volume kind."""
    box.check_within(volume.dims)
    sub = volume.data[box.slices].copy()
    return type(volume)(data=sub, spacing=volume.spacing)


def mip_patch_region(box: PatchBox, axis: Axis) -> tuple[int, int, int, int]:
    """(row0, col0, rows, cols) of the box's footprint on the full-volume MIP."""
    (z0, y0, x0), (d, h, w) = box.origin, box.size
    if axis is Axis.Z:
        return (y0, x0, h, w)
    if axis is Axis.Y:
        return (z0, x0, d, w)
    return (z0, y0, d, h)


def crop_mip(image: MipImage, region: tuple[int, int, int, int]) -> np.ndarray:
    r0, c0, rows, cols = region
    if r0 + rows > image.data.shape[0] or c0 + cols > image.data.shape[1]:
        raise VolumeError(f"region {region} exceeds MIP shape {image.data.shape}")
    return image.data[r0 : r0 + rows, c0 : c0 + cols].copy()


def maxpool2d(image: MipImage, window: int) -> MipImage:
    if window < 1:
        raise VolumeError(f"pool window must be >= 1, got {window}")
    h, w = image.data.shape
    if h % window or w % window:
        raise VolumeError(f"extents {(h, w)} not divisible by window {window}")
    pooled = kernels.maxpool2d_blocks(image.data, window)
    # source dims shrink along the two surviving axes only
    d0, h0, w0 = image.source_dims
    if image.axis is Axis.Z:
        dims = (d0, h0 // window, w0 // window)
    elif image.axis is Axis.Y:
        dims = (d0 // window, h0, w0 // window)
    else:
        dims = (d0 // window, h0 // window, w0)
    return MipImage(data=pooled, axis=image.axis, source_dims=dims)


def maxpool3d(volume: Volume, window: int) -> Volume:
    if window < 1:
        raise VolumeError(f"pool window must be >= 1, got {window}")
    d, h, w = volume.dims
    if d % window or h % window or w % window:
        raise VolumeError(f"extents {(d, h, w)} not divisible by window {window}")
    pooled = kernels.maxpool3d_blocks(volume.data, window)
    return type(volume)(data=pooled, spacing=volume.spacing)


# ---------------------------------------------------------------------------
# file I/O: NIfTI-1 single-file (.nii / .nii.gz) and raw float32 (.rawvol)

_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
_NIFTI_CODES = {np.dtype(v): k for k, v in _NIFTI_DTYPES.items()}


def save_volume(volume: Volume, path: str | Path) -> None:
    path = Path(path)
    name = path.name
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        _save_nifti(volume, path)
    elif name.endswith(".rawvol"):
        _save_rawvol(volume, path)
    else:
        raise VolumeIOError(f"unrecognized volume format for '{path}'")


def load_volume(path: str | Path, as_mask: bool | None = None) -> Volume:
    """Load a volume; as_mask=True validates {0,1} and returns a BinaryMask.

    With as_mask=None the kind is inferred: integer data over {0,1} becomes
    a BinaryMask, everything else a ScalarVolume.
    """
    path = Path(path)
    if not path.exists():
        raise VolumeIOError(f"no such volume file: {path}")
    name = path.name
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        data, spacing = _load_nifti(path)
    elif name.endswith(".rawvol"):
        data, spacing = _load_rawvol(path)
    else:
        raise VolumeIOError(f"unrecognized volume format for '{path}'")

    is_binary = np.issubdtype(data.dtype, np.integer) and bool(
        np.all((data == 0) | (data == 1))
    )
    if as_mask or (as_mask is None and is_binary):
        return BinaryMask(data=data.astype(np.uint8), spacing=spacing)
    return ScalarVolume(data=data.astype(np.float32), spacing=spacing)


def _save_nifti(volume: Volume, path: Path) -> None:
    data = volume.data
    if isinstance(volume, BinaryMask):
        data = data.astype(np.uint8)
    elif data.dtype not in _NIFTI_CODES:
        data = data.astype(np.float32)
    code = _NIFTI_CODES[np.dtype(data.dtype)]
    d, h, w = data.shape
    dz, dy, dx = volume.spacing

    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)  # sizeof_hdr
    struct.pack_into("<8h", hdr, 40, 3, w, h, d, 1, 1, 1, 1)  # dim
    struct.pack_into("<h", hdr, 70, code)  # datatype
    struct.pack_into("<h", hdr, 72, data.dtype.itemsize * 8)  # bitpix
    struct.pack_into("<8f", hdr, 76, 1.0, dx, dy, dz, 0, 0, 0, 0)  # pixdim
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    hdr[344:348] = b"n+1\0"

    # fastest-varying axis first on disk (x, y, z order)
    payload = bytes(hdr) + b"\0" * 4 + np.ascontiguousarray(data).tobytes()
    if path.name.endswith(".gz"):
        with gzip.open(path, "wb") as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


def _load_nifti(path: Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    raw = (
        gzip.open(path, "rb").read()
        if path.name.endswith(".gz")
        else path.read_bytes()
    )
    if len(raw) < 352:
        raise VolumeIOError(f"{path}: truncated NIfTI file ({len(raw)} bytes)")
    if struct.unpack_from("<i", raw, 0)[0] != 348:
        raise VolumeIOError(f"{path}: bad sizeof_hdr, not a NIfTI-1 file")
    if raw[344:347] != b"n+1":
        raise VolumeIOError(f"{path}: unsupported NIfTI magic {raw[344:348]!r}")
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3 or any(dim[i] > 1 for i in range(4, 8)):
        raise VolumeIOError(f"{path}: only 3D volumes supported, dim={dim}")
    w, h, d = dim[1], dim[2], dim[3]
    code = struct.unpack_from("<h", raw, 70)[0]
    if code not in _NIFTI_DTYPES:
        raise VolumeIOError(f"{path}: unsupported datatype code {code}")
    dtype = np.dtype(_NIFTI_DTYPES[code])
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    slope, inter = struct.unpack_from("<2f", raw, 112)
    n = d * h * w * dtype.itemsize
    if len(raw) < vox_offset + n:
        raise VolumeIOError(f"{path}: data shorter than dim implies ({d}x{h}x{w})")
    data = np.frombuffer(raw[vox_offset : vox_offset + n], dtype=dtype).reshape(d, h, w)
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * slope + inter
    spacing = (float(pixdim[3]), float(pixdim[2]), float(pixdim[1]))
    if any(s <= 0 for s in spacing):
        spacing = (1.0, 1.0, 1.0)
    return data.copy(), spacing


def _save_rawvol(volume: Volume, path: Path) -> None:
    data = np.ascontiguousarray(volume.data, dtype="<f4")
    path.write_bytes(data.tobytes())
    d, h, w = volume.dims
    dz, dy, dx = volume.spacing
    Path(str(path) + ".txt").write_text(f"dims {d} {h} {w}\nspacing {dz} {dy} {dx}\n")


def _load_rawvol(path: Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    sidecar = Path(str(path) + ".txt")
    if not sidecar.exists():
        raise VolumeIOError(f"{path}: missing sidecar header {sidecar.name}")
    dims = spacing = None
    for line in sidecar.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "dims":
            dims = tuple(int(p) for p in parts[1:4])
        elif parts[0] == "spacing":
            spacing = tuple(float(p) for p in parts[1:4])
    if dims is None:
        raise VolumeIOError(f"{sidecar}: missing 'dims' line")
    spacing = spacing or (1.0, 1.0, 1.0)
    buf = np.frombuffer(path.read_bytes(), dtype="<f4")
    if buf.size != dims[0] * dims[1] * dims[2]:
        raise VolumeIOError(
            f"{path}: payload has {buf.size} values, dims {dims} need "
            f"{dims[0] * dims[1] * dims[2]}"
        )
    data = buf.reshape(dims).copy()
    int_like = np.all(data == np.round(data))
    if int_like and np.all((data == 0) | (data == 1)):
        data = data.astype(np.uint8)
    return data, spacing
