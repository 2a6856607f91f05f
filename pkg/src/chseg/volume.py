"""Volumetric data types and file I/O.

Arrays are indexed ``[x, y, z]``. On disk the linear sample order is
x-fastest, i.e. numpy Fortran order, which is also the NIfTI convention.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimsMismatchError,
    EmptyMaskError,
    IndexOutOfRangeError,
    InputError,
    MissingFieldError,
    NonPositivePixdimError,
    TruncatedDataError,
    UnsupportedDatatypeError,
)

DOMAINS = ("raw_hu", "normalized_unit", "phase_field")
UNIT_RANGE = (-0.25, 1.25)

# Inclusive per-axis index bounds ((x0, x1), (y0, y1), (z0, z1)).
Box = tuple[tuple[int, int], tuple[int, int], tuple[int, int]]


def _as_3d(a: np.ndarray) -> np.ndarray:
    if a.ndim != 3:
        raise InputError(f"expected a 3-D array, got shape {a.shape}")
    if min(a.shape) < 1:
        raise InputError(f"all dims must be >= 1, got {a.shape}")
    return a


@dataclass(frozen=True)
class ScalarVolume:
    """A 3-D grid of float32 samples.

    Attributes:
        data: array of shape ``(nx, ny, nz)``.
        spacing: voxel size in millimetres along x, y, z.
        domain: one of ``raw_hu``, ``normalized_unit``, ``phase_field``.
        meta: free-form provenance.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    domain: str = "raw_hu"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = _as_3d(np.asarray(self.data, dtype=np.float32))
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(s > 0 for s in spacing):
            raise InputError(f"spacing must be three positive values, got {self.spacing}")
        if self.domain not in DOMAINS:
            raise InputError(f"unknown intensity domain {self.domain!r}")
        if not np.all(np.isfinite(data)):
            raise InputError("volume contains NaN or infinite samples")
        if self.domain != "raw_hu" and data.size:
            lo, hi = float(data.min()), float(data.max())
            if lo < UNIT_RANGE[0] or hi > UNIT_RANGE[1]:
                raise InputError(
                    f"{self.domain} samples must lie in {list(UNIT_RANGE)}, got [{lo}, {hi}]"
                )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    def linear(self) -> np.ndarray:
        """Samples in x-fastest linear order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_linear(cls, samples, dims, **kwargs) -> "ScalarVolume":
        samples = np.asarray(samples, dtype=np.float32)
        if samples.size != math.prod(dims):
            raise DimsMismatchError(f"{samples.size} samples do not fill dims {tuple(dims)}")
        return cls(samples.reshape(tuple(dims), order="F"), **kwargs)

    def with_data(self, data, domain=None) -> "ScalarVolume":
        return ScalarVolume(data, self.spacing, domain or self.domain, dict(self.meta))

    def crop(self, box: Box) -> "ScalarVolume":
        return self.with_data(self.data[_box_slices(box)].copy())


@dataclass(frozen=True)
class BinaryMask:
    """A boolean grid aligned with a :class:`ScalarVolume`."""

    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_3d(np.asarray(self.bits, dtype=bool)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.bits.shape)

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def linear(self) -> np.ndarray:
        return self.bits.ravel(order="F")

    def crop(self, box: Box) -> "BinaryMask":
        return BinaryMask(self.bits[_box_slices(box)].copy())

    def to_volume(self, spacing=(1.0, 1.0, 1.0)) -> ScalarVolume:
        return ScalarVolume(self.bits.astype(np.float32), spacing, "normalized_unit")

    @classmethod
    def from_volume(cls, vol: ScalarVolume) -> "BinaryMask":
        return cls(vol.data != 0)


def check_aligned(vol, mask: BinaryMask) -> None:
    if tuple(vol.dims) != tuple(mask.dims):
        raise DimsMismatchError(f"volume dims {vol.dims} != mask dims {mask.dims}")


def _box_slices(box: Box):
    return tuple(slice(lo, hi + 1) for lo, hi in box)


def bounding_box(mask: BinaryMask, pad: int = 0) -> Box:
    """Smallest box holding every set voxel, grown by ``pad`` and clamped."""
    if pad < 0:
        raise InputError("pad must be non-negative")
    idx = np.nonzero(mask.bits)
    if idx[0].size == 0:
        raise EmptyMaskError("bounding box of an empty mask")
    return tuple(
        (max(0, int(i.min()) - pad), min(n - 1, int(i.max()) + pad))
        for i, n in zip(idx, mask.dims)
    )


# --- NIfTI-1 ---------------------------------------------------------------

NIFTI_HEADER_SIZE = 348
NIFTI_DTYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4"}


@dataclass(frozen=True)
class VolumeHeader:
    dtype: str
    byte_order: str
    scale_slope: float
    scale_intercept: float
    data_offset: int
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]


def read_nifti_header(raw: bytes) -> VolumeHeader:
    if len(raw) < NIFTI_HEADER_SIZE:
        raise TruncatedDataError(f"file has {len(raw)} bytes, header needs {NIFTI_HEADER_SIZE}")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise BadMagicError(f"unsupported NIfTI magic {magic!r}; only single-file n+1 is read")

    endian = "<"
    if struct.unpack("<i", raw[0:4])[0] != NIFTI_HEADER_SIZE:
        if struct.unpack(">i", raw[0:4])[0] != NIFTI_HEADER_SIZE:
            raise BadMagicError("sizeof_hdr is not 348")
        endian = ">"

    dim = struct.unpack(endian + "8h", raw[40:56])
    datatype = struct.unpack(endian + "h", raw[70:72])[0]
    pixdim = struct.unpack(endian + "8f", raw[76:108])
    vox_offset, slope, inter = struct.unpack(endian + "3f", raw[108:120])

    if datatype not in NIFTI_DTYPES:
        raise UnsupportedDatatypeError(f"NIfTI datatype {datatype} not supported")
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise InputError(f"invalid dim[0]={ndim}")
    shape = [dim[i] if i <= ndim else 1 for i in range(1, 8)]
    if any(n > 1 for n in shape[3:]):
        raise InputError(f"only 3-D volumes are supported, got dims {shape[:ndim]}")
    dims = tuple(shape[:3])
    if min(dims) < 1:
        raise InputError(f"invalid dims {dims}")
    spacing = tuple(float(pixdim[i]) if i <= ndim else 1.0 for i in (1, 2, 3))
    if not all(s > 0 for s in spacing):
        raise NonPositivePixdimError(f"pixdim {spacing} must be positive")
    if slope == 0 or not math.isfinite(slope):
        slope = 1.0
    if not math.isfinite(inter):
        inter = 0.0

    return VolumeHeader(
        dtype=NIFTI_DTYPES[datatype],
        byte_order="little" if endian == "<" else "big",
        scale_slope=float(slope),
        scale_intercept=float(inter),
        data_offset=max(int(vox_offset), NIFTI_HEADER_SIZE),
        dims=dims,
        spacing=spacing,
    )


def read_nifti(path, as_mask: bool = False) -> ScalarVolume | BinaryMask:
    """Read an uncompressed single-file NIfTI-1 volume.

    Stored values are rescaled by ``scl_slope`` and ``scl_inter`` and
    converted to float32. With ``as_mask`` the nonzero samples form a
    :class:`BinaryMask` instead.
    """
    path = Path(path)
    raw = path.read_bytes()
    hdr = read_nifti_header(raw)
    dtype = np.dtype(hdr.dtype).newbyteorder("<" if hdr.byte_order == "little" else ">")
    count = math.prod(hdr.dims)
    end = hdr.data_offset + count * dtype.itemsize
    if len(raw) < end:
        raise TruncatedDataError(f"{path}: payload needs {end} bytes, file has {len(raw)}")
    stored = np.frombuffer(raw, dtype=dtype, count=count, offset=hdr.data_offset)
    values = stored.astype(np.float64) * hdr.scale_slope + hdr.scale_intercept
    vol = ScalarVolume.from_linear(
        values, hdr.dims, spacing=hdr.spacing, domain="raw_hu", meta={"source": str(path)}
    )
    return BinaryMask.from_volume(vol) if as_mask else vol


# --- RVOL: JSON sidecar plus raw little-endian float32 ----------------------

RVOL_FIELDS = ("dims", "spacing", "dtype", "byte_order", "raw")


def write_rvol(vol: ScalarVolume | BinaryMask, json_path) -> None:
    if isinstance(vol, BinaryMask):
        vol = vol.to_volume()
    json_path = Path(json_path)
    raw_path = json_path.with_suffix(".raw")
    sidecar = {
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "dtype": "f32",
        "byte_order": "little",
        "raw": raw_path.name,
        "intensity_domain": vol.domain,
    }
    raw_path.write_bytes(vol.linear().astype("<f4").tobytes())
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n")


def read_rvol(json_path) -> ScalarVolume:
    json_path = Path(json_path)
    try:
        sidecar = json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{json_path}: invalid JSON ({exc})") from exc
    for key in RVOL_FIELDS:
        if key not in sidecar:
            raise MissingFieldError(f"{json_path}: missing field {key!r}")
    if sidecar["dtype"] != "f32" or sidecar["byte_order"] != "little":
        raise UnsupportedDatatypeError("RVOL payload must be little-endian f32")
    dims = tuple(int(n) for n in sidecar["dims"])
    if len(dims) != 3:
        raise InputError(f"{json_path}: dims must have three entries")
    payload = (json_path.parent / sidecar["raw"]).read_bytes()
    if len(payload) != math.prod(dims) * 4:
        raise DimsMismatchError(
            f"{json_path}: payload has {len(payload)} bytes, dims {list(dims)} need {math.prod(dims) * 4}"
        )
    samples = np.frombuffer(payload, dtype="<f4")
    return ScalarVolume.from_linear(
        samples,
        dims,
        spacing=tuple(sidecar["spacing"]),
        domain=sidecar.get("intensity_domain", "raw_hu"),
        meta={"source": str(json_path)},
    )


def read_volume(path, as_mask: bool = False) -> ScalarVolume | BinaryMask:
    """Dispatch on extension: ``.json`` is RVOL, anything else NIfTI."""
    path = Path(path)
    if path.suffix == ".json":
        vol = read_rvol(path)
        return BinaryMask.from_volume(vol) if as_mask else vol
    return read_nifti(path, as_mask=as_mask)


# --- PGM slices ------------------------------------------------------------

AXES = {"x": 0, "y": 1, "z": 2}


def slice_to_bytes(vol: ScalarVolume, axis: str, index: int) -> np.ndarray:
    """Map one slice to uint8 via round-half-up of ``255 * clamp(v, 0, 1)``.

    Rows of the returned image run along the slower of the two in-plane
    axes, columns along the faster one.
    """
    if axis not in AXES:
        raise InputError(f"axis must be one of x, y, z, got {axis!r}")
    if vol.domain == "raw_hu":
        raise InputError("PGM export needs a normalized_unit or phase_field volume")
    a = AXES[axis]
    if not 0 <= index < vol.dims[a]:
        raise IndexOutOfRangeError(f"slice {index} outside [0, {vol.dims[a]}) on axis {axis}")
    plane = np.take(vol.data, index, axis=a).astype(np.float64)
    pixels = np.floor(255.0 * np.clip(plane, 0.0, 1.0) + 0.5).astype(np.uint8)
    return pixels.T  # (slow, fast) for row-major raster


def write_slice_pgm(vol: ScalarVolume, axis: str, index: int, path) -> None:
    img = slice_to_bytes(vol, axis, index)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
