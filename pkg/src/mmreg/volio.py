"""Volumes with voxel-to-world affines and single-file NIfTI-1 I/O."""

import gzip
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, NiftiFormatError, UnsupportedDatatype

HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "<i4"), ("data_type", "S10"), ("db_name", "S18"),
    ("extents", "<i4"), ("session_error", "<i2"), ("regular", "S1"),
    ("dim_info", "u1"), ("dim", "<i2", (8,)), ("intent_p1", "<f4"),
    ("intent_p2", "<f4"), ("intent_p3", "<f4"), ("intent_code", "<i2"),
    ("datatype", "<i2"), ("bitpix", "<i2"), ("slice_start", "<i2"),
    ("pixdim", "<f4", (8,)), ("vox_offset", "<f4"), ("scl_slope", "<f4"),
    ("scl_inter", "<f4"), ("slice_end", "<i2"), ("slice_code", "u1"),
    ("xyzt_units", "u1"), ("cal_max", "<f4"), ("cal_min", "<f4"),
    ("slice_duration", "<f4"), ("toffset", "<f4"), ("glmax", "<i4"),
    ("glmin", "<i4"), ("descrip", "S80"), ("aux_file", "S24"),
    ("qform_code", "<i2"), ("sform_code", "<i2"), ("quatern_b", "<f4"),
    ("quatern_c", "<f4"), ("quatern_d", "<f4"), ("qoffset_x", "<f4"),
    ("qoffset_y", "<f4"), ("qoffset_z", "<f4"), ("srow_x", "<f4", (4,)),
    ("srow_y", "<f4", (4,)), ("srow_z", "<f4", (4,)),
    ("intent_name", "S16"), ("magic", "S4"),
])
assert HEADER_DTYPE.itemsize == 348

DATATYPES = {
    2: np.dtype("u1"), 4: np.dtype("<i2"), 8: np.dtype("<i4"),
    16: np.dtype("<f4"), 64: np.dtype("<f8"), 256: np.dtype("i1"),
    512: np.dtype("<u2"), 768: np.dtype("<u4"), 1024: np.dtype("<i8"),
    1280: np.dtype("<u8"),
}
INTENT_LABEL = 1002
VOX_OFFSET = 352


@dataclass(frozen=True, eq=False)
class Volume:
    """Scalar image, shape (X, Y, Z) or (X, Y, Z, frames)."""

    data: np.ndarray
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "affine", _check_affine(self.affine))
        if data.ndim not in (3, 4) or 0 in data.shape:
            raise InvalidArgument(f"volume data must be 3D or 4D and non-empty, got {data.shape}")

    @property
    def dims(self):
        return self.data.shape[:3]

    @property
    def frames(self):
        return self.data.shape[3] if self.data.ndim == 4 else 1


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Integer parcellation; label 0 is background."""

    data: np.ndarray
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or 0 in data.shape:
            raise InvalidArgument(f"label data must be 3D and non-empty, got {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            if not np.all(data == np.round(data)):
                raise InvalidArgument("label volume contains non-integer values")
        data = data.astype(np.int32)
        if data.min() < 0:
            raise InvalidArgument("labels must be non-negative")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "affine", _check_affine(self.affine))

    @property
    def dims(self):
        return self.data.shape

    @property
    def label_set(self):
        """Sorted distinct labels present, background included if present."""
        return np.unique(self.data)


def _check_affine(affine):
    affine = np.array(affine, dtype=float)
    if affine.shape != (4, 4):
        raise InvalidArgument(f"affine must be 4x4, got {affine.shape}")
    if abs(np.linalg.det(affine[:3, :3])) <= 1e-12:
        raise InvalidArgument("affine 3x3 block is singular")
    return affine


def voxel_to_world(vol, index):
    """Map (possibly fractional) voxel indices, shape (3,) or (..., 3), to mm."""
    index = np.asarray(index, dtype=float)
    A = vol.affine
    return index @ A[:3, :3].T + A[:3, 3]


def world_to_voxel(vol, point):
    inv = np.linalg.inv(vol.affine)
    point = np.asarray(point, dtype=float)
    return point @ inv[:3, :3].T + inv[:3, 3]


def midpoint_frame(vol):
    """Frame ``floor(F / 2)`` of a dynamic volume, used as registration input."""
    if vol.frames == 1:
        return Volume(vol.data.reshape(vol.dims), vol.affine)
    return Volume(vol.data[..., vol.frames // 2], vol.affine)


def average_frames(vol):
    if vol.frames == 1:
        return Volume(vol.data.reshape(vol.dims), vol.affine)
    return Volume(vol.data.mean(axis=3), vol.affine)


def _open(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _qform_affine(hdr):
    b, c, d = (float(hdr[k]) for k in ("quatern_b", "quatern_c", "quatern_d"))
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    R = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    pix = hdr["pixdim"].astype(float)
    qfac = -1.0 if pix[0] < 0 else 1.0
    A = np.eye(4)
    A[:3, :3] = R * np.array([pix[1], pix[2], pix[3] * qfac])
    A[:3, 3] = [hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"]]
    return A


def _header_affine(hdr):
    if hdr["sform_code"] > 0:
        A = np.eye(4)
        A[0], A[1], A[2] = hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]
        return A
    if hdr["qform_code"] > 0:
        return _qform_affine(hdr)
    pix = hdr["pixdim"][1:4].astype(float)
    return np.diag([*np.where(pix > 0, pix, 1.0), 1.0])


def read_nifti(path, labels=None):
    """Read a single-file NIfTI-1 image.

    Returns a :class:`LabelVolume` when the header carries the label intent
    or ``labels=True``; otherwise a :class:`Volume` with float data.
    """
    with _open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 348:
        raise NiftiFormatError(f"{path}: file too short for a NIfTI-1 header")
    hdr = np.frombuffer(raw[:348], dtype=HEADER_DTYPE)[0]
    if hdr["sizeof_hdr"] != 348:
        if int.from_bytes(raw[:4], "big") == 348:
            raise NiftiFormatError(f"{path}: big-endian NIfTI files are not supported")
        raise NiftiFormatError(f"{path}: sizeof_hdr is {hdr['sizeof_hdr']}, expected 348")
    if raw[344:348] != b"n+1\x00":
        raise NiftiFormatError(f"{path}: bad magic {raw[344:348]!r}, expected single-file 'n+1'")
    code = int(hdr["datatype"])
    if code not in DATATYPES:
        raise UnsupportedDatatype(code)
    dtype = DATATYPES[code]

    ndim = int(hdr["dim"][0])
    if not 1 <= ndim <= 7:
        raise NiftiFormatError(f"{path}: invalid dim[0] = {ndim}")
    shape = [int(n) for n in hdr["dim"][1:ndim + 1]]
    if any(n < 1 for n in shape):
        raise NiftiFormatError(f"{path}: non-positive dimension in {shape}")
    shape = (shape + [1, 1, 1])[:max(3, ndim)]
    # collapse trailing singleton dims beyond the 4th
    while len(shape) > 4 and shape[-1] == 1:
        shape.pop()
    if len(shape) > 4:
        raise NiftiFormatError(f"{path}: only 3D and 4D images are supported, got {shape}")

    offset = int(hdr["vox_offset"])
    count = int(np.prod(shape))
    if len(raw) < offset + count * dtype.itemsize:
        raise NiftiFormatError(f"{path}: truncated data payload")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = data.reshape(shape, order="F").copy()

    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    scaled = slope != 0 and np.isfinite(slope) and (slope != 1 or inter != 0)
    affine = _header_affine(hdr)
    if labels is None:
        labels = int(hdr["intent_code"]) == INTENT_LABEL
    if labels:
        if scaled:
            data = data * slope + inter
        if data.ndim == 4 and data.shape[3] == 1:
            data = data[..., 0]
        return LabelVolume(data, affine)
    data = data.astype(np.float64) if not np.issubdtype(dtype, np.floating) else data
    if scaled:
        data = data * slope + inter
    if data.ndim == 4 and data.shape[3] == 1:
        data = data[..., 0]
    return Volume(data, affine)


def write_nifti(vol, path):
    """Write float32 (Volume) or int32 (LabelVolume) NIfTI-1 with the sform set."""
    is_label = isinstance(vol, LabelVolume)
    data = np.asarray(vol.data, dtype="<i4" if is_label else "<f4")
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = 348
    hdr["regular"] = b"r"
    hdr["dim"][0] = data.ndim
    hdr["dim"][1:data.ndim + 1] = data.shape
    hdr["dim"][data.ndim + 1:] = 1
    hdr["datatype"] = 8 if is_label else 16
    hdr["bitpix"] = 32
    hdr["pixdim"][0] = 1.0
    hdr["pixdim"][1:4] = np.linalg.norm(vol.affine[:3, :3], axis=0)
    hdr["pixdim"][4:] = 1.0
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2 | 8  # mm, seconds
    hdr["sform_code"] = 2
    hdr["srow_x"], hdr["srow_y"], hdr["srow_z"] = vol.affine[0], vol.affine[1], vol.affine[2]
    hdr["intent_code"] = INTENT_LABEL if is_label else 0
    hdr["magic"] = b"n+1"
    payload = hdr.tobytes() + b"\x00" * 4 + data.tobytes(order="F")
    path = Path(path)
    if path.name.endswith(".gz"):
        # empty name and mtime=0 keep the gzip member byte-identical across runs
        with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as f:
            f.write(payload)
    else:
        path.write_bytes(payload)
