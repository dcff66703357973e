"""Volume and mask files: single-file NIfTI-1 and a raw + JSON pair.

NIfTI stores samples at voxel centres; the first centre is taken as the lower
domain corner and the domain extent along each axis as ``(n - 1) * pixdim``.
Orientation is assumed axis aligned: a rotated qform/sform only triggers a
warning.

``pixdim`` and ``qoffset`` are float32 in the header.  When the grid's
spacing or corner is not exactly representable in float32, the writer adds a
small comment extension holding the float64 geometry so that a round trip
through :func:`write_nifti` / :func:`read_nifti` is exact; other tools simply
ignore it.
"""
from __future__ import annotations

import gzip
import json
import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .grid import Domain, GridSpec, SegmentationMask, VolumeGrid

__all__ = [
    "VolumeFileHeader",
    "read_nifti",
    "write_nifti",
    "read_raw",
    "write_raw",
    "read_volume",
    "write_volume",
    "DTYPE_CODES",
]

log = logging.getLogger(__name__)

HEADER_SIZE = 348
DATA_OFFSET = 352
INTENT_LABEL = 1002
_EXT_MAGIC = "fakeres-geometry "
_ECODE_COMMENT = 6

# NIfTI datatype code -> numpy dtype (byte order applied at use)
DTYPE_CODES = {2: np.dtype("u1"), 4: np.dtype("i2"), 16: np.dtype("f4"), 64: np.dtype("f8")}
_NAMES = {"uint8": 2, "int16": 4, "float32": 16, "float64": 64}

# (name, struct format) in header order; sums to 348 bytes
_FIELDS = (
    ("sizeof_hdr", "i"), ("data_type", "10s"), ("db_name", "18s"), ("extents", "i"),
    ("session_error", "h"), ("regular", "c"), ("dim_info", "B"), ("dim", "8h"),
    ("intent_p1", "f"), ("intent_p2", "f"), ("intent_p3", "f"), ("intent_code", "h"),
    ("datatype", "h"), ("bitpix", "h"), ("slice_start", "h"), ("pixdim", "8f"),
    ("vox_offset", "f"), ("scl_slope", "f"), ("scl_inter", "f"), ("slice_end", "h"),
    ("slice_code", "B"), ("xyzt_units", "B"), ("cal_max", "f"), ("cal_min", "f"),
    ("slice_duration", "f"), ("toffset", "f"), ("glmax", "i"), ("glmin", "i"),
    ("descrip", "80s"), ("aux_file", "24s"), ("qform_code", "h"), ("sform_code", "h"),
    ("quatern_b", "f"), ("quatern_c", "f"), ("quatern_d", "f"), ("qoffset_x", "f"),
    ("qoffset_y", "f"), ("qoffset_z", "f"), ("srow_x", "4f"), ("srow_y", "4f"),
    ("srow_z", "4f"), ("intent_name", "16s"), ("magic", "4s"),
)
_FMT = "".join(f for _, f in _FIELDS)


def _offsets():
    out, pos = {}, 0
    for name, f in _FIELDS:
        out[name] = pos
        pos += struct.calcsize("<" + f)
    assert pos == HEADER_SIZE
    return out


_OFFSET = _offsets()


@dataclass(frozen=True)
class VolumeFileHeader:
    shape: tuple[int, int, int]
    spacing: tuple[float, float, float]
    dtype: str
    intent: str
    lower: tuple[float, float, float]

    def __post_init__(self):
        if self.dtype not in _NAMES:
            raise InputError(f"unsupported element type {self.dtype!r}")
        if self.intent not in ("image", "labels"):
            raise InputError(f"intent must be 'image' or 'labels', got {self.intent!r}")
        if self.intent == "labels" and self.dtype.startswith("float"):
            raise InputError("label files need an integer element type")

    def grid(self) -> GridSpec:
        upper = tuple(self.lower[d] + self.spacing[d] * (self.shape[d] - 1) for d in range(3))
        return GridSpec(Domain(self.lower, upper), self.shape)


def _open(path, mode):
    path = Path(path)
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def _check_values(arr, dtype):
    if not np.all(np.isfinite(arr)):
        raise InputError("values must be finite")
    if dtype.kind in "iu":
        info = np.iinfo(dtype)
        if arr.size and (arr.min() < info.min or arr.max() > info.max):
            raise InputError(f"values outside the {dtype} range")
        if np.any(arr != np.round(arr)):
            raise InputError(f"non-integer values cannot be stored as {dtype}")
    elif dtype == np.float32:
        if arr.size and np.abs(arr).max() > np.finfo(np.float32).max:
            raise InputError("values overflow float32")


def write_nifti(obj, path, dtype: str | None = None, byteorder: str = "<") -> None:
    """Write a volume or mask as single-file NIfTI-1 (``.nii`` or ``.nii.gz``).

    ``dtype`` is one of ``uint8``, ``int16``, ``float32``, ``float64``
    (default: ``float64`` for volumes, ``uint8``/``int16`` for masks).
    Values that the element type cannot hold raise :class:`InputError`
    before anything is written.
    """
    if isinstance(obj, SegmentationMask):
        data, intent = obj.labels, "labels"
        dtype = dtype or ("uint8" if obj.label_count <= 256 else "int16")
    elif isinstance(obj, VolumeGrid):
        data, intent = obj.values, "image"
        dtype = dtype or "float64"
    else:
        raise InputError(f"cannot write {type(obj).__name__}")
    if byteorder not in "<>":
        raise InputError("byteorder must be '<' or '>'")
    code = _NAMES.get(dtype)
    if code is None:
        raise InputError(f"unsupported element type {dtype!r}")
    VolumeFileHeader(obj.spec.shape, obj.spec.spacing, dtype, intent, obj.spec.domain.lower)
    np_dtype = DTYPE_CODES[code].newbyteorder(byteorder)
    _check_values(data, DTYPE_CODES[code])

    spec = obj.spec
    ext = b""
    spacing32 = tuple(float(np.float32(v)) for v in spec.spacing)
    lower32 = tuple(float(np.float32(v)) for v in spec.domain.lower)
    exact = _header_domain(lower32, spacing32, spec.shape) == (spec.domain.lower, spec.domain.upper)
    if not exact:
        text = _EXT_MAGIC + json.dumps(
            {"lower": list(spec.domain.lower), "upper": list(spec.domain.upper)}
        )
        raw = text.encode("ascii")
        esize = 8 + len(raw)
        esize += (-esize) % 16
        ext = struct.pack(byteorder + "ii", esize, _ECODE_COMMENT) + raw.ljust(esize - 8, b"\0")

    h = {name: 0 for name, _ in _FIELDS}
    h.update(
        sizeof_hdr=HEADER_SIZE, data_type=b"", db_name=b"", regular=b"r",
        dim=(3, *spec.shape, 1, 1, 1, 1), datatype=code, bitpix=np_dtype.itemsize * 8,
        pixdim=(1.0, *spec.spacing, 0.0, 0.0, 0.0, 0.0), vox_offset=float(DATA_OFFSET + len(ext)),
        scl_slope=1.0, scl_inter=0.0, xyzt_units=2,
        intent_code=INTENT_LABEL if intent == "labels" else 0,
        descrip=b"fakeres", aux_file=b"", qform_code=1, sform_code=0,
        qoffset_x=spec.domain.lower[0], qoffset_y=spec.domain.lower[1], qoffset_z=spec.domain.lower[2],
        srow_x=(0.0,) * 4, srow_y=(0.0,) * 4, srow_z=(0.0,) * 4,
        intent_name=b"labels" if intent == "labels" else b"", magic=b"n+1\0",
    )
    args = []
    for name, f in _FIELDS:
        v = h[name]
        args.extend(v if isinstance(v, tuple) else (v,))
    header = struct.pack(byteorder + _FMT, *args)
    extender = bytes([1 if ext else 0, 0, 0, 0])
    payload = np.asarray(data).astype(np_dtype).tobytes(order="F")
    with _open(path, "wb") as fh:
        fh.write(header + extender + ext + payload)


def _unpack(buf, endian):
    vals = struct.unpack(endian + _FMT, buf[:HEADER_SIZE])
    out, pos = {}, 0
    for name, f in _FIELDS:
        n = struct.calcsize("<" + f) // struct.calcsize("<" + f[-1]) if f[-1] not in "sc" else 1
        out[name] = vals[pos] if n == 1 else vals[pos:pos + n]
        pos += n
    return out


def read_nifti(path):
    """Read a single-file NIfTI-1 volume.

    Returns a :class:`SegmentationMask` for label-intent files with an
    integer type, otherwise a :class:`VolumeGrid`.  Both byte orders and
    gzip compression are accepted; ``scl_slope``/``scl_inter`` are applied
    when the slope is nonzero and not the identity.
    """
    with _open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than a NIfTI-1 header", offset=len(buf))
    if struct.unpack("<i", buf[:4])[0] == HEADER_SIZE:
        endian = "<"
    elif struct.unpack(">i", buf[:4])[0] == HEADER_SIZE:
        endian = ">"
    else:
        raise FormatError(f"{path}: sizeof_hdr is not 348", offset=0)
    h = _unpack(buf, endian)
    if h["magic"] != b"n+1\0":
        raise FormatError(f"{path}: bad magic {h['magic']!r}", offset=_OFFSET["magic"])
    dim = h["dim"]
    if dim[0] != 3:
        raise FormatError(f"{path}: expected a 3D volume, dim[0]={dim[0]}", offset=_OFFSET["dim"])
    shape = tuple(int(d) for d in dim[1:4])
    code = h["datatype"]
    if code not in DTYPE_CODES:
        raise FormatError(f"{path}: unsupported datatype {code}", offset=_OFFSET["datatype"])
    dtype = DTYPE_CODES[code].newbyteorder(endian)
    offset = int(h["vox_offset"])
    if offset < DATA_OFFSET:
        raise FormatError(f"{path}: vox_offset {offset} < 352", offset=_OFFSET["vox_offset"])
    count = int(np.prod(shape))
    end = offset + count * dtype.itemsize
    if len(buf) < end:
        raise FormatError(f"{path}: truncated data ({len(buf)} < {end} bytes)", offset=len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(shape, order="F")
    data = data.astype(dtype.newbyteorder("="))

    spacing = tuple(abs(float(v)) for v in h["pixdim"][1:4])
    if h["qform_code"] > 0:
        lower = (float(h["qoffset_x"]), float(h["qoffset_y"]), float(h["qoffset_z"]))
        if any(abs(float(q)) > 1e-6 for q in (h["quatern_b"], h["quatern_c"], h["quatern_d"])):
            warnings.warn(f"{path}: non-identity qform rotation ignored; assuming axis-aligned grid")
    elif h["sform_code"] > 0:
        rows = np.array([h["srow_x"], h["srow_y"], h["srow_z"]], dtype=float)
        lower = tuple(rows[:, 3])
        if np.any(np.abs(rows[:, :3] - np.diag(np.diag(rows[:, :3]))) > 1e-6):
            warnings.warn(f"{path}: non-diagonal sform ignored; assuming axis-aligned grid")
    else:
        lower = (0.0, 0.0, 0.0)
    lower, upper = _header_domain(lower, spacing, shape)

    exact = _read_geometry_extension(buf, endian, offset)
    if exact is not None:
        lo, up = exact
        if all(abs(lo[d] - lower[d]) <= 1e-5 * max(1.0, abs(lower[d])) and
               abs(up[d] - upper[d]) <= 1e-5 * max(1.0, abs(upper[d])) for d in range(3)):
            lower, upper = lo, up
        else:
            log.warning("%s: geometry extension disagrees with the header; using the header", path)
    spec = GridSpec(Domain(lower, upper), shape)

    slope, inter = float(h["scl_slope"]), float(h["scl_inter"])
    is_labels = h["intent_code"] == INTENT_LABEL and dtype.kind in "iu"
    if slope != 0.0 and (slope, inter) != (1.0, 0.0):
        log.info("%s: applying scl_slope=%g scl_inter=%g", path, slope, inter)
        data = data.astype(np.float64) * slope + inter
        is_labels = False
    if is_labels:
        return SegmentationMask(spec, data)
    return VolumeGrid(spec, data.astype(np.float64))


def _header_domain(lower, spacing, shape):
    upper = tuple(lower[d] + spacing[d] * (shape[d] - 1) for d in range(3))
    return tuple(lower), upper


def _read_geometry_extension(buf, endian, vox_offset):
    pos = HEADER_SIZE
    if len(buf) < pos + 4 or buf[pos] == 0:
        return None
    pos += 4
    while pos + 8 <= vox_offset:
        esize, ecode = struct.unpack(endian + "ii", buf[pos:pos + 8])
        if esize < 16 or pos + esize > vox_offset:
            break
        if ecode == _ECODE_COMMENT:
            text = buf[pos + 8:pos + esize].rstrip(b"\0").decode("ascii", "replace")
            if text.startswith(_EXT_MAGIC):
                try:
                    g = json.loads(text[len(_EXT_MAGIC):])
                    return tuple(map(float, g["lower"])), tuple(map(float, g["upper"]))
                except (ValueError, KeyError, TypeError):
                    return None
        pos += esize
    return None


# -- raw + JSON sidecar --------------------------------------------------------


def _sidecar(path):
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".json", ".raw") else path
    return base.with_suffix(".raw"), base.with_suffix(".json")


def write_raw(obj, path) -> None:
    """Write little-endian float64 samples (x fastest) plus a JSON header."""
    raw_path, json_path = _sidecar(path)
    if isinstance(obj, SegmentationMask):
        data, intent, dtype = obj.labels.astype(np.float64), "labels", "int16"
    elif isinstance(obj, VolumeGrid):
        data, intent, dtype = obj.values, "image", "float64"
    else:
        raise InputError(f"cannot write {type(obj).__name__}")
    spec = obj.spec
    meta = {
        "shape": list(spec.shape),
        "spacing": list(spec.spacing),
        "dtype": dtype,
        "intent": intent,
        "lower": list(spec.domain.lower),
        "upper": list(spec.domain.upper),
        "order": "x-fastest",
        "encoding": "float64-le",
    }
    if intent == "labels":
        meta["label_count"] = obj.label_count
    raw_path.write_bytes(np.asarray(data, dtype="<f8").tobytes(order="F"))
    json_path.write_text(json.dumps(meta, indent=2) + "\n")


def read_raw(path):
    raw_path, json_path = _sidecar(path)
    try:
        meta = json.loads(json_path.read_text())
        shape = tuple(int(n) for n in meta["shape"])
        spec = GridSpec(Domain(tuple(meta["lower"]), tuple(meta["upper"])), shape)
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{json_path}: bad sidecar ({exc})") from None
    buf = raw_path.read_bytes()
    if len(buf) != 8 * spec.size:
        raise FormatError(f"{raw_path}: expected {8 * spec.size} bytes, got {len(buf)}", offset=len(buf))
    data = np.frombuffer(buf, dtype="<f8").reshape(shape, order="F")
    if meta.get("intent") == "labels":
        return SegmentationMask(spec, data, meta.get("label_count"))
    return VolumeGrid(spec, data)


def _kind(path) -> str:
    name = str(path)
    if name.endswith((".nii", ".nii.gz")):
        return "nifti"
    if name.endswith((".raw", ".json")):
        return "raw"
    raise InputError(f"{path}: unknown volume format (use .nii, .nii.gz, .raw or .json)")


def read_volume(path):
    """Dispatch on the extension: NIfTI for ``.nii[.gz]``, raw+JSON for ``.raw``/``.json``."""
    return read_nifti(path) if _kind(path) == "nifti" else read_raw(path)


def write_volume(obj, path, dtype: str | None = None) -> None:
    if _kind(path) == "nifti":
        write_nifti(obj, path, dtype)
    else:
        write_raw(obj, path)
