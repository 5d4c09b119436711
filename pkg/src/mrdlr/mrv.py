"""MRV1 volume container.

Layout::

    bytes 0-7    magic b"MRVOL001"
    bytes 8-15   little-endian u64 header length H
    H bytes      UTF-8 JSON header
    remainder    C-order little-endian array data

Header keys: ``dtype`` ("c64f" | "f32" | "u16"), ``shape``, ``axes``,
``pixel_spacing_mm`` and ``meta``. Complex data is stored as interleaved
float32 (re, im) pairs. Headers are written with sorted keys so identical
inputs give byte-identical files.
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"MRVOL001"
DEFAULT_AXES = ["frequency", "phase", "slice", "coil"]

_DTYPES = {
    "c64f": np.dtype("<c8"),
    "f32": np.dtype("<f4"),
    "u16": np.dtype("<u2"),
}


def _dtype_code(arr):
    if np.iscomplexobj(arr):
        return "c64f"
    if arr.dtype == np.uint16:
        return "u16"
    return "f32"


def to_jsonable(obj):
    """Convert numpy scalars/arrays nested in ``obj`` to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def encode(array, pixel_spacing_mm=(1.0, 1.0, 1.0), meta=None, axes=None, dtype=None):
    """Serialize ``array`` to MRV1 bytes."""
    arr = np.asarray(array)
    code = dtype or _dtype_code(arr)
    if code not in _DTYPES:
        raise ValidationError(f"unsupported MRV1 dtype {code!r}")
    if code == "u16" and arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
        raise ValidationError("u16 data out of range")
    data = np.ascontiguousarray(arr.astype(_DTYPES[code]))
    header = {
        "dtype": code,
        "shape": list(arr.shape),
        "axes": list(axes) if axes is not None else DEFAULT_AXES[: arr.ndim],
        "pixel_spacing_mm": [float(s) for s in pixel_spacing_mm],
        "meta": to_jsonable(meta or {}),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + data.tobytes(order="C")


def decode(buf, source="<bytes>"):
    """Parse MRV1 bytes into ``(array, header)``."""
    if len(buf) < 16 or buf[:8] != MAGIC:
        raise ValidationError(f"{source}: not an MRV1 file (bad magic)")
    (hlen,) = struct.unpack("<Q", buf[8:16])
    if 16 + hlen > len(buf):
        raise ValidationError(f"{source}: truncated header")
    try:
        header = json.loads(buf[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{source}: malformed header ({exc})") from None
    for key in ("dtype", "shape"):
        if key not in header:
            raise ValidationError(f"{source}: header missing {key!r}")
    if header["dtype"] not in _DTYPES:
        raise ValidationError(f"{source}: unsupported dtype {header['dtype']!r}")
    dt = _DTYPES[header["dtype"]]
    shape = tuple(int(s) for s in header["shape"])
    payload = buf[16 + hlen:]
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(payload) != expected:
        raise ValidationError(f"{source}: payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=dt).reshape(shape).copy()
    header.setdefault("meta", {})
    header.setdefault("pixel_spacing_mm", [1.0] * min(3, len(shape)))
    return arr, header


def write(path, array, pixel_spacing_mm=(1.0, 1.0, 1.0), meta=None, axes=None, dtype=None):
    """Write an MRV1 file and return its CRC32."""
    blob = encode(array, pixel_spacing_mm, meta, axes, dtype)
    Path(path).write_bytes(blob)
    return zlib.crc32(blob)


def read(path):
    """Read an MRV1 file into ``(array, header)``."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    return decode(path.read_bytes(), source=str(path))


def crc32_file(path):
    return zlib.crc32(Path(path).read_bytes())
