"""Volume file formats.

Native format: raw little-endian float32 payload (row-major, W fastest)
plus a sidecar text header `<path>.hdr` with key=value lines. The pair
round-trips bit-exactly.

NIfTI-1 ingestion is read-only (single frame, float or int16 payloads,
scl_slope/scl_inter applied) and covers `.nii` / `.nii.gz`.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .grid import Volume


class FormatError(ValueError):
    """File does not parse as the requested format."""


class CorruptionError(ValueError):
    """Header and payload disagree."""


_HEADER_SUFFIX = ".hdr"


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + _HEADER_SUFFIX)


def save_volume(v: Volume, path: str | Path) -> None:
    """Write the native payload at `path` and its sidecar header."""
    path = Path(path)
    payload = np.ascontiguousarray(v.data, dtype="<f4")
    path.write_bytes(payload.tobytes())
    lines = [
        "format=tumorsynth-volume-v1",
        "shape={},{},{}".format(*v.shape),
        "spacing={!r},{!r},{!r}".format(*v.spacing),
        "dtype=float32",
        "order=DHW",
        "endianness=little",
        f"normalized={'true' if v.normalized else 'false'}",
    ]
    _header_path(path).write_text("\n".join(lines) + "\n")


def _parse_native_header(path: Path) -> dict:
    hdr_path = _header_path(path)
    if not hdr_path.exists():
        raise FormatError(f"missing sidecar header {hdr_path}")
    fields = {}
    for lineno, line in enumerate(hdr_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{hdr_path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        shape = tuple(int(x) for x in fields["shape"].split(","))
        spacing = tuple(float(x) for x in fields["spacing"].split(","))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{hdr_path}: malformed header: {exc}") from exc
    if len(shape) != 3 or len(spacing) != 3:
        raise FormatError(f"{hdr_path}: shape and spacing must have 3 components")
    if fields.get("dtype", "float32") != "float32":
        raise FormatError(f"unsupported dtype {fields.get('dtype')!r}")
    if fields.get("endianness", "little") != "little":
        raise FormatError(f"unsupported endianness {fields.get('endianness')!r}")
    return {
        "shape": shape,
        "spacing": spacing,
        "normalized": fields.get("normalized", "false").lower() == "true",
    }


def _load_native(path: Path) -> Volume:
    if not path.exists():
        raise FileNotFoundError(path)
    hdr = _parse_native_header(path)
    raw = path.read_bytes()
    expected = int(np.prod(hdr["shape"])) * 4
    if len(raw) != expected:
        raise CorruptionError(
            f"{path}: header says {hdr['shape']} ({expected} bytes) "
            f"but payload holds {len(raw)} bytes"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(hdr["shape"]).copy()
    return Volume(data, spacing=hdr["spacing"], normalized=hdr["normalized"])


# NIfTI-1 header offsets (348-byte fixed layout).
_NIFTI_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
}


def _load_nifti(path: Path) -> Volume:
    if not path.exists():
        raise FileNotFoundError(path)
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 348:
        raise FormatError(f"{path}: too short for a NIfTI-1 header")

    def u(fmt, off, swap):
        prefix = ">" if swap else "<"
        return struct.unpack_from(prefix + fmt, blob, off)

    swap = False
    (sizeof_hdr,) = u("i", 0, swap)
    if sizeof_hdr != 348:
        swap = True
        (sizeof_hdr,) = u("i", 0, swap)
        if sizeof_hdr != 348:
            raise FormatError(f"{path}: bad sizeof_hdr, not NIfTI-1")
    magic = blob[344:348]
    if magic[:3] not in (b"n+1", b"ni1"):
        raise FormatError(f"{path}: bad NIfTI magic {magic!r}")

    dim = u("8h", 40, swap)
    datatype = u("h", 70, swap)[0]
    pixdim = u("8f", 76, swap)
    vox_offset = int(u("f", 108, swap)[0])
    scl_slope = u("f", 112, swap)[0]
    scl_inter = u("f", 116, swap)[0]

    ndim = dim[0]
    if ndim < 3 or any(d > 1 for d in dim[4 : 1 + ndim]):
        raise FormatError(f"{path}: only single-frame 3D volumes are supported")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if datatype not in _NIFTI_DTYPES:
        raise FormatError(f"{path}: unsupported NIfTI datatype {datatype}")
    dtype = np.dtype(_NIFTI_DTYPES[datatype])
    if swap:
        dtype = dtype.newbyteorder(">")

    count = nx * ny * nz
    payload = blob[vox_offset : vox_offset + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise CorruptionError(f"{path}: payload shorter than dim implies")
    arr = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        slope = scl_slope if scl_slope != 0.0 else 1.0
        arr = arr * slope + scl_inter
    # NIfTI stores x fastest; reshape to (z, y, x) = (D, H, W).
    data = arr.reshape((nz, ny, nx)).astype(np.float32)
    spacing = (float(pixdim[3]), float(pixdim[2]), float(pixdim[1]))
    spacing = tuple(s if s > 0 else 1.0 for s in spacing)
    return Volume(data, spacing=spacing, normalized=False)


def load_volume(path: str | Path, format: str = "native") -> Volume:
    """Load a volume; `format` is 'native' or 'nifti'."""
    path = Path(path)
    if format == "native":
        return _load_native(path)
    if format == "nifti":
        return _load_nifti(path)
    raise FormatError(f"unknown format {format!r}")
