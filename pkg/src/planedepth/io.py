"""Readers and writers: PFM, 16-bit PNG, ASCII PLY, weight containers, intrinsics.

Formats:
  * PFM ("Pf" one channel, "PF" three channels), rows stored bottom to top,
    negative scale = little endian. Invalid pixels are stored as 0.
  * PNG16 depth: depth_m = raw / scale (scale 256 by default), raw 0 = invalid.
  * PNG16x3 normals: raw = round((n + 1) / 2 * 65535); (0, 0, 0) = invalid.
  * Label PNG: raw = label + 1, raw 0 = unlabeled.
  * NDGW weight container, little endian: b"NDGW", u32 version, then records
    of u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32 payload.
"""
from __future__ import annotations

import json
import re
import struct
from importlib import resources
from pathlib import Path

import numpy as np
import png

from .errors import FormatError, ParameterError
from .plane_seg import SegmentLabelMap
from .types import CameraIntrinsics, DepthMap, MaskedMap, NormalMap, PointCloud

DEFAULT_DEPTH_SCALE = 256.0
NORMAL_RENORM_TOL = 1e-2
NDGW_MAGIC = b"NDGW"
NDGW_VERSION = 1
MAX_DIM = 1 << 16


# --------------------------------------------------------------------------- PFM

def write_pfm(path, data: np.ndarray, little_endian: bool = True) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        tag = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        tag = b"PF"
    else:
        raise FormatError(f"PFM holds (H, W) or (H, W, 3) data, got {data.shape}")
    H, W = data.shape[:2]
    dtype = "<f4" if little_endian else ">f4"
    scale = b"-1.0" if little_endian else b"1.0"
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{W} {H}".encode() + b"\n" + scale + b"\n")
        f.write(np.ascontiguousarray(data[::-1]).astype(dtype).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    # tag, width, height, scale; a single whitespace byte then precedes the payload
    m = re.compile(rb"(\S+)\s+(\S+)\s+(\S+)\s+(\S+)\s").match(raw)
    if m is None:
        raise FormatError("truncated or malformed PFM header")
    tag, w, h, scale = m.groups()
    pos = m.end()
    if tag not in (b"Pf", b"PF"):
        raise FormatError(f"not a PFM file (tag {tag!r})")
    try:
        W, H, s = int(w), int(h), float(scale)
    except ValueError:
        raise FormatError("malformed PFM dimensions or scale") from None
    if not (0 < W <= MAX_DIM and 0 < H <= MAX_DIM) or s == 0:
        raise FormatError(f"bad PFM dimensions {W}x{H} or scale {s}")
    C = 3 if tag == b"PF" else 1
    dtype = "<f4" if s < 0 else ">f4"
    n = W * H * C
    if len(raw) - pos < 4 * n:
        raise FormatError("truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype, count=n, offset=pos).astype(np.float32)
    data = data.reshape((H, W, C) if C == 3 else (H, W))[::-1]
    return np.ascontiguousarray(data)


# --------------------------------------------------------------------------- PNG16

def write_png16(path, raw: np.ndarray) -> None:
    raw = np.asarray(raw)
    if raw.dtype != np.uint16:
        raise FormatError("PNG16 payload must be uint16")
    H, W = raw.shape[:2]
    planes = 1 if raw.ndim == 2 else raw.shape[2]
    greyscale = planes == 1
    writer = png.Writer(W, H, greyscale=greyscale, bitdepth=16, alpha=False)
    rows = raw.reshape(H, W * planes)
    with open(path, "wb") as f:
        writer.write(f, rows.tolist())


def read_png16(path) -> np.ndarray:
    try:
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
    except png.Error as e:
        raise FormatError(f"cannot read PNG: {e}") from None
    if info["bitdepth"] != 16:
        raise FormatError(f"expected a 16-bit PNG, got {info['bitdepth']}-bit")
    planes = info["planes"]
    arr = np.vstack([np.asarray(r, dtype=np.uint16) for r in rows])
    return arr.reshape(h, w, planes) if planes > 1 else arr.reshape(h, w)


# --------------------------------------------------------------------------- maps

def _fmt(path, fmt: str | None) -> str:
    if fmt:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return "pfm"
    if suffix == ".png":
        return "png16"
    raise FormatError(f"cannot infer format of {path}")


def write_map(path, m: MaskedMap, fmt: str | None = None, depth_scale: float = DEFAULT_DEPTH_SCALE,
              little_endian: bool = True) -> None:
    """Write any scalar map (depth, distance, uncertainty)."""
    fmt = _fmt(path, fmt)
    if fmt == "pfm":
        write_pfm(path, np.where(m.valid, m.values, 0.0), little_endian)
    elif fmt == "png16":
        raw = np.floor(m.values * depth_scale + 0.5)
        if np.any(raw[m.valid] > 65535):
            raise FormatError("values exceed the PNG16 range at this scale")
        write_png16(path, np.where(m.valid, raw, 0).astype(np.uint16))
    else:
        raise FormatError(f"unknown format {fmt!r}")


def read_map(path, cls=DepthMap, fmt: str | None = None,
             depth_scale: float = DEFAULT_DEPTH_SCALE) -> MaskedMap:
    """Read a scalar map; zero and non-finite pixels are invalid."""
    fmt = _fmt(path, fmt)
    if fmt == "pfm":
        data = read_pfm(path)
        if data.ndim != 2:
            raise FormatError("expected a single-channel PFM")
        values = data.astype(np.float64)
        with np.errstate(invalid="ignore"):
            return cls.from_values(values, np.isfinite(values) & (values != 0))
    if fmt == "png16":
        raw = read_png16(path)
        if raw.ndim != 2:
            raise FormatError("expected a single-channel PNG")
        return cls.from_values(raw / depth_scale, raw > 0)
    raise FormatError(f"unknown format {fmt!r}")


def read_depth(path, fmt=None, depth_scale=DEFAULT_DEPTH_SCALE) -> DepthMap:
    return read_map(path, DepthMap, fmt, depth_scale)


def write_depth(path, depth: DepthMap, fmt=None, depth_scale=DEFAULT_DEPTH_SCALE) -> None:
    write_map(path, depth, fmt, depth_scale)


def encode_normals_png(N: NormalMap) -> np.ndarray:
    raw = np.floor((N.vectors + 1.0) / 2.0 * 65535.0 + 0.5)
    raw[~N.valid] = 0
    return raw.astype(np.uint16)


def decode_normals(vec: np.ndarray, stored_valid: np.ndarray) -> NormalMap:
    """Keep unit vectors as stored, renormalize near-unit ones, drop the rest."""
    norms = np.linalg.norm(vec, axis=-1)
    with np.errstate(invalid="ignore"):
        dev = np.abs(norms - 1.0)
        ok = stored_valid & np.isfinite(norms) & (dev <= NORMAL_RENORM_TOL)
        exact = ok & (dev <= 1e-6)
    out = np.zeros_like(vec)
    out[exact] = vec[exact]
    fix = ok & ~exact
    out[fix] = vec[fix] / norms[fix, None]
    return NormalMap(out, ok)


def write_normal(path, N: NormalMap, fmt: str | None = None, little_endian: bool = True) -> None:
    fmt = {"png16": "png16x3", "pfm": "pfm3"}.get(_fmt(path, fmt), fmt)
    if fmt == "pfm3":
        write_pfm(path, N.vectors, little_endian)
    elif fmt == "png16x3":
        write_png16(path, encode_normals_png(N))
    else:
        raise FormatError(f"unknown normal format {fmt!r}")


def read_normal(path, fmt: str | None = None) -> NormalMap:
    fmt = {"png16": "png16x3", "pfm": "pfm3"}.get(_fmt(path, fmt), fmt)
    if fmt == "pfm3":
        data = read_pfm(path)
        if data.ndim != 3:
            raise FormatError("expected a three-channel PFM")
        vec = data.astype(np.float64)
        return decode_normals(vec, np.any(vec != 0, axis=-1))
    if fmt == "png16x3":
        raw = read_png16(path)
        if raw.ndim != 3 or raw.shape[2] != 3:
            raise FormatError("expected a three-channel 16-bit PNG")
        vec = raw.astype(np.float64) / 65535.0 * 2.0 - 1.0
        return decode_normals(vec, np.any(raw != 0, axis=-1))
    raise FormatError(f"unknown normal format {fmt!r}")


def write_labels(path, seg: SegmentLabelMap) -> None:
    if seg.num_segments >= 65535:
        raise FormatError("too many segments for a 16-bit label image")
    write_png16(path, (seg.labels.astype(np.int64) + 1).astype(np.uint16))


def read_labels(path, min_area: int | None = None) -> SegmentLabelMap:
    raw = read_png16(path)
    if raw.ndim != 2:
        raise FormatError("expected a single-channel label PNG")
    return SegmentLabelMap.from_labels(raw.astype(np.int64) - 1, min_area)


# --------------------------------------------------------------------------- PLY

def _num(x: float) -> str:
    return np.format_float_positional(float(x), unique=True, trim="-")


def export_ply(cloud: PointCloud, path) -> None:
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property double x", "property double y", "property double z"]
    if cloud.normals is not None:
        lines += ["property double nx", "property double ny", "property double nz"]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    for i in range(len(cloud)):
        row = [_num(x) for x in cloud.points[i]]
        if cloud.normals is not None:
            row += [_num(x) for x in cloud.normals[i]]
        if cloud.colors is not None:
            row += [str(int(c)) for c in cloud.colors[i]]
        lines.append(" ".join(row))
    try:
        with open(path, "w", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise FormatError(f"cannot write {path}: {e}") from None


# --------------------------------------------------------------------------- weights

def write_weights(path, tensors: dict[str, np.ndarray]) -> None:
    out = [NDGW_MAGIC, struct.pack("<I", NDGW_VERSION)]
    for name, t in tensors.items():
        t = np.asarray(t, dtype="<f4")
        nb = name.encode("utf-8")
        out.append(struct.pack("<I", len(nb)) + nb)
        out.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        out.append(np.ascontiguousarray(t).tobytes())
    Path(path).write_bytes(b"".join(out))


def read_weights(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != NDGW_MAGIC:
        raise FormatError("not an NDGW weight file")
    if len(raw) < 8:
        raise FormatError("truncated NDGW header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != NDGW_VERSION:
        raise FormatError(f"unsupported NDGW version {version}")
    pos = 8
    tensors: dict[str, np.ndarray] = {}

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise FormatError("truncated NDGW record")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    while pos < len(raw):
        (nlen,) = take("<I")
        if pos + nlen > len(raw):
            raise FormatError("truncated tensor name")
        name = raw[pos : pos + nlen].decode("utf-8")
        pos += nlen
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}")
        (rank,) = take("<I")
        if rank > 8:
            raise FormatError(f"tensor {name!r} has implausible rank {rank}")
        dims = take(f"<{rank}I")
        count = int(np.prod(dims, dtype=np.int64))
        if pos + 4 * count > len(raw):
            raise FormatError(f"truncated payload for {name!r}")
        tensors[name] = np.frombuffer(raw, "<f4", count, pos).reshape(dims).astype(np.float32)
        pos += 4 * count
    return tensors


# --------------------------------------------------------------------------- intrinsics

PRESETS = ("nyu", "kitti")


def load_intrinsics(source: str) -> CameraIntrinsics:
    """Load from a JSON file path or a shipped preset name."""
    if source in PRESETS:
        text = resources.files("planedepth").joinpath(f"data/{source}.json").read_text()
        d = json.loads(text)
        d.pop("_source", None)
        return CameraIntrinsics.from_dict(d)
    try:
        with open(source) as f:
            return CameraIntrinsics.from_dict(json.load(f))
    except FileNotFoundError:
        raise ParameterError(f"intrinsics file not found: {source}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"bad intrinsics JSON: {e}") from None


def save_intrinsics(path, K: CameraIntrinsics) -> None:
    Path(path).write_text(json.dumps(K.to_dict(), indent=2) + "\n")
