"""Mesh and image IO.

OBJ: v/vt/vn/f with independently indexed positions and texcoords (faces are
fan-triangulated).  PNG: minimal codec over zlib, 8/16-bit grayscale, RGB and
RGBA; palette and interlaced files are rejected.  All float images are linear
in [0, 1]; the sRGB transfer function is applied explicitly via flags.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParseError, ShapeMismatch, UnsupportedPngFormat


# ---------------------------------------------------------------------------
# color transfer


def linear_to_srgb(x):
    x = np.clip(np.asarray(x, np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x):
    x = np.clip(np.asarray(x, np.float64), 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


# ---------------------------------------------------------------------------
# OBJ


@dataclass
class MeshData:
    positions: np.ndarray               # (n, 3)
    pos_idx: np.ndarray                 # (T, 3) int32
    texcoords: Optional[np.ndarray]     # (m, 2) or None
    uv_idx: Optional[np.ndarray]        # (T, 3) int32 or None
    normals: Optional[np.ndarray]       # (k, 3) or None
    nrm_idx: Optional[np.ndarray]       # (T, 3) int32 or None


def _obj_index(token: str, count: int, path, line_no: int) -> int:
    try:
        i = int(token)
    except ValueError:
        raise ParseError(path, line_no, f"bad index {token!r}")
    if i > 0:
        return i - 1
    if i < 0:
        return count + i
    raise ParseError(path, line_no, "OBJ indices are 1-based; 0 is invalid")


def load_obj(path) -> MeshData:
    positions, texcoords, normals = [], [], []
    fp, ft, fn = [], [], []
    any_t = any_n = False
    with open(path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    positions.append([float(x) for x in parts[1:4]])
                elif tag == "vt":
                    texcoords.append([float(x) for x in parts[1:3]])
                elif tag == "vn":
                    normals.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    corners = parts[1:]
                    if len(corners) < 3:
                        raise ParseError(path, line_no, "face needs at least 3 vertices")
                    ref = []
                    for c in corners:
                        fields = c.split("/")
                        vi = _obj_index(fields[0], len(positions), path, line_no)
                        ti = ni = -1
                        if len(fields) > 1 and fields[1]:
                            ti = _obj_index(fields[1], len(texcoords), path, line_no)
                            any_t = True
                        if len(fields) > 2 and fields[2]:
                            ni = _obj_index(fields[2], len(normals), path, line_no)
                            any_n = True
                        ref.append((vi, ti, ni))
                    for k in range(1, len(ref) - 1):
                        fp.append([ref[0][0], ref[k][0], ref[k + 1][0]])
                        ft.append([ref[0][1], ref[k][1], ref[k + 1][1]])
                        fn.append([ref[0][2], ref[k][2], ref[k + 1][2]])
            except ParseError:
                raise
            except (ValueError, IndexError) as e:
                raise ParseError(path, line_no, str(e))
    if not positions:
        raise ParseError(path, 0, "no vertices found")
    return MeshData(
        positions=np.asarray(positions, np.float64),
        pos_idx=np.asarray(fp, np.int32) if fp else np.zeros((0, 3), np.int32),
        texcoords=np.asarray(texcoords, np.float64) if any_t else None,
        uv_idx=np.asarray(ft, np.int32) if any_t else None,
        normals=np.asarray(normals, np.float64) if any_n else None,
        nrm_idx=np.asarray(fn, np.int32) if any_n else None,
    )


def save_obj(path, positions, pos_idx, texcoords=None, uv_idx=None):
    with open(path, "w") as fh:
        for p in np.asarray(positions):
            fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        if texcoords is not None:
            for t in np.asarray(texcoords):
                fh.write(f"vt {t[0]:.9g} {t[1]:.9g}\n")
        for k, f in enumerate(np.asarray(pos_idx)):
            if uv_idx is not None:
                u = uv_idx[k]
                fh.write(f"f {f[0]+1}/{u[0]+1} {f[1]+1}/{u[1]+1} {f[2]+1}/{u[2]+1}\n")
            else:
                fh.write(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n")


# ---------------------------------------------------------------------------
# PNG

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def write_png(img, path, bitdepth: int = 8, srgb: bool = True):
    """Write a float image in [0, 1] (linear) as an 8- or 16-bit PNG.

    ``srgb`` applies the sRGB transfer function before quantization.
    """
    a = np.asarray(img, np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3, 4):
        raise ShapeMismatch(f"image must be (H, W, {{1,3,4}}), got {a.shape}")
    if bitdepth not in (8, 16):
        raise UnsupportedPngFormat(f"bitdepth {bitdepth}")
    x = linear_to_srgb(a) if srgb else np.clip(a, 0.0, 1.0)
    maxv = (1 << bitdepth) - 1
    q = np.round(x * maxv).astype(np.uint16 if bitdepth == 16 else np.uint8)
    h, w, c = q.shape
    color_type = {1: 0, 3: 2, 4: 6}[c]
    if bitdepth == 16:
        raw = q.astype(">u2").tobytes()
        stride = w * c * 2
    else:
        raw = q.tobytes()
        stride = w * c
    scan = b"".join(b"\x00" + raw[y * stride:(y + 1) * stride] for y in range(h))

    def chunk(tag, payload):
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", w, h, bitdepth, color_type, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(_PNG_SIG)
        fh.write(chunk(b"IHDR", ihdr))
        fh.write(chunk(b"IDAT", zlib.compress(scan, 6)))
        fh.write(chunk(b"IEND", b""))


def _unfilter(data, h, stride, bpp):
    out = bytearray(h * stride)
    pos = 0
    prev = bytearray(stride)
    for y in range(h):
        ft = data[pos]
        pos += 1
        row = bytearray(data[pos:pos + stride])
        pos += stride
        if ft == 1:
            for i in range(bpp, stride):
                row[i] = (row[i] + row[i - bpp]) & 0xFF
        elif ft == 2:
            for i in range(stride):
                row[i] = (row[i] + prev[i]) & 0xFF
        elif ft == 3:
            for i in range(stride):
                left = row[i - bpp] if i >= bpp else 0
                row[i] = (row[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ft == 4:
            for i in range(stride):
                a = row[i - bpp] if i >= bpp else 0
                b = prev[i]
                c = prev[i - bpp] if i >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pr = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                row[i] = (row[i] + pr) & 0xFF
        elif ft != 0:
            raise UnsupportedPngFormat(f"filter type {ft}")
        out[y * stride:(y + 1) * stride] = row
        prev = row
    return bytes(out)


def read_png(path, srgb: bool = True):
    """Read an 8/16-bit gray/RGB/RGBA PNG as a linear float image in [0, 1].

    ``srgb`` inverts the sRGB transfer function after normalization.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _PNG_SIG:
        raise UnsupportedPngFormat("not a PNG file")
    pos = 8
    ihdr = None
    idat = b""
    while pos < len(blob):
        (ln,) = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + ln]
        pos += 12 + ln
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if ihdr is None:
        raise UnsupportedPngFormat("missing IHDR")
    w, h, depth, color_type, comp, filt, interlace = ihdr
    if interlace:
        raise UnsupportedPngFormat("interlaced PNG")
    if depth not in (8, 16):
        raise UnsupportedPngFormat(f"bit depth {depth}")
    channels = {0: 1, 2: 3, 4: 2, 6: 4}.get(color_type)
    if channels is None:
        raise UnsupportedPngFormat(f"color type {color_type}")
    data = zlib.decompress(idat)
    bpp = channels * (depth // 8)
    stride = w * bpp
    raw = _unfilter(data, h, stride, bpp)
    if depth == 16:
        arr = np.frombuffer(raw, ">u2").astype(np.float64).reshape(h, w, channels)
        arr /= 65535.0
    else:
        arr = np.frombuffer(raw, np.uint8).astype(np.float64).reshape(h, w, channels)
        arr /= 255.0
    return srgb_to_linear(arr) if srgb else arr


# ---------------------------------------------------------------------------
# CSV


def write_csv(rows, path, header=("iteration", "loss", "metric")):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow(row)
