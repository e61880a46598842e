"""MIP-mapped texture sampling with gradients.

A texture is a square power-of-two texel grid (1 face, or 6 for a cube map)
with box-filtered pyramid levels.  Sampling is trilinear: bilinear on the two
levels bracketing the fractional level of detail, blended by its fractional
part.  The backward pass scatters into per-level gradient grids; collapsing
those to the base level is the exact transpose of pyramid construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ._backend import kernels
from .errors import NonPowerOfTwo, RecordMismatch, ShapeMismatch

LN2 = float(np.log(2.0))


def _norm_base(base):
    b = np.asarray(base)
    if b.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        b = b.astype(np.float64)
    if b.ndim == 2:
        b = b[None, :, :, None]
    elif b.ndim == 3:
        b = b[None, :, :, :]
    elif b.ndim != 4:
        raise ShapeMismatch(f"texture base must be (W,W), (W,W,C) or (F,W,W,C), got {b.shape}")
    f, h, w = b.shape[0], b.shape[1], b.shape[2]
    if h != w:
        raise ShapeMismatch(f"texture faces must be square, got {h}x{w}")
    if f not in (1, 6):
        raise ShapeMismatch(f"texture must have 1 or 6 faces, got {f}")
    return b


class MipTexture:
    """Texel pyramid: level 0 is the base; each coarser texel is the mean of
    its 2x2 children."""

    def __init__(self, levels: List[np.ndarray], wrap: bool = False):
        self.levels = levels
        self.wrap = bool(wrap)
        self.faces = levels[0].shape[0]
        self.width = levels[0].shape[1]
        self.channels = levels[0].shape[3]
        self.dtype = levels[0].dtype
        self.widths = np.array([lv.shape[1] for lv in levels], np.int64)
        # flat storage for the kernels: texel (f, l, y, x, k) at
        # flat[offsets[f, l] + (y * Wl + x) * C + k]
        L = len(levels)
        self.offsets = np.zeros((self.faces, L), np.int64)
        pieces = []
        pos = 0
        for f in range(self.faces):
            for l in range(L):
                self.offsets[f, l] = pos
                piece = np.ascontiguousarray(levels[l][f]).reshape(-1)
                pieces.append(piece)
                pos += piece.size
        self.flat = np.concatenate(pieces) if pieces else np.zeros(0, self.dtype)

    @property
    def level_count(self):
        return len(self.levels)


def build_pyramid(base, levels: int, wrap: bool = False) -> MipTexture:
    """Box-filter pyramid with ``levels`` levels (level 0 = base)."""
    b = _norm_base(base)
    w = b.shape[1]
    if levels < 1:
        raise ShapeMismatch("levels must be >= 1")
    if levels > 1:
        if w & (w - 1):
            raise NonPowerOfTwo(f"pyramid base width must be a power of two, got {w}")
        if levels > int(np.log2(w)) + 1:
            raise ShapeMismatch(f"{levels} levels exceed log2({w}) + 1")
    lv = [b]
    cur = b
    for _ in range(levels - 1):
        f, h, ww, c = cur.shape
        cur = cur.reshape(f, h // 2, 2, ww // 2, 2, c).mean(axis=(2, 4))
        lv.append(cur)
    return MipTexture(lv, wrap=wrap)


def lod_select(jst, tex_width, levels):
    """Fractional MIP level from the texel-space footprint.

    lod = log2(max axis length of tex_width * d(s,t)/d(x,y)), clamped to
    [0, levels - 1]; a zero footprint selects level 0.
    """
    j = np.asarray(jst, np.float64)
    single = j.ndim == 2
    if single:
        j = j[None]
    nx = tex_width * np.sqrt(j[..., 0, 0] ** 2 + j[..., 1, 0] ** 2)
    ny = tex_width * np.sqrt(j[..., 0, 1] ** 2 + j[..., 1, 1] ** 2)
    m = np.maximum(nx, ny)
    with np.errstate(divide="ignore"):
        raw = np.where(m > 0.0, np.log2(np.maximum(m, 1e-300)), 0.0)
    out = np.clip(raw, 0.0, levels - 1.0)
    return float(out[0]) if single else out


@dataclass
class TexSampleRequest:
    """Per-pixel texture coordinates (s, t) in [0, 1]^2 with their screen
    derivatives; ``faces`` resolves cube-map faces (None for 2D textures)."""

    st: np.ndarray                 # (H, W, 2)
    jst: np.ndarray                # (H, W, 2, 2) rows d(s)/d(x,y), d(t)/d(x,y)
    mask: np.ndarray               # (H, W) bool, False = blank pixel, skipped
    faces: Optional[np.ndarray] = None   # (H, W) int32

    def __post_init__(self):
        st = np.asarray(self.st)
        if st.ndim != 3 or st.shape[2] != 2:
            raise ShapeMismatch(f"st must be (H, W, 2), got {st.shape}")
        h, w = st.shape[:2]
        jst = np.asarray(self.jst)
        if jst.shape != (h, w, 2, 2):
            raise ShapeMismatch(f"jst must be ({h}, {w}, 2, 2), got {jst.shape}")
        mask = np.asarray(self.mask, bool)
        if mask.shape != (h, w):
            raise ShapeMismatch(f"mask must be ({h}, {w}), got {mask.shape}")
        if self.faces is not None and np.asarray(self.faces).shape != (h, w):
            raise ShapeMismatch("faces must match the request resolution")


@dataclass
class TexSampleRecord:
    """Saved sampling decisions replayed by the backward pass."""

    lod: np.ndarray
    lvl0: np.ndarray
    frac: np.ndarray
    tix: np.ndarray
    tfr: np.ndarray
    shape: tuple
    level_count: int


def texture_forward(tex: MipTexture, req: TexSampleRequest):
    """Trilinear lookup; returns (samples (H, W, C), record)."""
    st = np.ascontiguousarray(req.st, tex.dtype)
    jst = np.ascontiguousarray(req.jst, tex.dtype)
    mask = np.ascontiguousarray(req.mask, np.bool_)
    faces = (np.ascontiguousarray(req.faces, np.int32)
             if req.faces is not None else np.zeros((0, 0), np.int32))
    g, lod, lvl0, frac, tix, tfr = kernels.texture_forward(
        tex.flat, tex.offsets, tex.widths, tex.channels, faces, st, jst, mask,
        tex.wrap)
    rec = TexSampleRecord(lod, lvl0, frac, tix, tfr, mask.shape, tex.level_count)
    return g, rec


def texture_backward(tex: MipTexture, req: TexSampleRequest, rec: TexSampleRecord, dl_dg):
    """Returns (dl_dlevels, dl_dst, dl_djst).

    dl_dlevels is a list of per-level gradient grids shaped like the pyramid;
    collapse with :func:`flatten_gradients` for the base-level gradient.
    """
    H, W = rec.shape
    if rec.level_count != tex.level_count or rec.lod.shape != (H, W):
        raise RecordMismatch("record does not match this texture/request")
    dl_dg = np.ascontiguousarray(dl_dg, tex.dtype)
    if dl_dg.shape != (H, W, tex.channels):
        raise ShapeMismatch(f"dl_dg must be ({H}, {W}, {tex.channels}), got {dl_dg.shape}")
    st = np.ascontiguousarray(req.st, tex.dtype)
    jst = np.ascontiguousarray(req.jst, tex.dtype)
    mask = np.ascontiguousarray(req.mask, np.bool_)
    if mask.shape != (H, W):
        raise RecordMismatch("request resolution does not match the record")
    faces = (np.ascontiguousarray(req.faces, np.int32)
             if req.faces is not None else np.zeros((0, 0), np.int32))
    dflat, dl_dst, dl_djst = kernels.texture_backward(
        tex.flat, tex.offsets, tex.widths, tex.channels, faces, st, jst, mask,
        rec.lod, rec.lvl0, rec.frac, rec.tix, rec.tfr, dl_dg, tex.wrap)
    dl_dlevels = []
    for l, lv in enumerate(tex.levels):
        grad = np.zeros_like(lv)
        wl = lv.shape[1]
        for f in range(tex.faces):
            off = tex.offsets[f, l]
            grad[f] = dflat[off:off + wl * wl * tex.channels].reshape(wl, wl, tex.channels)
        dl_dlevels.append(grad)
    return dl_dlevels, dl_dst, dl_djst


def flatten_gradients(dl_dlevels):
    """Collapse per-level gradients to the base level.

    Transpose of pyramid construction: starting at the coarsest level, each
    texel's gradient is distributed to its 4 children with weight 1/4, then
    the finer level's own accumulation is added.
    """
    if not dl_dlevels:
        raise ShapeMismatch("empty gradient pyramid")
    for a, b in zip(dl_dlevels, dl_dlevels[1:]):
        if a.shape[1] != 2 * b.shape[1]:
            raise ShapeMismatch("gradient grids do not form a pyramid")
    acc = dl_dlevels[-1]
    for lv in range(len(dl_dlevels) - 2, -1, -1):
        up = np.repeat(np.repeat(acc, 2, axis=1), 2, axis=2) * 0.25
        acc = dl_dlevels[lv] + up
    return acc
