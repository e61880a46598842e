"""Rasterization: clip-space triangles to per-pixel coverage and back.

Forward produces, per pixel, the covering triangle ID (1-based, 0 = blank),
perspective-correct barycentrics (u, v) relative to the original unclipped
triangle, the NDC depth z/w, and the 2x2 Jacobian d(u,v)/d(x,y) in 1/pixel
units.  Backward maps per-pixel gradients on (u, v) and on the Jacobian to
gradients on the clip-space vertex positions; occluded and clipped-away
triangles receive exactly zero.  NDC depth carries no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .buffers import ClipVertexBuffer, GradBuffer, IndexBuffer, validate_geometry
from .errors import EmptyViewport, ShapeMismatch


@dataclass(frozen=True)
class Viewport:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise EmptyViewport(f"viewport must be at least 1x1, got {self.width}x{self.height}")


@dataclass
class RasterGrid:
    """Per-pixel rasterizer output.

    ids:  (H, W) int32, 1-based triangle IDs, 0 marks blank pixels
    bary: (H, W, 2) barycentrics (u, v); blank pixels hold zeros
    zw:   (H, W) NDC depth in [-1, 1]; blank pixels hold +1 (far)
    juv:  (H, W, 2, 2) rows d(u)/d(x,y), d(v)/d(x,y); blank pixels hold zeros
    """

    ids: np.ndarray
    bary: np.ndarray
    zw: np.ndarray
    juv: np.ndarray
    width: int
    height: int

    @property
    def mask(self):
        return self.ids > 0


def _pos(verts) -> np.ndarray:
    return verts.positions if isinstance(verts, ClipVertexBuffer) else np.asarray(verts)


def _tri(idx) -> np.ndarray:
    return idx.triangles if isinstance(idx, IndexBuffer) else np.asarray(idx, np.int32)


def rasterize_forward(verts, idx, vp: Viewport) -> RasterGrid:
    pos = _pos(verts)
    tri = _tri(idx)
    validate_geometry(pos, tri)
    ids, bary, zw, juv = kernels.raster_forward(pos, tri, vp.width, vp.height)
    return RasterGrid(ids, bary, zw, juv, vp.width, vp.height)


def rasterize_backward(verts, idx, grid: RasterGrid, dl_duv, dl_djuv=None) -> GradBuffer:
    pos = _pos(verts)
    tri = _tri(idx)
    H, W = grid.ids.shape
    dl_duv = np.ascontiguousarray(dl_duv, dtype=pos.dtype)
    if dl_duv.shape != (H, W, 2):
        raise ShapeMismatch(f"dl_duv must be ({H}, {W}, 2), got {dl_duv.shape}")
    if dl_djuv is None:
        dl_djuv = np.zeros((H, W, 2, 2), pos.dtype)
    else:
        dl_djuv = np.ascontiguousarray(dl_djuv, dtype=pos.dtype)
        if dl_djuv.shape != (H, W, 2, 2):
            raise ShapeMismatch(f"dl_djuv must be ({H}, {W}, 2, 2), got {dl_djuv.shape}")
    out = GradBuffer(pos.shape, pos.dtype)
    out.data += kernels.raster_backward(pos, tri, grid.ids, dl_duv, dl_djuv, W, H)
    return out
