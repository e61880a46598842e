"""Attribute interpolation over the rasterized grid.

Per covered pixel, A = u*A0 + v*A1 + (1-u-v)*A2.  Screen-space derivative
planes are computed only for channels tagged in ``want_derivs`` by composing
the barycentric Jacobian with (A0 - A2, A1 - A2).  A different index buffer
than the one used for rasterization may be supplied; it must have the same
triangle count and order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import kernels
from .buffers import AttributeSet, GradBuffer, IndexBuffer
from .errors import IndexOutOfRange, ShapeMismatch


@dataclass
class AttrImage:
    """Interpolated per-pixel attributes.

    values: (H, W, K); blank pixels hold zeros.
    derivs: (H, W, 2K) with (d/dx, d/dy) interleaved per channel, or None.
            Untagged channels hold zeros.
    """

    values: np.ndarray
    derivs: Optional[np.ndarray]


def _vals(attrs) -> np.ndarray:
    return attrs.values if isinstance(attrs, AttributeSet) else np.asarray(attrs)


def _tri(idx) -> np.ndarray:
    return idx.triangles if isinstance(idx, IndexBuffer) else np.asarray(idx, np.int32)


def _deriv_mask(want_derivs, k):
    mask = np.zeros(k, np.bool_)
    if want_derivs is None:
        return mask
    if want_derivs == "all" or want_derivs is True:
        mask[:] = True
        return mask
    for c in want_derivs:
        if not 0 <= c < k:
            raise ShapeMismatch(f"derivative channel {c} out of range for K={k}")
        mask[c] = True
    return mask


def interpolate_forward(attrs, idx, grid, want_derivs=None) -> AttrImage:
    vals = _vals(attrs)
    tri = _tri(idx)
    if grid.ids.max(initial=0) > tri.shape[0]:
        raise ShapeMismatch("grid references more triangles than the index buffer holds")
    if tri.size and tri.max() >= vals.shape[0]:
        t = int(np.nonzero((tri >= vals.shape[0]).any(axis=1))[0][0])
        s = int(np.nonzero(tri[t] >= vals.shape[0])[0][0])
        raise IndexOutOfRange(t, s, int(tri[t, s]), vals.shape[0])
    mask = _deriv_mask(want_derivs, vals.shape[1])
    img, der = kernels.interp_forward(vals, tri, grid.ids, grid.bary, grid.juv, mask)
    return AttrImage(img, der if der.size else None)


def interpolate_backward(attrs, idx, grid, dl_da, dl_dja=None, want_derivs=None):
    """Returns (GradBuffer over attrs, dl_duv (H,W,2), dl_djuv (H,W,2,2))."""
    vals = _vals(attrs)
    tri = _tri(idx)
    H, W = grid.ids.shape
    K = vals.shape[1]
    dl_da = np.ascontiguousarray(dl_da, dtype=vals.dtype)
    if dl_da.shape != (H, W, K):
        raise ShapeMismatch(f"dl_da must be ({H}, {W}, {K}), got {dl_da.shape}")
    mask = _deriv_mask(want_derivs, K)
    if dl_dja is None:
        dl_dja = np.zeros((0, 0, 0), vals.dtype)
        mask = np.zeros(K, np.bool_)
    else:
        dl_dja = np.ascontiguousarray(dl_dja, dtype=vals.dtype)
        if dl_dja.shape != (H, W, 2 * K):
            raise ShapeMismatch(f"dl_dja must be ({H}, {W}, {2 * K}), got {dl_dja.shape}")
        if want_derivs is None:
            mask = np.ones(K, np.bool_)
    dattrs, dl_duv, dl_djuv = kernels.interp_backward(
        vals, tri, grid.ids, grid.bary, grid.juv, dl_da, dl_dja, mask)
    out = GradBuffer(vals.shape, vals.dtype)
    out.data += dattrs
    return out, dl_duv, dl_djuv
