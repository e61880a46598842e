"""Pure-numpy kernel build (fallback backend).

Vectorizes over pixels inside per-triangle loops.  Semantics are identical to
the numba build; see that module for the shared math notes.

Rasterization math
------------------
A triangle with clip coords v_i = (x, y, z, w) is lifted to screen-scaled
homogeneous vertices h_i = ((W/2)(x + w), (H/2)(w - y), w), so that h/h.z is
the screen-space position in pixels (top-left origin, y down).  For a pixel
center P = (px, py, 1) the per-vertex edge values are

    E_i = cross(h_j, h_k) . P      (i, j, k cyclic)
    d   = cross(h_1, h_2) . h_0    (3x3 determinant)

Sign-adjusting by s = sign(d) gives ae_i = s * E_i >= 0 inside.  With
se = sum(ae), the perspective-correct barycentrics of the pixel w.r.t. the
ORIGINAL triangle are u = ae_0/se, v = ae_1/se, the NDC depth is
zw = (ae . z)/|d|, and the point's clip w is |d|/se.  The screen-space
barycentric Jacobian rows are (g_i - u_i * sum_j g_j)/se where g_i is the
(x, y) gradient of ae_i.  Coverage additionally requires se > 0 (in front),
|d| >= EPS_W * se (near plane), |zw| <= 1 (depth clip) and the top-left rule
on ae_i == 0 edges.
"""

import numpy as np

EPS_W = 1e-6        # near-plane clip at w = EPS_W
AREA_EPS = 1e-12    # degenerate-triangle cutoff on clipped NDC area
CULL_MARGIN = 1e-3  # slack for the conservative hidden-geometry depth cull

_CLIP_PLANES = np.array(
    [
        # dot((a,b,c,d), v) + e >= 0 keeps the vertex
        [0.0, 0.0, 0.0, 1.0, -EPS_W],   # w >= EPS_W
        [-1.0, 0.0, 0.0, 1.0, 0.0],     # x <= w
        [1.0, 0.0, 0.0, 1.0, 0.0],      # x >= -w
        [0.0, -1.0, 0.0, 1.0, 0.0],     # y <= w
        [0.0, 1.0, 0.0, 1.0, 0.0],      # y >= -w
        [0.0, 0.0, -1.0, 1.0, 0.0],     # z <= w
        [0.0, 0.0, 1.0, 1.0, 0.0],      # z >= -w
    ]
)


def clip_triangle(v0, v1, v2):
    """Sutherland-Hodgman clip in homogeneous clip space.

    Returns the clipped polygon as a list of 4-vectors (possibly empty).
    """
    poly = [np.asarray(v0, np.float64), np.asarray(v1, np.float64), np.asarray(v2, np.float64)]
    for a, b, c, d, e in _CLIP_PLANES:
        if not poly:
            return poly
        out = []
        n = len(poly)
        for i in range(n):
            p = poly[i - 1]
            q = poly[i]
            dp = a * p[0] + b * p[1] + c * p[2] + d * p[3] + e
            dq = a * q[0] + b * q[1] + c * q[2] + d * q[3] + e
            if dq >= 0.0:
                if dp < 0.0:
                    t = dp / (dp - dq)
                    out.append(p + t * (q - p))
                out.append(q)
            elif dp >= 0.0:
                t = dp / (dp - dq)
                out.append(p + t * (q - p))
        poly = out
    return poly


def _tri_homog(verts, i0, i1, i2, width, height):
    """Screen-scaled homogeneous vertices, edge cross products and det."""
    wh, hh = 0.5 * width, 0.5 * height
    v = verts
    h0 = np.array([wh * (v[i0, 0] + v[i0, 3]), hh * (v[i0, 3] - v[i0, 1]), v[i0, 3]])
    h1 = np.array([wh * (v[i1, 0] + v[i1, 3]), hh * (v[i1, 3] - v[i1, 1]), v[i1, 3]])
    h2 = np.array([wh * (v[i2, 0] + v[i2, 3]), hh * (v[i2, 3] - v[i2, 1]), v[i2, 3]])
    cr0 = np.cross(h1, h2)
    cr1 = np.cross(h2, h0)
    cr2 = np.cross(h0, h1)
    d = cr0[0] * h0[0] + cr0[1] * h0[1] + cr0[2] * h0[2]
    return h0, h1, h2, cr0, cr1, cr2, d


def _topleft(g):
    # A zero edge value counts as covered when the edge function grows to the
    # right, or straight down for vertical gradients (watertight fill rule).
    return g[0] > 0.0 or (g[0] == 0.0 and g[1] > 0.0)


def raster_forward(verts, tris, width, height):
    dtype = verts.dtype
    H, W = height, width
    ids = np.zeros((H, W), np.int32)
    bary = np.zeros((H, W, 2), dtype)
    zw = np.ones((H, W), dtype)
    juv = np.zeros((H, W, 2, 2), dtype)

    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t]
        poly = clip_triangle(verts[i0], verts[i1], verts[i2])
        if len(poly) < 3:
            continue
        p = np.asarray(poly)
        xn = p[:, 0] / p[:, 3]
        yn = p[:, 1] / p[:, 3]
        zn = p[:, 2] / p[:, 3]
        area2 = np.dot(xn, np.roll(yn, -1)) - np.dot(yn, np.roll(xn, -1))
        if abs(0.5 * area2) < AREA_EPS:
            continue
        sx = W * (xn + 1.0) * 0.5
        sy = H * (1.0 - yn) * 0.5
        x_lo = max(0, int(np.floor(sx.min() - 0.5)) - 1)
        x_hi = min(W - 1, int(np.ceil(sx.max() - 0.5)) + 1)
        y_lo = max(0, int(np.floor(sy.min() - 0.5)) - 1)
        y_hi = min(H - 1, int(np.ceil(sy.max() - 0.5)) + 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue

        sub_zw = zw[y_lo:y_hi + 1, x_lo:x_hi + 1]
        # Conservative early-out: the clipped footprint lies strictly behind
        # everything already stored in its bounding box.
        if zn.min() > sub_zw.max() + CULL_MARGIN:
            continue

        _, _, _, cr0, cr1, cr2, d = _tri_homog(verts.astype(np.float64, copy=False), i0, i1, i2, W, H)
        if d == 0.0:
            continue
        s = 1.0 if d > 0.0 else -1.0
        absd = abs(d)
        gc0, gc1, gc2 = s * cr0, s * cr1, s * cr2

        px = np.arange(x_lo, x_hi + 1, dtype=np.float64) + 0.5
        py = np.arange(y_lo, y_hi + 1, dtype=np.float64) + 0.5
        PX, PY = np.meshgrid(px, py)
        ae0 = gc0[0] * PX + gc0[1] * PY + gc0[2]
        ae1 = gc1[0] * PX + gc1[1] * PY + gc1[2]
        ae2 = gc2[0] * PX + gc2[1] * PY + gc2[2]
        inside = (
            ((ae0 > 0.0) | ((ae0 == 0.0) & _topleft(gc0)))
            & ((ae1 > 0.0) | ((ae1 == 0.0) & _topleft(gc1)))
            & ((ae2 > 0.0) | ((ae2 == 0.0) & _topleft(gc2)))
        )
        se = ae0 + ae1 + ae2
        z0, z1, z2 = verts[i0, 2], verts[i1, 2], verts[i2, 2]
        cand_zw = (ae0 * z0 + ae1 * z1 + ae2 * z2) / absd
        covered = (
            inside
            & (se > 0.0)
            & (absd >= EPS_W * se)
            & (cand_zw >= -1.0)
            & (cand_zw <= 1.0)
        )
        sub_id = ids[y_lo:y_hi + 1, x_lo:x_hi + 1]
        better = covered & ((sub_id == 0) | (cand_zw < sub_zw))
        if not better.any():
            continue

        se_safe = np.where(se != 0.0, se, 1.0)
        u = ae0 / se_safe
        v = ae1 / se_safe
        gsx = gc0[0] + gc1[0] + gc2[0]
        gsy = gc0[1] + gc1[1] + gc2[1]
        j00 = (gc0[0] - u * gsx) / se_safe
        j01 = (gc0[1] - u * gsy) / se_safe
        j10 = (gc1[0] - v * gsx) / se_safe
        j11 = (gc1[1] - v * gsy) / se_safe

        sub_id[better] = t + 1
        sub_zw[better] = cand_zw[better]
        sub_b = bary[y_lo:y_hi + 1, x_lo:x_hi + 1]
        sub_b[better, 0] = u[better]
        sub_b[better, 1] = v[better]
        sub_j = juv[y_lo:y_hi + 1, x_lo:x_hi + 1]
        sub_j[better, 0, 0] = j00[better]
        sub_j[better, 0, 1] = j01[better]
        sub_j[better, 1, 0] = j10[better]
        sub_j[better, 1, 1] = j11[better]

    return ids, bary, zw, juv


def raster_backward(verts, tris, ids, dl_duv, dl_djuv, width, height):
    H, W = height, width
    dverts = np.zeros_like(verts)
    v64 = verts.astype(np.float64, copy=False)
    present = np.unique(ids)
    present = present[present > 0]
    for tid in present:
        t = int(tid) - 1
        i0, i1, i2 = tris[t]
        _, _, _, cr0, cr1, cr2, d = _tri_homog(v64, i0, i1, i2, W, H)
        if d == 0.0:
            continue
        minv = np.stack([cr0, cr1, cr2]) / d  # rows: Minv[i, :]
        yy, xx = np.nonzero(ids == tid)
        P = np.stack([xx + 0.5, yy + 0.5, np.ones_like(xx, np.float64)])  # (3, n)
        a = minv @ P                       # (3, n)
        S = a.sum(axis=0)
        u = a[0] / S
        vb = a[1] / S
        C = minv.sum(axis=0)               # (3,)

        gu = dl_duv[yy, xx, 0].astype(np.float64)
        gv = dl_duv[yy, xx, 1].astype(np.float64)
        gJ = dl_djuv[yy, xx].astype(np.float64)  # (n, 2, 2)

        S2 = S * S
        abar = np.zeros((3, len(S)))
        abar[0] += gu / S
        abar[1] += gv / S
        sbar = -gu * a[0] / S2 - gv * a[1] / S2
        cbar = np.zeros((2, len(S)))
        gbar = np.zeros((3, 3, len(S)))
        uv = np.stack([u, vb])             # (2, n)
        for i in range(2):
            for k in range(2):
                jb = gJ[:, i, k]
                gbar[i, k] += jb / S
                sbar += jb * (-minv[i, k] / S2 + 2.0 * a[i] * C[k] / (S2 * S))
                abar[i] += -jb * C[k] / S2
                cbar[k] += -jb * a[i] / S2
        for k in range(2):
            gbar[:, k, :] += cbar[k]
        abar += sbar
        gbar += abar[:, None, :] * P[None, :, :]

        gtot = gbar.sum(axis=2)            # (3, 3)
        mbar = -(minv.T @ gtot @ minv.T)
        wh, hh = 0.5 * W, 0.5 * H
        for slot, vi in enumerate((i0, i1, i2)):
            dverts[vi, 0] += mbar[0, slot] * wh
            dverts[vi, 1] += -mbar[1, slot] * hh
            dverts[vi, 3] += mbar[0, slot] * wh + mbar[1, slot] * hh + mbar[2, slot]
        del uv
    return dverts


# ---------------------------------------------------------------------------
# attribute interpolation


def interp_forward(attrs, tris, ids, bary, juv, deriv_mask):
    H, W = ids.shape
    K = attrs.shape[1]
    img = np.zeros((H, W, K), attrs.dtype)
    want = deriv_mask.any()
    der = np.zeros((H, W, 2 * K), attrs.dtype) if want else np.zeros((0, 0, 0), attrs.dtype)
    yy, xx = np.nonzero(ids > 0)
    if yy.size == 0:
        return img, der
    ti = ids[yy, xx] - 1
    iv = tris[ti]                      # (n, 3)
    a0, a1, a2 = attrs[iv[:, 0]], attrs[iv[:, 1]], attrs[iv[:, 2]]
    u = bary[yy, xx, 0][:, None]
    v = bary[yy, xx, 1][:, None]
    img[yy, xx] = u * a0 + v * a1 + (1.0 - u - v) * a2
    if want:
        dau = a0 - a2
        dav = a1 - a2
        J = juv[yy, xx]                # (n, 2, 2)
        for k in np.nonzero(deriv_mask)[0]:
            der[yy, xx, 2 * k] = J[:, 0, 0] * dau[:, k] + J[:, 1, 0] * dav[:, k]
            der[yy, xx, 2 * k + 1] = J[:, 0, 1] * dau[:, k] + J[:, 1, 1] * dav[:, k]
    return img, der


def interp_backward(attrs, tris, ids, bary, juv, dl_da, dl_dja, deriv_mask):
    H, W = ids.shape
    K = attrs.shape[1]
    dattrs = np.zeros_like(attrs)
    dl_duv = np.zeros((H, W, 2), attrs.dtype)
    dl_djuv = np.zeros((H, W, 2, 2), attrs.dtype)
    yy, xx = np.nonzero(ids > 0)
    if yy.size == 0:
        return dattrs, dl_duv, dl_djuv
    ti = ids[yy, xx] - 1
    iv = tris[ti]
    a0, a1, a2 = attrs[iv[:, 0]], attrs[iv[:, 1]], attrs[iv[:, 2]]
    u = bary[yy, xx, 0][:, None]
    v = bary[yy, xx, 1][:, None]
    ga = dl_da[yy, xx]                 # (n, K)
    np.add.at(dattrs, iv[:, 0], u * ga)
    np.add.at(dattrs, iv[:, 1], v * ga)
    np.add.at(dattrs, iv[:, 2], (1.0 - u - v) * ga)
    dau = a0 - a2
    dav = a1 - a2
    dl_duv[yy, xx, 0] = (dau * ga).sum(axis=1)
    dl_duv[yy, xx, 1] = (dav * ga).sum(axis=1)
    if dl_dja.size and deriv_mask.any():
        J = juv[yy, xx]
        sel = np.nonzero(deriv_mask)[0]
        gx = dl_dja[yy, xx][:, 2 * sel]        # (n, |sel|)
        gy = dl_dja[yy, xx][:, 2 * sel + 1]
        dausel = dau[:, sel]
        davsel = dav[:, sel]
        dl_djuv[yy, xx, 0, 0] = (gx * dausel).sum(axis=1)
        dl_djuv[yy, xx, 0, 1] = (gy * dausel).sum(axis=1)
        dl_djuv[yy, xx, 1, 0] = (gx * davsel).sum(axis=1)
        dl_djuv[yy, xx, 1, 1] = (gy * davsel).sum(axis=1)
        contrib0 = np.zeros_like(a0)
        contrib1 = np.zeros_like(a1)
        contrib0[:, sel] = gx * J[:, 0, 0][:, None] + gy * J[:, 0, 1][:, None]
        contrib1[:, sel] = gx * J[:, 1, 0][:, None] + gy * J[:, 1, 1][:, None]
        np.add.at(dattrs, iv[:, 0], contrib0)
        np.add.at(dattrs, iv[:, 1], contrib1)
        np.add.at(dattrs, iv[:, 2], -(contrib0 + contrib1))
    return dattrs, dl_duv, dl_djuv


# ---------------------------------------------------------------------------
# mip-mapped texture sampling
#
# Level data is passed as one flat array plus (face, level) offsets; texel
# (f, l, y, x, k) lives at flat[off[f, l] + (y * Wl + x) * C + k].


def _addr(i, n, wrap):
    if wrap:
        return np.mod(i, n)
    return np.clip(i, 0, n - 1)


def texture_forward(flat, offsets, widths, channels, faces, st, jst, mask, wrap):
    """Trilinear mip-mapped lookup.

    Returns (g, lod, lvl0, frac, tix, tfr): the sampled image plus the replay
    record (level indices, integer texel bases and bilinear fractions for the
    two touched levels).
    """
    H, W = mask.shape
    L = offsets.shape[1]
    C = channels
    dtype = flat.dtype
    yy, xx = np.nonzero(mask)
    g = np.zeros((H, W, C), dtype)
    lod = np.zeros((H, W), dtype)
    lvl0 = np.zeros((H, W), np.int32)
    frac = np.zeros((H, W), dtype)
    tix = np.zeros((H, W, 2, 2), np.int32)
    tfr = np.zeros((H, W, 2, 2), dtype)
    if yy.size == 0:
        return g, lod, lvl0, frac, tix, tfr

    w0 = float(widths[0])
    j = jst[yy, xx].astype(np.float64)          # (n, 2, 2)
    nx = w0 * np.sqrt(j[:, 0, 0] ** 2 + j[:, 1, 0] ** 2)
    ny = w0 * np.sqrt(j[:, 0, 1] ** 2 + j[:, 1, 1] ** 2)
    m = np.maximum(nx, ny)
    with np.errstate(divide="ignore"):
        raw = np.where(m > 0.0, np.log2(np.maximum(m, 1e-300)), 0.0)
    lodv = np.clip(raw, 0.0, L - 1.0)
    l0 = np.floor(lodv).astype(np.int32)
    l0 = np.minimum(l0, L - 1)
    fv = lodv - l0
    l1 = np.minimum(l0 + 1, L - 1)

    fi = faces[yy, xx] if faces.size else np.zeros(yy.size, np.int32)
    sv = st[yy, xx].astype(np.float64)
    out = np.zeros((yy.size, C), np.float64)
    for which, (lv, bw) in enumerate((( l0, 1.0 - fv), (l1, fv))):
        wl = widths[lv]
        X = sv[:, 0] * wl - 0.5
        Y = sv[:, 1] * wl - 0.5
        ix = np.floor(X).astype(np.int64)
        iy = np.floor(Y).astype(np.int64)
        fx = X - ix
        fy = Y - iy
        x0 = _addr(ix, wl, wrap)
        x1 = _addr(ix + 1, wl, wrap)
        y0 = _addr(iy, wl, wrap)
        y1 = _addr(iy + 1, wl, wrap)
        base = offsets[fi, lv]
        def fetch(yq, xq):
            return flat[(base + (yq * wl + xq) * C)[:, None] + np.arange(C)]
        c00 = fetch(y0, x0)
        c10 = fetch(y0, x1)
        c01 = fetch(y1, x0)
        c11 = fetch(y1, x1)
        bl = (
            ((1 - fx) * (1 - fy))[:, None] * c00
            + (fx * (1 - fy))[:, None] * c10
            + ((1 - fx) * fy)[:, None] * c01
            + (fx * fy)[:, None] * c11
        )
        out += bw[:, None] * bl
        tix[yy, xx, which, 0] = ix
        tix[yy, xx, which, 1] = iy
        tfr[yy, xx, which, 0] = fx
        tfr[yy, xx, which, 1] = fy

    g[yy, xx] = out
    lod[yy, xx] = lodv
    lvl0[yy, xx] = l0
    frac[yy, xx] = fv
    return g, lod, lvl0, frac, tix, tfr


def texture_backward(flat, offsets, widths, channels, faces, st, jst, mask,
                     lod, lvl0, frac, tix, tfr, dl_dg, wrap):
    H, W = mask.shape
    L = offsets.shape[1]
    C = channels
    dflat = np.zeros_like(flat)
    dl_dst = np.zeros((H, W, 2), flat.dtype)
    dl_djst = np.zeros((H, W, 2, 2), flat.dtype)
    yy, xx = np.nonzero(mask)
    if yy.size == 0:
        return dflat, dl_dst, dl_djst

    fi = faces[yy, xx] if faces.size else np.zeros(yy.size, np.int32)
    l0 = lvl0[yy, xx]
    l1 = np.minimum(l0 + 1, L - 1)
    fv = frac[yy, xx].astype(np.float64)
    gg = dl_dg[yy, xx].astype(np.float64)   # (n, C)

    ds = np.zeros(yy.size)
    dt = np.zeros(yy.size)
    dfrac = np.zeros(yy.size)
    blerp = []
    for which, (lv, bw) in enumerate(((l0, 1.0 - fv), (l1, fv))):
        wl = widths[lv]
        ix = tix[yy, xx, which, 0].astype(np.int64)
        iy = tix[yy, xx, which, 1].astype(np.int64)
        fx = tfr[yy, xx, which, 0].astype(np.float64)
        fy = tfr[yy, xx, which, 1].astype(np.float64)
        x0 = _addr(ix, wl, wrap)
        x1 = _addr(ix + 1, wl, wrap)
        y0 = _addr(iy, wl, wrap)
        y1 = _addr(iy + 1, wl, wrap)
        base = offsets[fi, lv]
        def off(yq, xq):
            return (base + (yq * wl + xq) * C)[:, None] + np.arange(C)
        o00, o10, o01, o11 = off(y0, x0), off(y0, x1), off(y1, x0), off(y1, x1)
        c00, c10, c01, c11 = flat[o00], flat[o10], flat[o01], flat[o11]
        w00 = ((1 - fx) * (1 - fy))[:, None]
        w10 = (fx * (1 - fy))[:, None]
        w01 = ((1 - fx) * fy)[:, None]
        w11 = (fx * fy)[:, None]
        scale = bw[:, None] * gg
        np.add.at(dflat, o00, w00 * scale)
        np.add.at(dflat, o10, w10 * scale)
        np.add.at(dflat, o01, w01 * scale)
        np.add.at(dflat, o11, w11 * scale)
        dgdX = (1 - fy)[:, None] * (c10 - c00) + fy[:, None] * (c11 - c01)
        dgdY = (1 - fx)[:, None] * (c01 - c00) + fx[:, None] * (c11 - c10)
        ds += (bw * wl) * (gg * dgdX).sum(axis=1)
        dt += (bw * wl) * (gg * dgdY).sum(axis=1)
        bl = w00 * c00 + w10 * c10 + w01 * c01 + w11 * c11
        blerp.append(bl)
    dfrac = (gg * (blerp[1] - blerp[0])).sum(axis=1)

    dl_dst[yy, xx, 0] = ds
    dl_dst[yy, xx, 1] = dt

    # lod chain: only where the blend fraction is strictly inside (0, 1)
    w0 = float(widths[0])
    j = jst[yy, xx].astype(np.float64)
    nx = w0 * np.sqrt(j[:, 0, 0] ** 2 + j[:, 1, 0] ** 2)
    ny = w0 * np.sqrt(j[:, 0, 1] ** 2 + j[:, 1, 1] ** 2)
    m = np.maximum(nx, ny)
    live = (fv > 0.0) & (m > 0.0)
    dlod = np.where(live, dfrac, 0.0)
    dm = dlod / (np.where(m > 0, m, 1.0) * np.log(2.0))
    take_x = nx >= ny
    gj = np.zeros((yy.size, 2, 2))
    nx_safe = np.where(nx > 0, nx, 1.0)
    ny_safe = np.where(ny > 0, ny, 1.0)
    cx = np.where(live & take_x, dm * w0 * w0 / nx_safe, 0.0)
    cy = np.where(live & ~take_x, dm * w0 * w0 / ny_safe, 0.0)
    gj[:, 0, 0] = cx * j[:, 0, 0]
    gj[:, 1, 0] = cx * j[:, 1, 0]
    gj[:, 0, 1] = cy * j[:, 0, 1]
    gj[:, 1, 1] = cy * j[:, 1, 1]
    dl_djst[yy, xx] = gj
    return dflat, dl_dst, dl_djst


# ---------------------------------------------------------------------------
# analytic edge antialiasing


def _edge_lookup(keys, offsets, incident, a, b):
    lo, hi = (a, b) if a < b else (b, a)
    key = (int(lo) << 32) | int(hi)
    i = np.searchsorted(keys, key)
    if i >= keys.shape[0] or keys[i] != key:
        return 0, 0
    return int(offsets[i]), int(offsets[i + 1])


def _is_silhouette(verts, tris, keys, offsets, incident, a, b):
    lo, hi = _edge_lookup(keys, offsets, incident, a, b)
    n = hi - lo
    if n != 2:
        return True  # boundary or non-manifold: permanent silhouette candidate
    signs = []
    for w in range(lo, hi):
        t2 = incident[w]
        i0, i1, i2 = tris[t2]
        opp = i0
        if opp == a or opp == b:
            opp = i1
        if opp == a or opp == b:
            opp = i2
        # 2D homogeneous side test in w-scaled clip coordinates
        pa = (verts[a, 0], verts[a, 1], verts[a, 3])
        pb = (verts[b, 0], verts[b, 1], verts[b, 3])
        po = (verts[opp, 0], verts[opp, 1], verts[opp, 3])
        cx = pa[1] * pb[2] - pa[2] * pb[1]
        cy = pa[2] * pb[0] - pa[0] * pb[2]
        cz = pa[0] * pb[1] - pa[1] * pb[0]
        signs.append(cx * po[0] + cy * po[1] + cz * po[2])
    return signs[0] * signs[1] >= 0.0


def _screen_xy(verts, i, width, height):
    w = verts[i, 3]
    return (
        width * (verts[i, 0] / w + 1.0) * 0.5,
        height * (1.0 - verts[i, 1] / w) * 0.5,
    )


def aa_forward(color, ids, zw, verts, tris, keys, offsets, incident, width, height):
    """Detect silhouette crossings on mismatching pixel pairs and blend.

    Returns (aa_color, events) where events is an int/float record array:
    (x, y, axis, losing, tri, p, q, t, alpha) per event.
    """
    H, W = ids.shape
    out = color.copy()
    ev = []
    v64 = verts.astype(np.float64, copy=False)

    def process_pair(xa, ya, xb, yb, axis):
        ida = ids[ya, xa]
        idb = ids[yb, xb]
        if ida == idb:
            return
        if ida == 0:
            wt = idb
        elif idb == 0:
            wt = ida
        else:
            za, zb_ = zw[ya, xa], zw[yb, xb]
            wt = ida if za <= zb_ else idb
        t = int(wt) - 1
        i0, i1, i2 = tris[t]
        best = None
        for (p, q) in ((i0, i1), (i1, i2), (i2, i0)):
            dyh = abs(v64[p, 3] * v64[q, 1] - v64[q, 3] * v64[p, 1])
            dxh = abs(v64[p, 3] * v64[q, 0] - v64[q, 3] * v64[p, 0])
            if axis == 0:
                if not (dyh > dxh):
                    continue
            else:
                if not (dxh > dyh):
                    continue
            if v64[p, 3] <= EPS_W or v64[q, 3] <= EPS_W:
                continue
            if not _is_silhouette(v64, tris, keys, offsets, incident, p, q):
                continue
            spx, spy = _screen_xy(v64, p, width, height)
            sqx, sqy = _screen_xy(v64, q, width, height)
            if axis == 0:
                cy = ya + 0.5
                den = sqy - spy
                if den == 0.0:
                    continue
                tt = (cy - spy) / den
                if tt < 0.0 or tt > 1.0:
                    continue
                xi = spx + tt * (sqx - spx)
                if xi < xa + 0.5 or xi > xb + 0.5:
                    continue
                delta = xi - (xa + 1.0)
            else:
                cx = xa + 0.5
                den = sqx - spx
                if den == 0.0:
                    continue
                tt = (cx - spx) / den
                if tt < 0.0 or tt > 1.0:
                    continue
                yi = spy + tt * (sqy - spy)
                if yi < ya + 0.5 or yi > yb + 0.5:
                    continue
                delta = yi - (ya + 1.0)
            alpha = abs(delta)
            if best is None or alpha > best[0]:
                best = (alpha, delta, p, q, tt)
        if best is None:
            return
        alpha, delta, p, q, tt = best
        losing = 1 if delta > 0.0 else 0
        lx, ly = (xb, yb) if losing else (xa, ya)
        ox, oy = (xa, ya) if losing else (xb, yb)
        out[ly, lx] += alpha * (color[oy, ox] - color[ly, lx])
        ev.append((xa, ya, axis, losing, t, p, q, tt, alpha))

    hy, hx = np.nonzero(ids[:, :-1] != ids[:, 1:])
    for y, x in zip(hy, hx):
        process_pair(x, y, x + 1, y, 0)
    vy, vx = np.nonzero(ids[:-1, :] != ids[1:, :])
    for y, x in zip(vy, vx):
        process_pair(x, y, x, y + 1, 1)

    if ev:
        ev_i = np.array([e[:7] for e in ev], np.int32)
        ev_f = np.array([e[7:] for e in ev], np.float64)
    else:
        ev_i = np.zeros((0, 7), np.int32)
        ev_f = np.zeros((0, 2), np.float64)
    return out, ev_i, ev_f


def aa_backward(color, ev_i, ev_f, verts, dl_daa, width, height):
    dl_dcolor = dl_daa.copy()
    dverts = np.zeros_like(verts)
    v64 = verts.astype(np.float64, copy=False)
    wh, hh = 0.5 * width, 0.5 * height
    for e in range(ev_i.shape[0]):
        xa, ya, axis, losing, t, p, q = ev_i[e]
        tt, alpha = ev_f[e]
        xb, yb = (xa + 1, ya) if axis == 0 else (xa, ya + 1)
        lx, ly = (xb, yb) if losing else (xa, ya)
        ox, oy = (xa, ya) if losing else (xb, yb)
        g = dl_daa[ly, lx].astype(np.float64)
        diff = color[oy, ox].astype(np.float64) - color[ly, lx].astype(np.float64)
        dl_dcolor[oy, ox] += alpha * g
        dl_dcolor[ly, lx] -= alpha * g
        dl_dalpha = float(diff @ g)

        spx, spy = _screen_xy(v64, p, width, height)
        sqx, sqy = _screen_xy(v64, q, width, height)
        if axis == 0:
            cy = ya + 0.5
            den = sqy - spy
            xi = spx + tt * (sqx - spx)
            delta = xi - (xa + 1.0)
            sgn = 0.0 if delta == 0.0 else (1.0 if delta > 0.0 else -1.0)
            dxi = dl_dalpha * sgn
            d_spx = dxi * (1.0 - tt)
            d_sqx = dxi * tt
            dtt = dxi * (sqx - spx)
            d_spy = dtt * (cy - sqy) / (den * den)
            d_sqy = dtt * -(cy - spy) / (den * den)
        else:
            cx = xa + 0.5
            den = sqx - spx
            yi = spy + tt * (sqy - spy)
            delta = yi - (ya + 1.0)
            sgn = 0.0 if delta == 0.0 else (1.0 if delta > 0.0 else -1.0)
            dyi = dl_dalpha * sgn
            d_spy = dyi * (1.0 - tt)
            d_sqy = dyi * tt
            dtt = dyi * (sqy - spy)
            d_spx = dtt * (cx - sqx) / (den * den)
            d_sqx = dtt * -(cx - spx) / (den * den)
        for (vi, dsx, dsy) in ((p, d_spx, d_spy), (q, d_sqx, d_sqy)):
            w = v64[vi, 3]
            x = v64[vi, 0]
            yv = v64[vi, 1]
            dverts[vi, 0] += dsx * wh / w
            dverts[vi, 1] += -dsy * hh / w
            dverts[vi, 3] += dsx * (-wh * x / (w * w)) + dsy * (hh * yv / (w * w))
    return dl_dcolor, dverts
