"""Numba @njit kernel build (default backend).

Same contracts and the same canonical arithmetic as ``_kernels_numpy``; see
that module's docstring for the rasterization math.  Expressions shared with
the test oracle (edge cross products, determinant, depth and barycentric
forms) are written componentwise on purpose: reassociating them (np.dot,
fastmath, FMA) changes results at the ulp level and breaks the exact
equivalence contract in float64 mode.  Do not enable fastmath here.

The forward rasterizer keeps a per-tile max of the current depth buffer and
skips triangles whose clipped footprint lies strictly behind it, so hidden
geometry costs almost nothing after the front surface is drawn.
"""

import numpy as np
from numba import njit

EPS_W = 1e-6
AREA_EPS = 1e-12
CULL_MARGIN = 1e-3
TILE = 8


@njit(cache=True)
def _clip_poly(v0x, v0y, v0z, v0w, v1x, v1y, v1z, v1w, v2x, v2y, v2z, v2w,
               poly, tmp):
    """Sutherland-Hodgman clip against w >= EPS_W and the 6 frustum planes.

    poly/tmp are (16, 4) scratch; returns the vertex count (0 if culled).
    """
    poly[0, 0], poly[0, 1], poly[0, 2], poly[0, 3] = v0x, v0y, v0z, v0w
    poly[1, 0], poly[1, 1], poly[1, 2], poly[1, 3] = v1x, v1y, v1z, v1w
    poly[2, 0], poly[2, 1], poly[2, 2], poly[2, 3] = v2x, v2y, v2z, v2w
    n = 3
    for plane in range(7):
        if n == 0:
            return 0
        m = 0
        for i in range(n):
            j = i - 1 if i > 0 else n - 1
            px, py, pz, pw = poly[j, 0], poly[j, 1], poly[j, 2], poly[j, 3]
            qx, qy, qz, qw = poly[i, 0], poly[i, 1], poly[i, 2], poly[i, 3]
            if plane == 0:
                dp = pw - EPS_W
                dq = qw - EPS_W
            elif plane == 1:
                dp = pw - px
                dq = qw - qx
            elif plane == 2:
                dp = pw + px
                dq = qw + qx
            elif plane == 3:
                dp = pw - py
                dq = qw - qy
            elif plane == 4:
                dp = pw + py
                dq = qw + qy
            elif plane == 5:
                dp = pw - pz
                dq = qw - qz
            else:
                dp = pw + pz
                dq = qw + qz
            if dq >= 0.0:
                if dp < 0.0:
                    t = dp / (dp - dq)
                    tmp[m, 0] = px + t * (qx - px)
                    tmp[m, 1] = py + t * (qy - py)
                    tmp[m, 2] = pz + t * (qz - pz)
                    tmp[m, 3] = pw + t * (qw - pw)
                    m += 1
                tmp[m, 0], tmp[m, 1], tmp[m, 2], tmp[m, 3] = qx, qy, qz, qw
                m += 1
            elif dp >= 0.0:
                t = dp / (dp - dq)
                tmp[m, 0] = px + t * (qx - px)
                tmp[m, 1] = py + t * (qy - py)
                tmp[m, 2] = pz + t * (qz - pz)
                tmp[m, 3] = pw + t * (qw - pw)
                m += 1
        n = m
        for i in range(n):
            poly[i, 0], poly[i, 1], poly[i, 2], poly[i, 3] = tmp[i, 0], tmp[i, 1], tmp[i, 2], tmp[i, 3]
    return n


@njit(cache=True, inline="always")
def _topleft(gx, gy):
    return gx > 0.0 or (gx == 0.0 and gy > 0.0)


@njit(cache=True)
def raster_forward(verts, tris, width, height):
    H, W = height, width
    ids = np.zeros((H, W), np.int32)
    bary = np.zeros((H, W, 2), verts.dtype)
    zw = np.ones((H, W), verts.dtype)
    juv = np.zeros((H, W, 2, 2), verts.dtype)

    nty = (H + TILE - 1) // TILE
    ntx = (W + TILE - 1) // TILE
    hiz = np.ones((nty, ntx), np.float64)
    poly = np.empty((16, 4), np.float64)
    tmp = np.empty((16, 4), np.float64)
    wh = 0.5 * W
    hh = 0.5 * H

    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        n = _clip_poly(
            float(verts[i0, 0]), float(verts[i0, 1]), float(verts[i0, 2]), float(verts[i0, 3]),
            float(verts[i1, 0]), float(verts[i1, 1]), float(verts[i1, 2]), float(verts[i1, 3]),
            float(verts[i2, 0]), float(verts[i2, 1]), float(verts[i2, 2]), float(verts[i2, 3]),
            poly, tmp)
        if n < 3:
            continue

        # clipped footprint: NDC area, screen bbox, conservative z range
        area2 = 0.0
        min_sx = 1e30
        max_sx = -1e30
        min_sy = 1e30
        max_sy = -1e30
        zmin = 1e30
        for i in range(n):
            k = i + 1 if i + 1 < n else 0
            xi = poly[i, 0] / poly[i, 3]
            yi = poly[i, 1] / poly[i, 3]
            zi = poly[i, 2] / poly[i, 3]
            xk = poly[k, 0] / poly[k, 3]
            yk = poly[k, 1] / poly[k, 3]
            area2 += xi * yk - yi * xk
            sx = W * (xi + 1.0) * 0.5
            sy = H * (1.0 - yi) * 0.5
            if sx < min_sx:
                min_sx = sx
            if sx > max_sx:
                max_sx = sx
            if sy < min_sy:
                min_sy = sy
            if sy > max_sy:
                max_sy = sy
            if zi < zmin:
                zmin = zi
        if abs(0.5 * area2) < AREA_EPS:
            continue
        x_lo = int(np.floor(min_sx - 0.5)) - 1
        x_hi = int(np.ceil(max_sx - 0.5)) + 1
        y_lo = int(np.floor(min_sy - 0.5)) - 1
        y_hi = int(np.ceil(max_sy - 0.5)) + 1
        if x_lo < 0:
            x_lo = 0
        if y_lo < 0:
            y_lo = 0
        if x_hi > W - 1:
            x_hi = W - 1
        if y_hi > H - 1:
            y_hi = H - 1
        if x_lo > x_hi or y_lo > y_hi:
            continue

        # homogeneous setup relative to the ORIGINAL triangle
        h0x = wh * (float(verts[i0, 0]) + float(verts[i0, 3]))
        h0y = hh * (float(verts[i0, 3]) - float(verts[i0, 1]))
        h0z = float(verts[i0, 3])
        h1x = wh * (float(verts[i1, 0]) + float(verts[i1, 3]))
        h1y = hh * (float(verts[i1, 3]) - float(verts[i1, 1]))
        h1z = float(verts[i1, 3])
        h2x = wh * (float(verts[i2, 0]) + float(verts[i2, 3]))
        h2y = hh * (float(verts[i2, 3]) - float(verts[i2, 1]))
        h2z = float(verts[i2, 3])
        cr0x = h1y * h2z - h1z * h2y
        cr0y = h1z * h2x - h1x * h2z
        cr0z = h1x * h2y - h1y * h2x
        cr1x = h2y * h0z - h2z * h0y
        cr1y = h2z * h0x - h2x * h0z
        cr1z = h2x * h0y - h2y * h0x
        cr2x = h0y * h1z - h0z * h1y
        cr2y = h0z * h1x - h0x * h1z
        cr2z = h0x * h1y - h0y * h1x
        d = cr0x * h0x + cr0y * h0y + cr0z * h0z
        if d == 0.0:
            continue
        s = 1.0 if d > 0.0 else -1.0
        absd = abs(d)
        g0x, g0y, g0z = s * cr0x, s * cr0y, s * cr0z
        g1x, g1y, g1z = s * cr1x, s * cr1y, s * cr1z
        g2x, g2y, g2z = s * cr2x, s * cr2y, s * cr2z
        tl0 = _topleft(g0x, g0y)
        tl1 = _topleft(g1x, g1y)
        tl2 = _topleft(g2x, g2y)
        gsx = g0x + g1x + g2x
        gsy = g0y + g1y + g2y
        z0 = float(verts[i0, 2])
        z1 = float(verts[i1, 2])
        z2 = float(verts[i2, 2])

        ty_lo = y_lo // TILE
        ty_hi = y_hi // TILE
        tx_lo = x_lo // TILE
        tx_hi = x_hi // TILE
        for ty in range(ty_lo, ty_hi + 1):
            py0 = ty * TILE
            py1 = min(py0 + TILE - 1, H - 1)
            yy0 = max(py0, y_lo)
            yy1 = min(py1, y_hi)
            for tx in range(tx_lo, tx_hi + 1):
                if zmin > hiz[ty, tx] + CULL_MARGIN:
                    continue
                px0 = tx * TILE
                px1 = min(px0 + TILE - 1, W - 1)
                xx0 = max(px0, x_lo)
                xx1 = min(px1, x_hi)
                wrote = False
                for y in range(yy0, yy1 + 1):
                    py = y + 0.5
                    for x in range(xx0, xx1 + 1):
                        px = x + 0.5
                        ae0 = g0x * px + g0y * py + g0z
                        if ae0 < 0.0 or (ae0 == 0.0 and not tl0):
                            continue
                        ae1 = g1x * px + g1y * py + g1z
                        if ae1 < 0.0 or (ae1 == 0.0 and not tl1):
                            continue
                        ae2 = g2x * px + g2y * py + g2z
                        if ae2 < 0.0 or (ae2 == 0.0 and not tl2):
                            continue
                        se = ae0 + ae1 + ae2
                        if se <= 0.0 or absd < EPS_W * se:
                            continue
                        czw = (ae0 * z0 + ae1 * z1 + ae2 * z2) / absd
                        if czw < -1.0 or czw > 1.0:
                            continue
                        if ids[y, x] != 0 and not (czw < zw[y, x]):
                            continue
                        u = ae0 / se
                        v = ae1 / se
                        ids[y, x] = t + 1
                        zw[y, x] = czw
                        bary[y, x, 0] = u
                        bary[y, x, 1] = v
                        juv[y, x, 0, 0] = (g0x - u * gsx) / se
                        juv[y, x, 0, 1] = (g0y - u * gsy) / se
                        juv[y, x, 1, 0] = (g1x - v * gsx) / se
                        juv[y, x, 1, 1] = (g1y - v * gsy) / se
                        wrote = True
                if wrote:
                    zmax = -1e30
                    for y in range(py0, py1 + 1):
                        for x in range(px0, px1 + 1):
                            if zw[y, x] > zmax:
                                zmax = zw[y, x]
                    hiz[ty, tx] = zmax
    return ids, bary, zw, juv


@njit(cache=True)
def raster_backward(verts, tris, ids, dl_duv, dl_djuv, width, height):
    H, W = height, width
    T = tris.shape[0]
    dverts = np.zeros(verts.shape, verts.dtype)
    wh = 0.5 * W
    hh = 0.5 * H

    # per-triangle inverse matrix rows Minv[i, :] = cr_i / d
    minv = np.zeros((T, 3, 3), np.float64)
    valid = np.zeros(T, np.uint8)
    for t in range(T):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        h0x = wh * (float(verts[i0, 0]) + float(verts[i0, 3]))
        h0y = hh * (float(verts[i0, 3]) - float(verts[i0, 1]))
        h0z = float(verts[i0, 3])
        h1x = wh * (float(verts[i1, 0]) + float(verts[i1, 3]))
        h1y = hh * (float(verts[i1, 3]) - float(verts[i1, 1]))
        h1z = float(verts[i1, 3])
        h2x = wh * (float(verts[i2, 0]) + float(verts[i2, 3]))
        h2y = hh * (float(verts[i2, 3]) - float(verts[i2, 1]))
        h2z = float(verts[i2, 3])
        cr0x = h1y * h2z - h1z * h2y
        cr0y = h1z * h2x - h1x * h2z
        cr0z = h1x * h2y - h1y * h2x
        cr1x = h2y * h0z - h2z * h0y
        cr1y = h2z * h0x - h2x * h0z
        cr1z = h2x * h0y - h2y * h0x
        cr2x = h0y * h1z - h0z * h1y
        cr2y = h0z * h1x - h0x * h1z
        cr2z = h0x * h1y - h0y * h1x
        d = cr0x * h0x + cr0y * h0y + cr0z * h0z
        if d == 0.0:
            continue
        valid[t] = 1
        minv[t, 0, 0] = cr0x / d
        minv[t, 0, 1] = cr0y / d
        minv[t, 0, 2] = cr0z / d
        minv[t, 1, 0] = cr1x / d
        minv[t, 1, 1] = cr1y / d
        minv[t, 1, 2] = cr1z / d
        minv[t, 2, 0] = cr2x / d
        minv[t, 2, 1] = cr2y / d
        minv[t, 2, 2] = cr2z / d

    gtot = np.zeros((T, 3, 3), np.float64)
    abar = np.zeros(3, np.float64)
    touched = np.zeros(T, np.uint8)
    for y in range(H):
        py = y + 0.5
        for x in range(W):
            tid = ids[y, x]
            if tid == 0:
                continue
            t = tid - 1
            if valid[t] == 0:
                continue
            px = x + 0.5
            a0 = minv[t, 0, 0] * px + minv[t, 0, 1] * py + minv[t, 0, 2]
            a1 = minv[t, 1, 0] * px + minv[t, 1, 1] * py + minv[t, 1, 2]
            a2 = minv[t, 2, 0] * px + minv[t, 2, 1] * py + minv[t, 2, 2]
            S = a0 + a1 + a2
            if S == 0.0:
                continue
            u = a0 / S
            v = a1 / S
            c0 = minv[t, 0, 0] + minv[t, 1, 0] + minv[t, 2, 0]
            c1 = minv[t, 0, 1] + minv[t, 1, 1] + minv[t, 2, 1]
            S2 = S * S
            S3 = S2 * S

            gu = float(dl_duv[y, x, 0])
            gv = float(dl_duv[y, x, 1])
            abar[0] = gu / S
            abar[1] = gv / S
            abar[2] = 0.0
            sbar = -gu * a0 / S2 - gv * a1 / S2
            cb0 = 0.0
            cb1 = 0.0
            for i in range(2):
                ai = a0 if i == 0 else a1
                for k in range(2):
                    jb = float(dl_djuv[y, x, i, k])
                    if jb == 0.0:
                        continue
                    ck = c0 if k == 0 else c1
                    gtot[t, i, k] += jb / S
                    sbar += jb * (-minv[t, i, k] / S2 + 2.0 * ai * ck / S3)
                    abar[i] += -jb * ck / S2
                    if k == 0:
                        cb0 += -jb * ai / S2
                    else:
                        cb1 += -jb * ai / S2
            for j in range(3):
                gtot[t, j, 0] += cb0
                gtot[t, j, 1] += cb1
            abar[0] += sbar
            abar[1] += sbar
            abar[2] += sbar
            for i in range(3):
                gtot[t, i, 0] += abar[i] * px
                gtot[t, i, 1] += abar[i] * py
                gtot[t, i, 2] += abar[i]
            touched[t] = 1

    for t in range(T):
        if touched[t] == 0:
            continue
        # Mbar = -Minv^T @ Gtot @ Minv^T; columns of M map linearly to verts
        for slot in range(3):
            vi = tris[t, slot]
            m0 = 0.0
            m1 = 0.0
            m2 = 0.0
            for r in range(3):
                # row r of (Gtot @ Minv^T) column slot: sum_k Gtot[r,k] * Minv[slot,k]
                acc = (gtot[t, r, 0] * minv[t, slot, 0]
                       + gtot[t, r, 1] * minv[t, slot, 1]
                       + gtot[t, r, 2] * minv[t, slot, 2])
                # Mbar[c, slot] = -sum_r Minv[r, c] * acc_r
                m0 -= minv[t, r, 0] * acc
                m1 -= minv[t, r, 1] * acc
                m2 -= minv[t, r, 2] * acc
            dverts[vi, 0] += m0 * wh
            dverts[vi, 1] += -m1 * hh
            dverts[vi, 3] += m0 * wh + m1 * hh + m2
    return dverts


# ---------------------------------------------------------------------------
# attribute interpolation


@njit(cache=True)
def interp_forward(attrs, tris, ids, bary, juv, deriv_mask):
    H, W = ids.shape
    K = attrs.shape[1]
    img = np.zeros((H, W, K), attrs.dtype)
    want = False
    for k in range(K):
        if deriv_mask[k]:
            want = True
    if want:
        der = np.zeros((H, W, 2 * K), attrs.dtype)
    else:
        der = np.zeros((0, 0, 0), attrs.dtype)
    for y in range(H):
        for x in range(W):
            tid = ids[y, x]
            if tid == 0:
                continue
            t = tid - 1
            j0, j1, j2 = tris[t, 0], tris[t, 1], tris[t, 2]
            u = float(bary[y, x, 0])
            v = float(bary[y, x, 1])
            w2 = 1.0 - u - v
            for k in range(K):
                a0 = float(attrs[j0, k])
                a1 = float(attrs[j1, k])
                a2 = float(attrs[j2, k])
                img[y, x, k] = u * a0 + v * a1 + w2 * a2
                if want and deriv_mask[k]:
                    dau = a0 - a2
                    dav = a1 - a2
                    der[y, x, 2 * k] = juv[y, x, 0, 0] * dau + juv[y, x, 1, 0] * dav
                    der[y, x, 2 * k + 1] = juv[y, x, 0, 1] * dau + juv[y, x, 1, 1] * dav
    return img, der


@njit(cache=True)
def interp_backward(attrs, tris, ids, bary, juv, dl_da, dl_dja, deriv_mask):
    H, W = ids.shape
    K = attrs.shape[1]
    dattrs = np.zeros(attrs.shape, attrs.dtype)
    dl_duv = np.zeros((H, W, 2), attrs.dtype)
    dl_djuv = np.zeros((H, W, 2, 2), attrs.dtype)
    has_ja = dl_dja.size > 0
    for y in range(H):
        for x in range(W):
            tid = ids[y, x]
            if tid == 0:
                continue
            t = tid - 1
            j0, j1, j2 = tris[t, 0], tris[t, 1], tris[t, 2]
            u = float(bary[y, x, 0])
            v = float(bary[y, x, 1])
            w2 = 1.0 - u - v
            du = 0.0
            dv = 0.0
            dj00 = 0.0
            dj01 = 0.0
            dj10 = 0.0
            dj11 = 0.0
            for k in range(K):
                a0 = float(attrs[j0, k])
                a1 = float(attrs[j1, k])
                a2 = float(attrs[j2, k])
                ga = float(dl_da[y, x, k])
                if ga != 0.0:
                    dattrs[j0, k] += u * ga
                    dattrs[j1, k] += v * ga
                    dattrs[j2, k] += w2 * ga
                    du += (a0 - a2) * ga
                    dv += (a1 - a2) * ga
                if has_ja and deriv_mask[k]:
                    gx = float(dl_dja[y, x, 2 * k])
                    gy = float(dl_dja[y, x, 2 * k + 1])
                    if gx != 0.0 or gy != 0.0:
                        dau = a0 - a2
                        dav = a1 - a2
                        dj00 += gx * dau
                        dj01 += gy * dau
                        dj10 += gx * dav
                        dj11 += gy * dav
                        c0 = gx * juv[y, x, 0, 0] + gy * juv[y, x, 0, 1]
                        c1 = gx * juv[y, x, 1, 0] + gy * juv[y, x, 1, 1]
                        dattrs[j0, k] += c0
                        dattrs[j1, k] += c1
                        dattrs[j2, k] += -(c0 + c1)
            dl_duv[y, x, 0] = du
            dl_duv[y, x, 1] = dv
            dl_djuv[y, x, 0, 0] = dj00
            dl_djuv[y, x, 0, 1] = dj01
            dl_djuv[y, x, 1, 0] = dj10
            dl_djuv[y, x, 1, 1] = dj11
    return dattrs, dl_duv, dl_djuv


# ---------------------------------------------------------------------------
# mip-mapped texture sampling (flat level storage, see numpy build)


@njit(cache=True, inline="always")
def _addr1(i, n, wrap):
    if wrap:
        r = i % n
        if r < 0:
            r += n
        return r
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


@njit(cache=True)
def texture_forward(flat, offsets, widths, channels, faces, st, jst, mask, wrap):
    H, W = mask.shape
    L = offsets.shape[1]
    C = channels
    g = np.zeros((H, W, C), flat.dtype)
    lod = np.zeros((H, W), flat.dtype)
    lvl0 = np.zeros((H, W), np.int32)
    frac = np.zeros((H, W), flat.dtype)
    tix = np.zeros((H, W, 2, 2), np.int32)
    tfr = np.zeros((H, W, 2, 2), flat.dtype)
    w0 = float(widths[0])
    use_faces = faces.size > 0
    for y in range(H):
        for x in range(W):
            if not mask[y, x]:
                continue
            j00 = float(jst[y, x, 0, 0])
            j01 = float(jst[y, x, 0, 1])
            j10 = float(jst[y, x, 1, 0])
            j11 = float(jst[y, x, 1, 1])
            nx = w0 * np.sqrt(j00 * j00 + j10 * j10)
            ny = w0 * np.sqrt(j01 * j01 + j11 * j11)
            m = nx if nx > ny else ny
            if m > 0.0:
                raw = np.log2(m)
            else:
                raw = 0.0
            lodv = raw
            if lodv < 0.0:
                lodv = 0.0
            if lodv > L - 1.0:
                lodv = L - 1.0
            l0 = int(np.floor(lodv))
            if l0 > L - 1:
                l0 = L - 1
            fv = lodv - l0
            l1 = l0 + 1 if l0 + 1 < L else L - 1
            fi = faces[y, x] if use_faces else 0
            sv = float(st[y, x, 0])
            tv = float(st[y, x, 1])
            lod[y, x] = lodv
            lvl0[y, x] = l0
            frac[y, x] = fv
            for which in range(2):
                lv = l0 if which == 0 else l1
                bw = (1.0 - fv) if which == 0 else fv
                wl = widths[lv]
                X = sv * wl - 0.5
                Y = tv * wl - 0.5
                ix = int(np.floor(X))
                iy = int(np.floor(Y))
                fx = X - ix
                fy = Y - iy
                tix[y, x, which, 0] = ix
                tix[y, x, which, 1] = iy
                tfr[y, x, which, 0] = fx
                tfr[y, x, which, 1] = fy
                if bw == 0.0 and which == 1:
                    continue
                x0 = _addr1(ix, wl, wrap)
                x1 = _addr1(ix + 1, wl, wrap)
                y0 = _addr1(iy, wl, wrap)
                y1 = _addr1(iy + 1, wl, wrap)
                base = offsets[fi, lv]
                o00 = base + (y0 * wl + x0) * C
                o10 = base + (y0 * wl + x1) * C
                o01 = base + (y1 * wl + x0) * C
                o11 = base + (y1 * wl + x1) * C
                w00 = (1.0 - fx) * (1.0 - fy)
                w10 = fx * (1.0 - fy)
                w01 = (1.0 - fx) * fy
                w11 = fx * fy
                for k in range(C):
                    bl = (w00 * float(flat[o00 + k]) + w10 * float(flat[o10 + k])
                          + w01 * float(flat[o01 + k]) + w11 * float(flat[o11 + k]))
                    g[y, x, k] += bw * bl
    return g, lod, lvl0, frac, tix, tfr


@njit(cache=True)
def texture_backward(flat, offsets, widths, channels, faces, st, jst, mask,
                     lod, lvl0, frac, tix, tfr, dl_dg, wrap):
    H, W = mask.shape
    L = offsets.shape[1]
    C = channels
    dflat = np.zeros(flat.shape, flat.dtype)
    dl_dst = np.zeros((H, W, 2), flat.dtype)
    dl_djst = np.zeros((H, W, 2, 2), flat.dtype)
    w0 = float(widths[0])
    use_faces = faces.size > 0
    for y in range(H):
        for x in range(W):
            if not mask[y, x]:
                continue
            fi = faces[y, x] if use_faces else 0
            l0 = lvl0[y, x]
            l1 = l0 + 1 if l0 + 1 < L else L - 1
            fv = float(frac[y, x])
            ds = 0.0
            dt = 0.0
            bl0 = 0.0
            bl1 = 0.0
            dfrac = 0.0
            for which in range(2):
                lv = l0 if which == 0 else l1
                bw = (1.0 - fv) if which == 0 else fv
                wl = widths[lv]
                ix = tix[y, x, which, 0]
                iy = tix[y, x, which, 1]
                fx = float(tfr[y, x, which, 0])
                fy = float(tfr[y, x, which, 1])
                x0 = _addr1(ix, wl, wrap)
                x1 = _addr1(ix + 1, wl, wrap)
                y0 = _addr1(iy, wl, wrap)
                y1 = _addr1(iy + 1, wl, wrap)
                base = offsets[fi, lv]
                o00 = base + (y0 * wl + x0) * C
                o10 = base + (y0 * wl + x1) * C
                o01 = base + (y1 * wl + x0) * C
                o11 = base + (y1 * wl + x1) * C
                w00 = (1.0 - fx) * (1.0 - fy)
                w10 = fx * (1.0 - fy)
                w01 = (1.0 - fx) * fy
                w11 = fx * fy
                for k in range(C):
                    gk = float(dl_dg[y, x, k])
                    c00 = float(flat[o00 + k])
                    c10 = float(flat[o10 + k])
                    c01 = float(flat[o01 + k])
                    c11 = float(flat[o11 + k])
                    if gk != 0.0:
                        sc = bw * gk
                        dflat[o00 + k] += w00 * sc
                        dflat[o10 + k] += w10 * sc
                        dflat[o01 + k] += w01 * sc
                        dflat[o11 + k] += w11 * sc
                        dgdX = (1.0 - fy) * (c10 - c00) + fy * (c11 - c01)
                        dgdY = (1.0 - fx) * (c01 - c00) + fx * (c11 - c10)
                        ds += bw * wl * gk * dgdX
                        dt += bw * wl * gk * dgdY
                    bl = w00 * c00 + w10 * c10 + w01 * c01 + w11 * c11
                    if which == 0:
                        bl0 += gk * bl
                    else:
                        bl1 += gk * bl
            dfrac = bl1 - bl0
            dl_dst[y, x, 0] = ds
            dl_dst[y, x, 1] = dt

            if fv > 0.0:
                j00 = float(jst[y, x, 0, 0])
                j01 = float(jst[y, x, 0, 1])
                j10 = float(jst[y, x, 1, 0])
                j11 = float(jst[y, x, 1, 1])
                nx = w0 * np.sqrt(j00 * j00 + j10 * j10)
                ny = w0 * np.sqrt(j01 * j01 + j11 * j11)
                m = nx if nx > ny else ny
                if m > 0.0:
                    dm = dfrac / (m * 0.6931471805599453)
                    if nx >= ny:
                        cxs = dm * w0 * w0 / nx
                        dl_djst[y, x, 0, 0] = cxs * j00
                        dl_djst[y, x, 1, 0] = cxs * j10
                    else:
                        cys = dm * w0 * w0 / ny
                        dl_djst[y, x, 0, 1] = cys * j01
                        dl_djst[y, x, 1, 1] = cys * j11
    return dflat, dl_dst, dl_djst


# ---------------------------------------------------------------------------
# analytic edge antialiasing


@njit(cache=True, inline="always")
def _edge_find(keys, a, b):
    lo = a if a < b else b
    hi = b if a < b else a
    key = (np.int64(lo) << 32) | np.int64(hi)
    left = 0
    right = keys.shape[0]
    while left < right:
        mid = (left + right) // 2
        if keys[mid] < key:
            left = mid + 1
        else:
            right = mid
    if left < keys.shape[0] and keys[left] == key:
        return left
    return -1


@njit(cache=True)
def _silhouette(verts, tris, keys, offsets, incident, a, b):
    e = _edge_find(keys, a, b)
    if e < 0:
        return True
    lo = offsets[e]
    hi = offsets[e + 1]
    if hi - lo != 2:
        return True
    s0 = 0.0
    s1 = 0.0
    pax = float(verts[a, 0])
    pay = float(verts[a, 1])
    paw = float(verts[a, 3])
    pbx = float(verts[b, 0])
    pby = float(verts[b, 1])
    pbw = float(verts[b, 3])
    cx = pay * pbw - paw * pby
    cy = paw * pbx - pax * pbw
    cz = pax * pby - pay * pbx
    for w in range(lo, hi):
        t2 = incident[w]
        opp = tris[t2, 0]
        if opp == a or opp == b:
            opp = tris[t2, 1]
        if opp == a or opp == b:
            opp = tris[t2, 2]
        sv = cx * float(verts[opp, 0]) + cy * float(verts[opp, 1]) + cz * float(verts[opp, 3])
        if w == lo:
            s0 = sv
        else:
            s1 = sv
    return s0 * s1 >= 0.0


@njit(cache=True)
def _aa_pair(color, ids, zw, verts, tris, keys, offsets, incident,
             width, height, xa, ya, xb, yb, axis, out, ev_i, ev_f, count):
    ida = ids[ya, xa]
    idb = ids[yb, xb]
    if ida == idb:
        return count
    if ida == 0:
        wt = idb
    elif idb == 0:
        wt = ida
    else:
        wt = ida if zw[ya, xa] <= zw[yb, xb] else idb
    t = wt - 1
    best_alpha = -1.0
    best_delta = 0.0
    best_p = -1
    best_q = -1
    best_t = 0.0
    for e in range(3):
        if e == 0:
            p = tris[t, 0]
            q = tris[t, 1]
        elif e == 1:
            p = tris[t, 1]
            q = tris[t, 2]
        else:
            p = tris[t, 2]
            q = tris[t, 0]
        wp = float(verts[p, 3])
        wq = float(verts[q, 3])
        dyh = abs(wp * float(verts[q, 1]) - wq * float(verts[p, 1]))
        dxh = abs(wp * float(verts[q, 0]) - wq * float(verts[p, 0]))
        if axis == 0:
            if not (dyh > dxh):
                continue
        else:
            if not (dxh > dyh):
                continue
        if wp <= EPS_W or wq <= EPS_W:
            continue
        if not _silhouette(verts, tris, keys, offsets, incident, p, q):
            continue
        spx = width * (float(verts[p, 0]) / wp + 1.0) * 0.5
        spy = height * (1.0 - float(verts[p, 1]) / wp) * 0.5
        sqx = width * (float(verts[q, 0]) / wq + 1.0) * 0.5
        sqy = height * (1.0 - float(verts[q, 1]) / wq) * 0.5
        if axis == 0:
            cyc = ya + 0.5
            den = sqy - spy
            if den == 0.0:
                continue
            tt = (cyc - spy) / den
            if tt < 0.0 or tt > 1.0:
                continue
            xi = spx + tt * (sqx - spx)
            if xi < xa + 0.5 or xi > xb + 0.5:
                continue
            delta = xi - (xa + 1.0)
        else:
            cxc = xa + 0.5
            den = sqx - spx
            if den == 0.0:
                continue
            tt = (cxc - spx) / den
            if tt < 0.0 or tt > 1.0:
                continue
            yi = spy + tt * (sqy - spy)
            if yi < ya + 0.5 or yi > yb + 0.5:
                continue
            delta = yi - (ya + 1.0)
        alpha = abs(delta)
        if alpha > best_alpha:
            best_alpha = alpha
            best_delta = delta
            best_p = p
            best_q = q
            best_t = tt
    if best_p < 0:
        return count
    losing = 1 if best_delta > 0.0 else 0
    if losing:
        lx, ly = xb, yb
        ox, oy = xa, ya
    else:
        lx, ly = xa, ya
        ox, oy = xb, yb
    for k in range(color.shape[2]):
        out[ly, lx, k] += best_alpha * (float(color[oy, ox, k]) - float(color[ly, lx, k]))
    ev_i[count, 0] = xa
    ev_i[count, 1] = ya
    ev_i[count, 2] = axis
    ev_i[count, 3] = losing
    ev_i[count, 4] = t
    ev_i[count, 5] = best_p
    ev_i[count, 6] = best_q
    ev_f[count, 0] = best_t
    ev_f[count, 1] = best_alpha
    return count + 1


@njit(cache=True)
def aa_forward(color, ids, zw, verts, tris, keys, offsets, incident, width, height):
    H, W = ids.shape
    out = color.copy()
    max_ev = H * (W - 1) + W * (H - 1) if W > 0 and H > 0 else 0
    ev_i = np.zeros((max(1, max_ev), 7), np.int32)
    ev_f = np.zeros((max(1, max_ev), 2), np.float64)
    count = 0
    for y in range(H):
        for x in range(W - 1):
            if ids[y, x] != ids[y, x + 1]:
                count = _aa_pair(color, ids, zw, verts, tris, keys, offsets, incident,
                                 width, height, x, y, x + 1, y, 0, out, ev_i, ev_f, count)
    for y in range(H - 1):
        for x in range(W):
            if ids[y, x] != ids[y + 1, x]:
                count = _aa_pair(color, ids, zw, verts, tris, keys, offsets, incident,
                                 width, height, x, y, x, y + 1, 1, out, ev_i, ev_f, count)
    return out, ev_i[:count], ev_f[:count]


@njit(cache=True)
def aa_backward(color, ev_i, ev_f, verts, dl_daa, width, height):
    dl_dcolor = dl_daa.copy()
    dverts = np.zeros(verts.shape, verts.dtype)
    wh = 0.5 * width
    hh = 0.5 * height
    C = color.shape[2]
    for e in range(ev_i.shape[0]):
        xa = ev_i[e, 0]
        ya = ev_i[e, 1]
        axis = ev_i[e, 2]
        losing = ev_i[e, 3]
        p = ev_i[e, 5]
        q = ev_i[e, 6]
        tt = ev_f[e, 0]
        alpha = ev_f[e, 1]
        if axis == 0:
            xb, yb = xa + 1, ya
        else:
            xb, yb = xa, ya + 1
        if losing:
            lx, ly = xb, yb
            ox, oy = xa, ya
        else:
            lx, ly = xa, ya
            ox, oy = xb, yb
        dl_dalpha = 0.0
        for k in range(C):
            gk = float(dl_daa[ly, lx, k])
            dl_dcolor[oy, ox, k] += alpha * gk
            dl_dcolor[ly, lx, k] -= alpha * gk
            dl_dalpha += (float(color[oy, ox, k]) - float(color[ly, lx, k])) * gk

        wp = float(verts[p, 3])
        wq = float(verts[q, 3])
        spx = width * (float(verts[p, 0]) / wp + 1.0) * 0.5
        spy = height * (1.0 - float(verts[p, 1]) / wp) * 0.5
        sqx = width * (float(verts[q, 0]) / wq + 1.0) * 0.5
        sqy = height * (1.0 - float(verts[q, 1]) / wq) * 0.5
        if axis == 0:
            cyc = ya + 0.5
            den = sqy - spy
            xi = spx + tt * (sqx - spx)
            delta = xi - (xa + 1.0)
            sgn = 0.0
            if delta > 0.0:
                sgn = 1.0
            elif delta < 0.0:
                sgn = -1.0
            dxi = dl_dalpha * sgn
            d_spx = dxi * (1.0 - tt)
            d_sqx = dxi * tt
            dtt = dxi * (sqx - spx)
            d_spy = dtt * (cyc - sqy) / (den * den)
            d_sqy = dtt * -(cyc - spy) / (den * den)
        else:
            cxc = xa + 0.5
            den = sqx - spx
            yi = spy + tt * (sqy - spy)
            delta = yi - (ya + 1.0)
            sgn = 0.0
            if delta > 0.0:
                sgn = 1.0
            elif delta < 0.0:
                sgn = -1.0
            dyi = dl_dalpha * sgn
            d_spy = dyi * (1.0 - tt)
            d_sqy = dyi * tt
            dtt = dyi * (sqy - spy)
            d_spx = dtt * (cxc - sqx) / (den * den)
            d_sqx = dtt * -(cxc - spx) / (den * den)
        for which in range(2):
            if which == 0:
                vi = p
                dsx = d_spx
                dsy = d_spy
            else:
                vi = q
                dsx = d_sqx
                dsy = d_sqy
            w = float(verts[vi, 3])
            xv = float(verts[vi, 0])
            yv = float(verts[vi, 1])
            dverts[vi, 0] += dsx * wh / w
            dverts[vi, 1] += -dsy * hh / w
            dverts[vi, 3] += dsx * (-wh * xv / (w * w)) + dsy * (hh * yv / (w * w))
    return dl_dcolor, dverts
