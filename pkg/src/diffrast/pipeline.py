"""Render-graph composition and geometric helpers.

A :class:`Tape` records primitive invocations (rasterize, interpolate,
texture, antialias, plus small dense ops) together with the activations each
backward needs; :meth:`Tape.backward` replays them in exact reverse order and
accumulates gradients for every watched input, summing contributions when an
input feeds several stages (e.g. clip positions feed both the rasterizer and
the antialiaser).  Nothing is recomputed in backward.

:class:`RenderGraph` wraps a user build function into the render /
render_backward pair; the shading stage is any caller code that registers its
own backward via :meth:`Tape.custom` or the stock shaders below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .antialias import antialias_backward, antialias_forward
from .buffers import GradBuffer
from .errors import ShapeMismatch, ZeroVector
from .interp import interpolate_backward, interpolate_forward
from .raster import RasterGrid, Viewport, rasterize_backward, rasterize_forward
from .texture import (MipTexture, TexSampleRequest, build_pyramid,
                      flatten_gradients, texture_backward, texture_forward)


class Var:
    """A tape value; ``grad`` is populated during backward for inputs."""

    __slots__ = ("value", "name", "tape", "_id")

    def __init__(self, value, name=None):
        self.value = value
        self.name = name
        self._id = id(self)

    @property
    def shape(self):
        return np.shape(self.value)


class Tape:
    def __init__(self):
        self._nodes = []        # (out_vars, in_vars, backward_fn)
        self._inputs = {}       # name -> Var

    def input(self, name: str, value) -> Var:
        v = Var(np.asarray(value), name)
        self._inputs[name] = v
        return v

    def constant(self, value) -> Var:
        return Var(np.asarray(value))

    def _push(self, outs, ins, backward_fn):
        self._nodes.append((tuple(outs), tuple(ins), backward_fn))

    # -- primitives ---------------------------------------------------------

    def rasterize(self, verts: Var, idx, viewport: Viewport) -> Var:
        grid = rasterize_forward(verts.value, idx, viewport)
        out = Var(grid)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None,)
            duv, djuv = g
            gb = rasterize_backward(verts.value, idx, grid, duv, djuv)
            return (gb.data,)
        self._push([out], [verts], bwd)
        return out

    def interpolate(self, attrs: Var, idx, grid_var: Var, want_derivs=None):
        grid: RasterGrid = grid_var.value
        ai = interpolate_forward(attrs.value, idx, grid, want_derivs)
        out_v = Var(ai.values)
        out_d = Var(ai.derivs) if ai.derivs is not None else None
        outs = [out_v] + ([out_d] if out_d is not None else [])
        def bwd(gouts):
            dl_da = gouts[0]
            dl_dja = gouts[1] if len(gouts) > 1 else None
            if dl_da is None:
                dl_da = np.zeros_like(ai.values)
            gb, duv, djuv = interpolate_backward(
                attrs.value, idx, grid, dl_da, dl_dja, want_derivs)
            return (gb.data, (duv, djuv))
        self._push(outs, [attrs, grid_var], bwd)
        return (out_v, out_d) if out_d is not None else (out_v, None)

    def texture_sample(self, base: Var, st: Var, jst: Var, mask, levels,
                       faces=None, wrap=False) -> Var:
        tex = build_pyramid(base.value, levels, wrap=wrap)
        req = TexSampleRequest(st=st.value, jst=jst.value, mask=mask, faces=faces)
        g, rec = texture_forward(tex, req)
        out = Var(g)
        def bwd(gouts):
            dg = gouts[0]
            if dg is None:
                return (None, None, None)
            dlv, dst, djst = texture_backward(tex, req, rec, dg)
            dbase = flatten_gradients(dlv)
            if np.asarray(base.value).ndim < 4:
                dbase = dbase.reshape(np.shape(base.value))
            return (dbase, dst, djst)
        self._push([out], [base, st, jst], bwd)
        return out

    def antialias(self, color: Var, grid_var: Var, verts: Var, idx, adj):
        grid: RasterGrid = grid_var.value
        aa, log = antialias_forward(color.value, grid, verts.value, idx, adj)
        out = Var(aa)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None, None)
            dcolor, gb = antialias_backward(log, verts.value, idx, g)
            return (dcolor, None, gb.data)
        self._push([out], [color, grid_var, verts], bwd)
        return out, log

    # -- geometry helpers ---------------------------------------------------

    def transform_clip(self, verts_obj: Var, mvp: Var) -> Var:
        v = np.asarray(verts_obj.value)
        m = np.asarray(mvp.value)
        if v.ndim != 2 or v.shape[1] != 3 or m.shape != (4, 4):
            raise ShapeMismatch("transform_clip expects (n, 3) points and a 4x4 matrix")
        hom = np.concatenate([v, np.ones((v.shape[0], 1), v.dtype)], axis=1)
        clip = hom @ m.T
        out = Var(clip)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None)
            dobj = (g @ m)[:, :3]
            dm = g.T @ hom
            return (dobj, dm)
        self._push([out], [verts_obj, mvp], bwd)
        return out

    def reflection_vectors(self, normals: Var, view_dirs: Var) -> Var:
        n = np.asarray(normals.value, np.float64)
        v = np.asarray(view_dirs.value, np.float64)
        nn = np.linalg.norm(n, axis=-1, keepdims=True)
        if np.any(nn == 0.0):
            raise ZeroVector("zero normal vector")
        nh = n / nn
        dot = (nh * v).sum(-1, keepdims=True)
        m = 2.0 * dot * nh - v
        mn = np.linalg.norm(m, axis=-1, keepdims=True)
        if np.any(mn == 0.0):
            raise ZeroVector("degenerate reflection (zero mirror vector)")
        r = m / mn
        out = Var(r)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None)
            # r = m/|m|
            gm = (g - r * (r * g).sum(-1, keepdims=True)) / mn
            # m = 2 (nh.v) nh - v
            gnh = 2.0 * dot * gm + 2.0 * v * (nh * gm).sum(-1, keepdims=True)
            gv = -gm + 2.0 * nh * (nh * gm).sum(-1, keepdims=True)
            # nh = n/|n|
            gn = (gnh - nh * (nh * gnh).sum(-1, keepdims=True)) / nn
            return (gn, gv)
        self._push([out], [normals, view_dirs], bwd)
        return out

    def cubemap_address(self, dirs: Var, jdir: Var, mask):
        """Per-pixel direction (+ screen derivatives) to (face, st, jst).

        dirs: (H, W, 3); jdir: (H, W, 3, 2) with columns d(dir)/dx, d(dir)/dy.
        Face selection is piecewise constant and carries no gradient.
        """
        d = np.asarray(dirs.value, np.float64)
        jd = np.asarray(jdir.value, np.float64)
        H, W = d.shape[:2]
        faces, sel = _cube_face_select(d, mask)
        sigma, tau, mu, js, jt, jm = _cube_face_components(d, jd, sel)
        mu_safe = np.where(mu > 0, mu, 1.0)
        st = np.zeros((H, W, 2), d.dtype)
        st[..., 0] = 0.5 * (sigma / mu_safe + 1.0)
        st[..., 1] = 0.5 * (tau / mu_safe + 1.0)
        jst = np.zeros((H, W, 2, 2), d.dtype)
        inv2mu = 0.5 / mu_safe
        inv2mu2 = 0.5 / (mu_safe * mu_safe)
        for c in range(2):
            jst[..., 0, c] = js[..., c] * inv2mu - sigma * jm[..., c] * inv2mu2
            jst[..., 1, c] = jt[..., c] * inv2mu - tau * jm[..., c] * inv2mu2
        st_v = Var(st)
        jst_v = Var(jst)
        def bwd(gouts):
            gst = gouts[0]
            gjst = gouts[1] if len(gouts) > 1 else None
            if gst is None:
                gst = np.zeros_like(st)
            if gjst is None:
                gjst = np.zeros_like(jst)
            gsig = gst[..., 0] * inv2mu
            gtau = gst[..., 1] * inv2mu
            gmu = (-gst[..., 0] * sigma - gst[..., 1] * tau) * inv2mu2
            gjs = np.zeros_like(js)
            gjt = np.zeros_like(jt)
            gjm = np.zeros_like(jm)
            mu3 = mu_safe ** 3
            for c in range(2):
                g0 = gjst[..., 0, c]
                g1 = gjst[..., 1, c]
                gjs[..., c] = g0 * inv2mu
                gjt[..., c] = g1 * inv2mu
                gjm[..., c] = -(g0 * sigma + g1 * tau) * inv2mu2
                gsig += -g0 * jm[..., c] * inv2mu2
                gtau += -g1 * jm[..., c] * inv2mu2
                gmu += (-g0 * js[..., c] - g1 * jt[..., c]) * inv2mu2 \
                    + (g0 * sigma + g1 * tau) * jm[..., c] / mu3
            gdir, gjdir = _cube_face_scatter(d.shape, sel, gsig, gtau, gmu, gjs, gjt, gjm)
            return (gdir, gjdir)
        self._push([st_v, jst_v], [dirs, jdir], bwd)
        return faces, st_v, jst_v

    # -- dense ops ----------------------------------------------------------

    def composite_background(self, color: Var, mask, clear: Var) -> Var:
        c = np.asarray(color.value)
        cl = np.asarray(clear.value, c.dtype)
        out_arr = np.where(mask[..., None], c, cl)
        out = Var(out_arr)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None)
            gc = np.where(mask[..., None], g, 0.0)
            gcl = g[~mask].sum(axis=0)
            return (gc, gcl)
        self._push([out], [color, clear], bwd)
        return out

    def add(self, a: Var, b: Var) -> Var:
        out = Var(np.asarray(a.value) + np.asarray(b.value))
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None)
            return (_unbroadcast(g, np.shape(a.value)), _unbroadcast(g, np.shape(b.value)))
        self._push([out], [a, b], bwd)
        return out

    def mul(self, a: Var, b: Var) -> Var:
        av, bv = np.asarray(a.value), np.asarray(b.value)
        out = Var(av * bv)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None)
            return (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
        self._push([out], [a, b], bwd)
        return out

    def reshape(self, a: Var, shape) -> Var:
        old = np.shape(a.value)
        out = Var(np.reshape(a.value, shape))
        def bwd(gouts):
            g = gouts[0]
            return (None,) if g is None else (np.reshape(g, old),)
        self._push([out], [a], bwd)
        return out

    def matmul(self, a: Var, b: Var) -> Var:
        av, bv = np.asarray(a.value), np.asarray(b.value)
        out = Var(av @ bv)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return (None, None)
            return (g @ bv.T, av.T @ g)
        self._push([out], [a, b], bwd)
        return out

    def custom(self, ins, value, backward_fn: Callable) -> Var:
        """Caller-supplied stage: backward_fn(dl_dout) -> grads per input."""
        out = Var(value)
        def bwd(gouts):
            g = gouts[0]
            if g is None:
                return tuple(None for _ in ins)
            return tuple(backward_fn(g))
        self._push([out], list(ins), bwd)
        return out

    # -- reverse sweep ------------------------------------------------------

    def backward(self, out: Var, dl_dout):
        """Run all recorded stages backward; returns {input name: gradient}."""
        grads = {out._id: np.asarray(dl_dout)}
        for outs, ins, fn in reversed(self._nodes):
            gouts = tuple(grads.get(o._id) for o in outs)
            if all(g is None for g in gouts):
                continue
            gins = fn(gouts)
            for var, g in zip(ins, gins):
                if g is None or var is None:
                    continue
                cur = grads.get(var._id)
                if cur is None:
                    grads[var._id] = g
                elif isinstance(cur, tuple):
                    grads[var._id] = tuple(c + n for c, n in zip(cur, g))
                else:
                    grads[var._id] = cur + g
        return {name: grads.get(v._id) for name, v in self._inputs.items()}


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# face constants: (sigma axis, sigma sign, tau axis, tau sign, major axis, major sign)
_CUBE_FACES = (
    (2, -1.0, 1, -1.0, 0, 1.0),   # +X
    (2, 1.0, 1, -1.0, 0, -1.0),   # -X
    (0, 1.0, 2, 1.0, 1, 1.0),     # +Y
    (0, 1.0, 2, -1.0, 1, -1.0),   # -Y
    (0, 1.0, 1, -1.0, 2, 1.0),    # +Z
    (0, -1.0, 1, -1.0, 2, -1.0),  # -Z
)


def _cube_face_select(d, mask):
    ax = np.abs(d[..., 0])
    ay = np.abs(d[..., 1])
    az = np.abs(d[..., 2])
    faces = np.zeros(d.shape[:2], np.int32)
    x_major = (ax >= ay) & (ax >= az)
    y_major = ~x_major & (ay >= az)
    z_major = ~x_major & ~y_major
    faces[x_major & (d[..., 0] < 0)] = 1
    faces[y_major] = np.where(d[..., 1][y_major] >= 0, 2, 3)
    faces[z_major] = np.where(d[..., 2][z_major] >= 0, 4, 5)
    if mask is not None:
        faces = np.where(mask, faces, 0)
    sel = [faces == f for f in range(6)]
    if mask is not None:
        sel = [s & mask for s in sel]
    return faces, sel


def _cube_face_components(d, jd, sel):
    H, W = d.shape[:2]
    sigma = np.zeros((H, W))
    tau = np.zeros((H, W))
    mu = np.zeros((H, W))
    js = np.zeros((H, W, 2))
    jt = np.zeros((H, W, 2))
    jm = np.zeros((H, W, 2))
    for f, (ia, sa, ib, sb, im, sm) in enumerate(_CUBE_FACES):
        s = sel[f]
        if not s.any():
            continue
        sigma[s] = sa * d[s, ia]
        tau[s] = sb * d[s, ib]
        mu[s] = sm * d[s, im]
        js[s] = sa * jd[s, ia, :]
        jt[s] = sb * jd[s, ib, :]
        jm[s] = sm * jd[s, im, :]
    return sigma, tau, mu, js, jt, jm


def _cube_face_scatter(shape, sel, gsig, gtau, gmu, gjs, gjt, gjm):
    gdir = np.zeros(shape)
    gjdir = np.zeros(shape + (2,))
    for f, (ia, sa, ib, sb, im, sm) in enumerate(_CUBE_FACES):
        s = sel[f]
        if not s.any():
            continue
        gdir[s, ia] += sa * gsig[s]
        gdir[s, ib] += sb * gtau[s]
        gdir[s, im] += sm * gmu[s]
        gjdir[s, ia, :] += sa * gjs[s]
        gjdir[s, ib, :] += sb * gjt[s]
        gjdir[s, im, :] += sm * gjm[s]
    return gdir, gjdir


def cubemap_texel_directions(width: int):
    """Unit direction at every cube-map texel center, shape (6, W, W, 3)."""
    st = (np.arange(width) + 0.5) / width
    ss, tt = np.meshgrid(st, st)           # tt rows = t, ss cols = s
    out = np.zeros((6, width, width, 3))
    for f, (ia, sa, ib, sb, im, sm) in enumerate(_CUBE_FACES):
        out[f, :, :, ia] = sa * (2.0 * ss - 1.0)
        out[f, :, :, ib] = sb * (2.0 * tt - 1.0)
        out[f, :, :, im] = sm
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out


@dataclass
class RenderGraph:
    """Deferred-shading graph: ``build(tape, **inputs) -> output image Var``.

    ``render`` runs the build on a fresh tape (stateless w.r.t. previous
    renders); ``render_backward`` replays the saved tape in reverse.
    """

    build: Callable

    def __post_init__(self):
        self._tape: Optional[Tape] = None
        self._out: Optional[Var] = None

    def render(self, **inputs):
        tape = Tape()
        out = self.build(tape, **inputs)
        self._tape, self._out = tape, out
        return out.value

    def render_backward(self, dl_dimage):
        if self._tape is None:
            raise ShapeMismatch("render() must run before render_backward()")
        return self._tape.backward(self._out, dl_dimage)


# -- stock shaders ----------------------------------------------------------


def shade_passthrough(tape: Tape, color: Var) -> Var:
    return color


def shade_lambert(tape: Tape, albedo: Var, normals: Var, light_dir) -> Var:
    """albedo * max(n.l, 0) with the normal image unnormalized on purpose
    (interpolated normals shrink toward face boundaries)."""
    l = np.asarray(light_dir, np.float64)
    l = l / np.linalg.norm(l)
    n = np.asarray(normals.value, np.float64)
    ndl = np.maximum((n * l).sum(-1, keepdims=True), 0.0)
    a = np.asarray(albedo.value)
    out_val = a * ndl
    mask = (n * l).sum(-1, keepdims=True) > 0.0
    def backward(g):
        ga = g * ndl
        gn = np.where(mask, (g * a).sum(-1, keepdims=True) * l, 0.0)
        return (ga, gn)
    return tape.custom([albedo, normals], out_val, backward)


def shade_phong_highlight(tape: Tape, refl: Var, ks: Var, shininess: Var,
                          light_dir, mask) -> Var:
    """Specular highlight ks * max(cos, 0)^n from per-pixel reflection
    vectors; cos is against the unit light direction."""
    l = np.asarray(light_dir, np.float64)
    l = l / np.linalg.norm(l)
    r = np.asarray(refl.value, np.float64)
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    rsafe = np.where(rn > 0, rn, 1.0)
    rh = r / rsafe
    cos = (rh * l).sum(-1, keepdims=True)
    live = (cos > 0.0) & mask[..., None] & (rn > 0)
    cpos = np.where(live, cos, 0.0)
    ksv = float(np.asarray(ks.value))
    nv = float(np.asarray(shininess.value))
    powc = np.where(live, cpos ** nv, 0.0)
    out_val = ksv * powc
    def backward(g):
        gks = np.sum(g * powc)
        with np.errstate(divide="ignore", invalid="ignore"):
            logc = np.where(live, np.log(np.where(live, cpos, 1.0)), 0.0)
        gn = np.sum(g * ksv * powc * logc)
        gcos = np.where(live, g * ksv * nv * np.where(live, cpos, 1.0) ** (nv - 1.0), 0.0)
        grh = gcos * l
        gr = (grh - rh * (rh * grh).sum(-1, keepdims=True)) / rsafe
        gr = np.where(live, gr, 0.0)
        return (gr, np.asarray(gks), np.asarray(gn))
    return tape.custom([refl, ks, shininess], out_val, backward)
