"""Environment map and Phong highlight recovery via indirect texture lookups.

Per-vertex reflection vectors drive a cube-map fetch (reflections from the
curved surface produce wildly varying footprints, so the trilinear path and
its derivative chain get exercised end to end); a specular highlight from a
randomized light completes the shading.  The unknowns are the environment
texture, the specular weight and the exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..buffers import IndexBuffer, build_edge_adjacency
from ..camera import look_at, perspective, sample_sphere_direction
from ..meshes import bumpy_sphere, vertex_normals
from ..optim import AdamState, adam_step, l2_image_loss
from ..pipeline import Tape, cubemap_texel_directions
from ..raster import Viewport
from .common import (ConvergenceLog, DivergenceError, ExperimentConfig,
                     OutputWriter, psnr)

CAMERA_RADIUS = 3.0
FOV = 40.0
CLEAR = np.zeros(3)
TRUE_KS = 0.75
TRUE_SHININESS = 24.0


def ground_truth_envmap(size: int) -> np.ndarray:
    d = cubemap_texel_directions(size)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    r = 0.5 + 0.45 * np.sin(3.0 * x + 5.0 * y * z)
    g = 0.5 + 0.45 * np.sin(4.0 * y + 3.0 * z + 1.3)
    b = 0.5 + 0.45 * np.cos(5.0 * z + 2.0 * x * y)
    sun = np.exp(-8.0 * ((x - 0.6) ** 2 + (y - 0.55) ** 2 + (z - 0.58) ** 2))
    return np.clip(np.stack([r, g, b], axis=-1) + 0.8 * sun[..., None], 0.0, 1.0)


def render_phong(tape: Tape, env, ks, shininess, mvp, eye, light,
                 geo, res, levels, watch=True):
    verts, tris, normals, adj = geo
    vp = Viewport(res, res)
    clip = tape.transform_clip(tape.constant(verts), tape.constant(mvp))
    grid = tape.rasterize(clip, tris, vp)
    mask = grid.value.mask

    view_dirs = eye[None, :] - verts
    view_dirs = view_dirs / np.linalg.norm(view_dirs, axis=1, keepdims=True)
    refl = tape.reflection_vectors(tape.constant(normals), tape.constant(view_dirs))
    refl_img, drefl = tape.interpolate(refl, tris, grid, want_derivs="all")
    jdir = tape.reshape(drefl, (res, res, 3, 2))
    faces, st, jst = tape.cubemap_address(refl_img, jdir, mask)

    env_v = tape.input("env", env) if watch else tape.constant(env)
    ks_v = tape.input("ks", ks) if watch else tape.constant(ks)
    sh_v = tape.input("shininess", shininess) if watch else tape.constant(shininess)
    g = tape.texture_sample(env_v, st, jst, mask, levels, faces=faces)
    from ..pipeline import shade_phong_highlight
    hl = shade_phong_highlight(tape, refl_img, ks_v, sh_v, light, mask)
    shaded = tape.add(g, hl)
    img = tape.composite_background(shaded, mask, tape.constant(CLEAR))
    out, _ = tape.antialias(img, grid, clip, tris, adj)
    return out


@dataclass
class EnvPhongResult:
    log: ConvergenceLog
    envmap: np.ndarray
    ks: float
    shininess: float

    @property
    def final_param_error(self):
        return self.log.final_metric()


def param_error(ks, shininess):
    return float(abs(ks - TRUE_KS) + abs(shininess - TRUE_SHININESS) / TRUE_SHININESS)


def run_envphong(cfg: ExperimentConfig, progress=None) -> EnvPhongResult:
    rng = np.random.default_rng(cfg.seed)
    out = OutputWriter(cfg)

    verts, tris = bumpy_sphere(3)
    normals = vertex_normals(verts, tris)
    adj = build_edge_adjacency(IndexBuffer(tris))
    geo = (verts.astype(np.float32), tris, normals.astype(np.float32), adj)

    tex_size = cfg.tex_size
    gt_env = ground_truth_envmap(tex_size).astype(np.float32)
    levels = int(np.log2(tex_size)) + 1 if cfg.mipmaps else 1

    env = np.full((6, tex_size, tex_size, 3), 0.5, np.float64)
    ks = float(rng.uniform(0.05, 1.5))
    shininess = float(rng.uniform(4.0, 60.0))
    st_env = AdamState.for_params(env)
    st_ks = AdamState.for_params(np.zeros(()))
    st_sh = AdamState.for_params(np.zeros(()))

    log = ConvergenceLog()
    res = cfg.resolution
    proj = perspective(FOV, 1.0, 0.5, 20.0)
    for it in range(cfg.iterations):
        d = sample_sphere_direction(rng)
        eye = CAMERA_RADIUS * d
        up = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.95 else np.array([1.0, 0.0, 0.0])
        mvp = (proj @ look_at(eye, np.zeros(3), up)).astype(np.float32)
        light = sample_sphere_direction(rng)

        ref_tape = Tape()
        ref = render_phong(ref_tape, gt_env, TRUE_KS, TRUE_SHININESS, mvp, eye,
                           light, geo, res, levels, watch=False).value
        tape = Tape()
        img = render_phong(tape, env.astype(np.float32), ks, shininess, mvp, eye,
                           light, geo, res, levels)
        loss, dimg = l2_image_loss(img.value, ref)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss diverged at iteration {it}")
        grads = tape.backward(img, dimg.astype(np.float32))
        env = adam_step(st_env, env, grads["env"], lam=cfg.lr0)
        ks = float(adam_step(st_ks, np.asarray(ks), grads["ks"], lam=cfg.lr0))
        # exponent moves on a larger scale; same relative step as the paper's
        # fixed learning rate applied in log space would give
        shininess = float(adam_step(st_sh, np.asarray(shininess),
                                    grads["shininess"], lam=cfg.lr0 * 30.0))
        shininess = max(shininess, 1.0)

        if it % 25 == 0 or it == cfg.iterations - 1:
            log.append(it, loss, param_error(ks, shininess))
            if progress:
                progress(it, loss, log.final_metric())
        if out.dir and (it % cfg.snapshot_interval == 0 or it == cfg.iterations - 1):
            out.frame(it, img.value)

    out.log(log)
    if out.dir:
        strip = np.clip(env, 0, 1).transpose(1, 0, 2, 3).reshape(tex_size, 6 * tex_size, 3)
        out.image("texture.png", strip)
    return EnvPhongResult(log, env, ks, shininess)
