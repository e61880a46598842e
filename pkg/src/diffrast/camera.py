"""Camera matrices (right-handed, OpenGL-style clip space)."""

import numpy as np


def perspective(fov_y_deg: float, aspect: float = 1.0, near: float = 0.1,
                far: float = 100.0) -> np.ndarray:
    f = 1.0 / np.tan(np.radians(fov_y_deg) * 0.5)
    m = np.zeros((4, 4))
    m[0, 0] = f / aspect
    m[1, 1] = f
    m[2, 2] = (far + near) / (near - far)
    m[2, 3] = 2.0 * far * near / (near - far)
    m[3, 2] = -1.0
    return m


def look_at(eye, center, up) -> np.ndarray:
    eye = np.asarray(eye, np.float64)
    fwd = np.asarray(center, np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, np.float64))
    right = right / np.linalg.norm(right)
    up2 = np.cross(right, fwd)
    m = np.eye(4)
    m[0, :3] = right
    m[1, :3] = up2
    m[2, :3] = -fwd
    m[:3, 3] = -m[:3, :3] @ eye
    return m


def rotation_from_quat(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a 4x4 rotation matrix."""
    w, x, y, z = q
    m = np.eye(4)
    m[0, 0] = 1 - 2 * (y * y + z * z)
    m[0, 1] = 2 * (x * y - w * z)
    m[0, 2] = 2 * (x * z + w * y)
    m[1, 0] = 2 * (x * y + w * z)
    m[1, 1] = 1 - 2 * (x * x + z * z)
    m[1, 2] = 2 * (y * z - w * x)
    m[2, 0] = 2 * (x * z - w * y)
    m[2, 1] = 2 * (y * z + w * x)
    m[2, 2] = 1 - 2 * (x * x + y * y)
    return m


def rotation_from_quat_backward(q, dm) -> np.ndarray:
    """Gradient of ``rotation_from_quat`` contracted with dL/dM (4x4)."""
    w, x, y, z = q
    d = dm
    gw = (-2 * z * d[0, 1] + 2 * y * d[0, 2]
          + 2 * z * d[1, 0] - 2 * x * d[1, 2]
          - 2 * y * d[2, 0] + 2 * x * d[2, 1])
    gx = (2 * y * d[0, 1] + 2 * z * d[0, 2]
          + 2 * y * d[1, 0] - 4 * x * d[1, 1] - 2 * w * d[1, 2]
          + 2 * z * d[2, 0] + 2 * w * d[2, 1] - 4 * x * d[2, 2])
    gy = (-4 * y * d[0, 0] + 2 * x * d[0, 1] + 2 * w * d[0, 2]
          + 2 * x * d[1, 0] + 2 * z * d[1, 2]
          - 2 * w * d[2, 0] + 2 * z * d[2, 1] - 4 * y * d[2, 2])
    gz = (-4 * z * d[0, 0] - 2 * w * d[0, 1] + 2 * x * d[0, 2]
          + 2 * w * d[1, 0] - 4 * z * d[1, 1] + 2 * y * d[1, 2]
          + 2 * x * d[2, 0] + 2 * y * d[2, 1])
    return np.array([gw, gx, gy, gz])


def sample_sphere_direction(rng) -> np.ndarray:
    """Uniform direction on the unit sphere."""
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def random_viewpoint(rng, radius: float, fov_y_deg: float = 45.0,
                     near: float = 0.1, far: float = 100.0,
                     up_jitter: float = 0.2):
    """Random look-at-origin camera on a sphere of the given radius.

    Returns (mvp 4x4, eye).  The up vector is jittered to randomize roll.
    """
    d = sample_sphere_direction(rng)
    eye = radius * d
    up = np.array([0.0, 1.0, 0.0])
    if abs(d[1]) > 0.95:
        up = np.array([1.0, 0.0, 0.0])
    up = up + up_jitter * rng.standard_normal(3)
    up = up / np.linalg.norm(up)
    if np.linalg.norm(np.cross(-d, up)) < 1e-6:
        up = np.array([0.0, 0.0, 1.0])
    view = look_at(eye, np.zeros(3), up)
    proj = perspective(fov_y_deg, 1.0, near, far)
    return proj @ view, eye
