"""
Kinect-style corruption of clean depth.

Steps, in order: drop pixels whose surface normal is too oblique to the view
ray, resample at Gaussian-jittered sub-pixel positions, then perturb and
quantize in disparity (k / z) space. Random draws come from
``default_rng([seed, stream])``: the jitter grid first, then the disparity
noise grid.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import UINT16_MAX, DepthFrame, FrameSequence
from .errors import ConfigError
from .registration import CameraRig, backproject

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseConfig:
    sigma_base: float = 0.5
    q_step: float = 0.125
    sigma_s: float = 0.5
    theta_max_deg: float = 80.0
    k_disparity: float = 35130.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_base < 0:
            raise ConfigError(f"noise sigma_base must be >= 0, got {self.sigma_base}")
        if not self.q_step > 0:
            raise ConfigError(f"noise q_step must be positive, got {self.q_step}")
        if self.sigma_s < 0:
            raise ConfigError(f"noise sigma_s must be >= 0, got {self.sigma_s}")
        # 90 disables the dropout entirely
        if not 0 < self.theta_max_deg <= 90:
            raise ConfigError(f"noise theta_max_deg must lie in (0, 90], got {self.theta_max_deg}")
        if not self.k_disparity > 0:
            raise ConfigError(f"noise k_disparity must be positive, got {self.k_disparity}")


def _points(depth: DepthFrame, rig: CameraRig) -> Tuple[np.ndarray, np.ndarray]:
    h, w = depth.shape
    valid = depth.data > 0
    points = np.zeros((h, w, 3))
    ys, xs = np.nonzero(valid)
    if ys.size:
        points[ys, xs] = backproject(xs, ys, depth.data[ys, xs], rig)
    return points, valid


def estimate_normals(depth: DepthFrame, rig: CameraRig) -> Tuple[np.ndarray, np.ndarray]:
    """Unit normals facing the camera, shape (H, W, 3), and their validity mask.

    Border pixels and pixels with a hole among their 4-neighbours are invalid.
    """
    h, w = depth.shape
    points, valid = _points(depth, rig)
    normals = np.zeros((h, w, 3))
    ok = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return normals, ok

    inner = (valid[1:-1, 1:-1] & valid[:-2, 1:-1] & valid[2:, 1:-1]
             & valid[1:-1, :-2] & valid[1:-1, 2:])
    tx = points[1:-1, 2:] - points[1:-1, :-2]
    ty = points[2:, 1:-1] - points[:-2, 1:-1]
    n = np.cross(tx, ty)
    norm = np.linalg.norm(n, axis=-1)
    inner &= norm > 0
    n = n / np.where(norm > 0, norm, 1.0)[..., None]
    facing = np.sum(n * points[1:-1, 1:-1], axis=-1) > 0
    n[facing] = -n[facing]

    normals[1:-1, 1:-1] = np.where(inner[..., None], n, 0.0)
    ok[1:-1, 1:-1] = inner
    return normals, ok


def view_angles(depth: DepthFrame, rig: CameraRig) -> Tuple[np.ndarray, np.ndarray]:
    """Angle in degrees between each normal and the ray back to the camera."""
    normals, ok = estimate_normals(depth, rig)
    points, _ = _points(depth, rig)
    dist = np.linalg.norm(points, axis=-1)
    cos = np.sum(normals * -points, axis=-1) / np.where(dist > 0, dist, 1.0)
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return np.where(ok, angles, 0.0), ok


def _jitter(z: np.ndarray, keep: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Bilinear resample over kept samples only; pixels without a kept corner keep their value."""
    h, w = z.shape
    ys, xs = np.mgrid[0:h, 0:w]
    px = np.clip(xs + dx, 0, w - 1)
    py = np.clip(ys + dy, 0, h - 1)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = px - x0
    ay = py - y0
    corners = (
        (y0, x0, (1 - ax) * (1 - ay)),
        (y0, x1, ax * (1 - ay)),
        (y1, x0, (1 - ax) * ay),
        (y1, x1, ax * ay),
    )
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for cy, cx, weight in corners:
        wk = weight * keep[cy, cx]
        num += wk * z[cy, cx]
        den += wk
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), z)


def corrupt(depth: DepthFrame, rig: CameraRig, cfg: NoiseConfig = NoiseConfig(),
            stream: int = 0) -> DepthFrame:
    h, w = depth.shape
    rng = np.random.default_rng([int(cfg.seed), int(stream)])

    angles, normal_ok = view_angles(depth, rig)
    drop = normal_ok & (angles > cfg.theta_max_deg)
    keep = (depth.data > 0) & ~drop
    z = depth.data.astype(np.float64)

    dx = rng.normal(0.0, cfg.sigma_s, size=(h, w))
    dy = rng.normal(0.0, cfg.sigma_s, size=(h, w))
    if cfg.sigma_s > 0:
        z = _jitter(z, keep, dx, dy)

    noise = rng.normal(0.0, cfg.sigma_base, size=(h, w))
    safe_z = np.where(keep, z, 1.0)
    disparity = cfg.k_disparity / safe_z + noise
    disparity = np.round(disparity / cfg.q_step) * cfg.q_step
    positive = disparity > 0
    noisy = np.where(positive, cfg.k_disparity / np.where(positive, disparity, 1.0), UINT16_MAX)
    noisy = np.clip(np.rint(noisy), 1, UINT16_MAX)

    out = np.where(keep, noisy, 0).astype(np.uint16)
    logger.debug("Corrupted frame (stream %d): %d pixels dropped by normal angle",
                 stream, int(np.count_nonzero(drop & (depth.data > 0))))
    return DepthFrame(out)


def corrupt_sequence(seq: FrameSequence, rig: CameraRig, cfg: NoiseConfig = NoiseConfig()) -> FrameSequence:
    """Corrupt every frame, using the frame index as the random stream."""
    frames = tuple(corrupt(frame, rig, cfg, stream=index)
                   for frame, index in zip(seq.depth, seq.indices))
    return FrameSequence(frames, seq.color, seq.fps, seq.indices)
