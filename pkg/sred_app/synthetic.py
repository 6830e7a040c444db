"""Synthetic planar scenes with matching colour, for benchmarks and fixtures."""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import UINT16_MAX, ColorFrame, DepthFrame, FrameSequence
from .errors import ConfigError
from .registration import CameraRig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneConfig:
    width: int = 64
    height: int = 64
    frames: int = 60
    boxes: int = 3
    near_mm: float = 1000.0
    far_mm: float = 4000.0
    drift_px: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.frames < 1:
            raise ConfigError("scene width, height and frames must be >= 1")
        if not 0 < self.near_mm < self.far_mm <= UINT16_MAX:
            raise ConfigError("scene depth range must satisfy 0 < near < far <= 65535")


def plane_depth(rig: CameraRig, normal: Sequence[float], distance_mm: float) -> DepthFrame:
    """Depth of the plane n . X = distance seen by the depth camera of ``rig``.

    Pixels whose ray misses the plane (or hits it behind the camera) are holes.
    """
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    w, h = rig.depth_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rx = (xs - rig.cd[0]) / rig.fd[0]
    ry = (ys - rig.cd[1]) / rig.fd[1]
    denom = n[0] * rx + n[1] * ry + n[2]
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(np.abs(denom) > 1e-12, distance_mm / denom, 0.0)
    z = np.where((z >= 1) & (z <= UINT16_MAX), z, 0.0)
    return DepthFrame(np.rint(z).astype(np.uint16))


def _background(cfg: SceneConfig) -> np.ndarray:
    rows = np.linspace(0.0, 1.0, cfg.height)[:, None]
    cols = np.linspace(0.0, 1.0, cfg.width)[None, :]
    mid = 0.5 * (cfg.near_mm + cfg.far_mm)
    return cfg.far_mm - (cfg.far_mm - mid) * (0.7 * rows + 0.3 * cols)


def _shade(depth_mm: np.ndarray, cfg: SceneConfig) -> np.ndarray:
    level = 1.0 - (depth_mm - cfg.near_mm) / (cfg.far_mm - cfg.near_mm)
    return np.clip(60 + 160 * level, 0, 255)


def synthetic_sequence(cfg: SceneConfig = SceneConfig()) -> FrameSequence:
    """Tilted background plane plus fronto-parallel boxes, optionally drifting sideways."""
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    mid = 0.5 * (cfg.near_mm + cfg.far_mm)
    boxes = []
    for _ in range(cfg.boxes):
        bw = int(rng.integers(max(1, w // 6), max(2, w // 3) + 1))
        bh = int(rng.integers(max(1, h // 6), max(2, h // 3) + 1))
        x0 = float(rng.integers(0, max(1, w - bw)))
        y0 = int(rng.integers(0, max(1, h - bh)))
        z = float(rng.uniform(cfg.near_mm, mid))
        rgb = rng.integers(30, 226, size=3)
        boxes.append((x0, y0, bw, bh, z, rgb))
    boxes.sort(key=lambda b: -b[4])

    background = _background(cfg)
    depth_frames, color_frames = [], []
    for t in range(cfg.frames):
        depth = background.copy()
        shade = _shade(depth, cfg)
        color = np.stack([shade, 0.8 * shade, 0.6 * shade], axis=-1)
        for x0, y0, bw, bh, z, rgb in boxes:
            x = int(round(x0 + cfg.drift_px * t)) % w
            xs = (np.arange(x, x + bw) % w)
            depth[y0:y0 + bh][:, xs] = z
            color[y0:y0 + bh][:, xs] = rgb
        depth_frames.append(DepthFrame(np.rint(depth).astype(np.uint16)))
        color_frames.append(ColorFrame(color))
    logger.debug("Generated synthetic sequence %dx%d, %d frames", w, h, cfg.frames)
    return FrameSequence(tuple(depth_frames), tuple(color_frames))


def synthetic_rig(cfg: SceneConfig = SceneConfig()) -> CameraRig:
    return CameraRig.identity(cfg.width, cfg.height)
