"""Deterministic baselines: Chambolle TV denoising, bilateral filtering and FMM+BF."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import DEFAULT_MAX_DEPTH_MM, DepthFrame, NormalizedFrame, denormalize, normalize
from .errors import ConfigError
from .inpaint import inpaint_classic

logger = logging.getLogger(__name__)

TV_STEP = 0.25


@dataclass(frozen=True)
class TVConfig:
    weight: float = 0.4
    max_iters: int = 200
    tol: float = 2e-4

    def __post_init__(self):
        if not self.weight > 0:
            raise ConfigError(f"tv weight must be positive, got {self.weight}")
        if self.max_iters < 1:
            raise ConfigError(f"tv max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise ConfigError(f"tv tol must be >= 0, got {self.tol}")


@dataclass(frozen=True)
class BilateralConfig:
    sigma_s: float = 3.0
    sigma_r: float = 0.05
    radius: int = 7

    def __post_init__(self):
        if not (self.sigma_s > 0 and self.sigma_r > 0 and self.radius > 0):
            raise ConfigError("bilateral sigma_s, sigma_r and radius must be positive")


# ─── Total variation ─────────────────────────────────────────────────────────

def _grad(u: np.ndarray) -> np.ndarray:
    """Forward differences, zero on the last row/column."""
    g = np.zeros((2,) + u.shape)
    g[0, :-1, :] = u[1:, :] - u[:-1, :]
    g[1, :, :-1] = u[:, 1:] - u[:, :-1]
    return g


def _div(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of ``_grad``."""
    d = np.zeros(p.shape[1:])
    d[0, :] += p[0, 0, :]
    d[1:-1, :] += p[0, 1:-1, :] - p[0, :-2, :]
    d[-1, :] -= p[0, -2, :]
    d[:, 0] += p[1, :, 0]
    d[:, 1:-1] += p[1, :, 1:-1] - p[1, :, :-2]
    d[:, -1] -= p[1, :, -2]
    return d


def total_variation(data: np.ndarray) -> float:
    """Isotropic discrete TV with forward differences."""
    g = _grad(np.asarray(data, dtype=np.float64))
    return float(np.sum(np.sqrt(g[0] ** 2 + g[1] ** 2)))


def _nearest_fill(frame: NormalizedFrame) -> np.ndarray:
    if frame.valid.all() or not frame.valid.any():
        return frame.data.copy()
    _, (iy, ix) = ndimage.distance_transform_edt(~frame.valid, return_indices=True)
    return frame.data[iy, ix]


def tv_denoise(frame: NormalizedFrame, cfg: TVConfig = TVConfig()) -> NormalizedFrame:
    """ROF denoising by Chambolle's dual projection; holes stay holes."""
    f = _nearest_fill(frame)
    if f.shape[0] < 2 or f.shape[1] < 2:
        return NormalizedFrame(f, frame.valid)
    lam = cfg.weight
    p = np.zeros((2,) + f.shape)
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        g = _grad(_div(p) - f / lam)
        norm = np.sqrt(g[0] ** 2 + g[1] ** 2)
        p_new = (p + TV_STEP * g) / (1.0 + TV_STEP * norm)
        scale = np.max(np.abs(p_new))
        change = np.max(np.abs(p_new - p)) / scale if scale > 0 else 0.0
        p = p_new
        if change < cfg.tol:
            break
    logger.debug("TV denoising stopped after %d iterations", iterations)
    u = np.clip(f - lam * _div(p), 0.0, 1.0)
    return NormalizedFrame(u, frame.valid)


# ─── Bilateral ───────────────────────────────────────────────────────────────

def bilateral(frame: NormalizedFrame, cfg: BilateralConfig = BilateralConfig()) -> NormalizedFrame:
    """Spatial x range Gaussian average over valid neighbours; holes stay holes."""
    r = cfg.radius
    h, w = frame.shape
    values = np.pad(frame.data, r)
    valid = np.pad(frame.valid, r, constant_values=False)
    center = frame.data
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    two_ss = 2.0 * cfg.sigma_s * cfg.sigma_s
    two_sr = 2.0 * cfg.sigma_r * cfg.sigma_r
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            shifted = values[r + dy:r + dy + h, r + dx:r + dx + w]
            ok = valid[r + dy:r + dy + h, r + dx:r + dx + w]
            diff = shifted - center
            weight = np.exp(-(dy * dy + dx * dx) / two_ss) * np.exp(-(diff * diff) / two_sr) * ok
            num += weight * shifted
            den += weight
    out = np.where(frame.valid & (den > 0), num / np.where(den > 0, den, 1.0), 0.0)
    return NormalizedFrame(out, frame.valid)


# ─── Composed baselines ──────────────────────────────────────────────────────

def fmm_bf(depth: DepthFrame, fmm_radius: int = 5, bf_cfg: BilateralConfig = BilateralConfig(),
           max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> DepthFrame:
    """Telea inpainting followed by bilateral filtering, in millimetres."""
    filled = inpaint_classic(depth, fmm_radius)
    smoothed = bilateral(normalize(filled, max_depth_mm), bf_cfg)
    return denormalize(smoothed, max_depth_mm)


def tv_restore(depth: DepthFrame, cfg: TVConfig = TVConfig(),
               max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> DepthFrame:
    return denormalize(tv_denoise(normalize(depth, max_depth_mm), cfg), max_depth_mm)
