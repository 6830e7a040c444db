"""
RGB-D registration: map valid depth pixels into the colour camera and resample
the colour image onto the depth grid, then smooth over the pixels no depth
sample reached.

Chain per pixel: backproject with the depth intrinsics, move into the colour
camera frame with R^-1 (X - T), perspective-project with the colour
intrinsics. No z-buffer: two depth pixels may sample the same colour pixel.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .core import ColorFrame, DepthFrame
from .errors import ConfigError, DataError, DimensionError

logger = logging.getLogger(__name__)

DEFAULT_EPS_Z = 1.0
# Round-trip bound (depth px) once projected colour coordinates are stored as float32;
# all transforms themselves run in float64.
FLOAT32_ROUND_TRIP_PX = 1e-4
# Projections this close outside the image still count as inside (rounding of the identity chain).
_BOUNDS_TOL = 1e-6


@dataclass(frozen=True)
class CameraRig:
    fd: Tuple[float, float]
    cd: Tuple[float, float]
    frgb: Tuple[float, float]
    crgb: Tuple[float, float]
    R: np.ndarray
    T: np.ndarray
    depth_size: Tuple[int, int]   # (width, height)
    rgb_size: Tuple[int, int]     # (width, height)

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ConfigError("rotation matrix R must be orthonormal with det(R) = 1")
        if min(self.fd) <= 0 or min(self.frgb) <= 0:
            raise ConfigError("focal lengths must be strictly positive")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, 'R', R)
        object.__setattr__(self, 'T', T)
        object.__setattr__(self, 'fd', tuple(float(v) for v in self.fd))
        object.__setattr__(self, 'cd', tuple(float(v) for v in self.cd))
        object.__setattr__(self, 'frgb', tuple(float(v) for v in self.frgb))
        object.__setattr__(self, 'crgb', tuple(float(v) for v in self.crgb))
        object.__setattr__(self, 'depth_size', tuple(int(v) for v in self.depth_size))
        object.__setattr__(self, 'rgb_size', tuple(int(v) for v in self.rgb_size))

    @property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @classmethod
    def identity(cls, width: int, height: int, focal: Optional[float] = None) -> 'CameraRig':
        """Coincident cameras with equal intrinsics and resolution."""
        f = float(focal if focal is not None else max(width, height))
        c = ((width - 1) / 2.0, (height - 1) / 2.0)
        return cls((f, f), c, (f, f), c, np.eye(3), np.zeros(3), (width, height), (width, height))


@dataclass(frozen=True)
class RegisteredColor:
    """Colour on the depth grid; ``coverage`` is True where colour came from projection."""
    color: ColorFrame
    coverage: np.ndarray

    def __post_init__(self):
        coverage = np.asarray(self.coverage, dtype=bool)
        if coverage.shape != self.color.data.shape[:2]:
            raise DimensionError("coverage mask must match the registered colour dimensions")
        coverage = coverage.copy()
        coverage.setflags(write=False)
        object.__setattr__(self, 'coverage', coverage)


@dataclass(frozen=True)
class FillConfig:
    blur_size: int = 5
    blur_passes: int = 2

    def __post_init__(self):
        if self.blur_size < 1 or self.blur_passes < 0:
            raise ConfigError("blur_size must be >= 1 and blur_passes >= 0")


# ─── Rig file ────────────────────────────────────────────────────────────────

_RIG_KEYS = {
    'fd_x': 1, 'fd_y': 1, 'cd_x': 1, 'cd_y': 1,
    'frgb_x': 1, 'frgb_y': 1, 'crgb_x': 1, 'crgb_y': 1,
    'R': 9, 'T': 3,
    'depth_w': 1, 'depth_h': 1, 'rgb_w': 1, 'rgb_h': 1,
}


def load_rig(path) -> CameraRig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"rig file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split('=', 1))
        if key not in _RIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown rig key '{key}'")
        try:
            numbers = [float(v) for v in raw.replace(',', ' ').split()]
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-numeric value for '{key}'")
        if len(numbers) != _RIG_KEYS[key]:
            raise ConfigError(f"{path}:{lineno}: '{key}' needs {_RIG_KEYS[key]} values, got {len(numbers)}")
        values[key] = numbers
    missing = sorted(set(_RIG_KEYS) - set(values))
    if missing:
        raise ConfigError(f"{path}: missing rig keys {', '.join(missing)}")
    v = {k: (n[0] if len(n) == 1 else n) for k, n in values.items()}
    return CameraRig(
        fd=(v['fd_x'], v['fd_y']), cd=(v['cd_x'], v['cd_y']),
        frgb=(v['frgb_x'], v['frgb_y']), crgb=(v['crgb_x'], v['crgb_y']),
        R=np.array(v['R']).reshape(3, 3), T=np.array(v['T']),
        depth_size=(int(v['depth_w']), int(v['depth_h'])),
        rgb_size=(int(v['rgb_w']), int(v['rgb_h'])),
    )


def save_rig(rig: CameraRig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = lambda arr: ' '.join(repr(float(x)) for x in np.ravel(arr))
    lines = [
        f"fd_x = {rig.fd[0]!r}", f"fd_y = {rig.fd[1]!r}",
        f"cd_x = {rig.cd[0]!r}", f"cd_y = {rig.cd[1]!r}",
        f"frgb_x = {rig.frgb[0]!r}", f"frgb_y = {rig.frgb[1]!r}",
        f"crgb_x = {rig.crgb[0]!r}", f"crgb_y = {rig.crgb[1]!r}",
        f"R = {fmt(rig.R)}", f"T = {fmt(rig.T)}",
        f"depth_w = {rig.depth_size[0]}", f"depth_h = {rig.depth_size[1]}",
        f"rgb_w = {rig.rgb_size[0]}", f"rgb_h = {rig.rgb_size[1]}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


# ─── Point transforms (scalar or array arguments broadcast) ─────────────────

def backproject(x_d, y_d, z_d, rig: CameraRig) -> np.ndarray:
    """Depth pixel + depth (mm) -> 3-D point in the depth camera, last axis xyz."""
    z = np.asarray(z_d, dtype=np.float64)
    if np.any(z <= 0):
        raise DataError("backprojection needs strictly positive depth")
    x = (np.asarray(x_d, dtype=np.float64) - rig.cd[0]) * z / rig.fd[0]
    y = (np.asarray(y_d, dtype=np.float64) - rig.cd[1]) * z / rig.fd[1]
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def to_rgb_camera(points_d, rig: CameraRig) -> np.ndarray:
    """X'_rgb = R^-1 (X'_d - T), points along the last axis."""
    points = np.asarray(points_d, dtype=np.float64)
    return (points - rig.T) @ rig.R_inv.T


def from_rgb_camera(points_rgb, rig: CameraRig) -> np.ndarray:
    """Forward extrinsics X'_d = R X'_rgb + T."""
    return np.asarray(points_rgb, dtype=np.float64) @ rig.R.T + rig.T


def project_points(points_rgb, rig: CameraRig, eps_z: float = DEFAULT_EPS_Z):
    """Vectorised projection; returns (x_rgb, y_rgb, z_rgb, ok) with ok False when z <= eps_z."""
    points = np.asarray(points_rgb, dtype=np.float64)
    z = points[..., 2]
    ok = z > eps_z
    safe_z = np.where(ok, z, 1.0)
    x = points[..., 0] * rig.frgb[0] / safe_z + rig.crgb[0]
    y = points[..., 1] * rig.frgb[1] / safe_z + rig.crgb[1]
    return x, y, z, ok


def project_rgb(point_rgb, rig: CameraRig, eps_z: float = DEFAULT_EPS_Z):
    """Single point: (x_rgb, y_rgb, z_rgb), or None when z_rgb <= eps_z (point discarded)."""
    x, y, z, ok = project_points(np.asarray(point_rgb, dtype=np.float64).reshape(3), rig, eps_z)
    if not bool(ok):
        return None
    return float(x), float(y), float(z)


def projected_coordinates(depth: DepthFrame, rig: CameraRig, eps_z: float = DEFAULT_EPS_Z):
    """Continuous colour-image position of every depth pixel, and the coverage mask."""
    h, w = depth.shape
    u = np.full((h, w), np.nan)
    v = np.full((h, w), np.nan)
    valid = depth.data > 0
    ys, xs = np.nonzero(valid)
    coverage = np.zeros((h, w), dtype=bool)
    if ys.size == 0:
        return u, v, coverage
    points = to_rgb_camera(backproject(xs, ys, depth.data[ys, xs], rig), rig)
    px, py, _, ok = project_points(points, rig, eps_z)
    u[ys, xs] = np.where(ok, px, np.nan)
    v[ys, xs] = np.where(ok, py, np.nan)
    w_rgb, h_rgb = rig.rgb_size
    tol = _BOUNDS_TOL
    inside = ok & (px >= -tol) & (px <= w_rgb - 1 + tol) & (py >= -tol) & (py <= h_rgb - 1 + tol)
    coverage[ys[inside], xs[inside]] = True
    return u, v, coverage


def _bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (x - x0)[:, None]
    ay = (y - y0)[:, None]
    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - ax) + img[y0, x1] * ax
    bottom = img[y1, x0] * (1 - ax) + img[y1, x1] * ax
    return top * (1 - ay) + bottom * ay


# ─── Registered colour ───────────────────────────────────────────────────────

def build_registered_color(depth: DepthFrame, color: ColorFrame, rig: CameraRig,
                           fill: FillConfig = FillConfig(),
                           eps_z: float = DEFAULT_EPS_Z) -> RegisteredColor:
    if (depth.width, depth.height) != rig.depth_size:
        raise DimensionError(f"depth frame {depth.width}x{depth.height} does not match rig "
                             f"depth resolution {rig.depth_size[0]}x{rig.depth_size[1]}")
    if (color.width, color.height) != rig.rgb_size:
        raise DimensionError(f"colour frame {color.width}x{color.height} does not match rig "
                             f"colour resolution {rig.rgb_size[0]}x{rig.rgb_size[1]}")
    u, v, coverage = projected_coordinates(depth, rig, eps_z)
    out = np.zeros((depth.height, depth.width, 3), dtype=np.uint8)
    ys, xs = np.nonzero(coverage)
    if ys.size:
        sampled = _bilinear(color.data, u[ys, xs], v[ys, xs])
        out[ys, xs] = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    else:
        mean = np.rint(color.data.reshape(-1, 3).mean(axis=0)).astype(np.uint8)
        logger.warning("No depth pixel projects into the colour image; using the mean colour")
        out[:] = mean
        return RegisteredColor(ColorFrame(out), coverage)
    registered = RegisteredColor(ColorFrame(out), coverage)
    if coverage.all():
        return registered
    return fill_color_holes(registered, fill)


def fill_color_holes(rc: RegisteredColor, cfg: FillConfig = FillConfig()) -> RegisteredColor:
    """Nearest covered pixel, then box blur over the uncovered pixels only."""
    covered = rc.coverage
    if not covered.any():
        raise DataError("registered colour has no covered pixel to interpolate from")
    if covered.all():
        return rc
    _, (iy, ix) = ndimage.distance_transform_edt(~covered, return_indices=True)
    filled = rc.color.data[iy, ix].astype(np.float64)
    uncovered = ~covered
    for _ in range(cfg.blur_passes):
        blurred = ndimage.uniform_filter(filled, size=(cfg.blur_size, cfg.blur_size, 1), mode='nearest')
        filled[uncovered] = blurred[uncovered]
    out = np.clip(np.rint(filled), 0, 255).astype(np.uint8)
    out[covered] = rc.color.data[covered]
    return RegisteredColor(ColorFrame(out), covered)
