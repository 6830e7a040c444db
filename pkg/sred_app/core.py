"""
Domain types shared by every module: depth/colour frames, normalized network
frames, frame sequences and the sliding training windows.

Depth is 16-bit millimetres with 0 reserved for holes. Frames are immutable
numpy-backed dataclasses; arrays are stored read-only.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from .errors import ConfigError, DataError, DimensionError, FormatError

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH_MM = 8000.0
UINT16_MAX = 65535

MODE_SRED = 'sred'
MODE_N2N = 'n2n_single'
MODE_N2STACK = 'n2stack_adjacent'
MODES = (MODE_SRED, MODE_N2N, MODE_N2STACK)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ─── Frames ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DepthFrame:
    """Depth samples in millimetres, shape (height, width), 0 = hole."""
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"depth frame must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.uint16:
            if arr.size and (np.nanmin(arr) < 0 or np.nanmax(arr) > UINT16_MAX):
                raise DataError("depth values must lie in [0, 65535]")
            arr = np.rint(arr).astype(np.uint16)
        else:
            arr = arr.copy()
        object.__setattr__(self, 'data', _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def hole_mask(self) -> np.ndarray:
        return self.data == 0

    def hole_count(self) -> int:
        return int(np.count_nonzero(self.data == 0))


@dataclass(frozen=True)
class ColorFrame:
    """8-bit colour, shape (height, width, 3), RGB channel order."""
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"colour frame must be (H, W, 3), got shape {arr.shape}")
        if arr.dtype != np.uint8:
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        else:
            arr = arr.copy()
        object.__setattr__(self, 'data', _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class NormalizedFrame:
    """Depth scaled to [0, 1]; ``valid`` is False exactly on source holes."""
    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if data.ndim != 2 or data.shape != valid.shape:
            raise DimensionError(
                f"normalized data {data.shape} and mask {valid.shape} must be equal 2-D shapes")
        data = np.where(valid, data, 0.0)
        object.__setattr__(self, 'data', _frozen(data))
        object.__setattr__(self, 'valid', _frozen(valid.copy()))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @classmethod
    def from_array(cls, values: np.ndarray) -> 'NormalizedFrame':
        """Clip to [0, 1]; non-positive values become holes."""
        values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
        return cls(values, values > 0.0)


@dataclass(frozen=True)
class FrameSequence:
    depth: Tuple[DepthFrame, ...]
    color: Tuple[Optional[ColorFrame], ...] = ()
    fps: float = 30.0
    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        depth = tuple(self.depth)
        color = tuple(self.color) if self.color else (None,) * len(depth)
        indices = tuple(self.indices) if self.indices else tuple(range(len(depth)))
        if len(color) != len(depth) or len(indices) != len(depth):
            raise DataError("depth, colour and index lists must have equal length")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DataError("frame indices must be strictly ascending")
        if depth:
            shape = depth[0].shape
            if any(f.shape != shape for f in depth):
                raise DimensionError("all depth frames of a sequence must share dimensions")
            color_shapes = {c.data.shape for c in color if c is not None}
            if len(color_shapes) > 1:
                raise DimensionError("all colour frames of a sequence must share dimensions")
        object.__setattr__(self, 'depth', depth)
        object.__setattr__(self, 'color', color)
        object.__setattr__(self, 'indices', indices)

    def __len__(self) -> int:
        return len(self.depth)

    def has_color(self, position: int) -> bool:
        return self.color[position] is not None


@dataclass(frozen=True)
class TrainingSample:
    """Positions into a sequence: the network inputs and the target frame."""
    inputs: Tuple[int, ...]
    target: int
    sequence: int = 0


# ─── Frame I/O ────────────────────────────────────────────────────────────────

def _read_unchanged(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"cannot decode image: {path}")
    return img


def load_depth_png(path) -> DepthFrame:
    img = _read_unchanged(path)
    channels = 1 if img.ndim == 2 else img.shape[2]
    if channels != 1:
        raise FormatError(f"{path}: channel count {channels}, expected 1")
    if img.dtype != np.uint16:
        bits = img.dtype.itemsize * 8
        raise FormatError(f"{path}: bit depth {bits}, expected 16")
    return DepthFrame(img)


def save_depth_png(frame: DepthFrame, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(frame.data)):
        raise DataError(f"failed to write {path}")


def load_color_png(path) -> ColorFrame:
    img = _read_unchanged(path)
    if img.ndim != 3 or img.shape[2] != 3:
        channels = 1 if img.ndim == 2 else img.shape[2]
        raise FormatError(f"{path}: channel count {channels}, expected 3")
    if img.dtype != np.uint8:
        raise FormatError(f"{path}: bit depth {img.dtype.itemsize * 8}, expected 8")
    return ColorFrame(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))


def save_color_png(frame: ColorFrame, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(np.ascontiguousarray(frame.data), cv2.COLOR_RGB2BGR)):
        raise DataError(f"failed to write {path}")


def save_mask_png(mask: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.where(mask, 255, 0).astype(np.uint8)):
        raise DataError(f"failed to write {path}")


# ─── Sequence manifest ───────────────────────────────────────────────────────

@dataclass
class ManifestEntry:
    index: int
    depth_path: Path
    color_path: Optional[Path] = None


def read_manifest(path) -> List[ManifestEntry]:
    """Parse ``index depth_path [color_path]`` lines; paths relative to the manifest."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise FormatError(f"{path}:{lineno}: expected 'index depth [color]'")
        try:
            index = int(parts[0])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: frame index '{parts[0]}' is not an integer")
        depth_path = base / parts[1]
        color_path = base / parts[2] if len(parts) == 3 else None
        entries.append(ManifestEntry(index, depth_path, color_path))
    if any(b.index <= a.index for a, b in zip(entries, entries[1:])):
        raise FormatError(f"{path}: frame indices must be strictly ascending")
    return entries


def load_manifest(path, with_color: bool = True) -> FrameSequence:
    entries = read_manifest(path)
    if not entries:
        raise DataError(f"manifest {path} lists no frames")
    depth = [load_depth_png(e.depth_path) for e in entries]
    color = [load_color_png(e.color_path) if with_color and e.color_path else None
             for e in entries]
    logger.info("Loaded %d frames from %s", len(depth), path)
    return FrameSequence(tuple(depth), tuple(color), indices=tuple(e.index for e in entries))


def write_manifest(path, rows: Sequence[Tuple[int, str, Optional[str]]], seed: Optional[int] = None) -> Path:
    """Write manifest lines; ``rows`` hold paths relative to the manifest directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [] if seed is None else [f"# seed: {seed}"]
    for index, depth_rel, color_rel in rows:
        lines.append(f"{index} {depth_rel}" + (f" {color_rel}" if color_rel else ""))
    path.write_text("\n".join(lines) + "\n")
    return path


def save_manifest(seq: FrameSequence, directory, name: str = 'manifest.txt',
                  prefix: str = 'depth', seed: Optional[int] = None) -> Path:
    """Write every frame of ``seq`` as PNG next to a manifest describing them."""
    directory = Path(directory)
    rows = []
    for pos, index in enumerate(seq.indices):
        depth_rel = f"{prefix}_{index:06d}.png"
        save_depth_png(seq.depth[pos], directory / depth_rel)
        color_rel = None
        if seq.color[pos] is not None:
            color_rel = f"color_{index:06d}.png"
            save_color_png(seq.color[pos], directory / color_rel)
        rows.append((index, depth_rel, color_rel))
    return write_manifest(directory / name, rows, seed=seed)


# ─── Normalization ───────────────────────────────────────────────────────────

def _check_max_depth(max_depth_mm: float) -> None:
    if not max_depth_mm > 0:
        raise ConfigError(f"max_depth_mm must be positive, got {max_depth_mm}")


def normalize(frame: DepthFrame, max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> NormalizedFrame:
    _check_max_depth(max_depth_mm)
    valid = frame.data > 0
    values = np.minimum(frame.data.astype(np.float64) / max_depth_mm, 1.0)
    return NormalizedFrame(values, valid)


def denormalize(frame: NormalizedFrame, max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> DepthFrame:
    _check_max_depth(max_depth_mm)
    values = np.clip(np.rint(frame.data * max_depth_mm), 0, UINT16_MAX)
    return DepthFrame(np.where(frame.valid, values, 0).astype(np.uint16))


# ─── Training windows ────────────────────────────────────────────────────────

# (input offsets relative to t, target offset relative to t)
_WINDOWS = {
    MODE_SRED: ((-4, -2, 0), -1),
    MODE_N2STACK: ((-3, -2, -1), 0),
    MODE_N2N: ((-1,), 0),
}


def variant_samples(length: int, mode: str = MODE_SRED, sequence: int = 0) -> List[TrainingSample]:
    if mode not in _WINDOWS:
        raise ConfigError(f"unknown training mode '{mode}', expected one of {MODES}")
    offsets, target = _WINDOWS[mode]
    first = -min(offsets + (target,))
    if length < first + 1:
        raise DataError(f"sequence of {length} frames is too short for mode '{mode}' "
                        f"(needs at least {first + 1})")
    return [TrainingSample(tuple(t + o for o in offsets), t + target, sequence)
            for t in range(first, length)]


def window_training_samples(seq, sequence: int = 0) -> List[TrainingSample]:
    """Dilated windows: inputs (t-4, t-2, t), target t-1, for t in [4, len-1]."""
    length = seq if isinstance(seq, int) else len(seq)
    return variant_samples(length, MODE_SRED, sequence)


def split_samples(samples: Sequence[TrainingSample], val_split: float = 0.1,
                  test_split: float = 0.04, seed: int = 0):
    """Shuffle with a seeded generator, then cut validation and test sets off the front."""
    for name, value in (('val_split', val_split), ('test_split', test_split)):
        if not 0.0 < value < 1.0:
            raise ConfigError(f"{name} must lie in (0, 1), got {value}")
    order = np.random.default_rng(seed).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    n_val = int(len(shuffled) * val_split)
    n_test = int(len(shuffled) * test_split)
    val = shuffled[:n_val]
    test = shuffled[n_val:n_val + n_test]
    train = shuffled[n_val + n_test:]
    if not train:
        raise DataError("no training samples remain after the validation/test split")
    return train, val, test
