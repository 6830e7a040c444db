"""
U-Net style residual denoiser, its self-supervised training loop and inference.

The network predicts a correction that is subtracted from the newest input
frame: ``d_pred = d_t - last(x)``. Inputs are normalized depth frames stacked
along the channel axis (3 for the temporal modes, 1 for single-frame mode);
frames are reflect-padded to a multiple of 32 and cropped back.
"""
import copy
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from .core import (DEFAULT_MAX_DEPTH_MM, MODE_N2N, MODE_N2STACK, MODE_SRED, MODES, UINT16_MAX,
                   DepthFrame, FrameSequence, TrainingSample, normalize, split_samples,
                   variant_samples)
from .errors import ConfigError, DataError, DimensionError, FormatError, NumericError
from .inpaint import InpaintConfig, inpaint_guided
from .registration import DEFAULT_EPS_Z, CameraRig, FillConfig, build_registered_color

logger = logging.getLogger(__name__)

DEFAULT_FILTERS = (32, 32, 48, 48, 64, 128)
WEIGHTS_MAGIC = b'SREDW1'

MODE_CHANNELS = {
    MODE_SRED: 3,
    MODE_N2STACK: 3,
    MODE_N2N: 1,
}


@dataclass(frozen=True)
class NetworkConfig:
    filters: Tuple[int, ...] = DEFAULT_FILTERS
    in_channels: int = 3
    kernel_size: int = 3
    down_blocks: int = 5
    up_blocks: int = 5

    def __post_init__(self):
        object.__setattr__(self, 'filters', tuple(int(f) for f in self.filters))
        if self.down_blocks < 1:
            raise ConfigError(f"at least one down block is required, got {self.down_blocks}")
        if self.up_blocks != self.down_blocks:
            raise ConfigError("up and down block counts must match")
        if len(self.filters) != self.down_blocks + 1:
            raise ConfigError(f"filter table needs {self.down_blocks + 1} entries, "
                              f"got {len(self.filters)}")
        if any(f < 1 for f in self.filters):
            raise ConfigError("filter counts must be positive")
        if self.in_channels < 1:
            raise ConfigError("in_channels must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be a positive odd number")

    @classmethod
    def for_mode(cls, mode: str, **kwargs) -> 'NetworkConfig':
        if mode not in MODE_CHANNELS:
            raise ConfigError(f"unknown training mode '{mode}', expected one of {MODES}")
        return cls(in_channels=MODE_CHANNELS[mode], **kwargs)

    @property
    def pad_multiple(self) -> int:
        return 2 ** self.down_blocks


# ─── Network ─────────────────────────────────────────────────────────────────

def _conv(cin: int, cout: int, k: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2)


def _up(cin: int, cout: int, k: int) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(cin, cout, k, stride=2, padding=k // 2, output_padding=1)


class DenoiserModel(nn.Module):
    """First block, 5 stride-2 down blocks, 5 transposed-conv up blocks, last block.

    Skips: Up i (i < 5) consumes Up i+1's output concatenated with Down i's
    output; the last block consumes Up 1 concatenated with the first block.
    """

    def __init__(self, cfg: NetworkConfig = NetworkConfig()):
        super().__init__()
        self.cfg = cfg
        f, k, n = cfg.filters, cfg.kernel_size, cfg.down_blocks
        relu = lambda: nn.ReLU(inplace=True)  # noqa: E731

        self.first = nn.Sequential(_conv(cfg.in_channels, f[0], k), relu(),
                                   _conv(f[0], f[0], k), relu())
        self.down = nn.ModuleList(
            nn.Sequential(_conv(f[i - 1], f[i], k, stride=2), relu(), _conv(f[i], f[i], k), relu())
            for i in range(1, n + 1))
        up = []
        for i in range(1, n + 1):
            cin = f[n] if i == n else f[i + 1] + f[i]
            up.append(nn.Sequential(_conv(cin, f[i], k), relu(), _conv(f[i], f[i], k), relu(),
                                    _up(f[i], f[i], k), relu()))
        self.up = nn.ModuleList(up)
        self.last = nn.Sequential(_conv(f[1] + f[0], f[0], k), relu(),
                                  _conv(f[0], f[0], k), relu(),
                                  _conv(f[0], 1, k))

    def reset_params(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_normal_(m.weight, nonlinearity='relu')
                nn.init.zeros_(m.bias)
        nn.init.kaiming_normal_(self.last[-1].weight, nonlinearity='linear')

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.cfg.in_channels:
            raise DimensionError(f"expected input (N, {self.cfg.in_channels}, H, W), "
                                 f"got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        m = self.cfg.pad_multiple
        ph, pw = (-h) % m, (-w) % m
        xp = x
        if ph or pw:
            mode = 'reflect' if ph < h and pw < w else 'replicate'
            xp = F.pad(x, (0, pw, 0, ph), mode=mode)

        skips = [self.first(xp)]
        for block in self.down:
            skips.append(block(skips[-1]))
        n = len(self.down)
        y = self.up[n - 1](skips[n])
        for i in range(n - 1, 0, -1):
            y = self.up[i - 1](torch.cat([y, skips[i]], dim=1))
        last = self.last(torch.cat([y, skips[0]], dim=1))
        return x[:, -1:] - last[..., :h, :w]


def build_model(cfg: NetworkConfig = NetworkConfig(), seed: int = 0) -> DenoiserModel:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = DenoiserModel(cfg)
        model.reset_params()
    return model


def forward(model: DenoiserModel, frames: torch.Tensor) -> torch.Tensor:
    """Run the network on stacked normalized frames, (C, H, W) or (N, C, H, W)."""
    if frames.dim() == 3:
        return model(frames.unsqueeze(0))[0]
    return model(frames)


def filter_count(model: DenoiserModel) -> int:
    """Number of kernel-sized filters (output channels of every conv layer)."""
    k = model.cfg.kernel_size
    total = 0
    for m in model.modules():
        if isinstance(m, nn.Conv2d) and m.kernel_size == (k, k):
            total += m.out_channels
        elif isinstance(m, nn.ConvTranspose2d) and m.kernel_size == (k, k):
            total += m.out_channels
    return total


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def filter_evaluations_per_pixel(cfg: NetworkConfig = NetworkConfig()) -> float:
    """Filter applications per input pixel: 1 + 4 F0 + 5 sum(F_i 4^-i)."""
    f = cfg.filters
    return 1 + 4 * f[0] + 5 * sum(f[i] * 2.0 ** (-2 * i) for i in range(1, cfg.down_blocks + 1))


def masked_l1(pred: torch.Tensor, target: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Mean |pred - target| over valid target pixels; 0 when nothing is valid."""
    valid = valid.to(pred.dtype)
    count = valid.sum()
    total = ((pred - target).abs() * valid).sum()
    return total / count.clamp(min=1.0)


# ─── Weight file ─────────────────────────────────────────────────────────────

def _u32(*values) -> bytes:
    return np.asarray(values, dtype='<u4').tobytes()


def save_weights(model: DenoiserModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = model.cfg
    state = model.state_dict()
    chunks = [WEIGHTS_MAGIC, _u32(len(cfg.filters), *cfg.filters),
              _u32(cfg.in_channels), _u32(cfg.kernel_size), _u32(len(state))]
    for tensor in state.values():
        arr = tensor.detach().cpu().numpy().astype('<f4')
        chunks.append(_u32(arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    path.write_bytes(b''.join(chunks))
    logger.info("Saved weights (%d tensors) to %s", len(state), path)
    return path


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count: int, dtype: str) -> np.ndarray:
        size = count * np.dtype(dtype).itemsize
        if self.pos + size > len(self.data):
            raise FormatError(f"{self.path}: truncated weight file")
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return arr

    def u32(self) -> int:
        return int(self.take(1, '<u4')[0])


def load_weights(path) -> DenoiserModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"weight file not found: {path}")
    data = path.read_bytes()
    if not data.startswith(WEIGHTS_MAGIC):
        raise FormatError(f"{path}: missing SREDW1 header")
    reader = _Reader(data, path)
    reader.pos = len(WEIGHTS_MAGIC)
    n_filters = reader.u32()
    if n_filters < 2:
        raise FormatError(f"{path}: filter table has {n_filters} entries, at least 2 are required")
    filters = tuple(int(v) for v in reader.take(n_filters, '<u4'))
    in_channels = reader.u32()
    kernel_size = reader.u32()
    try:
        cfg = NetworkConfig(filters, in_channels, kernel_size,
                            down_blocks=n_filters - 1, up_blocks=n_filters - 1)
    except ConfigError as e:
        raise FormatError(f"{path}: invalid network header ({e})")
    model = DenoiserModel(cfg)
    state = model.state_dict()
    n_tensors = reader.u32()
    if n_tensors != len(state):
        raise FormatError(f"{path}: {n_tensors} tensors, expected {len(state)}")
    loaded = {}
    for name, ref in state.items():
        ndim = reader.u32()
        shape = tuple(int(v) for v in reader.take(ndim, '<u4'))
        if shape != tuple(ref.shape):
            raise FormatError(f"{path}: tensor '{name}' has shape {shape}, expected {tuple(ref.shape)}")
        values = reader.take(int(np.prod(shape, dtype=np.int64)), '<f4').reshape(shape)
        loaded[name] = torch.from_numpy(values.astype(np.float32))
    if reader.pos != len(data):
        raise FormatError(f"{path}: {len(data) - reader.pos} trailing bytes")
    model.load_state_dict(loaded)
    model.eval()
    return model


# ─── Targets ─────────────────────────────────────────────────────────────────

def make_target(depth: DepthFrame, color, rig: CameraRig,
                inpaint_cfg: InpaintConfig = InpaintConfig(), fill_cfg: FillConfig = FillConfig(),
                eps_z: float = DEFAULT_EPS_Z) -> DepthFrame:
    """Inpaint d_{t-1} guided by its colour frame registered onto the depth grid."""
    guide = build_registered_color(depth, color, rig, fill_cfg, eps_z)
    return inpaint_guided(depth, guide, inpaint_cfg)


def _target_job(args) -> DepthFrame:
    return make_target(*args)


def generate_targets(dataset: Sequence[FrameSequence], samples: Sequence[TrainingSample],
                     rig: CameraRig, inpaint_cfg: InpaintConfig = InpaintConfig(),
                     fill_cfg: FillConfig = FillConfig(), eps_z: float = DEFAULT_EPS_Z,
                     jobs: int = 1) -> Dict[Tuple[int, int], DepthFrame]:
    """Inpainted target for every distinct (sequence, position) named by ``samples``."""
    keys = sorted({(s.sequence, s.target) for s in samples})
    for seq_idx, pos in keys:
        if not dataset[seq_idx].has_color(pos):
            raise DataError(f"sequence {seq_idx} frame {dataset[seq_idx].indices[pos]} "
                            "has no colour frame for target generation")
    jobs_args = [(dataset[s].depth[p], dataset[s].color[p], rig, inpaint_cfg, fill_cfg, eps_z)
                 for s, p in keys]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(tqdm(pool.map(_target_job, jobs_args), total=len(jobs_args),
                                desc="targets", disable=None))
    else:
        results = [_target_job(a) for a in tqdm(jobs_args, desc="targets", disable=None)]
    logger.info("Generated %d inpainted targets", len(results))
    return dict(zip(keys, results))


# ─── Training ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 200
    learning_rate: float = 1e-4
    seed: int = 0
    val_split: float = 0.1
    test_split: float = 0.04
    max_depth_mm: float = DEFAULT_MAX_DEPTH_MM
    mode: str = MODE_SRED
    max_steps: Optional[int] = None
    jobs: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be positive and finite, got {self.learning_rate}")
        for name in ('val_split', 'test_split'):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        if not self.max_depth_mm > 0:
            raise ConfigError(f"max_depth_mm must be positive, got {self.max_depth_mm}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode '{self.mode}', expected one of {MODES}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass
class EpochRecord:
    epoch: int
    train_l1: float
    val_l1: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: DenoiserModel
    history: List[EpochRecord] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    best_epoch: int = 0
    test_l1: Optional[float] = None


def _stack_inputs(frames: Sequence[DepthFrame], max_depth_mm: float) -> np.ndarray:
    return np.stack([normalize(f, max_depth_mm).data for f in frames]).astype(np.float32)


def _tensorize(samples: Sequence[TrainingSample], dataset: Sequence[FrameSequence],
               targets: Dict[Tuple[int, int], DepthFrame], max_depth_mm: float) -> TensorDataset:
    inputs, values, valid = [], [], []
    for s in samples:
        seq = dataset[s.sequence]
        inputs.append(_stack_inputs([seq.depth[i] for i in s.inputs], max_depth_mm))
        target = normalize(targets[(s.sequence, s.target)], max_depth_mm)
        values.append(target.data[None].astype(np.float32))
        valid.append(target.valid[None].astype(np.float32))
    return TensorDataset(torch.from_numpy(np.stack(inputs)), torch.from_numpy(np.stack(values)),
                         torch.from_numpy(np.stack(valid)))


def _mean_l1(model: DenoiserModel, data: Optional[TensorDataset], batch_size: int) -> float:
    if data is None:
        return float('nan')
    model.eval()
    total, count = 0.0, 0.0
    with torch.no_grad():
        for x, y, v in DataLoader(data, batch_size=batch_size):
            pred = model(x)
            total += float(((pred - y).abs() * v).sum())
            count += float(v.sum())
    return total / count if count else 0.0


def train(model: DenoiserModel, dataset: Sequence[FrameSequence], tcfg: TrainConfig = TrainConfig(),
          rig: Optional[CameraRig] = None, inpaint_cfg: InpaintConfig = InpaintConfig(),
          fill_cfg: FillConfig = FillConfig(), eps_z: float = DEFAULT_EPS_Z,
          targets: Optional[Dict[Tuple[int, int], DepthFrame]] = None) -> TrainResult:
    """Minimise masked L1 between forward(inputs) and the sample target.

    In ``sred`` mode the target is the colour-guided inpainting of d_{t-1}
    (generated here unless ``targets`` is given); the variant modes use the raw
    next frame. The parameters with the best validation loss are restored.
    """
    if model.cfg.in_channels != MODE_CHANNELS[tcfg.mode]:
        raise ConfigError(f"model has {model.cfg.in_channels} input channels, mode "
                          f"'{tcfg.mode}' needs {MODE_CHANNELS[tcfg.mode]}")
    if not dataset:
        raise DataError("training dataset is empty")
    samples = []
    for seq_idx, seq in enumerate(dataset):
        samples.extend(variant_samples(len(seq), tcfg.mode, seq_idx))

    if tcfg.mode == MODE_SRED:
        if targets is None:
            if rig is None:
                raise ConfigError("sred training needs a camera rig for target generation")
            targets = generate_targets(dataset, samples, rig, inpaint_cfg, fill_cfg, eps_z, tcfg.jobs)
    else:
        targets = {(s.sequence, s.target): dataset[s.sequence].depth[s.target] for s in samples}

    train_s, val_s, test_s = split_samples(samples, tcfg.val_split, tcfg.test_split, tcfg.seed)
    logger.info("Training %s: %d train / %d val / %d test samples",
                tcfg.mode, len(train_s), len(val_s), len(test_s))
    train_data = _tensorize(train_s, dataset, targets, tcfg.max_depth_mm)
    val_data = _tensorize(val_s, dataset, targets, tcfg.max_depth_mm) if val_s else None
    test_data = _tensorize(test_s, dataset, targets, tcfg.max_depth_mm) if test_s else None

    generator = torch.Generator().manual_seed(tcfg.seed)
    loader = DataLoader(train_data, batch_size=tcfg.batch_size, shuffle=True, generator=generator)
    optimizer = torch.optim.Adam(model.parameters(), lr=tcfg.learning_rate)

    result = TrainResult(model=model)
    best_loss = math.inf
    best_state = copy.deepcopy(model.state_dict())
    steps = 0
    start = time.perf_counter()

    for epoch in range(1, tcfg.epochs + 1):
        model.train()
        epoch_total, epoch_batches = 0.0, 0
        loop = tqdm(loader, desc=f"epoch {epoch}", leave=False, disable=None)
        for x, y, v in loop:
            optimizer.zero_grad()
            loss = masked_l1(model(x), y, v)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}, step {steps + 1}")
            loss.backward()
            optimizer.step()
            steps += 1
            epoch_total += value
            epoch_batches += 1
            result.step_losses.append(value)
            loop.set_postfix(loss=value)
            if tcfg.max_steps is not None and steps >= tcfg.max_steps:
                break

        train_l1 = epoch_total / max(epoch_batches, 1)
        val_l1 = _mean_l1(model, val_data, tcfg.batch_size)
        if not math.isfinite(train_l1):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        record = EpochRecord(epoch, train_l1, val_l1, time.perf_counter() - start)
        result.history.append(record)
        logger.info("Epoch %d: train_l1=%.6f val_l1=%.6f", epoch, train_l1, val_l1)

        selection = val_l1 if math.isfinite(val_l1) else train_l1
        if selection < best_loss:
            best_loss = selection
            best_state = copy.deepcopy(model.state_dict())
            result.best_epoch = epoch
        if tcfg.max_steps is not None and steps >= tcfg.max_steps:
            break

    model.load_state_dict(best_state)
    model.eval()
    if test_data is not None:
        result.test_l1 = _mean_l1(model, test_data, tcfg.batch_size)
    logger.info("Training finished after %d steps; best epoch %d", steps, result.best_epoch)
    return result


# ─── Inference ───────────────────────────────────────────────────────────────

def infer_variant(model: DenoiserModel, frames: Sequence[DepthFrame],
                  max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> DepthFrame:
    """Restore the last of ``frames`` (oldest first); one frame per input channel."""
    if len(frames) != model.cfg.in_channels:
        raise DimensionError(f"model expects {model.cfg.in_channels} frames, got {len(frames)}")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise DimensionError("input frames must share dimensions")
    x = torch.from_numpy(_stack_inputs(frames, max_depth_mm)).unsqueeze(0)
    model.eval()
    with torch.no_grad():
        out = model(x)[0, 0].numpy().astype(np.float64)
    if not np.isfinite(out).all():
        raise NumericError("network produced non-finite depth")
    values = np.clip(np.rint(np.clip(out, 0.0, 1.0) * max_depth_mm), 0, UINT16_MAX)
    return DepthFrame(values.astype(np.uint16))


def infer(model: DenoiserModel, d_tm2: DepthFrame, d_tm1: DepthFrame, d_t: DepthFrame,
          max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> DepthFrame:
    return infer_variant(model, [d_tm2, d_tm1, d_t], max_depth_mm)


def inference_windows(length: int, mode: str) -> List[Tuple[int, ...]]:
    """Input positions for every restorable frame t of a sequence of ``length``."""
    channels = MODE_CHANNELS[mode]
    return [tuple(range(t - channels + 1, t + 1)) for t in range(channels - 1, length)]
