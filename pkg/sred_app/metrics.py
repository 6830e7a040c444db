"""
Reference metrics (MSE, PSNR, SSIM), the no-reference NMID score and the
temporal-coherence metric. All functions take NormalizedFrames and only look
at pixels that are valid in every frame involved.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import DEFAULT_MAX_DEPTH_MM, DepthFrame, NormalizedFrame, normalize
from .errors import ConfigError, DataError, DimensionError

logger = logging.getLogger(__name__)

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
MIN_WINDOW_COVERAGE = 0.5


@dataclass(frozen=True)
class MetricsConfig:
    window: int = 8
    block: int = 8
    low_quantile: float = 0.25
    high_quantile: float = 0.75

    def __post_init__(self):
        if self.window < 1 or self.block < 1:
            raise ConfigError("metrics window and block sizes must be >= 1")
        if not 0.0 <= self.low_quantile < self.high_quantile <= 1.0:
            raise ConfigError("metrics quantiles must satisfy 0 <= low < high <= 1")


def _joint(a: NormalizedFrame, b: NormalizedFrame) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(f"frame shapes differ: {a.shape} vs {b.shape}")
    joint = a.valid & b.valid
    if not joint.any():
        raise DataError("frames share no valid pixel")
    return joint


def mse(a: NormalizedFrame, b: NormalizedFrame) -> float:
    joint = _joint(a, b)
    diff = a.data[joint] - b.data[joint]
    return float(np.mean(diff * diff))


def psnr_from_mse(value: float) -> float:
    """Unit-range PSNR in dB; +inf when the error is zero."""
    if value <= 0:
        return math.inf
    return 10.0 * math.log10(1.0 / value)


def psnr(a: NormalizedFrame, b: NormalizedFrame) -> float:
    return psnr_from_mse(mse(a, b))


# ─── SSIM ────────────────────────────────────────────────────────────────────

def _box_sums(x: np.ndarray, size: int) -> np.ndarray:
    s = np.pad(x.cumsum(axis=0).cumsum(axis=1), ((1, 0), (1, 0)))
    return s[size:, size:] - s[:-size, size:] - s[size:, :-size] + s[:-size, :-size]


def _ssim_from_stats(mu_a, mu_b, var_a, var_b, cov):
    return (((2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2))
            / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)))


def ssim_map(a: NormalizedFrame, b: NormalizedFrame, window: int = 8) -> np.ndarray:
    """SSIM of every window x window sliding window (indexed by its top-left corner).

    Statistics use jointly valid pixels only (population variance); windows
    with fewer than half of their pixels valid are NaN.
    """
    joint = _joint(a, b)
    h, w = a.shape
    if h < window or w < window:
        raise DataError(f"frame {w}x{h} is smaller than the {window}x{window} SSIM window")
    m = joint.astype(np.float64)
    x = np.where(joint, a.data, 0.0)
    y = np.where(joint, b.data, 0.0)
    n = _box_sums(m, window)
    enough = n >= MIN_WINDOW_COVERAGE * window * window
    safe_n = np.where(enough, n, 1.0)
    mu_a = _box_sums(x, window) / safe_n
    mu_b = _box_sums(y, window) / safe_n
    var_a = _box_sums(x * x, window) / safe_n - mu_a * mu_a
    var_b = _box_sums(y * y, window) / safe_n - mu_b * mu_b
    cov = _box_sums(x * y, window) / safe_n - mu_a * mu_b
    return np.where(enough, _ssim_from_stats(mu_a, mu_b, var_a, var_b, cov), np.nan)


def ssim(a: NormalizedFrame, b: NormalizedFrame, window: int = 8) -> float:
    values = ssim_map(a, b, window)
    if np.isnan(values).all():
        raise DataError("no SSIM window has enough jointly valid pixels")
    return float(np.nanmean(values))


# ─── NMID ────────────────────────────────────────────────────────────────────

@dataclass
class NmidResult:
    value: float
    degenerate: bool
    structured_blocks: int
    homogeneous_blocks: int


def nmid_score(noisy: NormalizedFrame, restored: NormalizedFrame,
               cfg: MetricsConfig = MetricsConfig()) -> NmidResult:
    """Mean block SSIM over structured blocks minus mean over homogeneous blocks.

    Blocks of the noisy frame are ranked by variance: the bottom quantile is
    homogeneous, the top quantile structured. An empty class or equal
    thresholds give a degenerate result with value 0.
    """
    joint = _joint(noisy, restored)
    h, w = noisy.shape
    b = cfg.block
    if h < b or w < b:
        raise DataError(f"frame {w}x{h} is smaller than one {b}x{b} NMID block")

    variances, scores = [], []
    for r in range(0, h - b + 1, b):
        for c in range(0, w - b + 1, b):
            m = joint[r:r + b, c:c + b]
            n = int(m.sum())
            if n < MIN_WINDOW_COVERAGE * b * b:
                continue
            x = noisy.data[r:r + b, c:c + b][m]
            y = restored.data[r:r + b, c:c + b][m]
            mu_x, mu_y = x.mean(), y.mean()
            var_x = np.mean(x * x) - mu_x * mu_x
            var_y = np.mean(y * y) - mu_y * mu_y
            cov = np.mean(x * y) - mu_x * mu_y
            variances.append(float(np.var(x)))
            scores.append(float(_ssim_from_stats(mu_x, mu_y, var_x, var_y, cov)))

    if not variances:
        logger.warning("NMID: no block has enough valid pixels; score set to 0")
        return NmidResult(0.0, True, 0, 0)
    variances = np.asarray(variances)
    scores = np.asarray(scores)
    low = np.quantile(variances, cfg.low_quantile)
    high = np.quantile(variances, cfg.high_quantile)
    homogeneous = variances <= low
    structured = variances >= high
    n_s, n_h = int(structured.sum()), int(homogeneous.sum())
    if low == high or n_s == 0 or n_h == 0:
        logger.warning("NMID: degenerate block classification (%d structured, %d homogeneous); "
                       "score set to 0", n_s, n_h)
        return NmidResult(0.0, True, n_s, n_h)
    value = float(scores[structured].mean() - scores[homogeneous].mean())
    return NmidResult(value, False, n_s, n_h)


def nmid(noisy: NormalizedFrame, restored: NormalizedFrame,
         cfg: MetricsConfig = MetricsConfig()) -> float:
    return nmid_score(noisy, restored, cfg).value


# ─── Temporal coherence ──────────────────────────────────────────────────────

@dataclass
class TemporalSeries:
    abs_diff: List[float]
    signed_diff: List[float]
    mean_depth: List[float]


def temporal_series(frames: Sequence[NormalizedFrame]) -> TemporalSeries:
    """Per consecutive pair: mean |I_{t+1} - I_t| and mean (I_{t+1} - I_t); per frame: mean value."""
    if len(frames) < 2:
        raise DataError("temporal metrics need at least 2 frames")
    abs_diff, signed_diff = [], []
    for prev, cur in zip(frames, frames[1:]):
        if prev.shape != cur.shape:
            raise DimensionError("temporal metrics need frames of equal size")
        joint = prev.valid & cur.valid
        if not joint.any():
            abs_diff.append(math.nan)
            signed_diff.append(math.nan)
            continue
        diff = cur.data[joint] - prev.data[joint]
        abs_diff.append(float(np.mean(np.abs(diff))))
        signed_diff.append(float(np.mean(diff)))
    mean_depth = [float(f.data[f.valid].mean()) if f.valid.any() else math.nan for f in frames]
    return TemporalSeries(abs_diff, signed_diff, mean_depth)


def _nan_mean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if np.isnan(arr).all():
        raise DataError("no frame pair shares a valid pixel")
    return float(np.nanmean(arr))


def temporal(frames: Sequence[NormalizedFrame]) -> float:
    return _nan_mean(temporal_series(frames).abs_diff)


def temporal_signed(frames: Sequence[NormalizedFrame]) -> float:
    return _nan_mean(temporal_series(frames).signed_diff)


# ─── Reports ─────────────────────────────────────────────────────────────────

REPORT_COLUMNS = ('method', 'dataset', 'frame_index', 'mse', 'psnr_db', 'ssim', 'nmid',
                  'temporal_abs', 'temporal_signed', 'holes_in', 'holes_out')
METRIC_FIELDS = REPORT_COLUMNS[3:]


@dataclass
class FrameMetrics:
    frame_index: int
    mse: float = math.nan
    psnr_db: float = math.nan
    ssim: float = math.nan
    nmid: float = math.nan
    temporal_abs: float = math.nan
    temporal_signed: float = math.nan
    holes_in: int = 0
    holes_out: int = 0


@dataclass
class MetricReport:
    method: str
    dataset: str
    frames: List[FrameMetrics] = field(default_factory=list)
    nmid_degenerate: int = 0

    def aggregate(self) -> Dict[str, float]:
        result = {}
        for name in METRIC_FIELDS:
            values = np.asarray([getattr(f, name) for f in self.frames], dtype=np.float64)
            finite_or_inf = values[~np.isnan(values)]
            result[name] = float(finite_or_inf.mean()) if finite_or_inf.size else math.nan
        return result

    def rows(self) -> List[Dict[str, object]]:
        rows = []
        for f in self.frames:
            row = {'method': self.method, 'dataset': self.dataset}
            row.update(asdict(f))
            rows.append(row)
        mean_row = {'method': self.method, 'dataset': self.dataset, 'frame_index': 'mean'}
        mean_row.update(self.aggregate())
        rows.append(mean_row)
        return rows


def evaluate_frames(method: str, dataset: str, indices: Sequence[int],
                    restored: Sequence[DepthFrame], noisy: Sequence[DepthFrame],
                    clean: Optional[Sequence[DepthFrame]] = None,
                    cfg: MetricsConfig = MetricsConfig(),
                    max_depth_mm: float = DEFAULT_MAX_DEPTH_MM) -> MetricReport:
    """Per-frame metric rows for one method; reference metrics only when ``clean`` is given."""
    if len(restored) != len(noisy) or len(indices) != len(restored):
        raise DataError(f"{method}: {len(restored)} restored frames for {len(noisy)} inputs")
    if clean is not None and len(clean) != len(restored):
        raise DataError(f"{method}: {len(restored)} restored frames for {len(clean)} references")

    out = [normalize(f, max_depth_mm) for f in restored]
    report = MetricReport(method, dataset)
    series = temporal_series(out) if len(out) >= 2 else None
    for pos, index in enumerate(indices):
        row = FrameMetrics(int(index), holes_in=noisy[pos].hole_count(),
                           holes_out=restored[pos].hole_count())
        if clean is not None:
            ref = normalize(clean[pos], max_depth_mm)
            row.mse = mse(out[pos], ref)
            row.psnr_db = psnr_from_mse(row.mse)
            row.ssim = ssim(out[pos], ref, cfg.window)
        score = nmid_score(normalize(noisy[pos], max_depth_mm), out[pos], cfg)
        row.nmid = score.value
        report.nmid_degenerate += int(score.degenerate)
        if series is not None and pos > 0:
            row.temporal_abs = series.abs_diff[pos - 1]
            row.temporal_signed = series.signed_diff[pos - 1]
        report.frames.append(row)
    return report
