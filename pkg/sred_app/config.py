"""
Pipeline configuration: schema defaults from settings, an optional
``key = value`` file, then command-line overrides. Every key is checked
against ``settings.SRED_DEFAULTS`` before any work starts.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from django.conf import settings

from .classic import BilateralConfig, TVConfig
from .denoiser import TrainConfig
from .errors import ConfigError
from .inpaint import InpaintConfig
from .metrics import MetricsConfig
from .noise_sim import NoiseConfig
from .registration import FillConfig

logger = logging.getLogger(__name__)

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}
_NONE = {'', 'none', 'auto'}


def schema() -> Dict[str, tuple]:
    return settings.SRED_DEFAULTS


def parse_value(key: str, raw: Any):
    """Convert ``raw`` to the schema type of ``key``; strings are parsed, None passes."""
    if key not in schema():
        raise ConfigError(f"unknown configuration key '{key}'")
    kind, _ = schema()[key]
    if raw is None:
        return None
    if not isinstance(raw, str):
        if kind is float and isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        if isinstance(raw, kind):
            return raw
        raw = str(raw)
    text = raw.strip()
    if text.lower() in _NONE:
        return None
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse '{raw}' as {kind.__name__}")


def read_config_file(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split('=', 1))
        values[key] = parse_value(key, raw)
    return values


class PipelineConfig:
    """Merged, validated configuration of every module."""

    def __init__(self, values: Optional[Dict[str, Any]] = None):
        self.values = {key: default for key, (_, default) in schema().items()}
        for key, value in (values or {}).items():
            self.values[key] = parse_value(key, value)
        self._validate()

    def __getitem__(self, key: str):
        if key not in self.values:
            raise ConfigError(f"unknown configuration key '{key}'")
        return self.values[key]

    def get(self, key: str, default=None):
        value = self[key]
        return default if value is None else value

    def items(self) -> Iterable:
        return sorted(self.values.items())

    @property
    def seed(self) -> int:
        return self['run.seed']

    @property
    def out_dir(self) -> Path:
        return Path(self['run.out'])

    def require(self, key: str) -> str:
        value = self[key]
        if value is None:
            raise ConfigError(f"'{key}' is required for this command")
        return value

    def _validate(self):
        if self['run.jobs'] < 1:
            raise ConfigError("run.jobs must be >= 1")
        if not self['core.max_depth_mm'] > 0:
            raise ConfigError("core.max_depth_mm must be positive")
        if self['registration.eps_z'] < 0:
            raise ConfigError("registration.eps_z must be >= 0")
        if self['bench.frames'] < 1:
            raise ConfigError("bench.frames must be >= 1")
        self.bench_resolutions()
        # dataclass constructors validate their own ranges
        self.inpaint()
        self.fill()
        self.train()
        self.noise()
        self.tv()
        self.bilateral()
        self.metrics()

    # ─── Typed builders ──────────────────────────────────────────────────────

    def inpaint(self) -> InpaintConfig:
        return InpaintConfig(radius=self['inpaint.radius'], lam=self['inpaint.lambda'],
                             sigma_g=self['inpaint.sigma_g'], d0=self['inpaint.d0'],
                             use_gradient=self['inpaint.use_gradient'])

    def fill(self) -> FillConfig:
        return FillConfig(blur_size=self['registration.blur_size'],
                          blur_passes=self['registration.blur_passes'])

    def train(self) -> TrainConfig:
        return TrainConfig(batch_size=self['train.batch_size'], epochs=self['train.epochs'],
                           learning_rate=self['train.learning_rate'], seed=self.seed,
                           val_split=self['train.val_split'], test_split=self['train.test_split'],
                           max_depth_mm=self['core.max_depth_mm'], mode=self['train.mode'],
                           max_steps=self['train.max_steps'], jobs=self['run.jobs'])

    def noise(self) -> NoiseConfig:
        return NoiseConfig(sigma_base=self['noise.sigma_base'], q_step=self['noise.q_step'],
                           sigma_s=self['noise.sigma_s'], theta_max_deg=self['noise.theta_max_deg'],
                           k_disparity=self['noise.k_disparity'],
                           seed=self.get('noise.seed', self.seed))

    def tv(self) -> TVConfig:
        return TVConfig(weight=self['tv.weight'], max_iters=self['tv.max_iters'], tol=self['tv.tol'])

    def bilateral(self) -> BilateralConfig:
        return BilateralConfig(sigma_s=self['bf.sigma_s'], sigma_r=self['bf.sigma_r'],
                               radius=self['bf.radius'])

    def metrics(self) -> MetricsConfig:
        return MetricsConfig(window=self['metrics.window'], block=self['metrics.block'],
                             low_quantile=self['metrics.low_quantile'],
                             high_quantile=self['metrics.high_quantile'])

    def bench_resolutions(self):
        result = []
        for item in self['bench.resolutions'].split(','):
            item = item.strip()
            try:
                w, h = (int(v) for v in item.lower().split('x'))
            except ValueError:
                raise ConfigError(f"bench.resolutions: '{item}' is not WIDTHxHEIGHT")
            if w < 1 or h < 1:
                raise ConfigError(f"bench.resolutions: '{item}' must be positive")
            result.append((w, h))
        if not result:
            raise ConfigError("bench.resolutions lists no resolution")
        return result


def load_config(path=None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Defaults < config file < overrides (None override values are ignored)."""
    values = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    cfg = PipelineConfig(values)
    logger.debug("Configuration loaded from %s", path or 'defaults')
    return cfg
