"""Model and training configuration, plus the flat key=value config file."""

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


# reduced widths for workstation-scale runs
DESK_MODEL = dict(channels=(8, 16, 32), down_blocks=1, up_blocks=1)


@dataclass
class ModelConfig:
    """Architecture and loss hyperparameters.

    Defaults follow the published configuration; :meth:`desk` gives the
    reduced widths used for workstation-scale runs.
    """

    block_size: int = 32
    rate: float = 0.1
    matrix: str = "learned"
    matrix_seed: int = 0
    num_scales: int = 3
    nl_per_scale: int = 3
    channels: tuple = (16, 32, 64)
    down_crossings: int = 3
    up_crossings: int = 3
    down_blocks: int = 3
    up_blocks: int = 3
    nl_blocks: tuple = (1, 2, 3)
    pool_factors: tuple = (16, 4, 1)
    coupling_weight: float = 0.001
    measurement_coupling_weight: float = 1.0
    feature_coupling_weight: float = 1.0
    enable_coupling: bool = True
    enable_nlm: bool = True
    enable_msn: bool = True
    enable_nlf: bool = True

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.nl_blocks = tuple(int(d) for d in self.nl_blocks)
        self.pool_factors = tuple(int(p) for p in self.pool_factors)
        self.validate()

    @classmethod
    def desk(cls, **overrides):
        base = {**DESK_MODEL, **overrides}
        return cls(**base)

    def validate(self):
        s = self.num_scales
        if s < 1 or self.nl_per_scale < 1:
            raise ConfigError("num_scales and nl_per_scale must be >= 1")
        for name in ("channels", "nl_blocks", "pool_factors"):
            if len(getattr(self, name)) != s:
                raise ConfigError(f"{name} needs {s} entries, got {getattr(self, name)}")
        if self.matrix not in ("fixed", "learned"):
            raise ConfigError(f"matrix must be 'fixed' or 'learned', got {self.matrix!r}")
        if not 0 < self.rate <= 1:
            raise ConfigError(f"rate must lie in (0, 1], got {self.rate}")
        if s > 1:
            for name in ("down_crossings", "up_crossings"):
                value = getattr(self, name)
                if not 1 <= value <= self.nl_per_scale:
                    raise ConfigError(f"{name} must lie in [1, nl_per_scale], got {value}")
        if min(self.down_blocks, self.up_blocks) < 1:
            raise ConfigError("down_blocks and up_blocks must be >= 1")
        if any(p < 1 for p in self.pool_factors) or any(c < 1 for c in self.channels):
            raise ConfigError("pool factors and channel widths must be positive")
        if min(self.coupling_weight, self.measurement_coupling_weight, self.feature_coupling_weight) < 0:
            raise ConfigError("loss weights must be non-negative")

    @property
    def active_scales(self):
        return self.num_scales if self.enable_msn else 1

    def spatial_multiple(self):
        """Smallest side length multiple the multi-scale network accepts unpadded."""
        m = 2 ** (self.active_scales - 1)
        for s in range(self.active_scales):
            m = math.lcm(m, 2**s * self.pool_factors[s])
        return m


@dataclass
class TrainConfig:
    data_dir: str = ""
    patch_size: int = 64
    batch_size: int = 4
    epochs: int = 1
    iterations_per_epoch: int = 100
    base_lr: float = 1e-4
    lr_decay_factor: float = 2.0
    lr_decay_every: int = 30
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    augment: bool = True
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.epochs < 0 or self.iterations_per_epoch < 0:
            raise ConfigError("epochs and iterations_per_epoch must be >= 0")
        if self.batch_size < 1 or self.patch_size < 1:
            raise ConfigError("batch_size and patch_size must be >= 1")
        if self.lr_decay_every < 1 or self.lr_decay_factor <= 0:
            raise ConfigError("invalid learning-rate schedule")

    @property
    def rate(self):
        return self.model.rate

    def lr_at(self, epoch):
        return self.base_lr / self.lr_decay_factor ** (epoch // self.lr_decay_every)

    def to_dict(self):
        return dataclasses.asdict(self)


# -- key=value config files ----------------------------------------------

_MODEL_KEYS = {f.name: f for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name: f for f in fields(TrainConfig) if f.name != "model"}


def _coerce(f, raw):
    default = f.default if f.default is not dataclasses.MISSING else None
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text):
    """Parse ``key = value`` lines into (model_overrides, train_overrides).

    Blank lines and ``#`` comments are ignored; unknown keys are rejected.
    """
    model, train = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _MODEL_KEYS:
                model[key] = _coerce(_MODEL_KEYS[key], value)
            elif key in _TRAIN_KEYS:
                train[key] = _coerce(_TRAIN_KEYS[key], value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return model, train


def load_config_file(path):
    return parse_config_text(Path(path).read_text())


def format_config(config):
    """Render the effective config as key=value lines (the run-log echo)."""
    lines = []
    for name in _TRAIN_KEYS:
        lines.append(f"{name} = {_fmt(getattr(config, name))}")
    for name in _MODEL_KEYS:
        lines.append(f"{name} = {_fmt(getattr(config.model, name))}")
    return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)
