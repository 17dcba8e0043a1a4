"""Run configuration: ``key = value`` text files with ``#`` comments."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError
from .filters import LowPassSpec
from .monogenic import CHANNEL_MODES, RESCALE_MODES
from .params import read_key_values
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    n_scales: int = 8
    cutoff: float = 0.5
    order: int = 10
    mode: str = "both"
    epsilon: float = 1e-12
    rescale: str = "image"
    height: int = 64
    width: int = 64
    seed: int = 0
    learning_rate: float = 1e-3
    min_lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 200
    batch_size: int = 8
    val_fraction: float = 0.1
    train_count: int = 200
    test_count: int = 60
    use_mono2d: bool = True
    freeze: bool = False

    def __post_init__(self):
        if self.n_scales < 1:
            raise ConfigError("n_scales must be >= 1")
        if self.mode not in CHANNEL_MODES:
            raise ConfigError(f"mode must be one of {sorted(CHANNEL_MODES)}")
        if self.rescale not in RESCALE_MODES:
            raise ConfigError(f"rescale must be one of {RESCALE_MODES}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if min(self.height, self.width) < 8:
            raise ConfigError("height and width must be >= 8")
        if self.train_count < 2 or self.test_count < 1:
            raise ConfigError("train_count must be >= 2 and test_count >= 1")
        LowPassSpec(self.cutoff, self.order)
        self.train_config()

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, min_lr=self.min_lr, beta1=self.beta1,
                           beta2=self.beta2, epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
                           n_scales=self.n_scales, val_fraction=self.val_fraction, cutoff=self.cutoff,
                           order=self.order, epsilon=self.epsilon, rescale=self.rescale)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def updated(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def parse_config(text: str) -> RunConfig:
    try:
        kv = read_key_values(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(kv) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**{k: _coerce(k, v) for k, v in kv.items()})


def dumps_config(cfg: RunConfig) -> str:
    lines = ["# mono2d run configuration"]
    for key, value in asdict(cfg).items():
        lines.append(f"{key} = {repr(value) if isinstance(value, float) else value}")
    return "\n".join(lines) + "\n"
