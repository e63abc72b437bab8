"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .data import ConfigurationError

VARIANTS = ("S", "L", "SG", "LG", "SL", "SLG")
FUSIONS = ("gcn", "dot-s", "dot-l", "dot-sl")


@dataclass
class TrainConfig:
    # dimensions: word vectors, LSTM hidden, self-attention, GCN hidden
    d1: int = 300
    d2: int = 300
    d3: int = 200
    d4: int = 450
    gcn_layers: int = 2
    u: float = 0.2
    graph_threshold: float = 0.0
    leaky_slope: float = 0.01
    variant: str = "SLG"
    fusion: str = "gcn"
    m_max: int = 64
    batch_size: int = 64
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs_max: int = 100
    patience: int = 5
    folds: int = 10
    split_ratio: tuple[int, int] = (8, 1)
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d1", "d2", "d3", "d4", "batch_size", "m_max", "epochs_max", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.lr < 0:
            raise ConfigurationError("lr must be non-negative")
        if not 0.0 < self.u < 1.0:
            raise ConfigurationError(f"u must lie in (0, 1), got {self.u}")
        if not 1 <= self.gcn_layers <= 5:
            raise ConfigurationError(f"gcn_layers must be in 1..5, got {self.gcn_layers}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.fusion not in FUSIONS:
            raise ConfigurationError(f"unknown fusion {self.fusion!r}; choose from {FUSIONS}")
        if self.fusion != "gcn" and self.variant != "SLG":
            raise ConfigurationError("dot-product fusion replaces the full model; use variant SLG")
        if self.folds < 1:
            raise ConfigurationError("folds must be >= 1")
        if len(self.split_ratio) != 2 or min(self.split_ratio) < 1:
            raise ConfigurationError(f"bad split ratio {self.split_ratio}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_ratio"] = f"{self.split_ratio[0]}:{self.split_ratio[1]}"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**_coerce(cls, d))


@dataclass
class RunConfig(TrainConfig):
    data: str | None = None
    embeddings: str | None = None
    labels: str | None = None
    out: str | None = None

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def check_paths(self, *required: str) -> None:
        for name in required:
            value = getattr(self, name)
            if value is None:
                raise ConfigurationError(f"missing required path: {name}")
            if name != "out" and not Path(value).is_file():
                raise ConfigurationError(f"{name} file not found: {value}")


def _coerce(cls, raw: dict) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ConfigurationError(f"unknown config key {key!r}")
        kind = str(types[key])
        if value is None:
            out[key] = None
        elif key == "split_ratio":
            if isinstance(value, str):
                try:
                    a, b = value.split(":")
                    value = (int(a), int(b))
                except ValueError:
                    raise ConfigurationError(f"split_ratio must look like 8:1, got {value!r}") from None
            out[key] = tuple(value)
        elif kind == "int":
            out[key] = int(value)
        elif kind == "float":
            out[key] = float(value)
        else:
            out[key] = str(value)
    return out


def parse_config_text(text: str, cls=RunConfig):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        raw[key] = value
    try:
        return cls(**_coerce(cls, raw))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None


def load_config(path, cls=RunConfig):
    return parse_config_text(Path(path).read_text(encoding="utf-8"), cls)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is not None:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# desk-scale dimensions used by the synthetic corpus and the test-suite
SMALL = dict(d1=16, d2=16, d3=12, d4=16)
TINY = dict(d1=8, d2=8, d3=5, d4=6)

__all__ = ["TrainConfig", "RunConfig", "VARIANTS", "FUSIONS", "SMALL", "TINY",
           "load_config", "parse_config_text", "format_config"]
