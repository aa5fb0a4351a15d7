"""
Configuration
Frozen, validated dataclasses for the architecture, optimizer, scheduler,
two-stage training, decoding and synthetic data generation.

Each config can be written to and read from canonical ``key=value`` text, the
same format used for run configuration files.
"""

import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Type, TypeVar

from .errors import ConfigError, ParseError

logger = logging.getLogger(__name__)

C = TypeVar("C")


class TrainingStage(str, Enum):
    """Stage of the two-stage fine-tuning schedule."""

    STAGE1 = "stage1"
    STAGE2 = "stage2"


class DecodeMode(str, Enum):
    TEACHER_FORCED = "teacher_forced"
    GREEDY = "greedy"
    BEAM = "beam"


def parse_key_value_text(text: str, source: str = "<text>") -> Dict[str, str]:
    """
    Parse ``key=value`` lines. ``#`` starts a comment; blank lines are ignored.

    Raises:
        ParseError: for a line without ``=`` or a repeated key (with line number).
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{lineno}: expected key=value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ParseError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def coerce_value(raw: str, kind: Any, key: str) -> Any:
    """Convert a text value to ``kind`` (int, float, str, bool or an Enum)."""
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if isinstance(kind, type) and issubclass(kind, Enum):
            return kind(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"invalid value '{raw}' for '{key}'") from None


def format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class TextConfigMixin:
    """Canonical key=value text for flat dataclasses."""

    def to_text(self) -> str:
        return "".join(
            f"{f.name}={format_value(getattr(self, f.name))}\n" for f in dataclasses.fields(self)
        )

    @classmethod
    def from_mapping(cls: Type[C], values: Dict[str, str], source: str = "<text>") -> C:
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = [k for k in values if k not in fields]
        if unknown:
            raise ParseError(f"{source}: unknown key '{unknown[0]}' for {cls.__name__}")
        kwargs = {k: coerce_value(v, fields[k].type, k) for k, v in values.items()}
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ParseError(f"{source}: {e}") from None

    @classmethod
    def from_text(cls: Type[C], text: str, source: str = "<text>") -> C:
        return cls.from_mapping(parse_key_value_text(text, source), source)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class ModelConfig(TextConfigMixin):
    """
    Architecture hyperparameters.

    Defaults are the desk-scale toy dimensions; ``full_scale`` records the
    full-size values.
    """

    vocab_size: int
    feature_dim: int = 840
    lstm_hidden: int = 64
    bidirectional: int = 1
    lstm_layers: int = 2
    model_dim: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    maxlen: int = 64

    def __post_init__(self):
        sizes = ("vocab_size", "feature_dim", "lstm_hidden", "lstm_layers", "model_dim", "heads")
        for name in sizes + ("ffn_dim", "maxlen"):
            value = getattr(self, name)
            _require(value >= 1, f"ModelConfig.{name} must be >= 1, got {value}")
        _require(
            self.vocab_size >= 4,
            f"ModelConfig.vocab_size must cover the 4 reserved ids, got {self.vocab_size}",
        )
        _require(
            self.bidirectional in (0, 1),
            f"ModelConfig.bidirectional must be 0 or 1, got {self.bidirectional}",
        )
        _require(
            self.enc_layers >= 1,
            "ModelConfig.enc_layers must be >= 1 (Stage 1 trains encoder layer 0)",
        )
        _require(self.dec_layers >= 1, "ModelConfig.dec_layers must be >= 1")
        _require(
            self.model_dim % self.heads == 0,
            f"{self.heads} heads do not divide model_dim={self.model_dim}",
        )

    @property
    def lstm_output_dim(self) -> int:
        """h' = h (1 + b)."""
        return self.lstm_hidden * (1 + self.bidirectional)

    @classmethod
    def full_scale(cls, vocab_size: int) -> "ModelConfig":
        return cls(
            vocab_size=vocab_size,
            feature_dim=840,
            lstm_hidden=256,
            bidirectional=1,
            lstm_layers=2,
            model_dim=1024,
            enc_layers=12,
            dec_layers=12,
            heads=16,
            ffn_dim=4096,
            maxlen=1024,
        )


@dataclass(frozen=True)
class SgdConfig(TextConfigMixin):
    """SGD with momentum: v <- mu v + eta g; theta <- theta - v."""

    eta: float
    mu: float = 0.9

    def __post_init__(self):
        _require(self.eta > 0, f"SgdConfig.eta must be > 0, got {self.eta}")
        _require(0 <= self.mu < 1, f"SgdConfig.mu must be in [0, 1), got {self.mu}")


@dataclass(frozen=True)
class SchedulerConfig(TextConfigMixin):
    """Step decay: lr = eta * gamma ** (epoch // step_size)."""

    gamma: float = 0.1
    step_size: int = 20

    def __post_init__(self):
        _require(0 < self.gamma <= 1, f"SchedulerConfig.gamma must be in (0, 1], got {self.gamma}")
        _require(
            self.step_size >= 1, f"SchedulerConfig.step_size must be >= 1, got {self.step_size}"
        )


@dataclass(frozen=True)
class TwoStageConfig(TextConfigMixin):
    epochs_stage1: int = 20
    epochs_stage2: int = 30
    lr_stage1: float = 2e-5
    lr_stage2: float = 2e-5
    step_size_stage1: int = 20
    step_size_stage2: int = 30
    gamma: float = 0.1
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        _require(self.epochs_stage1 >= 0 and self.epochs_stage2 >= 0, "epoch budgets must be >= 0")
        _require(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        _require(self.seed >= 0, f"seed must be >= 0, got {self.seed}")
        # delegate the remaining range checks
        self.sgd(TrainingStage.STAGE1)
        self.sgd(TrainingStage.STAGE2)
        self.scheduler(TrainingStage.STAGE1)
        self.scheduler(TrainingStage.STAGE2)

    def epochs(self, stage: TrainingStage) -> int:
        return self.epochs_stage1 if stage == TrainingStage.STAGE1 else self.epochs_stage2

    def sgd(self, stage: TrainingStage) -> SgdConfig:
        eta = self.lr_stage1 if stage == TrainingStage.STAGE1 else self.lr_stage2
        return SgdConfig(eta=eta, mu=self.momentum)

    def scheduler(self, stage: TrainingStage) -> SchedulerConfig:
        step = self.step_size_stage1 if stage == TrainingStage.STAGE1 else self.step_size_stage2
        return SchedulerConfig(gamma=self.gamma, step_size=step)


@dataclass(frozen=True)
class DecodeConfig(TextConfigMixin):
    """
    Generation settings.

    ``max_len`` bounds the number of generated tokens after BOS.
    ``length_penalty`` divides a hypothesis score by (generated length) ** penalty;
    0 ranks by raw cumulative log-probability.
    """

    mode: DecodeMode = DecodeMode.BEAM
    beam_width: int = 4
    max_len: int = 32
    length_penalty: float = 0.0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", DecodeMode(self.mode))
        _require(self.beam_width >= 1, f"beam_width must be >= 1, got {self.beam_width}")
        if self.mode == DecodeMode.BEAM:
            _require(
                self.beam_width >= 2, "beam mode requires beam_width >= 2 (use greedy for width 1)"
            )
        _require(self.max_len >= 1, f"max_len must be >= 1, got {self.max_len}")
        _require(
            self.length_penalty >= 0, f"length_penalty must be >= 0, got {self.length_penalty}"
        )
        _require(self.workers >= 1, f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SynthConfig(TextConfigMixin):
    """Synthetic learnable dataset: word features are a fixed token embedding plus noise."""

    vocab_size: int = 20
    n_sentences: int = 500
    min_len: int = 3
    max_len: int = 8
    noise_std: float = 0.1
    feature_dim: int = 840
    seed: int = 0

    # short names accepted by --synth
    ALIASES = {
        "vocab": "vocab_size",
        "n": "n_sentences",
        "noise": "noise_std",
        "dim": "feature_dim",
    }

    def __post_init__(self):
        _require(self.vocab_size >= 4, f"synthetic vocab_size must be >= 4, got {self.vocab_size}")
        _require(self.n_sentences >= 1, f"n_sentences must be >= 1, got {self.n_sentences}")
        _require(
            1 <= self.min_len <= self.max_len,
            f"invalid length range {self.min_len}-{self.max_len}",
        )
        _require(self.noise_std >= 0, f"noise_std must be >= 0, got {self.noise_std}")
        _require(self.feature_dim >= 1, f"feature_dim must be >= 1, got {self.feature_dim}")
        _require(self.seed >= 0, f"seed must be >= 0, got {self.seed}")

    @classmethod
    def from_spec(cls, spec: str, **defaults) -> "SynthConfig":
        """
        Parse a comma-separated ``k=v`` list such as ``vocab=20,n=500,len=3-8,noise=0.1``.

        Args:
            spec: The option string.
            defaults: Values used for keys the string leaves out (e.g. the run seed).
        """
        values: Dict[str, str] = {k: format_value(v) for k, v in defaults.items()}
        for item in filter(None, (part.strip() for part in spec.split(","))):
            if "=" not in item:
                raise ParseError(f"--synth: expected k=v, got '{item}'")
            key, value = (s.strip() for s in item.split("=", 1))
            if key == "len":
                low, sep, high = value.partition("-")
                values["min_len"], values["max_len"] = low, (high if sep else low)
                continue
            values[cls.ALIASES.get(key, key)] = value
        return cls.from_mapping(values, source="--synth")


RUN_MODES = ("tf", "free", "both")
EVAL_SPLITS = ("dev", "test")
FREE_STRATEGIES = ("greedy", "beam")
DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class RunConfig(TextConfigMixin):
    """
    Flat command-line run configuration.

    ``data`` is a comma-separated list of JSONL paths; empty strings mean
    "not set" for paths. Architecture and training keys override the
    corresponding ModelConfig / TwoStageConfig defaults.
    """

    command: str = "train"
    data: str = ""
    synth: str = ""
    noise_control: bool = False
    checkpoint: str = ""
    out: str = "runs/r1"
    seed: int = -1
    model_name: str = "r1"
    # evaluation / generation
    mode: str = "both"
    split: str = "test"
    decode: str = "beam"
    beam: int = 4
    max_len: int = 32
    length_penalty: float = 0.0
    workers: int = 1
    # training
    epochs_stage1: int = 20
    epochs_stage2: int = 30
    lr_stage1: float = 2e-5
    lr_stage2: float = 2e-5
    step_size_stage1: int = 20
    step_size_stage2: int = 30
    gamma: float = 0.1
    momentum: float = 0.9
    batch_size: int = 32
    min_count: int = 1
    dtype: str = "float32"
    # architecture
    feature_dim: int = 840
    lstm_hidden: int = 64
    bidirectional: int = 1
    lstm_layers: int = 2
    model_dim: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    maxlen: int = 64

    def __post_init__(self):
        _require(self.mode in RUN_MODES, f"mode must be one of {RUN_MODES}, got '{self.mode}'")
        _require(
            self.split in EVAL_SPLITS, f"split must be one of {EVAL_SPLITS}, got '{self.split}'"
        )
        _require(
            self.decode in FREE_STRATEGIES,
            f"decode must be one of {FREE_STRATEGIES}, got '{self.decode}'",
        )
        _require(self.dtype in DTYPES, f"dtype must be one of {DTYPES}, got '{self.dtype}'")
        _require(self.min_count >= 1, f"min_count must be >= 1, got {self.min_count}")

    @property
    def data_paths(self) -> Tuple[str, ...]:
        return tuple(p.strip() for p in self.data.split(",") if p.strip())

    @property
    def modes(self) -> Tuple[str, ...]:
        return ("tf", "free") if self.mode == "both" else (self.mode,)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            feature_dim=self.feature_dim,
            lstm_hidden=self.lstm_hidden,
            bidirectional=self.bidirectional,
            lstm_layers=self.lstm_layers,
            model_dim=self.model_dim,
            enc_layers=self.enc_layers,
            dec_layers=self.dec_layers,
            heads=self.heads,
            ffn_dim=self.ffn_dim,
            maxlen=self.maxlen,
        )

    def two_stage_config(self) -> TwoStageConfig:
        return TwoStageConfig(
            epochs_stage1=self.epochs_stage1,
            epochs_stage2=self.epochs_stage2,
            lr_stage1=self.lr_stage1,
            lr_stage2=self.lr_stage2,
            step_size_stage1=self.step_size_stage1,
            step_size_stage2=self.step_size_stage2,
            gamma=self.gamma,
            momentum=self.momentum,
            batch_size=self.batch_size,
            seed=max(self.seed, 0),
        )

    def decode_config(self, max_len: Optional[int] = None) -> DecodeConfig:
        # a one-wide beam is greedy search
        mode = DecodeMode.BEAM if self.decode == "beam" and self.beam > 1 else DecodeMode.GREEDY
        return DecodeConfig(
            mode=mode,
            beam_width=self.beam,
            max_len=self.max_len if max_len is None else max_len,
            length_penalty=self.length_penalty,
            workers=self.workers,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_spec(
            self.synth, seed=max(self.seed, 0), feature_dim=self.feature_dim
        )
