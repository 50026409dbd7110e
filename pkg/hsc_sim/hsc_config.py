"""Experiment configuration.

Config files are plain ``key = value`` lines; ``#`` starts a comment, lists
are comma separated and booleans are ``true``/``false``. Command line flags
override the file, and HSC_DATA_ROOT supplies the dataset root when the file
does not. See docs/config.md for every key.
"""

import dataclasses
import os
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .hsc_channel import ChannelMode

DATA_ROOT_ENV = "HSC_DATA_ROOT"

SCENARIOS = ("fig2_vae", "fig2_vqvae", "fig3_fixed_load", "fig4_fading", "custom")
EIG_METHODS = ("lapack", "jacobi")


@dataclass
class ExperimentConfig:
    # what to run
    scenario: str = "custom"
    out: str = "results"
    checkpoint_dir: str = "checkpoints"

    # data
    data_root: typing.Optional[str] = None
    synthetic: bool = False
    synthetic_side: int = 28
    train_images: int = 5000
    eval_images: int = 100

    # transceiver
    k: int = 128
    k_sweep: typing.List[int] = field(default_factory=lambda: [32, 64, 128, 256, 512])
    hidden_sizes: typing.List[int] = field(default_factory=lambda: [2048, 1024, 512])
    power: float = 1.0
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    kl_weight: float = 1e-3
    commitment_weight: float = 0.25
    codebook_size: int = 256
    shared_epsilon: bool = False

    # complementary representation
    d: typing.Optional[int] = None
    d_sweep: typing.List[int] = field(default_factory=lambda: list(range(0, 29, 2)))
    bits_per_coeff: int = 8
    source_ratio: float = 0.2
    cr_chain: typing.Optional[bool] = None
    eig_method: str = "lapack"

    # channel
    channel: str = "error_free"
    snr_db: typing.List[float] = field(default_factory=lambda: [10.0])
    mu: float = 1.0
    literal_power: bool = False
    equalize: bool = True

    # adaptation
    finetune_budget: int = 200
    finetune_epochs: int = 10
    finetune_snr_min: float = 0.0
    finetune_snr_max: float = 5.0
    finetune_snr_step: float = 0.5
    adapter_d: typing.List[int] = field(default_factory=lambda: list(range(0, 29, 4)))

    # runs
    seed: int = 0
    seeds: typing.List[int] = field(default_factory=lambda: [0, 1, 2])
    workers: int = 1
    record_wall_time: bool = False
    dump_d: typing.List[int] = field(default_factory=lambda: [0, 8, 16, 28])
    dump_images: int = 4

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"Unknown scenario {self.scenario}, expected one of {SCENARIOS}")
        ChannelMode.parse(self.channel)
        if self.eig_method not in EIG_METHODS:
            raise ConfigError(f"Unknown eig_method {self.eig_method}, expected one of {EIG_METHODS}")
        if not self.seeds:
            raise ConfigError("At least one evaluation seed is required")
        if not self.snr_db:
            raise ConfigError("SNR grid is empty")
        positive = ("k", "train_images", "eval_images", "batch_size", "workers", "synthetic_side", "finetune_budget")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if any(k <= 0 for k in self.k_sweep):
            raise ConfigError("k_sweep values must be positive")
        if any(d < 0 for d in self.d_sweep + self.dump_d + self.adapter_d):
            raise ConfigError("CR ranks must be non-negative")
        if self.d is not None and self.d < 0:
            raise ConfigError(f"d must be non-negative, got {self.d}")
        if not 0 < self.source_ratio <= 1:
            raise ConfigError(f"source_ratio must be in (0, 1], got {self.source_ratio}")
        if self.power <= 0 or self.mu <= 0:
            raise ConfigError("power and mu must be positive")
        if self.epochs < 0 or self.finetune_epochs < 0:
            raise ConfigError("Epoch counts must be non-negative")

    @property
    def uses_chain(self) -> bool:
        """Sweeps send the CR through the digital chain; by default only the fading scenario."""
        if self.cr_chain is not None:
            return self.cr_chain
        return self.scenario == "fig4_fading"

    def check_ranks(self, side_length: int):
        """CR ranks must lie in [0, L] once the image size is known."""
        ranks = self.d_sweep + self.dump_d + self.adapter_d + ([self.d] if self.d is not None else [])
        bad = sorted({d for d in ranks if d > side_length})
        if bad:
            raise ConfigError(f"CR ranks {bad} exceed the image side length {side_length}")


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_OPTIONAL_TYPES = {"d": int, "cr_chain": bool}


def _default_of(name: str):
    f = _FIELDS[name]
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return f.default


def _parse_scalar(name: str, text: str, kind: type):
    text = text.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered not in ("true", "false"):
                raise ValueError(text)
            return lowered == "true"
        return kind(text)
    except ValueError:
        raise ConfigError(f"Cannot read {name} = {text!r} as {kind.__name__}")


def _element_type(name: str) -> type:
    if name == "snr_db":
        return float
    return int


def parse_value(name: str, text: str):
    """Convert the text of one key to the type of its default."""
    if name not in _FIELDS:
        raise ConfigError(f"Unknown config key {name}")
    default = _default_of(name)
    if isinstance(default, list):
        if not text.strip():
            return []
        return [_parse_scalar(name, part, _element_type(name)) for part in text.split(",")]
    if name in _OPTIONAL_TYPES:
        if text.strip().lower() in ("", "none"):
            return None
        return _parse_scalar(name, text, _OPTIONAL_TYPES[name])
    if default is None:
        return text.strip() or None
    return _parse_scalar(name, text, type(default))


def parse_config_text(text: str) -> typing.Dict[str, typing.Any]:
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {number}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def load_config(
    path: typing.Optional[str] = None,
    overrides: typing.Optional[typing.Dict[str, typing.Any]] = None,
    environ: typing.Optional[typing.Mapping[str, str]] = None,
) -> ExperimentConfig:
    """File values, then overrides (already typed, None means unset), then the environment."""
    values: typing.Dict[str, typing.Any] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"Config file {path} does not exist")
        with open(path, "r") as f:
            values.update(parse_config_text(f.read()))
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"Unknown config key {key}")
        if value is not None:
            values[key] = value
    environ = os.environ if environ is None else environ
    if values.get("data_root") is None and environ.get(DATA_ROOT_ENV):
        values["data_root"] = environ[DATA_ROOT_ENV]
    config = ExperimentConfig(**values)
    config.validate()
    return config
