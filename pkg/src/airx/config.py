"""YAML experiment configuration.

Every section maps onto a dataclass; unknown keys anywhere raise
:class:`~airx.exceptions.ConfigurationError` so that typos never silently
fall back to defaults. Example::

    seed: 3
    receiver: comnet
    channel: {model: exp_family}
    training: {epochs: 300}
    sweep: {snr_db: [10, 20, 30, 40], min_bits: 100000}
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .baseband import OfdmConfig
from .channel import ExpChannel, Sui5Channel, TwoRayChannel, exp_family, sui5_family
from .exceptions import ConfigurationError, InvalidInputError
from .trainer import OnlineConfig, TrainingConfig
from .validation import check_snr_list

RECEIVERS = ("ls_zf", "lmmse", "fcdnn", "comnet", "comnet_linear_sd", "switchnet")
CHANNEL_MODELS = ("exp", "exp_family", "sui5", "sui5_family", "2ray")
ACCEPTANCE_MIN_BITS = 10**4


@dataclass
class OfdmSection:
    fft_size: int = 128
    active_count: int = 64
    cp_len: int = 16
    mod_order: int = 4
    pilot_seed: int = 2020

    def build(self):
        return OfdmConfig(self.fft_size, self.active_count, self.cp_len, self.mod_order, self.pilot_seed)


@dataclass
class ChannelSection:
    """``model`` picks the generator; the other fields apply to that model only."""

    model: str = "exp_family"
    tau_rms: float = 0.5
    max_delay: int = 5
    n_max: int = 10
    delays: list = None
    power_ratio: float = 1.0

    def build(self):
        if self.model == "exp":
            return ExpChannel(self.tau_rms, self.max_delay)
        if self.model == "exp_family":
            return exp_family()
        if self.model == "sui5":
            return Sui5Channel(self.n_max, None if self.delays is None else tuple(self.delays))
        if self.model == "sui5_family":
            return sui5_family()
        if self.model == "2ray":
            return TwoRayChannel(self.power_ratio)
        raise ConfigurationError(f"channel.model must be one of {CHANNEL_MODELS}")


@dataclass
class LmmseSection:
    """``tau_rms: null`` derives the design spread from the evaluated channel."""

    tau_rms: float = None
    design_snr_db: float = 25.0


@dataclass
class TrainingSection:
    snr_db: float = 25.0
    epochs: int = 2000
    ce_epochs: int = None
    lr: float = 1e-3
    frames_per_epoch: int = 1000
    batch_frames: int = 100

    def build(self, seed):
        return TrainingConfig(snr_db=self.snr_db, epochs=self.epochs, lr=self.lr,
                              frames_per_epoch=self.frames_per_epoch,
                              batch_frames=self.batch_frames, seed=seed)


@dataclass
class OnlineSection:
    mode: str = "alpha"
    symbols_per_epoch: int = 50
    batch_symbols: int = 10
    epochs_per_group: int = 2
    alpha_lr: float = 0.006
    collected_symbols: int = 5000
    transfer_lr: float = 1e-6
    snr_db: float = 25.0
    initial_alpha: float = None

    def build(self, seed):
        if self.mode not in ("alpha", "transfer"):
            raise ConfigurationError("online.mode must be 'alpha' or 'transfer'")
        return OnlineConfig(self.symbols_per_epoch, self.batch_symbols, self.epochs_per_group,
                            self.alpha_lr, self.collected_symbols, self.transfer_lr, seed)


@dataclass
class SweepSection:
    snr_db: list = field(default_factory=lambda: [0, 5, 10, 15, 20, 25, 30, 35, 40])
    min_bits: int = 10**6
    max_frames: int = None
    noiseless: bool = False
    workers: int = 1


@dataclass
class DatasetSection:
    count: int = 1000
    snr_db: float = 25.0
    path: str = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    receiver: str = "lmmse"
    checkpoint: str = None
    checkpoints: dict = None
    ofdm: OfdmSection = field(default_factory=OfdmSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    lmmse: LmmseSection = field(default_factory=LmmseSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    online: OnlineSection = field(default_factory=OnlineSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)

    def __post_init__(self):
        if self.receiver not in RECEIVERS:
            raise ConfigurationError(f"receiver must be one of {RECEIVERS}")
        try:
            check_snr_list(self.sweep.snr_db)
        except InvalidInputError as exc:
            raise ConfigurationError(f"sweep.snr_db: {exc}") from None
        if self.sweep.min_bits <= 0:
            raise ConfigurationError("sweep.min_bits must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        """SHA-256 of the canonical JSON form; identical configs hash identically."""
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def check_acceptance(self):
        if self.sweep.min_bits < ACCEPTANCE_MIN_BITS:
            raise ConfigurationError(f"acceptance runs need sweep.min_bits >= {ACCEPTANCE_MIN_BITS}")


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _SECTIONS.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}") if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


_SECTIONS = {(ExperimentConfig, "ofdm"): OfdmSection,
             (ExperimentConfig, "channel"): ChannelSection,
             (ExperimentConfig, "lmmse"): LmmseSection,
             (ExperimentConfig, "training"): TrainingSection,
             (ExperimentConfig, "online"): OnlineSection,
             (ExperimentConfig, "sweep"): SweepSection,
             (ExperimentConfig, "dataset"): DatasetSection}


def config_from_dict(data):
    return _build(ExperimentConfig, data or {}, "config")


def load_config(path):
    if path is None:
        return ExperimentConfig()
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(data)


def channel_from_dict(data):
    """Build a channel from a ``ChannelSection``-shaped mapping."""
    return _build(ChannelSection, data, "channel").build()
