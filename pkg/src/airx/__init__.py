"""OFDM link simulation with classical, data-driven and model-driven receivers."""

from .baseband import OfdmConfig, demap_symbols, map_bits, ofdm_demodulate, ofdm_modulate
from .channel import (ChannelMixture, ExpChannel, NoiseSpec, Sui5Channel, TheoreticalChannelSpec,
                      TwoRayChannel, exp_family, sui5_family)
from .data import FrameSource, LabeledDataset, generate_dataset, read_dataset, write_dataset
from .estimators import (ComNetReceiver, FcDnnReceiver, LmmseReceiver, LsZfReceiver,
                         SwitchNetReceiver)
from .exceptions import (ConfigurationError, EvaluationError, FormatError, InvalidInputError,
                         StaleCacheError, TrainingDivergedError)
from .receivers import ComNet, FcDnn, SwitchNet, build_lmmse, load_receiver
from .trainer import OnlineConfig, TrainingConfig

__version__ = "0.1.0"

__all__ = [
    "OfdmConfig", "map_bits", "demap_symbols", "ofdm_modulate", "ofdm_demodulate",
    "ExpChannel", "Sui5Channel", "TwoRayChannel", "ChannelMixture", "NoiseSpec",
    "TheoreticalChannelSpec", "exp_family", "sui5_family",
    "FrameSource", "LabeledDataset", "generate_dataset", "read_dataset", "write_dataset",
    "LsZfReceiver", "LmmseReceiver", "FcDnnReceiver", "ComNetReceiver", "SwitchNetReceiver",
    "ComNet", "FcDnn", "SwitchNet", "build_lmmse", "load_receiver",
    "TrainingConfig", "OnlineConfig",
    "InvalidInputError", "ConfigurationError", "FormatError", "TrainingDivergedError",
    "StaleCacheError", "EvaluationError",
]
