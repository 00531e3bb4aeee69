"""Adversarial attacks and defenses for learned mmWave beam selection."""
from .adversarial import AdvTrainParams, AttackParams, adversarial_training, complex_fgsm
from .beamforming import build_codebook, effective_rate, genie_best_beam, per_beam_rate, rate_targets
from .channel import PRESETS, Scenario, build_scenario, sample_channel
from .errors import ConfigError, DataError, NumericError
from .experiments import SweepConfig, build_dataset, emit_report, run_sweep
from .nn import MlpModel, TrainConfig, init_model, train

__all__ = [
    "AdvTrainParams", "AttackParams", "adversarial_training", "complex_fgsm",
    "build_codebook", "effective_rate", "genie_best_beam", "per_beam_rate", "rate_targets",
    "PRESETS", "Scenario", "build_scenario", "sample_channel",
    "ConfigError", "DataError", "NumericError",
    "SweepConfig", "build_dataset", "emit_report", "run_sweep",
    "MlpModel", "TrainConfig", "init_model", "train",
]
