"""Recurrent networks for hyperspectral image classification.

Band-by-band RNN/LSTM/GRU baselines, the shortened St-GRU, the
spatial-spectral St-SS-GRU and its parallel-GRU form St-SS-pGRU, all written
on numpy with hand-derived gradients.
"""
from .data import (
    GroundTruthRaster,
    HSICube,
    SampleSet,
    SplitSpec,
    extract_patch,
    extract_patches,
    load_envi,
    make_split,
    normalize,
    synth_dataset,
    write_envi,
)
from .exceptions import (
    ArgumentError,
    ConfigurationError,
    DataError,
    DimensionError,
    FormatError,
    HSIRNNError,
    StateError,
)
from .models import ModelSpec, ModelState, build, forward_classify, load, save
from .training import Metrics, TrainConfig, evaluate, repeat_runs, train

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "ConfigurationError", "DataError", "DimensionError", "FormatError",
    "GroundTruthRaster", "HSICube", "HSIRNNError", "Metrics", "ModelSpec", "ModelState",
    "SampleSet", "SplitSpec", "StateError", "TrainConfig", "build", "evaluate",
    "extract_patch", "extract_patches", "forward_classify", "load", "load_envi",
    "make_split", "normalize", "repeat_runs", "save", "synth_dataset", "train", "write_envi",
]
