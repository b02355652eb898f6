"""Polynomial-spectral neural operator toolkit."""

__version__ = "0.1.0"

from .polycore import (  # noqa: F401
    Grid,
    DomainMap,
    PolyCoeffs,
    SampledSignal,
    SumuduSpectrum,
    fit_operator,
    fit_poly,
    horner_eval,
    sumudu_forward,
    sumudu_inverse,
)
from .model import ModelConfig, SNOModel, forward, forward_at_resolution, init_model  # noqa: F401
from .datagen import TaskDataset, TaskSpec, build_dataset  # noqa: F401
from .trainer import TrainConfig, load_checkpoint, normalize, save_checkpoint, train  # noqa: F401
from .evalbench import evaluate, fft_radix2, runtime_bench, superres_eval  # noqa: F401
