"""flowlab: flow matching and diffusion models with closed-form oracles.

Modules
-------
paths      Gaussian probability paths, conditional fields and scores, conversions
oracle     exact marginal quantities for finite datasets, PDE residual probes
dynamics   Brownian motion and Euler / Heun / Euler-Maruyama / Langevin simulation
net        MLP field network with hand-written reverse pass and gradient checker
train      CFM, score matching and noise-prediction training with Adam
guidance   classifier-free guidance and guided samplers
data_eval  toy 2D datasets and sample metrics
cli        the ``flowlab`` command line
"""

from .errors import (
    ConfigError,
    DomainError,
    FlowlabError,
    SimulationError,
    SingularityError,
    TrainingError,
)
from .paths import GaussianPath, NoiseSchedule, TimeClamp
from .oracle import Dataset
from .dynamics import DiffusionCoefficient, TimeGrid, Trajectory
from .net import NULL_LABEL, MlpParams, MlpSpec
from .train import TrainConfig
from .guidance import GuidanceConfig
from .data_eval import DatasetSpec

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "FlowlabError",
    "SimulationError",
    "SingularityError",
    "TrainingError",
    "GaussianPath",
    "NoiseSchedule",
    "TimeClamp",
    "Dataset",
    "DiffusionCoefficient",
    "TimeGrid",
    "Trajectory",
    "NULL_LABEL",
    "MlpParams",
    "MlpSpec",
    "TrainConfig",
    "GuidanceConfig",
    "DatasetSpec",
]
