"""Semi-supervised split learning for LEO satellite constellations at desk scale.

Submodules:

- ``nn``        dense layers with hand-written backprop
- ``ssl``       auxiliary/contrastive losses, EMA teacher, adaptive thresholds
- ``orbit``     orbital period, contact windows, rate traces
- ``link``      byte budgets and activation selection
- ``interp``    class-steered activation interpolation at the ground station
- ``protocol``  round orchestration
- ``config``, ``data``, ``cli``  experiment plumbing
"""

from .config import DEFAULTS, ConfigError, ExperimentConfig, load_config
from .protocol import RoundReport, run_experiment

__all__ = [
    "DEFAULTS",
    "ConfigError",
    "ExperimentConfig",
    "RoundReport",
    "load_config",
    "run_experiment",
]

__version__ = "0.1.0"
