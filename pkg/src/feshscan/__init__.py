"""Two-channel Feshbach resonance engine: effective scattering length, critical values, residues."""

__version__ = "0.1.0"

from .config import ConfigError, CouplingSpec, MagneticMap, ModelConfig, Tolerances, load_config, parse_config, serialize_config
from .grid import RadialFn, RadialGrid, build_grid
from .model import Model, PoleError
from .potentials import PotentialSpec, eval_potential

__all__ = [
    "ConfigError",
    "CouplingSpec",
    "MagneticMap",
    "Model",
    "ModelConfig",
    "PoleError",
    "PotentialSpec",
    "RadialFn",
    "RadialGrid",
    "Tolerances",
    "build_grid",
    "eval_potential",
    "load_config",
    "parse_config",
    "serialize_config",
]
