"""Entropic optimal transport and numerical checks of global regularity
bounds for Brenier maps."""

from . import entropic, lab, measures, moduli, oracles, prekopa
from .entropic import EntropicSolution, barycentric_map, sinkhorn
from .experiments import DEFAULTS, EXPERIMENTS, ExperimentConfig, run_experiment
from .lab import ViolationReport
from .measures import DiscreteMeasure, PotentialSpec, builtin, discretize

__version__ = "0.1.0"

__all__ = [
    "entropic",
    "lab",
    "measures",
    "moduli",
    "oracles",
    "prekopa",
    "EntropicSolution",
    "barycentric_map",
    "sinkhorn",
    "DEFAULTS",
    "EXPERIMENTS",
    "ExperimentConfig",
    "run_experiment",
    "ViolationReport",
    "DiscreteMeasure",
    "PotentialSpec",
    "builtin",
    "discretize",
]
