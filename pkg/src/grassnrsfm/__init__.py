"""Dense non-rigid structure from motion on Grassmann manifolds."""

from .algo1 import Algo1Config, Algo1Result, run_algorithm1
from .algo2 import Algo2Config, Algo2Result, run_algorithm2
from .data_model import (MalformedInputError, MeasurementMatrix, RotationStack,
                         inverse_reshuffle, reshuffle)
from .experiments import add_noise, e3d, generate_scene
from .io import load_matrix, save_matrix

__version__ = "0.1.0"

__all__ = [
    "Algo1Config",
    "Algo1Result",
    "Algo2Config",
    "Algo2Result",
    "MalformedInputError",
    "MeasurementMatrix",
    "RotationStack",
    "add_noise",
    "e3d",
    "generate_scene",
    "inverse_reshuffle",
    "load_matrix",
    "reshuffle",
    "run_algorithm1",
    "run_algorithm2",
    "save_matrix",
]
