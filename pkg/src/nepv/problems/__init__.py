"""Concrete problems: dense linear, the 4x4 sine example and the rotating GPE."""

from .dense import DenseProblem, LinearProblem, build_linear
from .gpe import GpeParams, GpeGrid, GpeProblem, build_gpe, initial_guess
from .sine import SineProblem, build_sine

__all__ = [
    "DenseProblem",
    "LinearProblem",
    "build_linear",
    "SineProblem",
    "build_sine",
    "GpeParams",
    "GpeGrid",
    "GpeProblem",
    "build_gpe",
    "initial_guess",
]
