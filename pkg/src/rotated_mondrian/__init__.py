"""Uniformly rotated Mondrian random features and their baselines."""

from ._backend import BACKEND
from .core import (AxisBox, Dataset, OutOfDomainError, Rotation, SeededRng, bounding_box,
                   derive_stream, load_csv, sample_rotation)
from .mondrian import MondrianTree, build_mondrian, cell_index, cut_times

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AxisBox", "Dataset", "OutOfDomainError", "Rotation", "SeededRng",
    "bounding_box", "derive_stream", "load_csv", "sample_rotation",
    "MondrianTree", "build_mondrian", "cell_index", "cut_times",
]
