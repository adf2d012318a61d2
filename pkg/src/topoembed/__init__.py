"""Topology-preserving node embeddings.

Trains skip-gram style node embeddings whose persistence diagram is pulled
toward the persistence diagram of the input graph by an entropic
optimal-transport loss on diagrams.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    InputFormatError,
    TopoembedError,
    TrainingAbort,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "InputFormatError",
    "TopoembedError",
    "TrainingAbort",
]
