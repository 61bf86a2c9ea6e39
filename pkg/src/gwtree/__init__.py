"""Galton-Watson trees with a first-ancestor interaction.

Submodules: ``model`` (types, Hamiltonian, spin bijection), ``oracle``
(exact enumeration), ``recursion`` (the two-dimensional map and its
derivative systems), ``mcmc`` (Metropolis chains), ``phase`` (fixed points,
critical surface, growth constant) and ``cli``.
"""
__version__ = "0.1.0"

from ._jit import BACKEND  # noqa: E402
from .model import (  # noqa: E402
    Interaction, ModelParams, OffspringDist, ParameterError, SpinConfig, Tree, two_class_params,
)

__all__ = [
    "BACKEND", "Interaction", "ModelParams", "OffspringDist", "ParameterError", "SpinConfig",
    "Tree", "two_class_params", "__version__",
]
