"""Particle simulation and modulated-energy diagnostics for supercritical
mean-field limits of Riesz and Coulomb gases, with a lake-equation solver."""

__version__ = "0.1.0"

from .dynamics import ParticleState, simulate, step
from .errors import RieszLakeError
from .kernels import Kernel

__all__ = ["ParticleState", "simulate", "step", "RieszLakeError", "Kernel", "__version__"]
