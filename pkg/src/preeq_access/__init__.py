"""Grant-free random access with transmitter pre-equalization and non-coherent detection."""

from .sysmodel import CodeKind, SystemConfig, make_constellation, generate_spreading_codes
from .detector import iterative_detect
from .harness import run_trial, sweep

__all__ = ["CodeKind", "SystemConfig", "make_constellation", "generate_spreading_codes",
           "iterative_detect", "run_trial", "sweep"]
__version__ = "0.1.0"
