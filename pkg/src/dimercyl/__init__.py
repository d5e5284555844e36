"""Dimers on black-and-white Temperleyan cylinders and their elliptic limits."""
from .errors import (ConfigError, DimerError, DomainError, NumericalError, PoleError,
                     PrecisionError, RangeError)
from .lattice import CylinderDomain, build_staircase_cylinder, build_straight_cylinder
from .kasteleyn import assemble, invert
from .elliptic import EllipticContext

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CylinderDomain", "DimerError", "DomainError", "EllipticContext",
    "NumericalError", "PoleError", "PrecisionError", "RangeError", "assemble",
    "build_staircase_cylinder", "build_straight_cylinder", "invert",
]
