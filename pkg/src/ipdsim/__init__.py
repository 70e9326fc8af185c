"""Immersed-peridynamics fluid-structure interaction simulator.

An incompressible staggered-grid flow solver coupled through regularized
delta kernels to a meshfree state-based peridynamic structure model with
anisotropic hyperelasticity and ductile bond failure.
"""

from .cli import __version__

__all__ = ["__version__"]
