"""Unfitted finite elements for elliptic interface problems.

A background box mesh and an independent immersed mesh are coupled through
a multiplier field living on the immersed domain; the resulting 3x3 block
saddle-point system is solved with preconditioned GMRES, and residual
indicators drive adaptive refinement of both meshes.
"""

from .kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
