"""Numerical uniformization of branched surfaces via rank-2 gauge data.

Solves the abelian self-duality equation for a line-bundle metric, assembles
the induced symmetric 2-tensor, certifies constant curvature -4 with conical
singularities on a prescribed divisor, and cross-validates through the
associated flat-connection family and equivariant harmonic map.
"""

__version__ = "0.1.0"

from .mesh import MarkedPoint, SurfaceMesh, SurfaceSpec, build_mesh  # noqa: F401
