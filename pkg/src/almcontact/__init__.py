"""Quasi-static frictional fault contact solver.

Augmented-Lagrangian contact on explicitly split fault surfaces, stabilized
by face-attached bubble enrichment that is condensed out of the global
system.  Includes structured mesh builders, benchmark problems with
closed-form references, and a CLI.
"""

from .fem import ElasticMaterial
from .mesh import (
    FaultPlaneSpec,
    Mesh,
    build_structured_hex_grid,
    build_structured_tet_grid,
    build_structured_wedge_grid,
    load_mesh,
    save_mesh,
)

__version__ = "0.1.0"

__all__ = [
    "ElasticMaterial",
    "FaultPlaneSpec",
    "Mesh",
    "build_structured_hex_grid",
    "build_structured_tet_grid",
    "build_structured_wedge_grid",
    "load_mesh",
    "save_mesh",
    "__version__",
]
