"""Spline de Rham complexes on multipatch geometries, cohomology generators
of the insulating region and eddy-current solvers built on them.

Modules
-------
splinecore    knot vectors, B-spline and Curry-Schoenberg bases, 1D incidence
derham        tensor spline spaces S^0..S^3, patch maps, control meshes
multipatch    gluing into a cubical complex, incidence and sign maps
cohomology    interface cohomology, spanning-tree lifting, generator filtering
assembly      mass, stiffness and load assembly
formulations  H-phi, T-Omega and A-phi frequency-domain solvers
fields        field evaluation and post-processing
problem       text problem files
vtk           legacy VTK export
cli           command line interface
"""
from .assembly import Assembler, assemble_mass, assemble_stiffness
from .cohomology import compute_generators
from .derham import Patch, TensorSplineSpace, build_space, control_mesh
from .formulations import EddyCurrentProblem, Material, PhysicalConfig, solve
from .multipatch import CubicalComplex, MultipatchGeometry, extract_interface, glue
from .problem import ProblemFile, parse_problem, serialize
from .splinecore import KnotVector, uniform_knots

__version__ = "0.1.0"

__all__ = [
    "Assembler", "CubicalComplex", "EddyCurrentProblem", "KnotVector", "Material", "MultipatchGeometry",
    "Patch", "PhysicalConfig", "ProblemFile", "TensorSplineSpace", "assemble_mass", "assemble_stiffness",
    "build_space", "compute_generators", "control_mesh", "extract_interface", "glue", "parse_problem",
    "serialize", "solve", "uniform_knots",
]
