"""Interior penalty DG for elliptic diffusion on edge- and plane-networks."""

__version__ = "0.1.0"

from .geometry import (Bifurcation, DomainDescriptor, HypergraphTopology, TopologyError,
                       TopologyParseError, build_topology, cube_network, dump_topology,
                       edge_mms_network, extrude, load_topology, low_regularity_network)
from .mesh import MeshError, NetworkMesh, dump_mesh, load_mesh, mesh_network, refine, refine_n
from .space import DGSpace, LagrangeBasis, QuadratureRule
from .assembly import Coefficients, SchemeConfig, SparseSystem, apply_bilinear, assemble
from .solver import SolveReport, SolverError, min_eigenvalue_probe, solve
from .analysis import (ErrorReport, dg_norm, enriching_map, error_vs_exact, l2_projection,
                       poincare_ratio)
from .manufactured import (ManufacturedCase, case_edge_mms, case_low_regularity,
                           case_plane_mms, get_case)
