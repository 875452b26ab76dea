"""branchpath: branched-transport energies on polyhedral 1-currents.

Concave-cost masses, cones, dyadic grids, slicing, good path decompositions,
cheap connections, a simplicial flat norm, an exact small-instance transport
solver, and an experiment harness for stability phenomena.
"""

from .geometry import Cube, Grid, enlarge, shift_grid_avoiding, subdivide, sup_dist
from .measures import (
    AtomOnBoundary,
    CostSpec,
    MassMismatch,
    SignedAtomicMeasure,
    canonicalize,
    h_mass_measure,
    jordan,
    restrict_measure,
    w1_distance,
)
from .currents import (
    NonGenericRadius,
    NoRadiusFound,
    PolyhedralCurrent,
    ZeroSlice,
    boundary,
    cone,
    good_slice_radius,
    h_mass,
    mass,
    restrict_current,
    slice_current,
)
from .decomposition import (
    CellPartition,
    EndpointOnSkeleton,
    NotAcyclic,
    PathDecomposition,
    WeightedPath,
    combined_multiplicity_mass,
    current_of,
    good_decomposition,
    partition_by_cells,
    remove_cycles,
)
from .connector import (
    AtomOnSkeleton,
    ConnectionResult,
    connect,
    dyadic_connection_cost,
    dyadic_discretize,
)
from .flatnorm import FlatNormResult, SnapError, TriComplex, flat_norm, rasterize, snap_current
from .solver import (
    BudgetExceeded,
    InstanceInvalid,
    Solution,
    TooManyTerminals,
    Topology,
    TransportInstance,
    enumerate_topologies,
    optimize_topology,
    oracle_small,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AtomOnBoundary",
    "AtomOnSkeleton",
    "BudgetExceeded",
    "CellPartition",
    "ConnectionResult",
    "CostSpec",
    "Cube",
    "EndpointOnSkeleton",
    "FlatNormResult",
    "Grid",
    "InstanceInvalid",
    "MassMismatch",
    "NoRadiusFound",
    "NonGenericRadius",
    "NotAcyclic",
    "PathDecomposition",
    "PolyhedralCurrent",
    "SignedAtomicMeasure",
    "SnapError",
    "Solution",
    "TooManyTerminals",
    "Topology",
    "TransportInstance",
    "TriComplex",
    "WeightedPath",
    "ZeroSlice",
    "boundary",
    "canonicalize",
    "combined_multiplicity_mass",
    "cone",
    "connect",
    "current_of",
    "dyadic_connection_cost",
    "dyadic_discretize",
    "enlarge",
    "enumerate_topologies",
    "flat_norm",
    "good_decomposition",
    "good_slice_radius",
    "h_mass",
    "h_mass_measure",
    "jordan",
    "mass",
    "optimize_topology",
    "oracle_small",
    "partition_by_cells",
    "rasterize",
    "remove_cycles",
    "restrict_current",
    "restrict_measure",
    "shift_grid_avoiding",
    "slice_current",
    "snap_current",
    "solve",
    "subdivide",
    "sup_dist",
    "w1_distance",
]
