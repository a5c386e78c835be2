"""Inverse demand tracking on tree-shaped transport networks."""

from invdemand.dynamics import (
    DiscreteState,
    DiscretizationGrid,
    GridMismatch,
    characteristics_state,
    make_grid,
    simulate_upwind,
)
from invdemand.lower_level import (
    DemandBasis,
    LowerLevelSystem,
    assemble_lower_system,
    reduced_map,
    sample_demand_basis,
    solve_lower_level,
)
from invdemand.network import NetworkTree, build_tree, demand_arcs
from invdemand.operators import (
    ArcEndOperator,
    ObservationOperator,
    apply_observation,
    assemble_arc_end_operator,
    build_observation,
)
from invdemand.upper_level import (
    BlockSimplexQP,
    ObservationSet,
    assemble_upper_qp,
    generate_observations,
    project_simplex,
    solve_block_simplex_qp,
)

__version__ = "0.1.0"
