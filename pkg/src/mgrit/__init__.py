"""Parallel-in-time solver based on multigrid reduction over the time grid.

Typical use: build a problem, derive a multilevel time-grid hierarchy from
it, and solve.

    from mgrit import Dahlquist, MgritSolver, MgritSettings, build_uniform_hierarchy

    problem = Dahlquist(t_start=0, t_stop=5, nt=101)
    hierarchy = build_uniform_hierarchy(problem, levels=2, coarsening=2)
    solver = MgritSolver(hierarchy, MgritSettings(tol=1e-10))
    info = solver.solve()
    u = solver.solution()
"""

from .applications import (
    Dahlquist,
    Heat1D,
    Heat1DTransfer,
    Heat2D,
    heat1d_exact,
    heat1d_forcing,
    heat2d_exact,
    heat2d_forcing,
)
from .core import (
    Application,
    DenseVector,
    IdentityTransfer,
    PropagationError,
    SpatialTransfer,
    StateVector,
    TimeGrid,
    sequential_solve,
)
from .hierarchy import (
    Hierarchy,
    HierarchyError,
    LevelProblem,
    build_hierarchy_from_grids,
    build_uniform_hierarchy,
    cf_splitting,
)
from .runtime import (
    CommunicatorSplit,
    LocalTransport,
    MpiTransport,
    ThreadTransport,
    TimeDecomposition,
    TransportError,
    distribute_points,
    split_communicator,
    split_mpi_communicator,
)
from .solver import (
    DivergenceError,
    LevelState,
    MgritSettings,
    MgritSolver,
    SolveInfo,
    combine_residual_norms,
    solve_parallel,
)

__version__ = "0.1.0"

__all__ = [
    "Application",
    "CommunicatorSplit",
    "Dahlquist",
    "DenseVector",
    "DivergenceError",
    "Heat1D",
    "Heat1DTransfer",
    "Heat2D",
    "Hierarchy",
    "HierarchyError",
    "IdentityTransfer",
    "LevelProblem",
    "LevelState",
    "LocalTransport",
    "MgritSettings",
    "MgritSolver",
    "MpiTransport",
    "PropagationError",
    "SolveInfo",
    "SpatialTransfer",
    "StateVector",
    "ThreadTransport",
    "TimeDecomposition",
    "TimeGrid",
    "TransportError",
    "build_hierarchy_from_grids",
    "build_uniform_hierarchy",
    "cf_splitting",
    "combine_residual_norms",
    "distribute_points",
    "heat1d_exact",
    "heat1d_forcing",
    "heat2d_exact",
    "heat2d_forcing",
    "sequential_solve",
    "solve_parallel",
    "split_communicator",
    "split_mpi_communicator",
]
