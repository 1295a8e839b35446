"""Finite element simulation of coupled ion transport, electrostatics, and heat.

The solver advances drift-diffusion equations for charged species, the
potential they induce, and a temperature equation fed by Joule heating, all
on P1 triangulations with an exponentially fitted (edge-averaged) assembly
that keeps densities and temperature positive and conserves ion mass.
"""

__version__ = "0.1.0"

from .config import (
    BoundaryParams,
    MeshParams,
    OutputParams,
    PhysConstants,
    ProblemConfig,
    SolverControls,
    SpeciesParams,
    load_config,
    parse_config,
    serialize_config,
)
from .fem import ElemField, Field
from .mesh import build_rect_mesh
from .solver import (
    SimResult,
    SimState,
    build_problem,
    initial_state,
    run_simulation,
    time_step,
)

__all__ = [
    "BoundaryParams",
    "ElemField",
    "Field",
    "MeshParams",
    "OutputParams",
    "PhysConstants",
    "ProblemConfig",
    "SimResult",
    "SimState",
    "SolverControls",
    "SpeciesParams",
    "build_problem",
    "build_rect_mesh",
    "initial_state",
    "load_config",
    "parse_config",
    "run_simulation",
    "serialize_config",
    "time_step",
    "__version__",
]
