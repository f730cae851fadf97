from .models.chain_model import NodalMesh, PeriodicChain, QCConfiguration
from .models.errors import ConfigError, InvertedBondError, MeshError, ModelError, QCError, SolverError
from .services.energy_models import CouplingModel, ModelKind, atomistic_report, ghost_force
from .services.lattice import build_mesh, reconstruct, representation_vector, restrict, uniform_config
from .services.newton_solver import NewtonSolver, fd_check, solve
from .services.potential import LennardJones, TabulatedPotential, cb_density

__all__ = [
    "__version__",
    "NodalMesh", "PeriodicChain", "QCConfiguration",
    "QCError", "ConfigError", "MeshError", "ModelError", "InvertedBondError", "SolverError",
    "CouplingModel", "ModelKind", "atomistic_report", "ghost_force",
    "build_mesh", "reconstruct", "representation_vector", "restrict", "uniform_config",
    "NewtonSolver", "fd_check", "solve",
    "LennardJones", "TabulatedPotential", "cb_density",
]
__version__ = "1.0.0"
