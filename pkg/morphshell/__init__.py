from morphshell.core.energy import EnergyParams, ShellEnergy
from morphshell.core.mesh import Mesh, build_mesh, read_mesh
from morphshell.core.metrics import align, aspect_ratio, compare, ssim, voxelize
from morphshell.core.patterns import build_pattern
from morphshell.core.solver import SolverConfig, solve_equilibrium
from morphshell.models.config import RunConfig, load_config
from morphshell.repositories.filesystem_repository import FilesystemRepository
from morphshell.repositories.interface_repository import ArtifactRepository
from morphshell.routers.simulation_router import router as simulation_router
from morphshell.services.simulation_service import SimulationService
from morphshell.services.verification_service import VerificationService

__all__ = [
    'simulation_router',
    'Mesh',
    'build_mesh',
    'read_mesh',
    'build_pattern',
    'EnergyParams',
    'ShellEnergy',
    'SolverConfig',
    'solve_equilibrium',
    'align',
    'aspect_ratio',
    'compare',
    'ssim',
    'voxelize',
    'RunConfig',
    'load_config',
    'ArtifactRepository',
    'FilesystemRepository',
    'SimulationService',
    'VerificationService',
]
