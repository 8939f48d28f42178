from abc import ABC, abstractmethod
from pathlib import Path

from morphshell.core.energy import EnergyReport
from morphshell.core.mesh import DofVector, Mesh
from morphshell.core.metrics import Comparison
from morphshell.core.solver import StepRecord
from morphshell.models.results import RunSummary


class ArtifactRepository(ABC):
    """Abstract interface for run artifact storage."""

    @abstractmethod
    def create_run(self, run_id: str, directory: Path | None = None) -> Path:
        """Reserve the directory of a new run."""
        pass

    @abstractmethod
    def write_snapshot(self, run_id: str, step: int, mesh: Mesh, x: DofVector, report: EnergyReport) -> None:
        """Store the deformed mesh and its field tables for one accepted step."""
        pass

    @abstractmethod
    def write_run_log(self, run_id: str, history: list[StepRecord]) -> None:
        """Store the step history."""
        pass

    @abstractmethod
    def write_comparison(self, run_id: str, comparison: Comparison) -> None:
        """Store the per-voxel SSIM report."""
        pass

    @abstractmethod
    def write_summary(self, summary: RunSummary) -> None:
        """Store the run summary."""
        pass

    @abstractmethod
    def get_summary(self, run_id: str) -> RunSummary | None:
        """Retrieve a run summary by run ID."""
        pass

    @abstractmethod
    def list_summaries(self) -> list[RunSummary]:
        """Retrieve every stored run summary."""
        pass

    @abstractmethod
    def final_snapshot(self, run_id: str) -> Path | None:
        """Path of the last snapshot mesh of a run."""
        pass
