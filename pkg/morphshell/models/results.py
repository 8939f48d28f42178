from typing import Literal

from pydantic import BaseModel, Field, computed_field


class StepSummary(BaseModel):
    """One row of the run log."""
    index: int
    eps_pre: float
    step_size: float
    perturbation: float
    iterations: int
    energy: float | None = Field(description="Energy at convergence; null for rejected steps")
    max_force: float | None = None
    accepted: bool
    final_residual: float | None = None


class RunSummary(BaseModel):
    """Outcome of one simulation run, written as ``summary.json``."""
    run_id: str = Field(description="Name of the run directory")
    status: Literal["converged", "diverged", "aborted"]
    message: str = ""
    n_nodes: int
    n_edges: int
    n_triangles: int
    n_hinges: int
    n_bilayer_triangles: int
    target_eps_pre: float
    final_eps_pre: float
    steps_accepted: int
    steps_rejected: int
    newton_iterations: int
    energy_total: float
    energy_stretch: float
    energy_bend: float
    max_node_force: float | None = None
    aspect_ratio: float | None = Field(default=None, description="Height over footprint diameter h/d")
    max_abs_angle: float = Field(description="Largest |dihedral angle| over all hinges (rad)")
    max_angle_region: Literal["single_layer", "bilayer"]
    ssim_mean: float | None = None
    reference: str | None = None
    steps: list[StepSummary] = Field(default_factory=list)

    @computed_field
    @property
    def converged(self) -> bool:
        return self.status == "converged"


class CheckResult(BaseModel):
    name: str
    value: float = Field(description="Measured error of the check")
    threshold: float
    passed: bool
    detail: str = ""


class VerifyReport(BaseModel):
    checks: list[CheckResult]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]


class CompareReport(BaseModel):
    """Alignment and similarity between a simulated and a reference shape."""
    simulated: str
    reference: str
    ssim_mean: float
    scale: float
    rotation: list[list[float]]
    translation: list[float]
    alignment_rms: float
    alignment_iterations: int
    aspect_ratio_simulated: float
    aspect_ratio_reference: float
    resolution: int
    box: list[list[float]]


class SweepEntry(BaseModel):
    run_id: str
    exit_code: int = Field(description="0 converged, 2 input error, 3 no convergence")
    summary: RunSummary | None = None
    error: str | None = None
