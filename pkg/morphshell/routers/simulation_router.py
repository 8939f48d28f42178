from collections.abc import Generator
from pathlib import Path
from typing import Any

from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, Field, model_validator

from morphshell.core.errors import InputError, MorphShellError
from morphshell.models.config import load_config, output_root, parse_config
from morphshell.repositories.filesystem_repository import FilesystemRepository
from morphshell.services.simulation_service import SimulationService
from morphshell.services.verification_service import VerificationService

router = APIRouter()


class RunRequest(BaseModel):
    """A run configuration given inline (same blocks as the TOML file) or by path."""
    config: dict[str, Any] | None = Field(
        default=None,
        description="Configuration blocks",
        json_schema_extra={"example": {"mesh": {"pattern": "C"}, "schedule": {"target_eps_pre": -0.1}}},
    )
    config_path: str | None = Field(default=None, description="Path of a TOML configuration on the server")
    run_id: str | None = Field(default=None, description="Overrides output.run_id")

    @model_validator(mode="after")
    def _one_source(self) -> "RunRequest":
        if (self.config is None) == (self.config_path is None):
            raise ValueError("give exactly one of 'config' or 'config_path'")
        return self


class VerifyRequest(BaseModel):
    samples: int = Field(default=100, ge=1, le=1000)
    seed: int = 0
    strip: int = Field(default=5, ge=2, le=20)


class CompareRequest(BaseModel):
    reference: str = Field(description="Reference surface file")
    simulated: str | None = Field(default=None, description="Simulated surface file")
    run_id: str | None = Field(default=None, description="Use the final snapshot of this run")
    resolution: int = Field(default=10, ge=2, le=64)
    pad: float = Field(default=0.05, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> "CompareRequest":
        if (self.simulated is None) == (self.run_id is None):
            raise ValueError("give exactly one of 'simulated' or 'run_id'")
        return self


def get_simulation_service() -> Generator[SimulationService, None, None]:
    with FilesystemRepository(output_root()) as repository:
        yield SimulationService(repository)


@router.post("/runs")
def create_run(request: RunRequest, simulation_service: SimulationService = Depends(get_simulation_service)):
    """Run a simulation to completion and return its summary."""
    overrides = {"output.run_id": request.run_id}
    try:
        if request.config_path is not None:
            config = load_config(request.config_path, overrides)
        else:
            config = parse_config(request.config, Path.cwd(), overrides=overrides)
        summary = simulation_service.run(config)
    except InputError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    except MorphShellError as e:
        raise HTTPException(status_code=400, detail=f"Error running simulation: {str(e)}") from e
    return {"detail": "Run finished", "run": summary}


@router.get("/runs")
def get_all_runs(simulation_service: SimulationService = Depends(get_simulation_service)):
    """List the summaries of every stored run."""
    runs = simulation_service.list_runs()
    return {"runs": runs, "count": len(runs)}


@router.get("/runs/{run_id}")
def get_run(run_id: str, simulation_service: SimulationService = Depends(get_simulation_service)):
    """Get one run summary."""
    summary = simulation_service.get_run(run_id)
    if summary is None:
        raise HTTPException(status_code=404, detail="Run not found")
    return summary


@router.post("/verify")
def verify(request: VerifyRequest):
    """Derivative checks and analytic benchmarks."""
    return VerificationService(request.samples, request.seed, request.strip).run()


@router.post("/compare")
def compare_shapes(request: CompareRequest, simulation_service: SimulationService = Depends(get_simulation_service)):
    """Align a simulated shape to a reference and report SSIM and aspect ratios."""
    simulated = request.simulated
    if request.run_id is not None:
        if simulation_service.get_run(request.run_id) is None:
            raise HTTPException(status_code=404, detail="Run not found")
        snapshot = simulation_service.final_snapshot(request.run_id)
        if snapshot is None:
            raise HTTPException(status_code=404, detail="Run has no snapshot")
        simulated = str(snapshot)
    try:
        return simulation_service.compare(simulated, request.reference, request.resolution, request.pad)
    except InputError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    except MorphShellError as e:
        raise HTTPException(status_code=400, detail=f"Error comparing shapes: {str(e)}") from e
