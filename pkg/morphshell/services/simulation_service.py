import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import trimesh

from morphshell.core.energy import EnergyParams, ShellEnergy
from morphshell.core.errors import InputError, MeshError, MorphShellError
from morphshell.core.material import assemble_material
from morphshell.core.mesh import Mesh, Region, build_mesh, read_mesh, to_trimesh
from morphshell.core.metrics import Comparison, aspect_ratio, compare
from morphshell.core.patterns import build_pattern, pattern_spec
from morphshell.core.solver import SolverState, StepRecord, resolve_constraints, solve_equilibrium
from morphshell.core.stimulus import thermal_field
from morphshell.models.config import MeshBlock, RunConfig
from morphshell.models.results import CompareReport, RunSummary, StepSummary, SweepEntry
from morphshell.repositories.filesystem_repository import FilesystemRepository
from morphshell.repositories.interface_repository import ArtifactRepository

logger = logging.getLogger("morphshell")


def load_mesh(block: MeshBlock) -> Mesh:
    if block.pattern is not None:
        return build_pattern(block.pattern)
    mesh = read_mesh(block.path, block.region_path)
    if block.bilayer_triangles is not None:
        mesh = build_mesh(mesh.nodes, mesh.triangles, block.bilayer_triangles)
    return mesh


def load_surface(path: Path | str) -> trimesh.Trimesh:
    """Reference or snapshot surface from any format trimesh reads."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"surface file not found: {path}")
    try:
        surface = trimesh.load(path, force="mesh", process=False)
    except Exception as e:
        raise MeshError(f"{path}: unreadable surface: {e}") from e
    if not isinstance(surface, trimesh.Trimesh) or len(surface.vertices) == 0:
        raise MeshError(f"{path}: surface has no vertices")
    return surface


def compare_report(comparison: Comparison, simulated: str, reference: str) -> CompareReport:
    transform = comparison.transform
    return CompareReport(
        simulated=simulated,
        reference=reference,
        ssim_mean=comparison.ssim.mean,
        scale=transform.scale,
        rotation=transform.rotation.tolist(),
        translation=transform.translation.tolist(),
        alignment_rms=transform.rms,
        alignment_iterations=transform.iterations,
        aspect_ratio_simulated=comparison.aspect_ratio_simulated,
        aspect_ratio_reference=comparison.aspect_ratio_reference,
        resolution=comparison.ssim.grid.shape[0],
        box=comparison.simulated.box.tolist(),
    )


def _finite(value: float) -> float | None:
    return value if np.isfinite(value) else None


def _step_summary(record: StepRecord) -> StepSummary:
    return StepSummary(
        index=record.index,
        eps_pre=record.eps_pre,
        step_size=record.step_size,
        perturbation=record.perturbation,
        iterations=record.iterations,
        energy=_finite(record.energy),
        max_force=_finite(record.max_force),
        accepted=record.accepted,
        final_residual=record.residual_norms[-1] if record.residual_norms else None,
    )


class SimulationService:
    def __init__(self, repository: ArtifactRepository):
        self.repository = repository
        logger.debug("SimulationService initialized with %s", type(repository).__name__)

    def run(self, config: RunConfig, run_id: str | None = None) -> RunSummary:
        """Load, solve and export one configuration."""
        run_id = run_id or config.name
        logger.info("Starting run %s", run_id)
        mesh = load_mesh(config.mesh)
        material = assemble_material(config.material, mesh.mean_edge_length)
        params = EnergyParams.default(material, mesh.mean_edge_length, config.material.beta)
        schedule = config.schedule.to_schedule()
        reference = load_surface(config.metrics.reference) if config.metrics.reference else None
        # fail on unusable inputs before anything is written
        if schedule.target_eps_pre < 0:
            thermal_field(mesh, schedule.target_eps_pre)
        resolve_constraints(mesh, config.solver)

        self.repository.create_run(run_id, config.output.directory)
        every = config.output.snapshot_every
        accepted = 0

        def on_step(state: SolverState, record: StepRecord, report) -> None:
            nonlocal accepted
            accepted += 1
            final = record.eps_pre == schedule.target_eps_pre
            if final or (every and accepted % every == 0):
                self.repository.write_snapshot(run_id, record.index, mesh, state.x, report)

        state = solve_equilibrium(mesh, params, schedule, config.solver, on_step=on_step)
        self.repository.write_run_log(run_id, state.history)

        field = thermal_field(mesh, state.eps_pre) if state.eps_pre < 0 else None
        report = ShellEnergy(mesh, params, field).report(state.x)
        surface = to_trimesh(mesh, state.x)
        try:
            ratio = aspect_ratio(surface)
        except InputError:
            ratio = None
        peak = int(np.argmax(np.abs(report.angle))) if mesh.n_hinges else None

        ssim_mean = None
        if reference is not None and state.status == "converged":
            comparison = compare(
                surface, reference, n=config.metrics.resolution, pad=config.metrics.pad, box=config.metrics.box
            )
            self.repository.write_comparison(run_id, comparison)
            ssim_mean = comparison.ssim.mean

        accepted_steps = state.accepted_steps
        summary = RunSummary(
            run_id=run_id,
            status=state.status,
            message=state.message,
            n_nodes=mesh.n_nodes,
            n_edges=mesh.n_edges,
            n_triangles=mesh.n_triangles,
            n_hinges=mesh.n_hinges,
            n_bilayer_triangles=len(mesh.bilayer_triangles),
            target_eps_pre=schedule.target_eps_pre,
            final_eps_pre=state.eps_pre,
            steps_accepted=len(accepted_steps),
            steps_rejected=len(state.history) - len(accepted_steps),
            newton_iterations=sum(r.iterations for r in accepted_steps),
            energy_total=report.total,
            energy_stretch=report.stretch_total,
            energy_bend=report.bend_total,
            max_node_force=accepted_steps[-1].max_force if accepted_steps else None,
            aspect_ratio=ratio,
            max_abs_angle=float(abs(report.angle[peak])) if peak is not None else 0.0,
            max_angle_region=(
                "bilayer" if peak is not None and mesh.hinge_region[peak] == Region.BILAYER else "single_layer"
            ),
            ssim_mean=ssim_mean,
            reference=str(config.metrics.reference) if config.metrics.reference else None,
            steps=[_step_summary(r) for r in state.history],
        )
        self.repository.write_summary(summary)
        logger.info(
            "Run %s finished: %s at eps_pre=%.4f after %d steps (h/d %s)",
            run_id, summary.status, summary.final_eps_pre, summary.steps_accepted,
            "n/a" if ratio is None else f"{ratio:.4f}",
        )
        return summary

    def get_run(self, run_id: str) -> RunSummary | None:
        summary = self.repository.get_summary(run_id)
        if summary is None:
            logger.warning("Run %s not found", run_id)
        return summary

    def list_runs(self) -> list[RunSummary]:
        runs = self.repository.list_summaries()
        logger.debug("Found %d runs", len(runs))
        return runs

    def compare(
        self,
        simulated: Path | str,
        reference: Path | str,
        resolution: int = 10,
        pad: float = 0.05,
        box: list[list[float]] | None = None,
    ) -> CompareReport:
        """Align a simulated surface to a reference surface and score their similarity."""
        logger.info("Comparing %s against %s", simulated, reference)
        comparison = compare(load_surface(simulated), load_surface(reference), n=resolution, pad=pad, box=box)
        return compare_report(comparison, str(simulated), str(reference))

    def final_snapshot(self, run_id: str) -> Path | None:
        return self.repository.final_snapshot(run_id)


def stage_configs(config: RunConfig) -> list[RunConfig]:
    """One configuration per stage value of the config's bundled pattern."""
    if config.mesh.pattern is None:
        raise InputError("stage sweeps need a bundled pattern mesh")
    configs = []
    for eps in pattern_spec(config.mesh.pattern).stages:
        run_id = f"{config.name}_eps{abs(eps):.2f}"
        directory = config.output.directory / run_id if config.output.directory is not None else None
        schedule = config.schedule.model_copy(
            update={"target_eps_pre": eps, "target_t_ratio": None, "target_temperature": None}
        )
        output = config.output.model_copy(update={"run_id": run_id, "directory": directory})
        configs.append(config.model_copy(update={"schedule": schedule, "output": output}))
    return configs


def _run_isolated(config: RunConfig, root: str) -> SweepEntry:
    with FilesystemRepository(root) as repository:
        try:
            summary = SimulationService(repository).run(config)
        except MorphShellError as e:
            logger.error("Run %s failed: %s", config.name, e)
            return SweepEntry(run_id=config.name, exit_code=e.exit_code, error=str(e))
    return SweepEntry(run_id=summary.run_id, exit_code=0 if summary.converged else 3, summary=summary)


def sweep(configs: list[RunConfig], root: Path | str, max_workers: int | None = None) -> list[SweepEntry]:
    """Run independent configurations in separate processes; results keep the input order."""
    seen: dict[str, int] = {}
    unique = []
    for config in configs:
        count = seen.get(config.name, 0)
        seen[config.name] = count + 1
        if count:
            output = config.output.model_copy(update={"run_id": f"{config.name}_{count + 1}", "directory": None})
            config = config.model_copy(update={"output": output})
        unique.append(config)
    logger.info("Sweeping %d runs", len(unique))
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(_run_isolated, config, str(root)) for config in unique]
        return [future.result() for future in futures]
