import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from trimesh.exchange.obj import export_obj

from morphshell.core.energy import EnergyReport
from morphshell.core.errors import InputError
from morphshell.core.mesh import DofVector, Mesh, to_trimesh
from morphshell.core.metrics import Comparison
from morphshell.core.solver import StepRecord
from morphshell.models.results import RunSummary
from morphshell.repositories.interface_repository import ArtifactRepository

logger = logging.getLogger("morphshell")

SUMMARY_FILE = "summary.json"
RUN_LOG_FILE = "run_log.tsv"
SSIM_FILE = "ssim_report.tsv"
_ARTIFACTS = ("step_*", RUN_LOG_FILE, SUMMARY_FILE, SSIM_FILE)

_FLOAT = "%.17g"


def _write_table(path: Path, columns: list[str], rows: np.ndarray, fmt: list[str]) -> None:
    np.savetxt(path, rows, fmt=fmt, delimiter="\t", header="\t".join(columns), comments="")


class FilesystemRepository(ArtifactRepository):
    """Run artifacts as plain files under ``root/<run_id>/``.

    Nothing written depends on wall-clock time, so the same run reproduces the same bytes.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._dirs: dict[str, Path] = {}

    def __enter__(self):
        self.root.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self._dirs.clear()

    def run_dir(self, run_id: str) -> Path:
        return self._dirs.get(run_id, self.root / run_id)

    def create_run(self, run_id: str, directory: Path | None = None) -> Path:
        path = Path(directory) if directory is not None else self.root / run_id
        if path.is_file():
            raise InputError(f"run directory {path} is a file")
        stale = [p for pattern in _ARTIFACTS for p in path.glob(pattern)] if path.is_dir() else []
        if stale:
            logger.warning("Run directory %s exists; replacing %d artifacts", path, len(stale))
            for p in stale:
                p.unlink()
        path.mkdir(parents=True, exist_ok=True)
        self._dirs[run_id] = path
        return path

    def write_snapshot(self, run_id: str, step: int, mesh: Mesh, x: DofVector, report: EnergyReport) -> None:
        path = self.run_dir(run_id)
        stem = f"step_{step:04d}"
        obj = export_obj(
            to_trimesh(mesh, x), include_normals=False, include_color=False, include_texture=False, digits=12
        )
        (path / f"{stem}.obj").write_text(obj)

        edges = np.column_stack([
            np.arange(mesh.n_edges),
            mesh.edges,
            mesh.edge_region,
            report.strain,
            report.thermal_strain,
            report.stretch,
        ])
        _write_table(
            path / f"{stem}_edges.tsv",
            ["edge", "node_a", "node_b", "region", "strain", "thermal_strain", "stretch_energy"],
            edges,
            ["%d"] * 4 + [_FLOAT] * 3,
        )
        hinges = np.column_stack([
            np.arange(mesh.n_hinges),
            mesh.hinge_edges,
            mesh.hinge_region,
            report.angle,
            report.delta_strain,
            report.delta_strain_thermal,
            report.bend,
        ])
        _write_table(
            path / f"{stem}_hinges.tsv",
            ["hinge", "edge", "region", "angle", "delta_strain", "delta_strain_thermal", "bend_energy"],
            hinges,
            ["%d"] * 3 + [_FLOAT] * 4,
        )
        logger.debug("Snapshot %s written for run %s", stem, run_id)

    def write_run_log(self, run_id: str, history: list[StepRecord]) -> None:
        rows = np.array(
            [
                [
                    r.index, r.eps_pre, r.step_size, r.perturbation, r.iterations, r.energy, r.max_force,
                    r.residual_norms[-1] if r.residual_norms else np.nan, int(r.accepted),
                ]
                for r in history
            ],
            dtype=np.float64,
        ).reshape(-1, 9)
        _write_table(
            self.run_dir(run_id) / RUN_LOG_FILE,
            ["step", "eps_pre", "step_size", "perturbation", "iterations", "energy", "max_force",
             "final_residual", "accepted"],
            rows,
            ["%d"] + [_FLOAT] * 3 + ["%d"] + [_FLOAT] * 3 + ["%d"],
        )

    def write_comparison(self, run_id: str, comparison: Comparison) -> None:
        write_ssim_report(self.run_dir(run_id) / SSIM_FILE, comparison)

    def write_summary(self, summary: RunSummary) -> None:
        path = self.run_dir(summary.run_id) / SUMMARY_FILE
        path.write_text(summary.model_dump_json(indent=2) + "\n")
        logger.info("Summary written to %s", path)

    def get_summary(self, run_id: str) -> RunSummary | None:
        path = self.run_dir(run_id) / SUMMARY_FILE
        if not path.is_file():
            return None
        try:
            return RunSummary.model_validate_json(path.read_text())
        except ValidationError:
            logger.warning("Unreadable summary %s", path)
            return None

    def list_summaries(self) -> list[RunSummary]:
        if not self.root.is_dir():
            return []
        summaries = []
        for path in sorted(self.root.iterdir()):
            if (path / SUMMARY_FILE).is_file():
                summary = self.get_summary(path.name)
                if summary is not None:
                    summaries.append(summary)
        return summaries

    def final_snapshot(self, run_id: str) -> Path | None:
        snapshots = sorted(self.run_dir(run_id).glob("step_*.obj"))
        return snapshots[-1] if snapshots else None


def write_ssim_report(path: Path | str, comparison: Comparison) -> None:
    """Per-voxel intensities and SSIM, preceded by the mean."""
    n = comparison.ssim.grid.shape[0]
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    rows = np.column_stack([
        i.ravel(), j.ravel(), k.ravel(),
        comparison.simulated.intensity.ravel(),
        comparison.reference.intensity.ravel(),
        comparison.ssim.grid.ravel(),
    ])
    np.savetxt(
        path,
        rows,
        fmt=["%d"] * 3 + [_FLOAT] * 3,
        delimiter="\t",
        header=f"# mean_ssim\t{comparison.ssim.mean:.17g}\ni\tj\tk\tintensity_simulated\tintensity_reference\tssim",
        comments="",
    )
