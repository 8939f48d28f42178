"""
Tests for the simulation and verification services.

These tests verify that the service layer loads inputs, drives the solver,
writes the run artifacts through the repository and reports results.
"""
from pathlib import Path

import pytest

from morphshell.core.errors import InputError, MeshError, StimulusError
from morphshell.core.mesh import write_mesh
from morphshell.core.patterns import lattice_strip
from morphshell.models.config import load_config, parse_config
from morphshell.repositories.filesystem_repository import FilesystemRepository
from morphshell.services.simulation_service import SimulationService, load_surface, stage_configs, sweep
from morphshell.services.verification_service import (
    VerificationService,
    cantilever_benchmark,
    uniaxial_benchmark,
)


@pytest.fixture
def service(output_root: Path):
    with FilesystemRepository(output_root) as repository:
        yield SimulationService(repository)


class TestRun:
    """Tests for SimulationService.run."""

    def test_rest_run(self, service: SimulationService, rest_config_file: Path, output_root: Path):
        """A zero-stimulus run converges in one step and leaves the plate flat."""
        summary = service.run(load_config(rest_config_file))

        assert summary.run_id == "rest_c"
        assert summary.converged
        assert summary.steps_accepted == 1
        assert summary.steps_rejected == 0
        assert summary.energy_total == 0.0
        assert summary.aspect_ratio == pytest.approx(0.0, abs=1e-12)
        assert summary.n_bilayer_triangles > 0
        assert summary.ssim_mean is None

    def test_rest_run_artifacts(self, service: SimulationService, rest_config_file: Path, output_root: Path):
        service.run(load_config(rest_config_file))
        run_dir = output_root / "rest_c"

        for name in ("step_0000.obj", "step_0000_edges.tsv", "step_0000_hinges.tsv", "run_log.tsv", "summary.json"):
            assert (run_dir / name).is_file()
        log = (run_dir / "run_log.tsv").read_text().splitlines()
        assert log[0].split("\t")[0] == "step"
        assert len(log) == 2

    def test_run_id_argument_wins(self, service: SimulationService, rest_config_file: Path, output_root: Path):
        summary = service.run(load_config(rest_config_file), run_id="renamed")
        assert summary.run_id == "renamed"
        assert (output_root / "renamed" / "summary.json").is_file()

    def test_custom_directory(self, service: SimulationService, rest_config_file: Path, tmp_path: Path):
        config = load_config(rest_config_file, {"output.directory": tmp_path / "elsewhere"})
        service.run(config)
        assert (tmp_path / "elsewhere" / "summary.json").is_file()

    def test_invalid_stimulus_writes_nothing(self, service: SimulationService, tmp_path: Path, output_root: Path):
        """A mesh without a bilayer cannot be heated; the run fails before creating its directory."""
        path = tmp_path / "plain.mesh"
        write_mesh(lattice_strip(3, 2), path)
        config = parse_config({"mesh": {"path": str(path)}, "schedule": {"target_eps_pre": -0.1}})

        with pytest.raises(StimulusError):
            service.run(config)
        assert not (output_root / "plain").exists()

    def test_repeated_runs_are_byte_identical(self, service: SimulationService, mesh_file: Path, output_root: Path):
        """A heated strip run twice writes the same bytes apart from its run id."""
        config = parse_config({"mesh": {"path": str(mesh_file)}, "schedule": {"target_eps_pre": -0.05}})
        first = service.run(config, run_id="first")
        second = service.run(config, run_id="second")

        assert first.final_eps_pre == -0.05
        assert first.model_dump(exclude={"run_id"}) == second.model_dump(exclude={"run_id"})
        names = sorted(p.name for p in (output_root / "first").iterdir() if p.name != "summary.json")
        assert any(name.endswith(".obj") for name in names)
        assert names == sorted(p.name for p in (output_root / "second").iterdir() if p.name != "summary.json")
        for name in names:
            assert (output_root / "first" / name).read_bytes() == (output_root / "second" / name).read_bytes()

    @pytest.mark.slow
    def test_star_rises_through_its_stages(self, service: SimulationService):
        """Each stage of the six-armed star stands taller and folds harder at a single-layer hinge."""
        configs = stage_configs(parse_config({"mesh": {"pattern": "A"}, "schedule": {"target_eps_pre": -0.2}}))
        summaries = [service.run(c) for c in configs]

        assert all(s.converged for s in summaries), [s.message for s in summaries]
        assert [s.final_eps_pre for s in summaries] == [-0.20, -0.30, -0.77]
        ratios = [s.aspect_ratio for s in summaries]
        angles = [s.max_abs_angle for s in summaries]
        assert all(a < b for a, b in zip(ratios, ratios[1:])), ratios
        assert all(a < b for a, b in zip(angles, angles[1:])), angles
        assert all(s.max_angle_region == "single_layer" for s in summaries)

    @pytest.mark.slow
    def test_cross_stands_at_least_as_tall_as_wide(self, service: SimulationService):
        config = parse_config({"mesh": {"pattern": "C"}, "schedule": {"target_eps_pre": -0.5}})
        summary = service.run(config)

        assert summary.converged, summary.message
        assert summary.aspect_ratio >= 1.0


class TestQueries:
    """Tests for listing and fetching stored runs."""

    def test_get_run(self, service: SimulationService, rest_config_file: Path):
        service.run(load_config(rest_config_file))
        summary = service.get_run("rest_c")

        assert summary is not None
        assert summary.converged

    def test_get_missing_run(self, service: SimulationService):
        assert service.get_run("nothing") is None

    def test_list_runs_sorted(self, service: SimulationService, rest_config_file: Path):
        config = load_config(rest_config_file)
        service.run(config, run_id="second")
        service.run(config, run_id="first")

        assert [s.run_id for s in service.list_runs()] == ["first", "second"]

    def test_list_runs_empty(self, service: SimulationService):
        assert service.list_runs() == []

    def test_final_snapshot(self, service: SimulationService, rest_config_file: Path, output_root: Path):
        service.run(load_config(rest_config_file))
        assert service.final_snapshot("rest_c") == output_root / "rest_c" / "step_0000.obj"


class TestCompare:
    """Tests for shape comparison through the service."""

    def test_compare_box_files(self, service: SimulationService, box_files: tuple[Path, Path]):
        simulated, reference = box_files
        report = service.compare(simulated, reference, resolution=6)

        assert report.scale == pytest.approx(1.5, rel=1e-6)
        assert report.alignment_rms == pytest.approx(0.0, abs=1e-8)
        assert report.ssim_mean > 0.9
        assert report.aspect_ratio_simulated == pytest.approx(0.25, rel=1e-6)
        assert report.aspect_ratio_reference == pytest.approx(0.25, rel=1e-6)
        assert report.resolution == 6

    def test_missing_surface(self, tmp_path: Path):
        with pytest.raises(InputError, match="not found"):
            load_surface(tmp_path / "missing.obj")

    def test_empty_surface(self, tmp_path: Path):
        path = tmp_path / "empty.obj"
        path.write_text("# nothing here\n")
        with pytest.raises(MeshError):
            load_surface(path)


class TestStages:
    """Tests for stage expansion and parallel sweeps."""

    def test_stage_configs(self, rest_config_file: Path):
        configs = stage_configs(load_config(rest_config_file))

        assert [c.name for c in configs] == ["rest_c_eps0.10", "rest_c_eps0.30", "rest_c_eps0.50"]
        assert [c.schedule.target_eps_pre for c in configs] == [-0.10, -0.30, -0.50]

    def test_stages_need_a_pattern(self, mesh_file: Path):
        config = parse_config({"mesh": {"path": str(mesh_file)}, "schedule": {"target_eps_pre": -0.1}})
        with pytest.raises(InputError):
            stage_configs(config)

    def test_sweep_keeps_order_and_renames_duplicates(self, rest_config_file: Path, output_root: Path):
        config = load_config(rest_config_file)
        entries = sweep([config, config], output_root, max_workers=2)

        assert [e.run_id for e in entries] == ["rest_c", "rest_c_2"]
        assert all(e.exit_code == 0 for e in entries)
        assert (output_root / "rest_c_2" / "summary.json").is_file()


class TestVerification:
    """Tests for the verification suite."""

    def test_uniaxial_benchmark(self):
        check = uniaxial_benchmark()
        assert check.passed, check.detail

    def test_cantilever_benchmark(self):
        check = cantilever_benchmark()
        assert check.passed, check.detail

    def test_small_suite_passes(self):
        report = VerificationService(samples=2, seed=1, strip=3).run()

        assert report.passed, [c.name for c in report.failures()]
        names = [c.name for c in report.checks]
        assert "gradient_fd_two_triangle" in names
        assert "hessian_fd_strip_3x3" in names
        assert "hessian_symmetry" in names
