"""
Tests for the run configuration and result models.

These tests verify:
- TOML parsing, path resolution and overrides
- Error locations for invalid configuration
- Stimulus targets given as prestrain or temperature
- Result model computed fields
"""
from pathlib import Path

import pytest
from pydantic import ValidationError

from morphshell.core.errors import ConfigError
from morphshell.models.config import (
    MeshBlock,
    OutputBlock,
    ScheduleBlock,
    load_config,
    parse_config,
)
from morphshell.models.config import output_root as resolve_output_root
from morphshell.models.results import CheckResult, RunSummary, VerifyReport

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _summary(status: str = "converged") -> RunSummary:
    return RunSummary(
        run_id="demo",
        status=status,
        n_nodes=4,
        n_edges=5,
        n_triangles=2,
        n_hinges=1,
        n_bilayer_triangles=1,
        target_eps_pre=-0.1,
        final_eps_pre=-0.1,
        steps_accepted=2,
        steps_rejected=0,
        newton_iterations=6,
        energy_total=1.0,
        energy_stretch=0.5,
        energy_bend=0.5,
        max_abs_angle=0.2,
        max_angle_region="bilayer",
    )


class TestLoadConfig:
    """Tests for reading TOML run configurations."""

    @pytest.mark.parametrize("name", ["pattern_a", "pattern_b", "pattern_c"])
    def test_bundled_configs(self, name: str):
        config = load_config(CONFIGS / f"{name}.toml")

        assert config.name == name
        assert config.mesh.pattern == name[-1].upper()
        assert config.schedule.target_eps_pre < 0
        assert config.solver.constraint == "three-two-one"

    def test_minimal_config(self, rest_config_file: Path):
        config = load_config(rest_config_file)

        assert config.name == "rest_c"
        assert config.source == rest_config_file
        assert config.material.stretch_scale == 10.0
        assert config.output.snapshot_every == 1

    def test_name_falls_back_to_file_stem(self, tmp_path: Path):
        path = tmp_path / "my_run.toml"
        path.write_text('[mesh]\npattern = "B"\n\n[schedule]\ntarget_eps_pre = -0.1\n')
        assert load_config(path).name == "my_run"

    def test_relative_paths_resolve_against_config(self, tmp_path: Path, mesh_file: Path):
        path = tmp_path / "strip.toml"
        path.write_text(f'[mesh]\npath = "{mesh_file.name}"\n\n[schedule]\ntarget_eps_pre = -0.1\n')
        config = load_config(path)
        assert config.mesh.path == tmp_path / mesh_file.name

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.toml")

    def test_syntax_error_has_line(self, tmp_path: Path):
        path = tmp_path / "broken.toml"
        path.write_text('[mesh]\npattern = "C"\n\n[schedule\n')
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.line == 4

    def test_invalid_value_has_line(self, tmp_path: Path):
        """Validation errors point at the offending key."""
        path = tmp_path / "bad.toml"
        path.write_text('[mesh]\npattern = "C"\n\n[schedule]\ntarget_eps_pre = 0.2\n')
        with pytest.raises(ConfigError) as exc:
            load_config(path)

        assert exc.value.line == 5
        assert str(exc.value).startswith(f"{path}:5:")
        assert "schedule.target_eps_pre" in str(exc.value)

    def test_unknown_key_rejected(self, tmp_path: Path):
        path = tmp_path / "typo.toml"
        path.write_text('[mesh]\npattern = "C"\n\n[schedule]\ntarget_eps_pre = -0.1\n\n[solver]\ntolerence = 1e-3\n')
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.line == 8

    def test_missing_referenced_file(self, tmp_path: Path):
        path = tmp_path / "missing_mesh.toml"
        path.write_text('[mesh]\npath = "nowhere.mesh"\n\n[schedule]\ntarget_eps_pre = -0.1\n')
        with pytest.raises(ConfigError, match="file not found") as exc:
            load_config(path)
        assert exc.value.line == 2


class TestOverrides:
    """Tests for command-line style overrides."""

    def test_override_replaces_value(self, rest_config_file: Path):
        config = load_config(rest_config_file, {"output.run_id": "other", "solver.mode": "dynamic"})
        assert config.name == "other"
        assert config.solver.mode == "dynamic"

    def test_none_is_ignored(self, rest_config_file: Path):
        config = load_config(rest_config_file, {"output.run_id": None})
        assert config.name == "rest_c"

    def test_target_override_drops_other_targets(self):
        """Overriding the prestrain replaces a temperature target instead of conflicting with it."""
        data = {"mesh": {"pattern": "A"}, "schedule": {"target_t_ratio": 1.1}}
        config = parse_config(data, overrides={"schedule.target_eps_pre": -0.2})

        assert config.schedule.target_t_ratio is None
        assert config.schedule.target_strain() == -0.2

    def test_override_into_scalar_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"mesh": "C", "schedule": {"target_eps_pre": 0.0}}, overrides={"mesh.pattern": "A"})


class TestBlocks:
    """Tests for individual configuration blocks."""

    def test_mesh_needs_one_source(self):
        with pytest.raises(ValidationError):
            MeshBlock()
        with pytest.raises(ValidationError):
            MeshBlock(pattern="A", path=Path("x.mesh"))

    def test_pattern_has_its_own_region(self):
        with pytest.raises(ValidationError):
            MeshBlock(pattern="A", bilayer_triangles=[0, 1])

    def test_schedule_needs_one_target(self):
        with pytest.raises(ValidationError):
            ScheduleBlock()
        with pytest.raises(ValidationError):
            ScheduleBlock(target_eps_pre=-0.1, target_t_ratio=1.1)

    def test_temperature_ratio_target(self):
        """T/Tg = 1.1 reads L/L0 = 0.57 off the bundled curve."""
        assert ScheduleBlock(target_t_ratio=1.1).target_strain() == pytest.approx(-0.43)

    def test_oven_temperature_target(self):
        schedule = ScheduleBlock(target_temperature=1.1 * 366.5).to_schedule()
        assert schedule.target_eps_pre == pytest.approx(-0.43)

    def test_below_glass_transition_is_unstrained(self):
        assert ScheduleBlock(target_t_ratio=0.9).target_strain() == 0.0

    def test_run_id_characters(self):
        with pytest.raises(ValidationError):
            OutputBlock(run_id="../escape")
        assert OutputBlock(run_id="pattern_c.v2").run_id == "pattern_c.v2"

    def test_name_from_pattern(self):
        config = parse_config({"mesh": {"pattern": "B"}, "schedule": {"target_eps_pre": -0.1}})
        assert config.name == "pattern_b"


class TestOutputRoot:
    """Tests for the output root lookup."""

    def test_flag_wins(self, tmp_path: Path):
        assert resolve_output_root(tmp_path / "flag") == tmp_path / "flag"

    def test_environment(self, output_root: Path):
        assert resolve_output_root() == output_root

    def test_default(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.delenv("MORPHSHELL_OUTPUT_ROOT")
        assert resolve_output_root() == Path("runs")


class TestResults:
    """Tests for the result models."""

    def test_converged_is_computed(self):
        assert _summary().converged
        assert not _summary("diverged").converged
        assert _summary().model_dump()["converged"] is True

    def test_summary_round_trips_through_json(self):
        summary = _summary()
        assert RunSummary.model_validate_json(summary.model_dump_json()) == summary

    def test_verify_report_passes_when_all_checks_pass(self):
        good = CheckResult(name="a", value=1e-9, threshold=1e-6, passed=True)
        bad = CheckResult(name="b", value=1.0, threshold=1e-6, passed=False)

        assert VerifyReport(checks=[good]).passed
        report = VerifyReport(checks=[good, bad])
        assert not report.passed
        assert report.failures() == [bad]
