"""
Tests for the command-line entry point and its exit codes.
"""
import json
from pathlib import Path

import pytest

from morphshell.cli import build_parser, main


class TestParser:
    """Tests for argument parsing."""

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_global_flags_before_subcommand(self):
        args = build_parser().parse_args(["--log-level", "DEBUG", "--output-root", "out", "verify", "--samples", "3"])

        assert args.log_level == "DEBUG"
        assert args.output_root == "out"
        assert args.samples == 3

    def test_mode_choices(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["run", "config.toml", "--mode", "quasi"])


class TestRunCommand:
    """Tests for ``morphshell run``."""

    def test_run_prints_summary(self, rest_config_file: Path, tmp_path: Path, capsys: pytest.CaptureFixture):
        root = tmp_path / "cli_runs"
        code = main(["--output-root", str(root), "run", str(rest_config_file)])

        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["run_id"] == "rest_c"
        assert "steps" not in summary
        assert (root / "rest_c" / "summary.json").is_file()

    def test_overrides(self, rest_config_file: Path, tmp_path: Path, capsys: pytest.CaptureFixture):
        target = tmp_path / "explicit"
        code = main(["run", str(rest_config_file), "--run-id", "cli", "--output", str(target), "--mode", "dynamic"])

        assert code == 0
        assert json.loads(capsys.readouterr().out)["run_id"] == "cli"
        assert (target / "summary.json").is_file()

    def test_missing_config_exits_2(self, tmp_path: Path):
        assert main(["run", str(tmp_path / "missing.toml")]) == 2

    def test_invalid_config_exits_2(self, tmp_path: Path):
        path = tmp_path / "bad.toml"
        path.write_text('[mesh]\npattern = "Z"\n\n[schedule]\ntarget_eps_pre = -0.1\n')
        assert main(["run", str(path)]) == 2


class TestOtherCommands:
    """Tests for ``verify``, ``compare`` and ``sweep``."""

    def test_verify(self, capsys: pytest.CaptureFixture):
        assert main(["verify", "--samples", "1", "--strip", "2"]) == 0
        out = capsys.readouterr().out
        assert "cantilever" in out
        assert "FAIL" not in out

    def test_compare_writes_report(self, box_files: tuple[Path, Path], tmp_path: Path, capsys: pytest.CaptureFixture):
        simulated, reference = box_files
        report = tmp_path / "ssim.tsv"
        code = main(["compare", str(simulated), str(reference), "--resolution", "4", "--report", str(report)])

        assert code == 0
        assert json.loads(capsys.readouterr().out)["resolution"] == 4
        lines = report.read_text().splitlines()
        assert lines[0].startswith("# mean_ssim\t")
        assert len(lines) == 2 + 4**3

    def test_compare_missing_file_exits_2(self, box_files: tuple[Path, Path], tmp_path: Path):
        simulated, _ = box_files
        assert main(["compare", str(simulated), str(tmp_path / "missing.obj")]) == 2

    def test_sweep(self, rest_config_file: Path, output_root: Path, capsys: pytest.CaptureFixture):
        assert main(["sweep", str(rest_config_file), "--workers", "1"]) == 0
        assert "rest_c" in capsys.readouterr().out
        assert (output_root / "rest_c" / "summary.json").is_file()
