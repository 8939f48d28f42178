"""Command-line entry point: ``morphshell run | verify | compare | sweep | serve``."""
import argparse
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from dotenv import load_dotenv

from morphshell.core.errors import MorphShellError, VerificationError
from morphshell.core.metrics import compare
from morphshell.models.config import load_config, output_root
from morphshell.repositories.filesystem_repository import FilesystemRepository, write_ssim_report
from morphshell.services.simulation_service import (
    SimulationService,
    compare_report,
    load_surface,
    stage_configs,
    sweep,
)
from morphshell.services.verification_service import VerificationService

logger = logging.getLogger(__name__)

EXIT_OK = 0


def _absolute(path: str | None) -> Path | None:
    return Path(path).resolve() if path is not None else None


def _run(args: argparse.Namespace) -> int:
    overrides = {
        "output.directory": _absolute(args.output),
        "output.run_id": args.run_id,
        "schedule.target_eps_pre": args.target_eps_pre,
        "solver.mode": args.mode,
    }
    config = load_config(args.config, overrides)
    with FilesystemRepository(output_root(args.output_root)) as repository:
        summary = SimulationService(repository).run(config)
    print(summary.model_dump_json(indent=2, exclude={"steps"}))
    return EXIT_OK if summary.converged else 3


def _verify(args: argparse.Namespace) -> int:
    report = VerificationService(args.samples, args.seed, args.strip).run()
    for check in report.checks:
        print(f"{check.name:<28} {check.value:.3e}  (<= {check.threshold:.1e})  {'ok' if check.passed else 'FAIL'}")
    if not report.passed:
        names = ", ".join(check.name for check in report.failures())
        raise VerificationError(f"verification failed: {names}")
    return EXIT_OK


def _compare(args: argparse.Namespace) -> int:
    comparison = compare(load_surface(args.simulated), load_surface(args.reference), n=args.resolution, pad=args.pad)
    if args.report is not None:
        write_ssim_report(args.report, comparison)
        logger.info("SSIM report written to %s", args.report)
    print(compare_report(comparison, args.simulated, args.reference).model_dump_json(indent=2))
    return EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    configs = [load_config(path) for path in args.configs]
    if args.stages:
        configs = [stage for config in configs for stage in stage_configs(config)]
    entries = sweep(configs, output_root(args.output_root), args.workers)
    for entry in entries:
        if entry.summary is not None:
            s = entry.summary
            ratio = "n/a" if s.aspect_ratio is None else f"{s.aspect_ratio:.4f}"
            print(f"{entry.run_id:<28} {s.status:<10} eps_pre={s.final_eps_pre:.4f}  h/d={ratio}  max|theta|={s.max_abs_angle:.4f}")
        else:
            print(f"{entry.run_id:<28} error      {entry.error}")
    return max((entry.exit_code for entry in entries), default=EXIT_OK)


def _serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("morphshell.main:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphshell", description=__doc__)
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (env MORPHSHELL_LOG_LEVEL)")
    parser.add_argument("--output-root", default=None, help="Directory holding run directories (env MORPHSHELL_OUTPUT_ROOT)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="solve one configuration and export its artifacts")
    run.add_argument("config", help="TOML run configuration")
    run.add_argument("--output", default=None, help="run directory, overrides output.directory")
    run.add_argument("--run-id", default=None, help="overrides output.run_id")
    run.add_argument("--target-eps-pre", type=float, default=None, help="overrides the schedule target")
    run.add_argument("--mode", choices=["static", "dynamic"], default=None, help="overrides solver.mode")
    run.set_defaults(handler=_run)

    verify = commands.add_parser("verify", help="derivative checks and analytic benchmarks")
    verify.add_argument("--samples", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--strip", type=int, default=5, help="columns and rows of the check strip")
    verify.set_defaults(handler=_verify)

    cmp = commands.add_parser("compare", help="align two surfaces and report voxel SSIM")
    cmp.add_argument("simulated")
    cmp.add_argument("reference")
    cmp.add_argument("--resolution", type=int, default=10)
    cmp.add_argument("--pad", type=float, default=0.05)
    cmp.add_argument("--report", default=None, help="write the per-voxel SSIM table here")
    cmp.set_defaults(handler=_compare)

    sw = commands.add_parser("sweep", help="run several configurations in parallel processes")
    sw.add_argument("configs", nargs="+")
    sw.add_argument("--stages", action="store_true", help="expand each pattern config into its stage values")
    sw.add_argument("--workers", type=int, default=None)
    sw.set_defaults(handler=_sweep)

    serve = commands.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = args.log_level or os.environ.get("MORPHSHELL_LOG_LEVEL", "INFO")
    logging.basicConfig(level=level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except MorphShellError as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
