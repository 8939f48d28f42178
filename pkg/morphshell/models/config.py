"""Run configuration: one TOML file with named blocks, parsed strictly."""
import copy
import os
import re
import tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from morphshell.core.errors import ConfigError
from morphshell.core.material import MaterialSpec
from morphshell.core.solver import SolverConfig
from morphshell.core.stimulus import (
    Decay,
    StimulusSchedule,
    read_shrink_curve,
    shrink_to_strain,
)

OUTPUT_ROOT_ENV = "MORPHSHELL_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = Path("runs")

_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_SCHEDULE_TARGETS = {"schedule.target_eps_pre", "schedule.target_t_ratio", "schedule.target_temperature"}


class MeshBlock(BaseModel):
    """Either a bundled pattern or a mesh file with an optional bilayer labelling."""

    model_config = ConfigDict(extra="forbid")

    pattern: Literal["A", "B", "C"] | None = Field(default=None, description="Bundled pattern name")
    path: Path | None = Field(default=None, description="Native mesh file or OBJ surface")
    region_path: Path | None = Field(default=None, description="Bilayer triangle indices, one per line")
    bilayer_triangles: list[int] | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "MeshBlock":
        if (self.pattern is None) == (self.path is None):
            raise ValueError("give exactly one of 'pattern' or 'path'")
        if self.pattern is not None and (self.region_path is not None or self.bilayer_triangles is not None):
            raise ValueError("bundled patterns carry their own bilayer region")
        if self.region_path is not None and self.bilayer_triangles is not None:
            raise ValueError("give at most one of 'region_path' or 'bilayer_triangles'")
        return self


class ScheduleBlock(BaseModel):
    """Target stimulus as a prestrain, a normalised temperature or an oven temperature."""

    model_config = ConfigDict(extra="forbid")

    target_eps_pre: float | None = Field(default=None, le=0)
    target_t_ratio: float | None = Field(default=None, gt=0, description="Target T/Tg")
    target_temperature: float | None = Field(default=None, gt=0, description="Target oven temperature (K)")
    shrink_curve: Path | None = Field(default=None, description="Two-column T/Tg, L/L0 file; bundled curve if unset")
    glass_transition: float | None = Field(default=None, gt=0, description="Tg (K)")
    initial_step: float = Field(default=0.05, gt=0)
    min_step: float = Field(default=0.05 / 64, gt=0)
    max_step: float = Field(default=0.1, gt=0)
    perturbation: float | None = Field(default=None, ge=0)
    decay: Decay = "linear"

    @model_validator(mode="after")
    def _one_target(self) -> "ScheduleBlock":
        given = [v for v in (self.target_eps_pre, self.target_t_ratio, self.target_temperature) if v is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of 'target_eps_pre', 'target_t_ratio' or 'target_temperature'")
        return self

    def target_strain(self) -> float:
        if self.target_eps_pre is not None:
            return self.target_eps_pre
        curve = read_shrink_curve(self.shrink_curve) if self.glass_transition is None else read_shrink_curve(
            self.shrink_curve, self.glass_transition
        )
        ratio = self.target_t_ratio
        if ratio is None:
            ratio = curve.temperature_ratio(self.target_temperature)
        return shrink_to_strain(curve, ratio)

    def to_schedule(self) -> StimulusSchedule:
        return StimulusSchedule(
            target_eps_pre=self.target_strain(),
            initial_step=self.initial_step,
            min_step=self.min_step,
            max_step=self.max_step,
            perturbation=self.perturbation,
            decay=self.decay,
        )


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: Path | None = Field(default=None, description="Run directory; <root>/<run_id> if unset")
    run_id: str | None = None
    snapshot_every: int = Field(default=1, ge=0, description="Snapshot cadence in accepted steps; 0 keeps the final step only")

    @model_validator(mode="after")
    def _check_run_id(self) -> "OutputBlock":
        if self.run_id is not None and not _RUN_ID.match(self.run_id):
            raise ValueError(f"run_id '{self.run_id}' may only hold letters, digits, '.', '_' and '-'")
        return self


class MetricsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    reference: Path | None = Field(default=None, description="Reference surface to compare the final shape against")
    resolution: int = Field(default=10, ge=2)
    box: list[list[float]] | None = Field(default=None, description="[[xmin, ymin, zmin], [xmax, ymax, zmax]]")
    pad: float = Field(default=0.05, ge=0)

    @model_validator(mode="after")
    def _check_box(self) -> "MetricsBlock":
        if self.box is not None and (len(self.box) != 2 or any(len(corner) != 3 for corner in self.box)):
            raise ValueError("box must be two corners of three coordinates")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mesh: MeshBlock
    material: MaterialSpec = MaterialSpec()
    schedule: ScheduleBlock
    solver: SolverConfig = SolverConfig()
    output: OutputBlock = OutputBlock()
    metrics: MetricsBlock = MetricsBlock()
    source: Path | None = Field(default=None, exclude=True)

    @property
    def name(self) -> str:
        if self.output.run_id is not None:
            return self.output.run_id
        if self.source is not None:
            return self.source.stem
        return f"pattern_{self.mesh.pattern.lower()}" if self.mesh.pattern else self.mesh.path.stem


def _line_of(text: str, loc: tuple[Any, ...]) -> int | None:
    """Line of the deepest table/key in ``loc`` that appears in the TOML source."""
    keys = [str(part) for part in loc if isinstance(part, str)]
    if not keys or not text:
        return None
    lines = text.splitlines()
    table: list[str] = []
    found = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        header = re.match(r"^\[\s*([A-Za-z0-9_.\s]+?)\s*\]$", line)
        if header:
            table = [part.strip() for part in header.group(1).split(".")]
            if table == keys[: len(table)] and (found is None or len(table) > found[1]):
                found = (lineno, len(table))
            continue
        key = re.match(r"^([A-Za-z0-9_]+)\s*=", line)
        if key:
            path = [*table, key.group(1)]
            if path == keys[: len(path)] and (found is None or len(path) > found[1]):
                found = (lineno, len(path))
    return found[0] if found else None


def _set_dotted(data: dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    *parents, leaf = dotted.split(".")
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override '{dotted}': '{part}' is not a table")
    node[leaf] = value


def _resolve(base: Path, value: Path | None) -> Path | None:
    if value is None:
        return None
    value = Path(os.path.expanduser(value))
    return value if value.is_absolute() else base / value


def parse_config(
    data: Mapping[str, Any],
    base_dir: Path | str = ".",
    source: Path | str | None = None,
    text: str = "",
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Validate a configuration mapping; relative paths resolve against ``base_dir``."""
    raw = copy.deepcopy(dict(data))
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(raw, dotted, value)
            if dotted in _SCHEDULE_TARGETS and isinstance(raw.get("schedule"), dict):
                for other in _SCHEDULE_TARGETS - {dotted}:
                    raw["schedule"].pop(other.split(".", 1)[1], None)
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"{where}: {first['msg']}", source, _line_of(text, first["loc"])) from e

    base = Path(base_dir)
    mesh = config.mesh.model_copy(
        update={"path": _resolve(base, config.mesh.path), "region_path": _resolve(base, config.mesh.region_path)}
    )
    schedule = config.schedule.model_copy(update={"shrink_curve": _resolve(base, config.schedule.shrink_curve)})
    output = config.output.model_copy(update={"directory": _resolve(base, config.output.directory)})
    metrics = config.metrics.model_copy(update={"reference": _resolve(base, config.metrics.reference)})
    for loc, path in (
        (("mesh", "path"), mesh.path),
        (("mesh", "region_path"), mesh.region_path),
        (("schedule", "shrink_curve"), schedule.shrink_curve),
        (("metrics", "reference"), metrics.reference),
    ):
        if path is not None and not path.is_file():
            raise ConfigError(f"{'.'.join(loc)}: file not found: {path}", source, _line_of(text, loc))
    return config.model_copy(
        update={
            "mesh": mesh,
            "schedule": schedule,
            "output": output,
            "metrics": metrics,
            "source": Path(source) if source is not None else None,
        }
    )


def load_config(path: Path | str, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read and validate a TOML run configuration.

    ``overrides`` maps dotted keys (``"schedule.target_eps_pre"``) to values that replace the
    file's entries; ``None`` values are ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config file not found", path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ConfigError(str(e), path, int(match.group(1)) if match else None) from e
    return parse_config(data, path.parent, path, text, overrides)


def output_root(override: Path | str | None = None) -> Path:
    """Flag, then ``MORPHSHELL_OUTPUT_ROOT``, then ``./runs``."""
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(env) if env else DEFAULT_OUTPUT_ROOT
