"""Exception hierarchy shared by the numerical core, the CLI and the HTTP layer."""
from pathlib import Path


class MorphShellError(Exception):
    """Base class for every error raised by morphshell."""

    exit_code = 1


class InputError(MorphShellError):
    """Invalid user input: meshes, materials, schedules or configuration."""

    exit_code = 2


class MeshError(InputError):
    """Malformed mesh topology or mesh file."""


class DegenerateGeometryError(MeshError):
    """A collapsed edge or zero-area triangle."""

    def __init__(self, kind: str, index: int, message: str | None = None):
        self.kind = kind
        self.index = int(index)
        super().__init__(message or f"degenerate {kind} {self.index}")


class MaterialError(InputError):
    """Missing or out-of-range material parameter."""

    def __init__(self, field: str, message: str | None = None):
        self.field = field
        super().__init__(message or f"invalid material field '{field}'")


class StimulusError(InputError):
    """Invalid shrink curve, thermal field request or load schedule."""


class ConfigError(InputError):
    """Run configuration problem, located in the source file when possible."""

    def __init__(self, message: str, path: Path | str | None = None, line: int | None = None):
        self.path = Path(path) if path is not None else None
        self.line = line
        self.reason = message
        super().__init__(self._format())

    def _format(self) -> str:
        if self.path is None:
            return self.reason
        if self.line is None:
            return f"{self.path}: {self.reason}"
        return f"{self.path}:{self.line}: {self.reason}"


class ConvergenceError(MorphShellError):
    """The load stepper could not reach the target stimulus."""

    exit_code = 3


class StepFailure(MorphShellError):
    """A single Newton solve failed; the caller shrinks the load step."""

    exit_code = 3


class VerificationError(MorphShellError):
    """One or more verification checks breached their thresholds."""

    exit_code = 4


class NumericalBreakdown(ConvergenceError):
    """Non-finite values appeared in an accepted state."""
