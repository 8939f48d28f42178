"""Shrink curve, distance-graded thermal strain field and the load-step plan."""
import logging
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import cKDTree

from morphshell.core.errors import StimulusError
from morphshell.core.mesh import Mesh, Region

logger = logging.getLogger("morphshell")

GLASS_TRANSITION_K = 366.5
PERTURBATION_FACTOR = 1e-2

Decay = Literal["linear", "quadratic", "constant-then-off"]


@dataclass(frozen=True, eq=False)
class ShrinkCurve:
    """Measured length ratio L/L0 of the substrate against T/Tg."""

    t_ratio: NDArray[np.float64]
    length_ratio: NDArray[np.float64]
    glass_transition: float = GLASS_TRANSITION_K

    def __post_init__(self) -> None:
        t = np.asarray(self.t_ratio, dtype=np.float64)
        r = np.asarray(self.length_ratio, dtype=np.float64)
        if t.ndim != 1 or t.shape != r.shape:
            raise StimulusError("shrink curve needs matching one-dimensional sample columns")
        if len(t) == 0:
            raise StimulusError("shrink curve is empty")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise StimulusError("shrink curve samples must be finite")
        if np.any(np.diff(t) <= 0):
            raise StimulusError("shrink curve T/Tg samples must be strictly increasing")
        if np.any((r <= 0) | (r > 1)):
            raise StimulusError("shrink curve L/L0 samples must lie in (0, 1]")
        if np.any(r[t <= 1.0] != 1.0):
            raise StimulusError("shrink curve must have L/L0 = 1 at and below T/Tg = 1")
        if self.glass_transition <= 0:
            raise StimulusError("glass transition temperature must be positive")
        object.__setattr__(self, "t_ratio", t)
        object.__setattr__(self, "length_ratio", r)

    @classmethod
    def from_samples(cls, samples: ArrayLike, glass_transition: float = GLASS_TRANSITION_K) -> "ShrinkCurve":
        data = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1], glass_transition)

    def temperature_ratio(self, kelvin: float) -> float:
        return kelvin / self.glass_transition


def read_shrink_curve(path: Path | str | None = None, glass_transition: float = GLASS_TRANSITION_K) -> ShrinkCurve:
    """Two-column ``T/Tg  L/L0`` text file; ``#`` starts a comment. Bundled curve by default."""
    if path is None:
        text = resources.files("morphshell.data").joinpath("shrink_curve.txt").read_text()
        source = "bundled shrink curve"
    else:
        path = Path(path)
        if not path.is_file():
            raise StimulusError(f"shrink curve file not found: {path}")
        text = path.read_text()
        source = str(path)
    samples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").split()
        if not line:
            continue
        if len(line) != 2:
            raise StimulusError(f"{source}:{lineno}: expected two columns, found {len(line)}")
        try:
            samples.append((float(line[0]), float(line[1])))
        except ValueError as e:
            raise StimulusError(f"{source}:{lineno}: {e}") from e
    if not samples:
        raise StimulusError(f"{source}: shrink curve is empty")
    return ShrinkCurve.from_samples(samples, glass_transition)


def shrink_to_strain(curve: ShrinkCurve, t_ratio: float) -> float:
    """Free thermal strain L/L0 - 1 at normalised temperature ``t_ratio``."""
    if t_ratio <= 1.0:
        return 0.0
    return float(np.interp(t_ratio, curve.t_ratio, curve.length_ratio)) - 1.0


@dataclass(frozen=True, eq=False)
class ThermalField:
    """Prescribed per-edge thermal strain at one stimulus level."""

    eps_pre: float
    eps_th: NDArray[np.float64]
    distance: NDArray[np.float64]
    d_max: float

    def scaled(self, eps_pre: float) -> "ThermalField":
        """The same distance field driven at another stimulus level."""
        return replace(self, eps_pre=float(eps_pre), eps_th=_graded(eps_pre, self.distance, self.d_max))

    @classmethod
    def zero(cls, mesh: Mesh) -> "ThermalField":
        zeros = np.zeros(mesh.n_edges)
        return cls(eps_pre=0.0, eps_th=zeros, distance=zeros.copy(), d_max=0.0)


def _graded(eps_pre: float, distance: NDArray, d_max: float) -> NDArray[np.float64]:
    if d_max == 0.0:
        return np.zeros_like(distance)
    eps = eps_pre * (distance / d_max)
    eps.setflags(write=False)
    return eps


def edge_distances(mesh: Mesh, brute_force: bool = False) -> NDArray[np.float64]:
    """Rest distance from each single-layer edge midpoint to the nearest bilayer midpoint."""
    bilayer = mesh.edge_region == Region.BILAYER
    if bilayer.all():
        raise StimulusError("mesh is entirely bilayer: no single-layer edge to grade")
    if not bilayer.any():
        raise StimulusError("mesh has no bilayer edge: thermal distances are undefined")
    mid = mesh.edge_midpoints
    single = ~bilayer
    distance = np.zeros(mesh.n_edges)
    if brute_force:
        diff = mid[single][:, None, :] - mid[bilayer][None, :, :]
        distance[single] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
    else:
        distance[single], _ = cKDTree(mid[bilayer]).query(mid[single])
    return distance


def thermal_field(mesh: Mesh, eps_pre: float) -> ThermalField:
    if eps_pre > 0:
        raise StimulusError(f"eps_pre must be <= 0 (contraction), got {eps_pre}")
    distance = edge_distances(mesh)
    distance.setflags(write=False)
    d_max = float(distance.max())
    if d_max == 0.0:
        raise StimulusError("every single-layer edge touches the bilayer region")
    return ThermalField(float(eps_pre), _graded(eps_pre, distance, d_max), distance, d_max)


class StimulusSchedule(BaseModel):
    """Load-stepping plan from the flat precursor to the target stimulus."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    target_eps_pre: float = Field(le=0, description="Final thermal prestrain (<= 0)")
    initial_step: float = Field(default=0.05, gt=0)
    min_step: float = Field(default=0.05 / 64, gt=0)
    max_step: float = Field(default=0.1, gt=0)
    perturbation: float | None = Field(
        default=None, ge=0, description="Out-of-plane nodal force at the first step (N)"
    )
    decay: Decay = "linear"

    @model_validator(mode="after")
    def _check_steps(self) -> "StimulusSchedule":
        if not self.min_step <= self.initial_step <= self.max_step:
            raise ValueError("step sizes must satisfy min_step <= initial_step <= max_step")
        return self

    def perturbation_at(self, eps_pre: float, magnitude: float) -> float:
        """Perturbation at stimulus level ``eps_pre``; zero at the target."""
        if self.target_eps_pre == 0:
            return 0.0
        remaining = 1.0 - eps_pre / self.target_eps_pre
        remaining = min(max(remaining, 0.0), 1.0)
        if remaining == 0.0:
            return 0.0
        match self.decay:
            case "linear":
                return magnitude * remaining
            case "quadratic":
                return magnitude * remaining**2
            case "constant-then-off":
                return magnitude


def default_perturbation(single_layer_bend: float, l0: float) -> float:
    return PERTURBATION_FACTOR * single_layer_bend / l0


class LoadStepper:
    """Adaptive walk of the stimulus from the flat precursor to the target.

    ``propose`` gives the next (eps_pre, perturbation) pair. ``accept`` moves on and may
    grow the step; ``reject`` halves it and reports whether the walk can go on.
    """

    def __init__(self, schedule: StimulusSchedule, magnitude: float = 0.0):
        if schedule.target_eps_pre > 0:
            raise StimulusError(f"target eps_pre must be <= 0, got {schedule.target_eps_pre}")
        self.schedule = schedule
        self.magnitude = schedule.perturbation if schedule.perturbation is not None else magnitude
        self.eps = 0.0
        self.step = schedule.initial_step
        self.accepted = 0

    @property
    def done(self) -> bool:
        return self.accepted > 0 and self.eps <= self.schedule.target_eps_pre

    def propose(self) -> tuple[float, float]:
        target = self.schedule.target_eps_pre
        trial = max(target, self.eps - self.step)
        if trial - target < 1e-12:
            trial = target
        return trial, self.schedule.perturbation_at(trial, self.magnitude)

    def accept(self, eps_pre: float, growth: float = 1.0) -> None:
        self.eps = eps_pre
        self.accepted += 1
        self.step = min(self.step * growth, self.schedule.max_step)

    def reject(self) -> bool:
        self.step /= 2
        return self.step >= self.schedule.min_step


def plan_steps(schedule: StimulusSchedule, magnitude: float = 0.0) -> list[tuple[float, float]]:
    """Nominal plan: (eps_pre, perturbation) pairs when every step is accepted at its initial size."""
    stepper = LoadStepper(schedule, magnitude)
    plan = []
    while not stepper.done:
        eps, perturbation = stepper.propose()
        plan.append((eps, perturbation))
        stepper.accept(eps)
    return plan
