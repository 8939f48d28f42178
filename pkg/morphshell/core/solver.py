"""Quasi-static and implicit-Euler equilibrium solvers for the shell energy."""
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.sparse.linalg import SuperLU, splu

from morphshell.core.energy import EnergyParams, EnergyReport, ShellEnergy
from morphshell.core.errors import (
    DegenerateGeometryError,
    InputError,
    NumericalBreakdown,
    StepFailure,
)
from morphshell.core.material import MaterialModel
from morphshell.core.mesh import DofVector, Mesh, check_dofs
from morphshell.core.stimulus import (
    LoadStepper,
    StimulusSchedule,
    ThermalField,
    default_perturbation,
    thermal_field,
)

logger = logging.getLogger("morphshell")


class SolverConfig(BaseModel):
    """Newton, load-stepping and constraint settings."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    tolerance: float = Field(default=1e-5, gt=0, description="Bound on |dX|/|X| per Newton solve")
    force_tolerance: float | None = Field(
        default=None, gt=0, description="Max nodal force at convergence (N); tolerance*max(ks)/l0 if unset"
    )
    max_iterations: int = Field(default=100, ge=1)
    max_regularizations: int = Field(default=12, ge=0)
    regularization_start: float = Field(default=1e-6, gt=0)
    regularization_growth: float = Field(default=10.0, gt=1)
    max_displacement: float = Field(
        default=0.5, gt=0, description="Largest nodal move per Newton iteration, in mean edge lengths"
    )
    armijo: float = Field(default=1e-4, gt=0, lt=1)
    max_backtracks: int = Field(default=40, ge=1)
    step_growth: float = Field(default=1.5, ge=1)
    fast_iterations: int = Field(default=5, ge=1)
    relax_on_failure: bool = Field(
        default=True, description="Retry a failed static load step with implicit-Euler relaxation"
    )
    constraint: Literal["three-two-one", "pinned", "none"] = "three-two-one"
    pinned_dofs: tuple[int, ...] = ()
    mode: Literal["static", "dynamic"] = "static"
    time_step: float = Field(default=1e-2, gt=0, description="Implicit-Euler step (s)")
    density: float = Field(default=1.25e-9, gt=0, description="Mass density (t/mm^3)")
    max_dynamic_steps: int = Field(default=500, ge=1)

    @model_validator(mode="after")
    def _check_constraints(self) -> "SolverConfig":
        if self.mode == "static":
            if self.constraint == "none":
                raise ValueError("static mode needs a constraint set; use 'three-two-one' or 'pinned'")
            if self.constraint == "pinned" and len(set(self.pinned_dofs)) < 6:
                raise ValueError("static mode needs at least 6 pinned DOFs")
        return self


@dataclass
class StepRecord:
    index: int
    eps_pre: float
    step_size: float
    perturbation: float
    iterations: int
    residual_norms: tuple[float, ...]
    energy: float
    max_force: float
    accepted: bool


@dataclass
class SolverState:
    x: DofVector
    eps_pre: float = 0.0
    velocity: DofVector | None = None
    history: list[StepRecord] = field(default_factory=list)
    converged: bool = False
    status: Literal["running", "converged", "diverged", "aborted"] = "running"
    message: str = ""

    @property
    def accepted_steps(self) -> list[StepRecord]:
        return [r for r in self.history if r.accepted]


@dataclass
class _Solve:
    x: DofVector
    iterations: int
    residual_norms: list[float]
    energy: float
    max_force: float


@dataclass
class _Update:
    x: NDArray[np.float64]
    residual_norm: float
    step: float
    damped: bool


class _System:
    """Merit function E(x) - F.x (+ inertia) restricted to the free DOFs.

    ``shift`` carries the Hessian regularisation from one Newton iteration to the next.
    """

    def __init__(
        self,
        energy: ShellEnergy,
        free: NDArray[np.int64],
        force: NDArray[np.float64],
        mass: NDArray[np.float64] | None = None,
        anchor: NDArray[np.float64] | None = None,
        time_step: float = 1.0,
    ):
        self.energy = energy
        self.free = free
        self.force = force
        self.mass = mass
        self.anchor = anchor
        self.inertia = None if mass is None else mass / time_step**2
        self.shift = 0.0

    def merit(self, x: NDArray) -> float:
        value = self.energy.energy(x) - float(self.force @ x)
        if self.inertia is not None:
            value += 0.5 * float(self.inertia @ (x - self.anchor) ** 2)
        return value

    def linearize(self, x: NDArray, order: int = 2) -> tuple[float, NDArray, sp.csr_matrix | None]:
        energy, gradient, hessian = self.energy.evaluate(x, order)
        value = energy - float(self.force @ x)
        residual = gradient - self.force
        if self.inertia is not None:
            value += 0.5 * float(self.inertia @ (x - self.anchor) ** 2)
            residual = residual + self.inertia * (x - self.anchor)
            if hessian is not None:
                hessian = hessian + sp.diags(self.inertia, format="csr")
        return value, residual, hessian

    def static_residual(self, x: NDArray) -> NDArray:
        return self.energy.evaluate(x, 1)[1] - self.force


def max_node_force(residual: NDArray, free: NDArray[np.int64]) -> float:
    masked = np.zeros_like(residual)
    masked[free] = residual[free]
    return float(np.linalg.norm(masked.reshape(-1, 3), axis=1).max(initial=0.0))


def three_two_one(mesh: Mesh) -> NDArray[np.int64]:
    """Six DOFs that remove rigid motion without loading the body."""
    nodes = mesh.nodes
    a = int(np.argmin(np.linalg.norm(nodes - nodes.mean(axis=0), axis=1)))
    incident = mesh.edges[(mesh.edges == a).any(axis=1)]
    neighbors = np.unique(incident[incident != a])
    if len(neighbors) < 2:
        raise InputError(f"node {a} needs two neighbours to anchor the 3-2-1 constraint")
    offsets = nodes[neighbors] - nodes[a]
    b_pos = int(np.argmax(np.abs(offsets[:, 0])))
    d = offsets[b_pos]
    axis_b = int(np.argmax(np.abs(d)))
    spread = np.linalg.norm(np.cross(d, offsets), axis=1)
    spread[b_pos] = -1.0
    c_pos = int(np.argmax(spread))
    normal = np.cross(d, offsets[c_pos])
    axis_c = int(np.argmax(np.abs(normal)))
    b, c = int(neighbors[b_pos]), int(neighbors[c_pos])
    pinned = [3 * a, 3 * a + 1, 3 * a + 2]
    pinned += [3 * b + k for k in range(3) if k != axis_b]
    pinned.append(3 * c + axis_c)
    return np.array(pinned, dtype=np.int64)


def resolve_constraints(mesh: Mesh, config: SolverConfig) -> NDArray[np.int64]:
    pinned = np.array(config.pinned_dofs, dtype=np.int64)
    if np.any((pinned < 0) | (pinned >= mesh.n_dofs)):
        raise InputError(f"pinned DOF outside 0..{mesh.n_dofs - 1}")
    if config.constraint == "three-two-one":
        pinned = np.concatenate([pinned, three_two_one(mesh)])
    return np.unique(pinned)


def lumped_masses(mesh: Mesh, material: MaterialModel, density: float) -> NDArray[np.float64]:
    """Per-DOF diagonal mass: density x thickness x one third of incident triangle areas."""
    per_triangle = density * material.triangle_thickness(mesh) * mesh.triangle_areas() / 3.0
    node_mass = np.bincount(mesh.triangles.ravel(), weights=np.repeat(per_triangle, 3), minlength=mesh.n_nodes)
    return np.repeat(node_mass, 3)




def mean_normal(mesh: Mesh) -> NDArray[np.float64]:
    """Unit area-weighted mean normal of the rest surface."""
    corners = mesh.nodes[mesh.triangles]
    normal = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]).sum(axis=0)
    length = np.linalg.norm(normal)
    return np.array([0.0, 0.0, 1.0]) if length == 0 else normal / length


def perturbation_pattern(mesh: Mesh) -> NDArray[np.float64]:
    """Per-DOF dome load along the mean normal, peak 1 per node, with no net force or moment.

    The nodal weights are the squared in-plane radius with its best fit by 1, u and v
    removed, so the load bends the sheet without pushing it against the constraints.
    """
    normal = mean_normal(mesh)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(normal)))] = 1.0
    u = np.cross(normal, axis)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    centred = mesh.nodes - mesh.nodes.mean(axis=0)
    p, q = centred @ u, centred @ v
    basis = np.column_stack([np.ones(mesh.n_nodes), p, q])
    dome = p**2 + q**2
    weights = dome - basis @ np.linalg.lstsq(basis, dome, rcond=None)[0]
    peak = float(np.abs(weights).max(initial=0.0))
    if peak == 0.0:
        return np.zeros(mesh.n_dofs)
    return np.outer(weights / peak, normal).ravel()


def default_force_tolerance(params: EnergyParams, mesh: Mesh, config: SolverConfig) -> float:
    if config.force_tolerance is not None:
        return config.force_tolerance
    return config.tolerance * float(np.max(params.stretch_stiffness(mesh))) / params.l0


def _free_dofs(mesh: Mesh, pinned: NDArray[np.int64]) -> NDArray[np.int64]:
    return np.setdiff1d(np.arange(mesh.n_dofs), pinned)


def factorize(matrix: sp.spmatrix) -> tuple[SuperLU, bool | None]:
    """Sparse LU with diagonal pivots and whether the symmetric ``matrix`` is positive definite.

    With row and column orderings equal, U's diagonal holds the pivots of P A P^T = L D L^T,
    whose signs give the inertia. ``None`` means SuperLU pivoted off the diagonal.
    """
    lu = splu(
        sp.csc_matrix(matrix),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return lu, None
    return lu, bool(np.all(lu.U.diagonal() > 0.0))


def _newton_iteration(system: _System, x: NDArray, config: SolverConfig) -> _Update:
    """One regularised, capped and line-searched Newton update."""
    free = system.free
    phi, residual, jacobian = system.linearize(x)
    if not (np.isfinite(phi) and np.all(np.isfinite(residual)) and np.all(np.isfinite(jacobian.data))):
        raise NumericalBreakdown("non-finite energy, residual or Hessian")
    r = residual[free]
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0.0:
        return _Update(x.copy(), 0.0, 0.0, False)

    jff = jacobian[free][:, free].tocsc()
    tau0 = config.regularization_start * float(abs(jff).sum(axis=1).max())
    identity = sp.identity(len(free), format="csc")
    tau = system.shift if system.shift >= tau0 else 0.0
    delta = None
    for _ in range(config.max_regularizations + 1):
        try:
            lu, definite = factorize(jff + tau * identity)
            candidate = lu.solve(-r)
        except RuntimeError:
            logger.debug("Singular Newton system at tau=%.3e", tau)
        else:
            if definite is not False and np.all(np.isfinite(candidate)) and float(r @ candidate) < 0.0:
                delta = candidate
                break
        tau = tau0 if tau == 0.0 else tau * config.regularization_growth
    if delta is None:
        raise StepFailure(f"no descent direction after {config.max_regularizations} regularisations")
    if tau > 0.0:
        logger.debug("Newton system regularised with tau=%.3e", tau)
    system.shift = tau / config.regularization_growth

    moves = np.zeros(len(x))
    moves[free] = delta
    peak = float(np.linalg.norm(moves.reshape(-1, 3), axis=1).max())
    limit = config.max_displacement * system.energy.params.l0
    if peak > limit:
        delta = delta * (limit / peak)

    slope = float(r @ delta)
    noise = 1e-12 * max(abs(phi), 1.0)
    alpha = 1.0
    trial = x.copy()
    for _ in range(config.max_backtracks):
        trial[free] = x[free] + alpha * delta
        try:
            value = system.merit(trial)
        except DegenerateGeometryError:
            value = np.inf
        if np.isfinite(value) and value <= phi + config.armijo * alpha * slope + noise:
            if alpha < 1.0:
                logger.debug("Line search accepted alpha=%.3e", alpha)
            return _Update(trial, r_norm, float(np.linalg.norm(delta)), tau > tau0 or peak > limit)
        alpha *= 0.5
    raise StepFailure("line search failed to decrease the energy")


def _solve(system: _System, x: NDArray, config: SolverConfig, force_tol: float) -> _Solve:
    """Newton iterations to |dx|/|x| < tolerance with every free nodal force within ``force_tol``."""
    norms: list[float] = []
    x = x.copy()
    system.shift = 0.0
    for iteration in range(1, config.max_iterations + 1):
        try:
            update = _newton_iteration(system, x, config)
        except DegenerateGeometryError as e:
            raise StepFailure(str(e)) from e
        norms.append(update.residual_norm)
        x = update.x
        scale = max(float(np.linalg.norm(x)), np.finfo(float).tiny)
        if not update.damped and update.step / scale < config.tolerance:
            residual = system.linearize(x, order=1)[1]
            force = max_node_force(residual, system.free)
            if force <= force_tol:
                return _Solve(x, iteration, norms, system.energy.energy(x), force)
    raise StepFailure(f"no convergence within {config.max_iterations} Newton iterations")


def _system(
    mesh: Mesh,
    params: EnergyParams,
    field: ThermalField | None,
    pinned: NDArray[np.int64],
    force: NDArray | None,
) -> _System:
    force = np.zeros(mesh.n_dofs) if force is None else np.asarray(force, dtype=np.float64)
    if force.shape != (mesh.n_dofs,):
        raise InputError(f"external force must have length {mesh.n_dofs}")
    return _System(ShellEnergy(mesh, params, field), _free_dofs(mesh, pinned), force)


def newton_step(
    mesh: Mesh,
    state: SolverState,
    params: EnergyParams,
    field: ThermalField | None,
    config: SolverConfig,
    external_force: ArrayLike | None = None,
) -> DofVector:
    """One Newton update of ``state.x``; includes the inertial term in dynamic mode."""
    x = check_dofs(mesh, state.x).reshape(-1).copy()
    system = _system(mesh, params, field, resolve_constraints(mesh, config), external_force)
    if config.mode == "dynamic":
        _add_inertia(system, mesh, params, config, x, state.velocity)
    return _newton_iteration(system, x, config).x


def _add_inertia(
    system: _System, mesh: Mesh, params: EnergyParams, config: SolverConfig, x: NDArray, velocity: NDArray | None
) -> None:
    v = np.zeros(mesh.n_dofs) if velocity is None else np.asarray(velocity, dtype=np.float64)
    system.mass = lumped_masses(mesh, params.material, config.density)
    system.inertia = system.mass / config.time_step**2
    system.anchor = x + config.time_step * v


def dynamic_step(
    mesh: Mesh,
    state: SolverState,
    params: EnergyParams,
    field: ThermalField | None,
    config: SolverConfig,
    external_force: ArrayLike | None = None,
) -> tuple[DofVector, DofVector]:
    """One implicit-Euler step; returns the new positions and velocity."""
    x = check_dofs(mesh, state.x).reshape(-1).copy()
    system = _system(mesh, params, field, resolve_constraints(mesh, config), external_force)
    _add_inertia(system, mesh, params, config, x, state.velocity)
    result = _solve(system, x, config, default_force_tolerance(params, mesh, config))
    return result.x, (result.x - x) / config.time_step


def _relax(
    system: _System, mesh: Mesh, params: EnergyParams, config: SolverConfig, x: NDArray, velocity: NDArray, force_tol: float
) -> tuple[_Solve, NDArray]:
    """Implicit-Euler steps until the motion dies out."""
    iterations = 0
    norms: list[float] = []
    for _ in range(config.max_dynamic_steps):
        _add_inertia(system, mesh, params, config, x, velocity)
        result = _solve(system, x, config, np.inf)
        iterations += result.iterations
        norms.extend(result.residual_norms)
        velocity = (result.x - x) / config.time_step
        moved = float(np.linalg.norm(result.x - x)) / max(float(np.linalg.norm(result.x)), np.finfo(float).tiny)
        x = result.x
        if moved < config.tolerance:
            force = max_node_force(system.static_residual(x), system.free)
            if force <= force_tol:
                return _Solve(x, iterations, norms, result.energy, force), velocity
    raise StepFailure(f"dynamic relaxation did not settle within {config.max_dynamic_steps} steps")


StepCallback = Callable[[SolverState, StepRecord, EnergyReport], None]


def solve_equilibrium(
    mesh: Mesh,
    params: EnergyParams,
    schedule: StimulusSchedule,
    config: SolverConfig,
    x0: ArrayLike | None = None,
    external_force: ArrayLike | None = None,
    on_step: StepCallback | None = None,
) -> SolverState:
    """Drive the precursor to equilibrium at ``schedule.target_eps_pre`` in adaptive load steps.

    Static steps that fail are retried once by implicit-Euler relaxation from the last
    accepted state (``relax_on_failure``) before the step is halved.
    """
    x = mesh.rest_dofs() if x0 is None else check_dofs(mesh, x0).reshape(-1).copy()
    pinned = resolve_constraints(mesh, config)
    dead_load = np.zeros(mesh.n_dofs) if external_force is None else np.asarray(external_force, dtype=np.float64)
    if dead_load.shape != (mesh.n_dofs,):
        raise InputError(f"external force must have length {mesh.n_dofs}")
    force_tol = default_force_tolerance(params, mesh, config)
    target = schedule.target_eps_pre
    unit_field = thermal_field(mesh, -1.0) if target < 0 else None
    stepper = LoadStepper(schedule, default_perturbation(params.material.single_layer.bend, params.l0))
    pattern = perturbation_pattern(mesh)

    state = SolverState(x=x, velocity=np.zeros(mesh.n_dofs) if config.mode == "dynamic" else None)
    logger.info(
        "Solving to eps_pre=%.4f (%s mode, %d pinned DOFs, force tolerance %.3e, perturbation %.3e)",
        target, config.mode, len(pinned), force_tol, stepper.magnitude,
    )

    while not stepper.done:
        trial, perturbation = stepper.propose()
        field = unit_field.scaled(trial) if unit_field is not None else None
        load = dead_load + perturbation * pattern
        system = _system(mesh, params, field, pinned, load)
        index = len(state.history)
        step_size = stepper.eps - trial
        velocity = state.velocity
        try:
            if config.mode == "dynamic":
                result, velocity = _relax(system, mesh, params, config, state.x, state.velocity, force_tol)
            else:
                try:
                    result = _solve(system, state.x, config, force_tol)
                except StepFailure as e:
                    if not config.relax_on_failure:
                        raise
                    logger.info("Step %d to eps_pre=%.6g: %s; relaxing dynamically", index, trial, e)
                    fallback = _system(mesh, params, field, pinned, load)
                    result, _ = _relax(fallback, mesh, params, config, state.x, np.zeros(mesh.n_dofs), force_tol)
        except NumericalBreakdown as e:
            state.history.append(StepRecord(index, trial, step_size, perturbation, 0, (), float("nan"), float("nan"), False))
            state.status = "aborted"
            state.message = f"step {index} at eps_pre={trial:.6g}: {e}"
            logger.error("Aborted: %s", state.message)
            return state
        except StepFailure as e:
            state.history.append(StepRecord(index, trial, step_size, perturbation, 0, (), float("nan"), float("nan"), False))
            if not stepper.reject():
                state.status = "diverged"
                state.message = f"step size fell below {schedule.min_step:g} at eps_pre={stepper.eps:.6g}"
                logger.error("Diverged: %s", state.message)
                return state
            logger.warning("Step %d to eps_pre=%.6g failed (%s); halving step to %.3e", index, trial, e, stepper.step)
            continue

        record = StepRecord(
            index=index,
            eps_pre=trial,
            step_size=step_size,
            perturbation=perturbation,
            iterations=result.iterations,
            residual_norms=tuple(result.residual_norms),
            energy=result.energy,
            max_force=result.max_force,
            accepted=True,
        )
        state.history.append(record)
        state.x = result.x
        state.eps_pre = trial
        if config.mode == "dynamic":
            state.velocity = velocity
        stepper.accept(trial, config.step_growth if result.iterations <= config.fast_iterations else 1.0)
        logger.info(
            "Step %d accepted: eps_pre=%.4f, %d iterations, energy %.6e",
            index, trial, result.iterations, result.energy,
        )
        if on_step is not None:
            on_step(state, record, system.energy.report(state.x))

    state.converged = True
    state.status = "converged"
    return state
