"""Coupled stretch-bend energy of the bilayer shell with its exact gradient and Hessian.

    E = sum_i 1/2 ks_i (eps_i - eps_th_i)^2 + sum_j 1/2 kb_j (theta_j - beta l0 d_eps_j)^2

where d_eps_j sums the orientation-signed mechanical strains (eps - eps_th) of the four edges
flanking hinge j.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray

from morphshell.core.errors import MaterialError
from morphshell.core.material import MaterialModel
from morphshell.core.mesh import (
    FLANK_PAIRS,
    Mesh,
    angle_kernels,
    check_dofs,
    stencil_dofs,
    strain_kernels,
)
from morphshell.core.stimulus import ThermalField

# DOF slots of each flank edge inside the 12-entry hinge stencil
_FLANK_SLOTS = [np.r_[3 * i: 3 * i + 3, 3 * j: 3 * j + 3] for i, j in FLANK_PAIRS]


@dataclass(frozen=True, eq=False)
class EnergyParams:
    """Stiffnesses and coupling strength of the energy."""

    material: MaterialModel
    l0: float
    beta: float

    def __post_init__(self) -> None:
        if not self.l0 > 0:
            raise MaterialError("l0", f"mean edge length must be positive, got {self.l0}")
        if not self.beta >= 0:
            raise MaterialError("beta", f"coupling strength must be >= 0, got {self.beta}")

    @classmethod
    def default(cls, material: MaterialModel, l0: float | None = None, beta: float | None = None) -> "EnergyParams":
        l0 = material.edge_length if l0 is None else l0
        return cls(material=material, l0=l0, beta=1.0 / l0 if beta is None else beta)

    @property
    def coupling(self) -> float:
        return self.beta * self.l0

    def stretch_stiffness(self, mesh: Mesh) -> NDArray[np.float64]:
        return self.material.edge_stiffness(mesh)

    def bend_stiffness(self, mesh: Mesh) -> NDArray[np.float64]:
        return self.material.hinge_stiffness(mesh)


@dataclass(frozen=True, eq=False)
class EnergyReport:
    total: float
    stretch: NDArray[np.float64]
    bend: NDArray[np.float64]
    strain: NDArray[np.float64]
    thermal_strain: NDArray[np.float64]
    angle: NDArray[np.float64]
    delta_strain: NDArray[np.float64]
    delta_strain_thermal: NDArray[np.float64]

    @property
    def stretch_total(self) -> float:
        return float(np.sum(self.stretch))

    @property
    def bend_total(self) -> float:
        return float(np.sum(self.bend))


class ShellEnergy:
    """Energy assembler bound to one mesh, parameter set and thermal field.

    The sparse pattern of the Hessian is fixed by the mesh and computed once. Duplicate
    entries are summed with ``np.bincount`` in element order, which keeps the assembled
    matrix bitwise symmetric.
    """

    def __init__(self, mesh: Mesh, params: EnergyParams, field: ThermalField | None = None):
        self.mesh = mesh
        self.params = params
        self.field = field if field is not None else ThermalField.zero(mesh)
        if self.field.eps_th.shape != (mesh.n_edges,):
            raise ValueError("thermal field does not belong to this mesh")

        self.ks = params.stretch_stiffness(mesh)
        self.kb = params.bend_stiffness(mesh)
        self.coupling = params.coupling
        self.eps_th = self.field.eps_th
        self.flank_rest = mesh.rest_lengths[mesh.hinge_flanks]
        self.flank_eps_th = self.eps_th[mesh.hinge_flanks]
        self.delta_thermal = np.einsum("hp,hp->h", mesh.hinge_signs, self.flank_eps_th)

        self.edge_dofs = stencil_dofs(mesh.edges)
        self.hinge_dofs = stencil_dofs(mesh.hinge_nodes)
        self._build_pattern()

    def _build_pattern(self) -> None:
        n = self.mesh.n_dofs
        rows = [np.repeat(self.edge_dofs, 6, axis=1).ravel(), np.repeat(self.hinge_dofs, 12, axis=1).ravel()]
        cols = [np.tile(self.edge_dofs, (1, 6)).ravel(), np.tile(self.hinge_dofs, (1, 12)).ravel()]
        keys = np.concatenate(rows).astype(np.int64) * n + np.concatenate(cols)
        unique, self._slot = np.unique(keys, return_inverse=True)
        self._slot = self._slot.reshape(-1)
        self._indices = (unique % n).astype(np.int32)
        self._indptr = np.searchsorted(unique // n, np.arange(n + 1)).astype(np.int32)
        self._nnz = len(unique)

    def positions(self, x: ArrayLike) -> NDArray[np.float64]:
        return check_dofs(self.mesh, x)

    def _flank_kinematics(self, positions: NDArray, order: int):
        mesh = self.mesh
        return [
            strain_kernels(
                positions, mesh.hinge_nodes[:, [i, j]], self.flank_rest[:, p], order,
                edge_ids=mesh.hinge_flanks[:, p],
            )
            for p, (i, j) in enumerate(FLANK_PAIRS)
        ]

    def report(self, x: ArrayLike) -> EnergyReport:
        positions = self.positions(x)
        mesh = self.mesh
        strain = strain_kernels(positions, mesh.edges, mesh.rest_lengths, 0, edge_ids=np.arange(mesh.n_edges)).value
        theta = angle_kernels(positions, mesh.hinge_nodes, 0, mesh.hinge_triangles).value
        flank = np.stack([k.value for k in self._flank_kinematics(positions, 0)], axis=1)
        delta = np.einsum("hp,hp->h", mesh.hinge_signs, flank - self.flank_eps_th)
        stretch = 0.5 * self.ks * (strain - self.eps_th) ** 2
        bend = 0.5 * self.kb * (theta - self.coupling * delta) ** 2
        return EnergyReport(
            total=float(np.sum(stretch) + np.sum(bend)),
            stretch=stretch,
            bend=bend,
            strain=strain,
            thermal_strain=self.eps_th,
            angle=theta,
            delta_strain=delta,
            delta_strain_thermal=self.delta_thermal,
        )

    def energy(self, x: ArrayLike) -> float:
        return self.report(x).total

    def evaluate(self, x: ArrayLike, order: int = 2) -> tuple[float, NDArray[np.float64], sp.csr_matrix | None]:
        """Energy, gradient and (for ``order == 2``) Hessian at ``x``."""
        positions = self.positions(x)
        mesh = self.mesh
        edge = strain_kernels(positions, mesh.edges, mesh.rest_lengths, order, edge_ids=np.arange(mesh.n_edges))
        hinge = angle_kernels(positions, mesh.hinge_nodes, order, mesh.hinge_triangles)
        flanks = self._flank_kinematics(positions, order)

        mismatch = edge.value - self.eps_th
        signs = mesh.hinge_signs
        flank_strain = np.stack([k.value for k in flanks], axis=1)
        delta = np.einsum("hp,hp->h", signs, flank_strain - self.flank_eps_th)
        f = hinge.value - self.coupling * delta
        energy = float(np.sum(0.5 * self.ks * mismatch**2) + np.sum(0.5 * self.kb * f**2))

        # coupled bending direction: grad(theta) - beta l0 sum_p s_p grad(eps_p)
        direction = hinge.gradient.copy()
        for p, k in enumerate(flanks):
            direction[:, _FLANK_SLOTS[p]] -= (self.coupling * signs[:, p])[:, None] * k.gradient

        edge_grad = (self.ks * mismatch)[:, None] * edge.gradient
        hinge_grad = (self.kb * f)[:, None] * direction
        gradient = np.bincount(
            np.concatenate([self.edge_dofs.ravel(), self.hinge_dofs.ravel()]),
            weights=np.concatenate([edge_grad.ravel(), hinge_grad.ravel()]),
            minlength=mesh.n_dofs,
        )
        if order < 2:
            return energy, gradient, None

        edge_blocks = self.ks[:, None, None] * (
            edge.gradient[:, :, None] * edge.gradient[:, None, :] + mismatch[:, None, None] * edge.hessian
        )
        curvature = hinge.hessian.copy()
        for p, k in enumerate(flanks):
            slots = _FLANK_SLOTS[p]
            curvature[:, slots[:, None], slots[None, :]] -= (self.coupling * signs[:, p])[:, None, None] * k.hessian
        hinge_blocks = self.kb[:, None, None] * (
            direction[:, :, None] * direction[:, None, :] + f[:, None, None] * curvature
        )
        values = np.bincount(
            self._slot,
            weights=np.concatenate([edge_blocks.ravel(), hinge_blocks.ravel()]),
            minlength=self._nnz,
        )
        n = mesh.n_dofs
        hessian = sp.csr_matrix((values, self._indices, self._indptr), shape=(n, n))
        return energy, gradient, hessian


def delta_strain(mesh: Mesh, x: ArrayLike, field: ThermalField | None, hinge: int) -> float:
    """Signed flank-strain mismatch of one hinge."""
    if not 0 <= hinge < mesh.n_hinges:
        raise IndexError(f"hinge {hinge} out of range (0..{mesh.n_hinges - 1})")
    positions = check_dofs(mesh, x)
    nodes = mesh.hinge_nodes[hinge]
    flanks = mesh.hinge_flanks[hinge]
    pairs = np.array([[nodes[i], nodes[j]] for i, j in FLANK_PAIRS])
    strain = strain_kernels(positions, pairs, mesh.rest_lengths[flanks], 0, edge_ids=flanks).value
    eps_th = field.eps_th[flanks] if field is not None else np.zeros(4)
    return float(np.dot(mesh.hinge_signs[hinge], strain - eps_th))


def total_energy(mesh: Mesh, x: ArrayLike, params: EnergyParams, field: ThermalField | None = None) -> EnergyReport:
    return ShellEnergy(mesh, params, field).report(x)


def energy_gradient(mesh: Mesh, x: ArrayLike, params: EnergyParams, field: ThermalField | None = None) -> NDArray[np.float64]:
    return ShellEnergy(mesh, params, field).evaluate(x, order=1)[1]


def energy_hessian(mesh: Mesh, x: ArrayLike, params: EnergyParams, field: ThermalField | None = None) -> sp.csr_matrix:
    return ShellEnergy(mesh, params, field).evaluate(x, order=2)[2]
