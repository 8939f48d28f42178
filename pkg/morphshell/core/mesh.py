"""Triangle-mesh topology, rest geometry and the kinematic kernels of the discrete shell.

Stretching lives on edges (axial strain) and bending on hinges (signed dihedral angle of a
triangle pair). Every kernel is vectorised over elements; the single-element functions at
the bottom of the module are thin views over the batch kernels.

Hinge stencil convention, shared by every module:

    x0 -- lower-index node of the shared edge
    x1 -- higher-index node of the shared edge
    x2 -- opposite node in the lower-index adjacent triangle
    x3 -- opposite node in the higher-index adjacent triangle

The four flanking edges are (x0, x2), (x1, x2), (x0, x3), (x1, x3) with orientation factors
(+1, +1, -1, -1). The angle is signed by (n1 x n2) . e_hat with e_hat pointing from x0 to x1.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np
import trimesh
from numpy.typing import ArrayLike, NDArray

from morphshell.core.errors import DegenerateGeometryError, MeshError

logger = logging.getLogger("morphshell")

DofVector = NDArray[np.float64]

FLANK_PAIRS = ((0, 2), (1, 2), (0, 3), (1, 3))
HINGE_SIGNS = np.array([1.0, 1.0, -1.0, -1.0])

# relative threshold below which a triangle counts as collapsed
_DEGENERATE_RTOL = 1e-12

_WAVEFRONT_SUFFIXES = {".obj", ".ply", ".stl", ".off"}


class Region(IntEnum):
    SINGLE_LAYER = 0
    BILAYER = 1


class Hinge(NamedTuple):
    """One bending pair."""

    edge: int
    nodes: tuple[int, int, int, int]
    triangles: tuple[int, int]
    flank_edges: tuple[int, int, int, int]
    signs: tuple[float, float, float, float]
    rest_angle: float
    region: Region


class LocalDerivative(NamedTuple):
    """Derivative restricted to the DOFs of one element stencil."""

    dofs: NDArray[np.int64]
    values: NDArray[np.float64]


class Kinematics(NamedTuple):
    value: NDArray[np.float64]
    gradient: NDArray[np.float64] | None
    hessian: NDArray[np.float64] | None


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable mesh topology plus rest geometry."""

    nodes: NDArray[np.float64]
    triangles: NDArray[np.int64]
    triangle_region: NDArray[np.int8]
    edges: NDArray[np.int64]
    rest_lengths: NDArray[np.float64]
    edge_region: NDArray[np.int8]
    hinge_edges: NDArray[np.int64]
    hinge_nodes: NDArray[np.int64]
    hinge_triangles: NDArray[np.int64]
    hinge_flanks: NDArray[np.int64]
    hinge_signs: NDArray[np.float64]
    rest_angles: NDArray[np.float64]
    mean_edge_length: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_hinges(self) -> int:
        return len(self.hinge_edges)

    @property
    def n_dofs(self) -> int:
        return 3 * len(self.nodes)

    @property
    def hinge_region(self) -> NDArray[np.int8]:
        """Region of each hinge, inherited from its shared edge."""
        return self.edge_region[self.hinge_edges]

    @property
    def bilayer_triangles(self) -> NDArray[np.int64]:
        return np.flatnonzero(self.triangle_region == Region.BILAYER)

    @property
    def edge_midpoints(self) -> NDArray[np.float64]:
        return 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])

    def rest_dofs(self) -> DofVector:
        return self.nodes.reshape(-1).copy()

    def hinge(self, index: int) -> Hinge:
        if not 0 <= index < self.n_hinges:
            raise IndexError(f"hinge {index} out of range (0..{self.n_hinges - 1})")
        return Hinge(
            edge=int(self.hinge_edges[index]),
            nodes=tuple(int(n) for n in self.hinge_nodes[index]),
            triangles=tuple(int(t) for t in self.hinge_triangles[index]),
            flank_edges=tuple(int(e) for e in self.hinge_flanks[index]),
            signs=tuple(float(s) for s in self.hinge_signs[index]),
            rest_angle=float(self.rest_angles[index]),
            region=Region(int(self.hinge_region[index])),
        )

    def triangle_areas(self) -> NDArray[np.float64]:
        corners = self.nodes[self.triangles]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


def build_mesh(
    nodes: ArrayLike,
    triangles: ArrayLike,
    bilayer_triangles: ArrayLike = (),
) -> Mesh:
    """Extract edges and hinges from a consistently oriented triangle list."""
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.ndim != 2 or nodes.shape[1] != 3 or len(nodes) == 0:
        raise MeshError(f"nodes must be an (N, 3) array, got shape {nodes.shape}")
    if not np.all(np.isfinite(nodes)):
        raise MeshError("node coordinates must be finite")
    tris = np.asarray(triangles)
    if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
        raise MeshError(f"triangles must be a non-empty (T, 3) array, got shape {tris.shape}")
    if not np.issubdtype(tris.dtype, np.integer):
        raise MeshError("triangle entries must be integer node indices")
    tris = tris.astype(np.int64)
    n_nodes = len(nodes)

    bad = np.flatnonzero(((tris < 0) | (tris >= n_nodes)).any(axis=1))
    if len(bad):
        raise MeshError(f"triangle {bad[0]} references a node index outside 0..{n_nodes - 1}")

    corners = nodes[tris]
    span = np.linalg.norm(corners - corners[:, [1, 2, 0]], axis=2).max(axis=1)
    doubled_area = np.linalg.norm(
        np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]), axis=1
    )
    collapsed = np.flatnonzero(doubled_area <= _DEGENERATE_RTOL * span**2)
    if len(collapsed):
        t = int(collapsed[0])
        raise DegenerateGeometryError("triangle", t, f"triangle {t} has zero area")

    bilayer = np.asarray(bilayer_triangles, dtype=np.int64).reshape(-1)
    outside = bilayer[(bilayer < 0) | (bilayer >= len(tris))]
    if len(outside):
        raise MeshError(f"bilayer triangle index {outside[0]} outside 0..{len(tris) - 1}")
    triangle_region = np.zeros(len(tris), dtype=np.int8)
    triangle_region[bilayer] = Region.BILAYER

    # half-edge h = 3 t + k runs from tris[t, k] to tris[t, (k + 1) % 3]
    he_from = tris.reshape(-1)
    he_to = tris[:, [1, 2, 0]].reshape(-1)
    he_opposite = tris[:, [2, 0, 1]].reshape(-1)
    keys = np.sort(np.stack([he_from, he_to], axis=1), axis=1)
    edges, he_edge, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    he_edge = he_edge.reshape(-1)

    crowded = np.flatnonzero(counts > 2)
    if len(crowded):
        a, b = edges[crowded[0]]
        raise MeshError(
            f"non-manifold edge {crowded[0]} ({a}, {b}) is shared by {counts[crowded[0]]} triangles"
        )

    order = np.argsort(he_edge, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    interior = np.flatnonzero(counts == 2)
    first = order[starts[interior]]
    second = order[starts[interior] + 1]
    flipped = np.flatnonzero(he_from[first] != he_to[second])
    if len(flipped):
        e = interior[flipped[0]]
        raise MeshError(
            f"inconsistent orientation across edge {e} ({edges[e, 0]}, {edges[e, 1]})"
        )

    rest_lengths = np.linalg.norm(nodes[edges[:, 1]] - nodes[edges[:, 0]], axis=1)
    edge_region = (
        np.bincount(he_edge, weights=triangle_region[np.arange(len(he_edge)) // 3],
                    minlength=len(edges)) > 0
    ).astype(np.int8)

    hinge_nodes = np.stack(
        [edges[interior, 0], edges[interior, 1], he_opposite[first], he_opposite[second]],
        axis=1,
    )
    hinge_triangles = np.stack([first // 3, second // 3], axis=1)
    hinge_flanks = np.stack(
        [_edge_lookup(edges, n_nodes, hinge_nodes[:, i], hinge_nodes[:, j]) for i, j in FLANK_PAIRS],
        axis=1,
    )
    hinge_signs = np.tile(HINGE_SIGNS, (len(interior), 1))
    rest_angles = angle_kernels(nodes, hinge_nodes, order=0).value

    mesh = Mesh(
        nodes=_frozen(nodes.copy()),
        triangles=_frozen(tris),
        triangle_region=_frozen(triangle_region),
        edges=_frozen(edges.astype(np.int64)),
        rest_lengths=_frozen(rest_lengths),
        edge_region=_frozen(edge_region),
        hinge_edges=_frozen(interior.astype(np.int64)),
        hinge_nodes=_frozen(hinge_nodes.astype(np.int64)),
        hinge_triangles=_frozen(hinge_triangles.astype(np.int64)),
        hinge_flanks=_frozen(hinge_flanks.astype(np.int64)),
        hinge_signs=_frozen(hinge_signs),
        rest_angles=_frozen(rest_angles),
        mean_edge_length=float(rest_lengths.mean()),
    )
    logger.debug(
        "Built mesh: %d nodes, %d edges, %d triangles, %d hinges",
        mesh.n_nodes, mesh.n_edges, mesh.n_triangles, mesh.n_hinges,
    )
    return mesh


def _edge_lookup(edges: NDArray, n_nodes: int, a: NDArray, b: NDArray) -> NDArray[np.int64]:
    codes = edges[:, 0] * n_nodes + edges[:, 1]
    query = np.minimum(a, b) * n_nodes + np.maximum(a, b)
    found = np.searchsorted(codes, query)
    if np.any(found >= len(codes)) or np.any(codes[np.minimum(found, len(codes) - 1)] != query):
        raise MeshError("hinge flank edge missing from the edge list")
    return found


def check_dofs(mesh: Mesh, x: ArrayLike) -> NDArray[np.float64]:
    """Validate a DOF vector for ``mesh`` and return it as (N, 3) positions."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mesh.n_dofs,):
        raise MeshError(f"DOF vector must have length {mesh.n_dofs}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise MeshError("DOF vector contains non-finite entries")
    return x.reshape(-1, 3)


def stencil_dofs(stencil_nodes: NDArray[np.int64]) -> NDArray[np.int64]:
    """DOF indices of every node in each stencil row, flattened per row."""
    return (3 * stencil_nodes[:, :, None] + np.arange(3)).reshape(len(stencil_nodes), -1)


def _skew(v: NDArray) -> NDArray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _outer(a: NDArray, b: NDArray) -> NDArray:
    return a[:, :, None] * b[:, None, :]


def strain_kernels(
    positions: NDArray,
    pairs: NDArray[np.int64],
    rest_lengths: NDArray,
    order: int = 0,
    edge_ids: NDArray[np.int64] | None = None,
) -> Kinematics:
    """Axial strain l/l0 - 1 of each pair, with derivatives up to ``order``."""
    d = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    length = np.linalg.norm(d, axis=1)
    collapsed = np.flatnonzero(length <= 0.0)
    if len(collapsed):
        e = int(edge_ids[collapsed[0]] if edge_ids is not None else collapsed[0])
        raise DegenerateGeometryError("edge", e, f"edge {e} has collapsed to zero length")
    strain = length / rest_lengths - 1.0
    if order == 0:
        return Kinematics(strain, None, None)

    tangent = d / length[:, None]
    g = tangent / rest_lengths[:, None]
    gradient = np.concatenate([-g, g], axis=1)
    if order == 1:
        return Kinematics(strain, gradient, None)

    k = (np.eye(3) - _outer(tangent, tangent)) / (rest_lengths * length)[:, None, None]
    hessian = np.empty((len(pairs), 6, 6))
    hessian[:, :3, :3] = k
    hessian[:, 3:, 3:] = k
    hessian[:, :3, 3:] = -k
    hessian[:, 3:, :3] = -k
    return Kinematics(strain, gradient, hessian)


def angle_kernels(
    positions: NDArray,
    hinge_nodes: NDArray[np.int64],
    order: int = 0,
    hinge_triangles: NDArray[np.int64] | None = None,
) -> Kinematics:
    """Signed dihedral angle of each hinge stencil, with derivatives up to ``order``."""
    x0, x1, x2, x3 = (positions[hinge_nodes[:, k]] for k in range(4))
    e = x1 - x0
    f = x2 - x0
    g = x3 - x0
    n1 = np.cross(e, f)
    n2 = np.cross(g, e)
    ll = np.einsum("ij,ij->i", e, e)
    a1 = np.einsum("ij,ij->i", n1, n1)
    a2 = np.einsum("ij,ij->i", n2, n2)

    for side, area, other in ((0, a1, f), (1, a2, g)):
        scale = ll * np.einsum("ij,ij->i", other, other)
        bad = np.flatnonzero(area <= (_DEGENERATE_RTOL**2) * scale)
        if len(bad):
            h = int(bad[0])
            t = int(hinge_triangles[h, side]) if hinge_triangles is not None else h
            raise DegenerateGeometryError(
                "triangle", t, f"triangle {t} adjacent to hinge {h} is degenerate"
            )

    length = np.sqrt(ll)
    e_hat = e / length[:, None]
    theta = np.arctan2(
        np.einsum("ij,ij->i", np.cross(n1, n2), e_hat), np.einsum("ij,ij->i", n1, n2)
    )
    if order == 0:
        return Kinematics(theta, None, None)

    u = (length / a1)[:, None] * n1
    v = (length / a2)[:, None] * n2
    t = np.einsum("ij,ij->i", f, e) / ll
    s = np.einsum("ij,ij->i", g, e) / ll
    gradient = np.concatenate(
        [(1 - t)[:, None] * u + (1 - s)[:, None] * v, t[:, None] * u + s[:, None] * v, -u, -v],
        axis=1,
    )
    if order == 1:
        return Kinematics(theta, gradient, None)

    m = len(hinge_nodes)
    eye = np.eye(3)
    zero3 = np.zeros((m, 3))
    zero33 = np.zeros((m, 3, 3))
    dl = (-e_hat, e_hat, zero3, zero3)
    p1 = (length / a1)[:, None, None] * (eye - 2.0 * _outer(n1, n1) / a1[:, None, None])
    p2 = (length / a2)[:, None, None] * (eye - 2.0 * _outer(n2, n2) / a2[:, None, None])
    dn1 = (_skew(x2 - x1), -_skew(f), _skew(e), zero33)
    dn2 = (_skew(x1 - x3), _skew(g), zero33, -_skew(e))
    du = [_outer(n1 / a1[:, None], dl[k]) + p1 @ dn1[k] for k in range(4)]
    dv = [_outer(n2 / a2[:, None], dl[k]) + p2 @ dn2[k] for k in range(4)]
    du[3] = zero33
    dv[2] = zero33

    dt1 = f / ll[:, None] - 2.0 * (t / ll)[:, None] * e
    dt2 = e / ll[:, None]
    dt = (-(dt1 + dt2), dt1, dt2, zero3)
    ds1 = g / ll[:, None] - 2.0 * (s / ll)[:, None] * e
    ds3 = e / ll[:, None]
    ds = (-(ds1 + ds3), ds1, zero3, ds3)

    t3 = t[:, None, None]
    s3 = s[:, None, None]
    hessian = np.empty((m, 12, 12))
    for k in range(4):
        cols = slice(3 * k, 3 * k + 3)
        u_dt = _outer(u, dt[k])
        v_ds = _outer(v, ds[k])
        hessian[:, 0:3, cols] = (1 - t3) * du[k] - u_dt + (1 - s3) * dv[k] - v_ds
        hessian[:, 3:6, cols] = t3 * du[k] + u_dt + s3 * dv[k] + v_ds
        hessian[:, 6:9, cols] = -du[k]
        hessian[:, 9:12, cols] = -dv[k]
    hessian = 0.5 * (hessian + hessian.transpose(0, 2, 1))
    return Kinematics(theta, gradient, hessian)


def _edge_index(mesh: Mesh, edge: int) -> NDArray[np.int64]:
    if not 0 <= edge < mesh.n_edges:
        raise IndexError(f"edge {edge} out of range (0..{mesh.n_edges - 1})")
    return np.array([edge])


def _hinge_index(mesh: Mesh, hinge: int) -> NDArray[np.int64]:
    if not 0 <= hinge < mesh.n_hinges:
        raise IndexError(f"hinge {hinge} out of range (0..{mesh.n_hinges - 1})")
    return np.array([hinge])


def _edge_kinematics(mesh: Mesh, x: ArrayLike, edge: int, order: int) -> Kinematics:
    idx = _edge_index(mesh, edge)
    return strain_kernels(
        check_dofs(mesh, x), mesh.edges[idx], mesh.rest_lengths[idx], order, edge_ids=idx
    )


def _hinge_kinematics(mesh: Mesh, x: ArrayLike, hinge: int, order: int) -> Kinematics:
    idx = _hinge_index(mesh, hinge)
    return angle_kernels(
        check_dofs(mesh, x), mesh.hinge_nodes[idx], order, hinge_triangles=mesh.hinge_triangles[idx]
    )


def axial_strain(mesh: Mesh, x: ArrayLike, edge: int) -> float:
    return float(_edge_kinematics(mesh, x, edge, 0).value[0])


def strain_gradient(mesh: Mesh, x: ArrayLike, edge: int) -> LocalDerivative:
    kin = _edge_kinematics(mesh, x, edge, 1)
    return LocalDerivative(stencil_dofs(mesh.edges[[edge]])[0], kin.gradient[0])


def strain_hessian(mesh: Mesh, x: ArrayLike, edge: int) -> LocalDerivative:
    kin = _edge_kinematics(mesh, x, edge, 2)
    return LocalDerivative(stencil_dofs(mesh.edges[[edge]])[0], kin.hessian[0])


def dihedral_angle(mesh: Mesh, x: ArrayLike, hinge: int) -> float:
    return float(_hinge_kinematics(mesh, x, hinge, 0).value[0])


def angle_gradient(mesh: Mesh, x: ArrayLike, hinge: int) -> LocalDerivative:
    kin = _hinge_kinematics(mesh, x, hinge, 1)
    return LocalDerivative(stencil_dofs(mesh.hinge_nodes[[hinge]])[0], kin.gradient[0])


def angle_hessian(mesh: Mesh, x: ArrayLike, hinge: int) -> LocalDerivative:
    kin = _hinge_kinematics(mesh, x, hinge, 2)
    return LocalDerivative(stencil_dofs(mesh.hinge_nodes[[hinge]])[0], kin.hessian[0])


def to_trimesh(mesh: Mesh, x: ArrayLike | None = None) -> trimesh.Trimesh:
    """Surface of ``mesh`` at configuration ``x`` (rest configuration by default)."""
    positions = mesh.nodes if x is None else check_dofs(mesh, x)
    return trimesh.Trimesh(vertices=np.array(positions), faces=np.array(mesh.triangles), process=False)


def read_mesh(path: Path | str, region_path: Path | str | None = None) -> Mesh:
    """Load a native ``*Nodes``/``*Triangles`` file or a Wavefront-style surface."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    if path.suffix.lower() in _WAVEFRONT_SUFFIXES:
        surface = trimesh.load(path, process=False, force="mesh")
        nodes = np.asarray(surface.vertices, dtype=np.float64)
        triangles = np.asarray(surface.faces, dtype=np.int64)
        bilayer: NDArray[np.int64] = np.empty(0, dtype=np.int64)
    else:
        nodes, triangles, bilayer = _parse_native(path)
    if region_path is not None:
        bilayer = read_region_file(region_path)
    logger.info("Loaded mesh %s (%d nodes, %d triangles)", path, len(nodes), len(triangles))
    return build_mesh(nodes, triangles, bilayer)


def read_region_file(path: Path | str) -> NDArray[np.int64]:
    """Bilayer triangle indices, zero-based, whitespace separated, ``#`` comments."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"region file not found: {path}")
    indices: list[int] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        for token in raw.split("#", 1)[0].replace(",", " ").split():
            try:
                indices.append(int(token))
            except ValueError as e:
                raise MeshError(f"{path}:{lineno}: expected a triangle index, got '{token}'") from e
    return np.array(indices, dtype=np.int64)


def _parse_native(path: Path) -> tuple[NDArray, NDArray, NDArray]:
    section = None
    nodes: list[list[float]] = []
    triangles: list[list[int]] = []
    bilayer: list[int] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("*"):
            section = line[1:].strip().lower()
            if section not in ("nodes", "triangles"):
                raise MeshError(f"{path}:{lineno}: unknown section '{line}'")
            continue
        fields = [token.strip() for token in line.split(",")]
        try:
            if section == "nodes":
                if len(fields) != 4:
                    raise MeshError(f"{path}:{lineno}: node rows need 'id, x, y, z'")
                _expect_id(path, lineno, int(fields[0]), len(nodes) + 1)
                nodes.append([float(value) for value in fields[1:]])
            elif section == "triangles":
                if len(fields) not in (4, 5):
                    raise MeshError(f"{path}:{lineno}: triangle rows need 'id, n1, n2, n3[, region]'")
                _expect_id(path, lineno, int(fields[0]), len(triangles) + 1)
                triangles.append([int(value) - 1 for value in fields[1:4]])
                flag = int(fields[4]) if len(fields) == 5 else 0
                if flag not in (0, 1):
                    raise MeshError(f"{path}:{lineno}: region flag must be 0 or 1, got {flag}")
                if flag == Region.BILAYER:
                    bilayer.append(len(triangles) - 1)
            else:
                raise MeshError(f"{path}:{lineno}: data before any '*Nodes' or '*Triangles' header")
        except ValueError as e:
            raise MeshError(f"{path}:{lineno}: {e}") from e
    if not nodes or not triangles:
        raise MeshError(f"{path}: needs both a '*Nodes' and a '*Triangles' section")
    return np.array(nodes), np.array(triangles, dtype=np.int64), np.array(bilayer, dtype=np.int64)


def _expect_id(path: Path, lineno: int, found: int, expected: int) -> None:
    if found != expected:
        raise MeshError(f"{path}:{lineno}: expected id {expected}, found {found}")


def write_mesh(mesh: Mesh, path: Path | str) -> None:
    """Write ``mesh`` in the native format read by :func:`read_mesh`."""
    lines = ["*Nodes"]
    lines += [f"{i + 1}, {x!r}, {y!r}, {z!r}" for i, (x, y, z) in enumerate(mesh.nodes.tolist())]
    lines.append("*Triangles")
    lines += [
        f"{t + 1}, {a + 1}, {b + 1}, {c + 1}, {int(region)}"
        for t, ((a, b, c), region) in enumerate(zip(mesh.triangles.tolist(), mesh.triangle_region, strict=True))
    ]
    Path(path).write_text("\n".join(lines) + "\n")
