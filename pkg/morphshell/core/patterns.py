"""Bundled kirigami patterns and benchmark strips, triangulated on an equilateral lattice."""
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cache
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from morphshell.core.errors import MeshError
from morphshell.core.mesh import Mesh, build_mesh

logger = logging.getLogger("morphshell")

Point = tuple[float, float]
Segment = tuple[Point, Point]

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class PatternSpec:
    """Outline, inert-layer arms and reference data of one bundled pattern (mm)."""

    name: str
    description: str
    edge_length: float
    outline: Literal["disc", "rectangle"]
    size: Point
    arms: tuple[Segment, ...]
    arm_width: float
    layer2_thickness: float
    stages: tuple[float, ...]
    reference_counts: tuple[int, int, int]


def _star(center: Point, arm_length: float, n_arms: int = 6, phase_deg: float = 0.0) -> tuple[Segment, ...]:
    cx, cy = center
    angles = np.deg2rad(phase_deg + 360.0 * np.arange(n_arms) / n_arms)
    return tuple(
        ((cx, cy), (cx + arm_length * float(np.cos(a)), cy + arm_length * float(np.sin(a))))
        for a in angles
    )


_B_SPINE = 56.73

PATTERNS: dict[str, PatternSpec] = {
    "A": PatternSpec(
        name="A",
        description="six-armed star on a 100 mm disc",
        edge_length=3.2,
        outline="disc",
        size=(50.0, 50.0),
        arms=_star((0.0, 0.0), 45.0),
        arm_width=6.0,
        layer2_thickness=0.7,
        stages=(-0.20, -0.30, -0.77),
        reference_counts=(970, 2800, 1831),
    ),
    "B": PatternSpec(
        name="B",
        description="two six-armed stars joined by a spine on a 156 x 100 mm plate",
        edge_length=4.0,
        outline="rectangle",
        size=(156.0, 100.0),
        arms=(
            *_star((-_B_SPINE / 2, 0.0), 45.0),
            *_star((_B_SPINE / 2, 0.0), 45.0),
            ((-_B_SPINE / 2, 0.0), (_B_SPINE / 2, 0.0)),
        ),
        arm_width=8.0,
        layer2_thickness=0.6,
        stages=(-0.08, -0.15, -0.30),
        reference_counts=(1215, 3505, 2291),
    ),
    "C": PatternSpec(
        name="C",
        description="diagonal cross on a 100 x 100 mm plate",
        edge_length=5.8,
        outline="rectangle",
        size=(100.0, 100.0),
        arms=_star((0.0, 0.0), 56.7, n_arms=4, phase_deg=45.0),
        arm_width=12.0,
        layer2_thickness=1.0,
        stages=(-0.10, -0.30, -0.50),
        reference_counts=(388, 1087, 700),
    ),
}


def pattern_spec(name: str) -> PatternSpec:
    try:
        return PATTERNS[name.upper()]
    except KeyError as e:
        raise MeshError(f"unknown pattern '{name}', expected one of {sorted(PATTERNS)}") from e


def triangular_lattice(
    half_extent: Point,
    edge_length: float,
    keep: Callable[[NDArray[np.float64]], NDArray[np.bool_]],
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Lattice triangles (node at the origin) whose centroids satisfy ``keep``.

    Nodes sit at i*(a, 0) + j*(a/2, a*sqrt(3)/2). Unused nodes are dropped and the rest
    renumbered row by row.
    """
    a = edge_length
    nj = int(np.ceil(half_extent[1] / (a * SQRT3 / 2))) + 1
    ni = int(np.ceil(half_extent[0] / a + nj / 2)) + 1
    ii, jj = np.meshgrid(np.arange(-ni, ni + 1), np.arange(-nj, nj + 1))
    width = 2 * ni + 1
    grid = np.stack([ii * a + jj * a / 2, jj * a * SQRT3 / 2], axis=-1).reshape(-1, 2)

    def gid(i: NDArray, j: NDArray) -> NDArray:
        return (j + nj) * width + (i + ni)

    ci, cj = np.meshgrid(np.arange(-ni, ni), np.arange(-nj, nj))
    ci, cj = ci.ravel(), cj.ravel()
    up = np.stack([gid(ci, cj), gid(ci + 1, cj), gid(ci, cj + 1)], axis=1)
    down = np.stack([gid(ci + 1, cj), gid(ci + 1, cj + 1), gid(ci, cj + 1)], axis=1)
    triangles = np.concatenate([up, down])
    centroids = grid[triangles].mean(axis=1)
    triangles = triangles[keep(centroids)]
    if len(triangles) == 0:
        raise MeshError("lattice clipping removed every triangle")

    used, compact = np.unique(triangles, return_inverse=True)
    nodes = np.zeros((len(used), 3))
    nodes[:, :2] = grid[used]
    return nodes, compact.reshape(-1, 3).astype(np.int64)


def _segment_distance(points: NDArray, segment: Segment) -> NDArray:
    p = np.asarray(segment[0])
    q = np.asarray(segment[1])
    d = q - p
    t = np.clip(((points - p) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(points - (p + t[:, None] * d), axis=1)


def arm_triangles(centroids: NDArray, arms: Sequence[Segment], arm_width: float) -> NDArray[np.int64]:
    """Indices of triangles whose centroid lies within half an arm width of an arm axis."""
    distance = np.min([_segment_distance(centroids, arm) for arm in arms], axis=0)
    return np.flatnonzero(distance <= arm_width / 2)


@cache
def build_pattern(name: str) -> Mesh:
    """Triangulated precursor of a bundled pattern with its bilayer region labelled."""
    spec = pattern_spec(name)
    if spec.outline == "disc":
        radius = spec.size[0]

        def keep(c: NDArray) -> NDArray:
            return np.hypot(c[:, 0], c[:, 1]) < radius

        half = (radius, radius)
    else:
        half = (spec.size[0] / 2, spec.size[1] / 2)

        def keep(c: NDArray) -> NDArray:
            return (np.abs(c[:, 0]) < half[0]) & (np.abs(c[:, 1]) < half[1])

    nodes, triangles = triangular_lattice(half, spec.edge_length, keep)
    centroids = nodes[triangles].mean(axis=1)[:, :2]
    bilayer = arm_triangles(centroids, spec.arms, spec.arm_width)
    mesh = build_mesh(nodes, triangles, bilayer)
    logger.info(
        "Pattern %s: %d nodes, %d edges, %d triangles (%d bilayer); reference mesh %d / %d / %d",
        spec.name, mesh.n_nodes, mesh.n_edges, mesh.n_triangles, len(bilayer), *spec.reference_counts,
    )
    return mesh


def lattice_strip(n_columns: int, n_rows: int, edge_length: float = 1.0) -> Mesh:
    """Rectangular strip of equilateral triangles with straight vertical end columns.

    Column ``i`` sits at x = i*a*sqrt(3)/2 and holds ``n_rows + 1`` nodes at
    y = j*a (+ a/2 on odd columns). Node index is ``i * (n_rows + 1) + j``.
    """
    if n_columns < 1 or n_rows < 1:
        raise MeshError("a strip needs at least one column pair and one row")
    a = edge_length
    per_column = n_rows + 1
    i, j = np.meshgrid(np.arange(n_columns + 1), np.arange(per_column), indexing="ij")
    nodes = np.zeros((i.size, 3))
    nodes[:, 0] = (i * a * SQRT3 / 2).ravel()
    nodes[:, 1] = (j * a + (i % 2) * a / 2).ravel()

    def nid(col: int, row: int) -> int:
        return col * per_column + row

    triangles = []
    for col in range(n_columns):
        for row in range(n_rows):
            if col % 2 == 0:
                triangles.append((nid(col, row), nid(col + 1, row), nid(col, row + 1)))
                triangles.append((nid(col + 1, row), nid(col + 1, row + 1), nid(col, row + 1)))
            else:
                triangles.append((nid(col, row), nid(col + 1, row + 1), nid(col, row + 1)))
                triangles.append((nid(col, row), nid(col + 1, row), nid(col + 1, row + 1)))
    tris = np.array(triangles, dtype=np.int64)
    corners = nodes[tris]
    signed = np.cross(corners[:, 1, :2] - corners[:, 0, :2], corners[:, 2, :2] - corners[:, 0, :2])
    tris[signed < 0] = tris[signed < 0][:, [0, 2, 1]]
    return build_mesh(nodes, tris)


def two_triangle_mesh(bilayer_triangles: Sequence[int] = ()) -> Mesh:
    """The smallest bending pair: unit right triangles sharing the edge (0, 1)."""
    nodes = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.5, -1.0, 0.0]]
    return build_mesh(nodes, [[0, 1, 2], [1, 0, 3]], bilayer_triangles)
