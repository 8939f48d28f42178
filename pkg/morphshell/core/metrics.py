"""Shape comparison: voxel occupancy, windowed SSIM, similarity alignment and aspect ratio."""
import logging
from dataclasses import dataclass

import numpy as np
import trimesh
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from morphshell.core.errors import InputError

logger = logging.getLogger("morphshell")

SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_RESOLUTION = 10
SUBSAMPLES = 4

# a point cloud is planar when its smallest principal spread falls below this fraction
_COPLANAR_RTOL = 1e-9
# a surface is closed when its vector area falls below this fraction of its total area
_CLOSED_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class Surface:
    vertices: NDArray[np.float64]
    faces: NDArray[np.int64] | None = None

    @property
    def triangles(self) -> NDArray[np.float64]:
        if self.faces is None:
            raise InputError("shape has no faces")
        return self.vertices[self.faces]

    def samples(self) -> NDArray[np.float64]:
        """Vertices, edge midpoints and face centroids: a dense deterministic surface sample."""
        if self.faces is None or len(self.faces) == 0:
            return self.vertices
        corners = self.triangles
        midpoints = 0.5 * (corners + np.roll(corners, -1, axis=1))
        return np.concatenate([self.vertices, midpoints.reshape(-1, 3), corners.mean(axis=1)])


Shape = Surface | trimesh.Trimesh | tuple[ArrayLike, ArrayLike] | ArrayLike


def as_surface(shape: Shape) -> Surface:
    """Normalise a trimesh, a ``(vertices, faces)`` pair or a bare point array."""
    if isinstance(shape, Surface):
        return shape
    if isinstance(shape, trimesh.Trimesh):
        vertices, faces = shape.vertices, shape.faces
    elif isinstance(shape, tuple) and len(shape) == 2:
        vertices, faces = shape
    else:
        vertices, faces = shape, None
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(vertices) == 0:
        raise InputError("shape is empty")
    if not np.all(np.isfinite(vertices)):
        raise InputError("shape coordinates must be finite")
    if faces is not None:
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) == 0:
            faces = None
        elif faces.min() < 0 or faces.max() >= len(vertices):
            raise InputError("shape face references a missing vertex")
    return Surface(vertices, faces)


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    """Surface-occupancy intensities on an ``n x n x n`` grid over ``box``."""

    intensity: NDArray[np.float64]
    box: NDArray[np.float64]
    n: int
    level: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InputError(f"voxel grid resolution must be >= 2, got {self.n}")
        if self.intensity.shape != (self.n,) * 3:
            raise InputError("voxel intensities do not match the grid resolution")
        if np.any(self.intensity < 0) or np.any(self.intensity > self.level):
            raise InputError(f"voxel intensities must lie in [0, {self.level}]")

    @property
    def spacing(self) -> NDArray[np.float64]:
        return (self.box[1] - self.box[0]) / self.n


@dataclass(frozen=True, eq=False)
class SsimResult:
    grid: NDArray[np.float64]
    mean: float
    k1: float
    k2: float
    c1: float
    c2: float


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation."""

    scale: float
    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]
    rms: float = 0.0
    iterations: int = 0

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return self.scale * points @ self.rotation.T + self.translation

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))


def _check_box(box: ArrayLike) -> NDArray[np.float64]:
    box = np.asarray(box, dtype=np.float64).reshape(2, 3)
    if not np.all(box[1] > box[0]):
        raise InputError("voxel box must have positive extent on every axis")
    return box


def bounding_box(*shapes: Shape, pad: float = 0.05) -> NDArray[np.float64]:
    """Common axis-aligned box around ``shapes``, padded by ``pad`` times the largest extent."""
    points = np.concatenate([as_surface(s).vertices for s in shapes])
    lo, hi = points.min(axis=0), points.max(axis=0)
    margin = pad * float(np.max(hi - lo))
    if margin == 0.0:
        margin = 1.0
    return np.stack([lo - margin, hi + margin])


def _within(surface: Surface, points: NDArray, radius: float, chunk: int = 8192) -> NDArray[np.bool_]:
    """True where a point lies within ``radius`` of the surface."""
    if surface.faces is None:
        distance, _ = cKDTree(surface.vertices).query(points)
        return distance <= radius
    corners = surface.triangles
    centroids = corners.mean(axis=1)
    reach = float(np.linalg.norm(corners - centroids[:, None, :], axis=2).max())
    tree = cKDTree(centroids)
    hit = np.zeros(len(points), dtype=bool)
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        candidates = tree.query_ball_point(block, radius + reach)
        counts = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=len(block))
        if counts.sum() == 0:
            continue
        owner = np.repeat(np.arange(len(block)), counts)
        faces = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates if c])
        closest = trimesh.triangles.closest_point(corners[faces], block[owner])
        close = np.linalg.norm(closest - block[owner], axis=1) <= radius
        hit[start:start + len(block)] = np.bincount(owner, weights=close, minlength=len(block)) > 0
    return hit


def voxelize(shape: Shape, box: ArrayLike, n: int = DEFAULT_RESOLUTION, level: float = 1.0) -> VoxelVolume:
    """Fraction of each voxel's 4x4x4 sample points within half a voxel diagonal of the surface."""
    surface = as_surface(shape)
    box = _check_box(box)
    if n < 2:
        raise InputError(f"voxel grid resolution must be >= 2, got {n}")
    slack = 1e-9 * float(np.max(box[1] - box[0]))
    if np.any(surface.vertices < box[0] - slack) or np.any(surface.vertices > box[1] + slack):
        raise InputError("voxel box does not enclose the shape")

    spacing = (box[1] - box[0]) / n
    sub = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES
    axis = (np.arange(n)[:, None] + sub[None, :]).ravel()
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    # sample points stay in box-local coordinates so a shared translation cancels
    local = grid * spacing
    hit = _within(Surface(surface.vertices - box[0], surface.faces), local, 0.5 * float(np.linalg.norm(spacing)))

    counts = hit.reshape(n, SUBSAMPLES, n, SUBSAMPLES, n, SUBSAMPLES).sum(axis=(1, 3, 5))
    intensity = np.clip(level * counts / SUBSAMPLES**3, 0.0, level)
    return VoxelVolume(intensity, box, n, level)


_WINDOW_AXES = (-3, -2, -1)


def _windows(values: NDArray) -> NDArray:
    """3x3x3 neighbourhood of every voxel; cells outside the grid read as zero."""
    return sliding_window_view(np.pad(values, 1), (3, 3, 3))


def ssim(v1: VoxelVolume, v2: VoxelVolume, k1: float = SSIM_K1, k2: float = SSIM_K2) -> SsimResult:
    """Per-voxel structural similarity over 3x3x3 windows truncated at the grid boundary.

    Variances and covariance are taken about each window's own mean, so every score is at most 1.
    """
    if v1.n != v2.n or not np.array_equal(v1.box, v2.box) or v1.level != v2.level:
        raise InputError("SSIM needs volumes on the same grid, box and intensity range")
    c1 = (k1 * v1.level) ** 2
    c2 = (k2 * v1.level) ** 2
    inside = _windows(np.ones_like(v1.intensity))
    counts = inside.sum(axis=_WINDOW_AXES)
    wa = _windows(v1.intensity)
    wb = _windows(v2.intensity)
    mu_a = wa.sum(axis=_WINDOW_AXES) / counts
    mu_b = wb.sum(axis=_WINDOW_AXES) / counts
    da = (wa - mu_a[..., None, None, None]) * inside
    db = (wb - mu_b[..., None, None, None]) * inside
    var_a = (da * da).sum(axis=_WINDOW_AXES) / counts
    var_b = (db * db).sum(axis=_WINDOW_AXES) / counts
    cov = (da * db).sum(axis=_WINDOW_AXES) / counts
    grid = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    return SsimResult(grid=grid, mean=float(np.mean(grid)), k1=k1, k2=k2, c1=c1, c2=c2)


def _check_spread(points: NDArray, label: str) -> None:
    if len(points) < 4:
        raise InputError(f"{label} needs at least 4 points to align")
    spread = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if spread[0] == 0.0 or spread[2] <= _COPLANAR_RTOL * spread[0]:
        raise InputError(f"{label} points are collinear or coplanar")


def _principal_frame(points: NDArray) -> NDArray[np.float64]:
    centered = points - points.mean(axis=0)
    _, vectors = np.linalg.eigh(centered.T @ centered)
    return vectors[:, ::-1]


def _rms_radius(points: NDArray) -> float:
    return float(np.sqrt(np.mean(np.sum((points - points.mean(axis=0)) ** 2, axis=1))))


def _fit(source: NDArray, target: NDArray) -> SimilarityTransform:
    """Similarity from matched pairs: RMS-radius scale, orthogonal rotation, centroid translation."""
    cs, ct = source.mean(axis=0), target.mean(axis=0)
    scale = _rms_radius(target) / _rms_radius(source)
    u, _, vt = np.linalg.svd((target - ct).T @ (source - cs))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    rotation = u @ np.diag([1.0, 1.0, d]) @ vt
    return SimilarityTransform(scale, rotation, ct - scale * rotation @ cs)


def _icp(
    points: NDArray, tree: cKDTree, reference: NDArray, start: SimilarityTransform, max_iterations: int, rtol: float
) -> SimilarityTransform:
    transform = start
    distance, index = tree.query(transform.apply(points))
    rms = float(np.sqrt(np.mean(distance**2)))
    iterations = 0
    while iterations < max_iterations and rms > 0.0:
        candidate = _fit(points, reference[index])
        distance, new_index = tree.query(candidate.apply(points))
        new_rms = float(np.sqrt(np.mean(distance**2)))
        iterations += 1
        if new_rms > rms:
            break
        improvement = rms - new_rms
        transform, index, rms = candidate, new_index, new_rms
        if improvement < rtol * max(rms + improvement, np.finfo(float).tiny):
            break
    return SimilarityTransform(transform.scale, transform.rotation, transform.translation, rms, iterations)


def align(sim: Shape, ref: Shape, max_iterations: int = 100, rtol: float = 1e-6) -> SimilarityTransform:
    """Similarity transform taking ``sim`` onto ``ref`` by iterative closest point.

    The reference is sampled at vertices, edge midpoints and face centroids. Refinement starts
    from the identity and from the principal-axis frames (four proper sign choices), and the
    candidate with the lowest RMS distance wins.
    """
    source = as_surface(sim).vertices
    target_surface = as_surface(ref)
    reference = target_surface.samples()
    _check_spread(source, "simulated shape")
    _check_spread(target_surface.vertices, "reference shape")
    tree = cKDTree(reference)

    cs, cr = source.mean(axis=0), target_surface.vertices.mean(axis=0)
    scale = _rms_radius(target_surface.vertices) / _rms_radius(source)
    frame_s = _principal_frame(source)
    frame_r = _principal_frame(target_surface.vertices)
    rotations = [np.eye(3)]
    for signs in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
        rotation = frame_r @ np.diag(signs) @ frame_s.T
        if np.linalg.det(rotation) < 0:
            rotation = frame_r @ np.diag([signs[0], signs[1], -signs[2]]) @ frame_s.T
        rotations.append(rotation)

    best = None
    for rotation in rotations:
        start = SimilarityTransform(scale, rotation, cr - scale * rotation @ cs)
        result = _icp(source, tree, reference, start, max_iterations, rtol)
        if best is None or result.rms < best.rms:
            best = result
    logger.debug("Aligned shapes: scale %.6g, rms %.3e after %d iterations", best.scale, best.rms, best.iterations)
    return best


def aspect_ratio(shape: Shape) -> float:
    """Height over footprint diameter in the shape's principal frame.

    The height axis is the principal axis most aligned with the vector area of an open
    surface, and the axis of least extent for point clouds and closed surfaces.
    """
    surface = as_surface(shape)
    points = surface.vertices
    axes = _principal_frame(points)
    projected = (points - points.mean(axis=0)) @ axes
    extents = projected.max(axis=0) - projected.min(axis=0)
    height_axis = int(np.argmin(extents))
    if surface.faces is not None:
        corners = surface.triangles
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        area = cross.sum(axis=0)
        if np.linalg.norm(area) > _CLOSED_RTOL * float(np.linalg.norm(cross, axis=1).sum()):
            height_axis = int(np.argmax(np.abs(axes.T @ area)))
    footprint = float(np.delete(extents, height_axis).max())
    if footprint == 0.0:
        raise InputError("shape has a zero footprint")
    return float(extents[height_axis]) / footprint


@dataclass(frozen=True, eq=False)
class Comparison:
    transform: SimilarityTransform
    ssim: SsimResult
    simulated: VoxelVolume
    reference: VoxelVolume
    aspect_ratio_simulated: float
    aspect_ratio_reference: float


def compare(sim: Shape, ref: Shape, n: int = DEFAULT_RESOLUTION, pad: float = 0.05, box: ArrayLike | None = None) -> Comparison:
    """Align ``sim`` to ``ref``, voxelize both over a common box and score them."""
    simulated = as_surface(sim)
    reference = as_surface(ref)
    transform = align(simulated, reference)
    moved = Surface(transform.apply(simulated.vertices), simulated.faces)
    box = bounding_box(moved, reference, pad=pad) if box is None else _check_box(box)
    v_sim = voxelize(moved, box, n)
    v_ref = voxelize(reference, box, n)
    result = ssim(v_sim, v_ref)
    logger.info("Mean SSIM %.4f (alignment rms %.3e)", result.mean, transform.rms)
    return Comparison(
        transform=transform,
        ssim=result,
        simulated=v_sim,
        reference=v_ref,
        aspect_ratio_simulated=aspect_ratio(moved),
        aspect_ratio_reference=aspect_ratio(reference),
    )
