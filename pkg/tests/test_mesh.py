"""
Tests for mesh topology, the hinge stencil and the kinematic kernels.

These tests verify:
- Edge and hinge extraction on small meshes
- Rejection of malformed or degenerate input
- Strain and signed dihedral angle values
- Reading and writing the native mesh format
"""
import math

import numpy as np
import pytest
from trimesh.exchange.obj import export_obj

from morphshell.core.errors import DegenerateGeometryError, MeshError
from morphshell.core.mesh import (
    Region,
    angle_gradient,
    axial_strain,
    build_mesh,
    dihedral_angle,
    read_mesh,
    read_region_file,
    strain_gradient,
    strain_hessian,
    to_trimesh,
    write_mesh,
)
from morphshell.core.patterns import lattice_strip, two_triangle_mesh


class TestBuildMesh:
    """Tests for edge and hinge extraction."""

    def test_two_triangle_counts(self):
        """Two triangles sharing an edge give five edges and one hinge."""
        mesh = two_triangle_mesh()

        assert mesh.n_nodes == 4
        assert mesh.n_triangles == 2
        assert mesh.n_edges == 5
        assert mesh.n_hinges == 1
        assert mesh.n_dofs == 12

    def test_hinge_stencil_order(self):
        """Shared edge first (lower index first), then the opposite nodes by triangle index."""
        mesh = two_triangle_mesh()
        hinge = mesh.hinge(0)

        assert hinge.nodes == (0, 1, 2, 3)
        assert hinge.triangles == (0, 1)
        assert hinge.signs == (1.0, 1.0, -1.0, -1.0)
        flanks = [tuple(int(n) for n in mesh.edges[e]) for e in hinge.flank_edges]
        assert flanks == [(0, 2), (1, 2), (0, 3), (1, 3)]

    def test_rest_angle_flat(self):
        """A flat precursor has zero rest angles."""
        mesh = lattice_strip(3, 2)
        assert np.all(mesh.rest_angles == 0.0)

    def test_strip_counts(self):
        """A c x r strip is a disc: E = V + F - 1 and every non-boundary edge is a hinge."""
        c, r = 5, 3
        mesh = lattice_strip(c, r)

        assert mesh.n_nodes == (c + 1) * (r + 1)
        assert mesh.n_triangles == 2 * c * r
        assert mesh.n_edges == mesh.n_nodes + mesh.n_triangles - 1
        assert mesh.n_hinges == mesh.n_edges - 2 * (c + r)

    def test_strip_edges_have_unit_length(self):
        """Lattice strips are built from equilateral triangles."""
        mesh = lattice_strip(4, 2, edge_length=2.5)
        assert np.allclose(mesh.rest_lengths, 2.5, rtol=1e-12)
        assert mesh.mean_edge_length == pytest.approx(2.5, rel=1e-12)

    def test_bilayer_region_propagates_to_edges(self):
        """Edges of a bilayer triangle are bilayer; a hinge inherits its shared edge's region."""
        mesh = two_triangle_mesh(bilayer_triangles=(0,))

        assert list(mesh.bilayer_triangles) == [0]
        for a, b in [(0, 1), (0, 2), (1, 2)]:
            e = int(np.flatnonzero((mesh.edges[:, 0] == a) & (mesh.edges[:, 1] == b))[0])
            assert mesh.edge_region[e] == Region.BILAYER
        assert mesh.hinge(0).region == Region.BILAYER

    def test_mesh_arrays_are_read_only(self):
        """The mesh is immutable after construction."""
        mesh = two_triangle_mesh()
        with pytest.raises(ValueError):
            mesh.nodes[0, 0] = 1.0

    def test_zero_area_triangle(self):
        """Collinear corners are rejected with the offending triangle index."""
        nodes = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]]
        with pytest.raises(DegenerateGeometryError) as exc:
            build_mesh(nodes, [[0, 1, 3], [0, 1, 2]])
        assert exc.value.kind == "triangle"
        assert exc.value.index == 1

    def test_node_index_out_of_range(self):
        """Triangles must reference existing nodes."""
        with pytest.raises(MeshError):
            build_mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])

    def test_non_manifold_edge(self):
        """An edge shared by three triangles is rejected."""
        nodes = [[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0], [0.5, 0, 1]]
        triangles = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
        with pytest.raises(MeshError, match="non-manifold"):
            build_mesh(nodes, triangles)

    def test_inconsistent_orientation(self):
        """Neighbouring triangles must traverse their shared edge in opposite directions."""
        nodes = [[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0]]
        with pytest.raises(MeshError, match="orientation"):
            build_mesh(nodes, [[0, 1, 2], [0, 1, 3]])

    def test_bilayer_index_out_of_range(self):
        """Bilayer labels must name existing triangles."""
        with pytest.raises(MeshError):
            two_triangle_mesh(bilayer_triangles=(5,))


class TestKinematics:
    """Tests for per-element strain and dihedral angle."""

    def test_axial_strain_of_stretched_edge(self):
        """Scaling every coordinate by 1.2 strains every edge by 0.2."""
        mesh = two_triangle_mesh()
        x = 1.2 * mesh.rest_dofs()
        for e in range(mesh.n_edges):
            assert axial_strain(mesh, x, e) == pytest.approx(0.2, rel=1e-12)

    def test_strain_gradient_is_unit_direction_over_rest_length(self):
        """d(eps)/dx_b = t / l0 and d(eps)/dx_a = -t / l0."""
        mesh = two_triangle_mesh()
        local = strain_gradient(mesh, mesh.rest_dofs(), 0)

        assert list(local.dofs) == [0, 1, 2, 3, 4, 5]
        assert np.allclose(local.values, [-1.0, 0, 0, 1.0, 0, 0])

    def test_strain_hessian_is_symmetric(self, rng: np.random.Generator):
        mesh = two_triangle_mesh()
        x = mesh.rest_dofs() + 0.05 * rng.standard_normal(mesh.n_dofs)
        local = strain_hessian(mesh, x, 2)
        assert np.array_equal(local.values, local.values.T)

    def test_dihedral_angle_sign(self):
        """Lifting the first opposite node along +z folds the hinge to a negative angle."""
        mesh = two_triangle_mesh()
        x = mesh.rest_dofs()
        x[3 * 2 + 2] = 1.0

        assert dihedral_angle(mesh, x, 0) == pytest.approx(-math.pi / 4, rel=1e-12)

        x[3 * 2 + 2] = -1.0
        assert dihedral_angle(mesh, x, 0) == pytest.approx(math.pi / 4, rel=1e-12)

    def test_angle_gradient_flat_is_out_of_plane(self):
        """At the flat state only out-of-plane motion changes the angle."""
        mesh = two_triangle_mesh()
        local = angle_gradient(mesh, mesh.rest_dofs(), 0)
        values = local.values.reshape(4, 3)

        assert np.allclose(values[:, :2], 0.0)
        assert np.abs(values[:, 2]).sum() > 0
        assert values[:, 2].sum() == pytest.approx(0.0, abs=1e-12)

    def test_dof_vector_length_checked(self):
        mesh = two_triangle_mesh()
        with pytest.raises(MeshError):
            axial_strain(mesh, np.zeros(5), 0)

    def test_collapsed_edge(self):
        """Moving one node onto another reports the collapsed edge."""
        mesh = two_triangle_mesh()
        x = mesh.rest_dofs()
        x[3:6] = x[0:3]
        with pytest.raises(DegenerateGeometryError) as exc:
            axial_strain(mesh, x, 0)
        assert exc.value.kind == "edge"
        assert exc.value.index == 0

    def test_index_out_of_range(self):
        mesh = two_triangle_mesh()
        with pytest.raises(IndexError):
            dihedral_angle(mesh, mesh.rest_dofs(), 1)


class TestMeshFiles:
    """Tests for the native mesh format and region files."""

    def test_write_then_read(self, tmp_path, strip):
        """The native format keeps nodes, triangles and bilayer labels."""
        path = tmp_path / "strip.mesh"
        write_mesh(strip, path)
        loaded = read_mesh(path)

        assert np.array_equal(loaded.nodes, strip.nodes)
        assert np.array_equal(loaded.triangles, strip.triangles)
        assert np.array_equal(loaded.bilayer_triangles, strip.bilayer_triangles)

    def test_region_file_overrides_labels(self, tmp_path, mesh_file):
        region = tmp_path / "region.txt"
        region.write_text("# bilayer triangles\n3 4\n5, 6\n")
        mesh = read_mesh(mesh_file, region)
        assert list(mesh.bilayer_triangles) == [3, 4, 5, 6]

    def test_region_file_bad_token(self, tmp_path):
        region = tmp_path / "region.txt"
        region.write_text("1\ntwo\n")
        with pytest.raises(MeshError, match=":2:"):
            read_region_file(region)

    def test_native_file_bad_id(self, tmp_path):
        """Row ids must be consecutive from 1; the error names the line."""
        path = tmp_path / "bad.mesh"
        path.write_text("*Nodes\n1, 0, 0, 0\n3, 1, 0, 0\n")
        with pytest.raises(MeshError, match=":3:"):
            read_mesh(path)

    def test_native_file_unknown_section(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("*Elements\n")
        with pytest.raises(MeshError, match="unknown section"):
            read_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError, match="not found"):
            read_mesh(tmp_path / "missing.mesh")

    def test_obj_surface(self, tmp_path):
        """Wavefront surfaces load through trimesh."""
        mesh = two_triangle_mesh()
        path = tmp_path / "pair.obj"
        path.write_text(export_obj(to_trimesh(mesh), include_normals=False))
        loaded = read_mesh(path)

        assert loaded.n_nodes == 4
        assert loaded.n_hinges == 1
        assert sorted(map(tuple, loaded.nodes.tolist())) == sorted(map(tuple, mesh.nodes.tolist()))
