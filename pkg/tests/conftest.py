"""
Test configuration and fixtures for morphshell.

This file sets up fixtures that are shared across all tests, including:
- An isolated output root for run artifacts
- Test client for making API requests
- Small meshes, materials and configuration files
"""
from collections.abc import AsyncGenerator
from pathlib import Path

import numpy as np
import pytest
import trimesh
from httpx import ASGITransport, AsyncClient
from trimesh.exchange.obj import export_obj

from morphshell.core.energy import EnergyParams
from morphshell.core.material import MaterialSpec, assemble_material
from morphshell.core.mesh import Mesh, build_mesh, write_mesh
from morphshell.core.patterns import lattice_strip
from morphshell.main import app


@pytest.fixture(autouse=True)
def output_root(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """
    Automatically point every run at a fresh output root.
    This ensures test isolation.
    """
    root = tmp_path / "runs"
    monkeypatch.setenv("MORPHSHELL_OUTPUT_ROOT", str(root))
    return root


@pytest.fixture
async def test_client() -> AsyncGenerator[AsyncClient, None]:
    """
    Provides an async HTTP client for testing the FastAPI application.
    This client can make requests to the API without starting a server.
    """
    transport = ASGITransport(app=app)
    async with AsyncClient(transport=transport, base_url="http://test") as client:
        yield client


@pytest.fixture
def strip() -> Mesh:
    """4 x 3 lattice strip with its first column pair (triangles 0-5) labelled bilayer."""
    base = lattice_strip(4, 3)
    return build_mesh(base.nodes, base.triangles, range(6))


@pytest.fixture
def strip_params(strip: Mesh) -> EnergyParams:
    material = assemble_material(MaterialSpec(stretch_scale=1.0), strip.mean_edge_length)
    return EnergyParams.default(material)


@pytest.fixture
def mesh_file(tmp_path: Path, strip: Mesh) -> Path:
    path = tmp_path / "strip.mesh"
    write_mesh(strip, path)
    return path


@pytest.fixture
def rest_config_file(tmp_path: Path) -> Path:
    """Bundled pattern C held at zero stimulus: a one-step run."""
    path = tmp_path / "rest.toml"
    path.write_text(
        '[mesh]\npattern = "C"\n\n[schedule]\ntarget_eps_pre = 0.0\n\n[output]\nrun_id = "rest_c"\n'
    )
    return path


@pytest.fixture
def box_files(tmp_path: Path) -> tuple[Path, Path]:
    """A 4 x 2 x 1 box and a rotated, scaled and shifted copy, as OBJ files."""
    box = trimesh.creation.box(extents=(4.0, 2.0, 1.0))
    moved = box.copy()
    angle = 0.3
    rotation = trimesh.transformations.rotation_matrix(angle, [0.2, 0.5, 1.0])
    moved.apply_transform(rotation)
    moved.apply_scale(1.5)
    moved.apply_translation([3.0, -1.0, 2.0])
    simulated = tmp_path / "simulated.obj"
    reference = tmp_path / "reference.obj"
    simulated.write_text(export_obj(box, include_normals=False))
    reference.write_text(export_obj(moved, include_normals=False))
    return simulated, reference


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)
