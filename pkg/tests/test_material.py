"""
Tests for single-layer and bilayer stiffnesses.
"""
import math

import numpy as np
import pytest

from morphshell.core.errors import MaterialError
from morphshell.core.material import (
    LayerSpec,
    MaterialSpec,
    assemble_material,
    bilayer_stiffness,
    flexural_rigidity,
    layer_stiffness,
    neutral_axis,
)
from morphshell.core.mesh import Region
from morphshell.core.patterns import two_triangle_mesh

LAYER1 = LayerSpec(young_modulus=1.0, thickness=0.3)
LAYER2 = LayerSpec(young_modulus=3.0, thickness=0.7)


class TestLayerStiffness:
    """Tests for the single-layer stiffnesses."""

    def test_stretch_and_bend(self):
        """ks = sqrt(3)/2 Y h l0^2 and kb = 2/sqrt(3) Y h^3 / 12."""
        ks, kb = layer_stiffness(LAYER1, 2.0)

        assert ks == pytest.approx(math.sqrt(3) / 2 * 1.0 * 0.3 * 4.0, rel=1e-14)
        assert kb == pytest.approx(2 / math.sqrt(3) * 0.3**3 / 12, rel=1e-14)

    def test_rejects_non_positive_edge_length(self):
        with pytest.raises(MaterialError) as exc:
            layer_stiffness(LAYER1, 0.0)
        assert exc.value.field == "l0"


class TestBilayer:
    """Tests for the composite laminate."""

    def test_neutral_axis(self):
        assert neutral_axis(LAYER1, LAYER2) == pytest.approx(0.5875, rel=1e-12)

    def test_flexural_rigidity(self):
        assert flexural_rigidity(LAYER1, LAYER2) == pytest.approx(0.153625, rel=1e-12)

    def test_equal_layers_reduce_to_one_plate(self):
        """Two identical layers bend like a single plate of twice the thickness."""
        layer = LayerSpec(young_modulus=2.0, thickness=0.5)
        assert neutral_axis(layer, layer) == pytest.approx(0.5)
        assert flexural_rigidity(layer, layer) == pytest.approx(2.0 * 1.0**3 / 12, rel=1e-12)

    def test_stretch_stiffnesses_add(self):
        ks12, kb12 = bilayer_stiffness(LAYER1, LAYER2, 1.0)
        ks1, _ = layer_stiffness(LAYER1, 1.0)
        ks2, _ = layer_stiffness(LAYER2, 1.0)

        assert ks12 == pytest.approx(ks1 + ks2)
        assert kb12 == pytest.approx(2 / math.sqrt(3) * 0.153625, rel=1e-12)

    def test_rigidity_bounded_below_by_layer_sum(self, rng):
        """Bonding never softens: D_eff >= sum of the layers' own Y h^3 / 12."""
        for _ in range(50):
            y1, y2, h1, h2 = rng.uniform(0.1, 5.0, 4)
            layer1 = LayerSpec(young_modulus=y1, thickness=h1)
            layer2 = LayerSpec(young_modulus=y2, thickness=h2)
            assert flexural_rigidity(layer1, layer2) >= (y1 * h1**3 + y2 * h2**3) / 12 * (1 - 1e-12)

    def test_swapping_layers_keeps_rigidity(self):
        """Flipping the laminate upside down moves the neutral axis but not the rigidity."""
        total = LAYER1.thickness + LAYER2.thickness

        assert flexural_rigidity(LAYER2, LAYER1) == pytest.approx(flexural_rigidity(LAYER1, LAYER2), rel=1e-12)
        assert neutral_axis(LAYER2, LAYER1) == pytest.approx(total - neutral_axis(LAYER1, LAYER2), rel=1e-12)

    def test_stiffness_linear_in_young_modulus(self):
        """Scaling both moduli scales every stiffness by the same factor."""
        factor = 3.5
        base = assemble_material(MaterialSpec(layer1=LAYER1, layer2=LAYER2), 1.7)
        stiffer = assemble_material(
            MaterialSpec(
                layer1=LayerSpec(young_modulus=factor * LAYER1.young_modulus, thickness=LAYER1.thickness),
                layer2=LayerSpec(young_modulus=factor * LAYER2.young_modulus, thickness=LAYER2.thickness),
            ),
            1.7,
        )
        for region in ("single_layer", "bilayer"):
            assert getattr(stiffer, region).stretch == pytest.approx(factor * getattr(base, region).stretch, rel=1e-12)
            assert getattr(stiffer, region).bend == pytest.approx(factor * getattr(base, region).bend, rel=1e-12)


class TestAssembleMaterial:
    """Tests for the region stiffness model."""

    def test_stretch_scale_applies_to_stretching_only(self):
        model = assemble_material(MaterialSpec(), 1.0)
        ks1, kb1 = layer_stiffness(LAYER1, 1.0)

        assert model.stretch_scale == 10.0
        assert model.single_layer.stretch == pytest.approx(10.0 * ks1)
        assert model.single_layer.bend == pytest.approx(kb1)
        assert model.bilayer.thickness == pytest.approx(1.0)

    def test_mapping_input(self):
        """A plain mapping with layer blocks and l0 is accepted."""
        model = assemble_material(
            {"layer1": {"young_modulus": 1.0, "thickness": 0.3}, "layer2": {"young_modulus": 3.0, "thickness": 0.7}, "l0": 1.0}
        )
        assert model.edge_length == 1.0

    def test_mapping_missing_layer(self):
        with pytest.raises(MaterialError) as exc:
            assemble_material({"layer1": {"young_modulus": 1.0, "thickness": 0.3}, "l0": 1.0})
        assert exc.value.field == "layer2"

    def test_mapping_invalid_field_is_named(self):
        """Validation errors name the offending field."""
        with pytest.raises(MaterialError) as exc:
            assemble_material(
                {"layer1": {"young_modulus": -1.0, "thickness": 0.3}, "layer2": {"young_modulus": 3.0, "thickness": 0.7}},
                1.0,
            )
        assert exc.value.field == "layer1.young_modulus"

    def test_missing_edge_length(self):
        with pytest.raises(MaterialError) as exc:
            assemble_material(MaterialSpec())
        assert exc.value.field == "l0"

    def test_per_element_stiffness(self):
        """Bilayer edges and hinges take the bilayer values."""
        mesh = two_triangle_mesh(bilayer_triangles=(0,))
        model = assemble_material(MaterialSpec(), mesh.mean_edge_length)
        ks = model.edge_stiffness(mesh)
        kb = model.hinge_stiffness(mesh)

        assert np.all(ks[mesh.edge_region == Region.BILAYER] == model.bilayer.stretch)
        assert np.all(ks[mesh.edge_region == Region.SINGLE_LAYER] == model.single_layer.stretch)
        assert kb[0] == model.bilayer.bend

    def test_scaled(self):
        model = assemble_material(MaterialSpec(), 1.0)
        doubled = model.scaled(2.0)
        assert doubled.bilayer.bend == pytest.approx(2.0 * model.bilayer.bend)
        assert doubled.single_layer.thickness == model.single_layer.thickness
