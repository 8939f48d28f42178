"""Per-region stretching and bending stiffnesses of single-layer and bilayer shells."""
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from morphshell.core.errors import MaterialError
from morphshell.core.mesh import Mesh, Region

STRETCH_FACTOR = math.sqrt(3.0) / 2.0
BEND_FACTOR = 2.0 / math.sqrt(3.0)
DEFAULT_STRETCH_SCALE = 10.0


class LayerSpec(BaseModel):
    """One elastic layer of the composite."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    young_modulus: float = Field(gt=0, description="Young's modulus (MPa)")
    thickness: float = Field(gt=0, description="Layer thickness (mm)")


class MaterialSpec(BaseModel):
    """Material block of a run: substrate layer, inert layer and stretch scaling."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    layer1: LayerSpec = Field(
        default=LayerSpec(young_modulus=1.0, thickness=0.3),
        description="Responsive substrate, present everywhere",
    )
    layer2: LayerSpec = Field(
        default=LayerSpec(young_modulus=3.0, thickness=0.7),
        description="Inert patterned layer, present on the bilayer region only",
    )
    stretch_scale: float = Field(default=DEFAULT_STRETCH_SCALE, gt=0)
    beta: float | None = Field(
        default=None, ge=0, description="Coupling strength (1/mm); defaults to 1/l0"
    )


@dataclass(frozen=True)
class RegionStiffness:
    stretch: float
    bend: float
    thickness: float


@dataclass(frozen=True)
class MaterialModel:
    single_layer: RegionStiffness
    bilayer: RegionStiffness
    stretch_scale: float
    edge_length: float

    def region(self, region: Region) -> RegionStiffness:
        return self.bilayer if region == Region.BILAYER else self.single_layer

    def edge_stiffness(self, mesh: Mesh) -> NDArray[np.float64]:
        return np.where(mesh.edge_region == Region.BILAYER, self.bilayer.stretch, self.single_layer.stretch)

    def hinge_stiffness(self, mesh: Mesh) -> NDArray[np.float64]:
        return np.where(mesh.hinge_region == Region.BILAYER, self.bilayer.bend, self.single_layer.bend)

    def triangle_thickness(self, mesh: Mesh) -> NDArray[np.float64]:
        return np.where(
            mesh.triangle_region == Region.BILAYER, self.bilayer.thickness, self.single_layer.thickness
        )

    def scaled(self, factor: float) -> "MaterialModel":
        """Same model with every modulus multiplied by ``factor``."""
        def scale(r: RegionStiffness) -> RegionStiffness:
            return RegionStiffness(r.stretch * factor, r.bend * factor, r.thickness)

        return MaterialModel(scale(self.single_layer), scale(self.bilayer), self.stretch_scale, self.edge_length)


def _positive(name: str, value: float) -> float:
    if not math.isfinite(value) or value <= 0:
        raise MaterialError(name, f"{name} must be positive, got {value}")
    return float(value)


def layer_stiffness(layer: LayerSpec, l0: float) -> tuple[float, float]:
    l0 = _positive("l0", l0)
    y = _positive("young_modulus", layer.young_modulus)
    h = _positive("thickness", layer.thickness)
    return STRETCH_FACTOR * y * h * l0**2, BEND_FACTOR * (y * h**3 / 12.0)


def neutral_axis(layer1: LayerSpec, layer2: LayerSpec) -> float:
    """Height of the bending neutral axis above the bottom of layer 1 (mm)."""
    h1, h2 = layer1.thickness, layer2.thickness
    w1 = layer1.young_modulus * h1
    w2 = layer2.young_modulus * h2
    return (w1 * h1 / 2 + w2 * (h1 + h2 / 2)) / (w1 + w2)


def flexural_rigidity(layer1: LayerSpec, layer2: LayerSpec) -> float:
    """Bilayer bending rigidity per unit width about the neutral axis (MPa mm^3)."""
    y_bar = neutral_axis(layer1, layer2)
    h1, h2 = layer1.thickness, layer2.thickness
    return layer1.young_modulus * (h1**3 / 12 + h1 * (h1 / 2 - y_bar) ** 2) + layer2.young_modulus * (
        h2**3 / 12 + h2 * (h1 + h2 / 2 - y_bar) ** 2
    )


def bilayer_stiffness(layer1: LayerSpec, layer2: LayerSpec, l0: float) -> tuple[float, float]:
    ks1, _ = layer_stiffness(layer1, l0)
    ks2, _ = layer_stiffness(layer2, l0)
    return ks1 + ks2, BEND_FACTOR * flexural_rigidity(layer1, layer2)


def assemble_material(config: MaterialSpec | Mapping[str, Any], l0: float | None = None) -> MaterialModel:
    """Region stiffnesses for a mesh of mean edge length ``l0``.

    ``config`` is a :class:`MaterialSpec` or a mapping with ``layer1``, ``layer2``, ``l0`` and
    optionally ``stretch_scale``. Missing or invalid fields raise :class:`MaterialError`
    naming the field.
    """
    if isinstance(config, Mapping):
        config = dict(config)
        if l0 is None:
            if "l0" not in config:
                raise MaterialError("l0", "material config is missing 'l0'")
            l0 = config.pop("l0")
        else:
            config.pop("l0", None)
        for key in ("layer1", "layer2"):
            if key not in config:
                raise MaterialError(key, f"material config is missing '{key}'")
        try:
            spec = MaterialSpec.model_validate(config)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or "material"
            raise MaterialError(field, f"material field '{field}': {first['msg']}") from e
    else:
        spec = config
    if l0 is None:
        raise MaterialError("l0", "mean edge length 'l0' is required")
    l0 = _positive("l0", float(l0))

    ks1, kb1 = layer_stiffness(spec.layer1, l0)
    ks12, kb12 = bilayer_stiffness(spec.layer1, spec.layer2, l0)
    scale = spec.stretch_scale
    return MaterialModel(
        single_layer=RegionStiffness(ks1 * scale, kb1, spec.layer1.thickness),
        bilayer=RegionStiffness(ks12 * scale, kb12, spec.layer1.thickness + spec.layer2.thickness),
        stretch_scale=scale,
        edge_length=l0,
    )
