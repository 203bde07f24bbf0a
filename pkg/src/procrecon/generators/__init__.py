"""Procedural mesh generators and their registry."""

from __future__ import annotations

from dataclasses import dataclass

from ..autodiff import Jacobian
from ..mesh import TriangleMesh
from ..params import ParameterVector, ParamSpec, Preset
from . import building as _building
from . import dish as _dish
from . import tree as _tree
from .dish import generate_dish
from .building import generate_building
from .tree import generate_tree, tree_characteristics

__all__ = [
    "GeneratorInfo",
    "generate",
    "generate_building",
    "generate_dish",
    "generate_tree",
    "generator_registry",
    "get_generator",
    "tree_characteristics",
]


@dataclass(frozen=True)
class GeneratorInfo:
    generator_id: str
    param_specs: tuple[ParamSpec, ...]
    lod_tiers: tuple[int, ...]
    differentiable: bool
    camera_target: tuple[float, float, float]
    camera_distance: tuple[float, float]  # optimizer bounds for orbit distance


def _preset(gen_id: str, name: str, specs, **values) -> Preset:
    vals = []
    by_name = dict(values)
    for s in specs:
        vals.append(float(by_name.pop(s.name)) if s.name in by_name else s.midpoint)
    if by_name:
        raise ValueError(f"unknown preset values {sorted(by_name)}")
    return Preset(name, gen_id, ParameterVector(specs, tuple(vals)))


_DISH = GeneratorInfo(
    "dish", _dish.PARAM_SPECS, tuple(sorted(_dish.LOD_TIERS)), True,
    camera_target=(0.0, 0.5, 0.0), camera_distance=(1.2, 6.0),
)
_BUILDING = GeneratorInfo(
    "building", _building.PARAM_SPECS, _building.LOD_TIERS, True,
    camera_target=(0.0, 1.1, 0.0), camera_distance=(2.5, 16.0),
)
_TREE = GeneratorInfo(
    "tree", _tree.PARAM_SPECS, (0,), False,
    camera_target=(0.0, 1.0, 0.0), camera_distance=(2.0, 12.0),
)

_REGISTRY = {g.generator_id: g for g in (_DISH, _BUILDING, _TREE)}

BUILTIN_PRESETS: dict[str, tuple[Preset, ...]] = {
    "dish": (
        _preset("dish", "mug", _dish.PARAM_SPECS,
                radius_0=0.50, radius_1=0.52, radius_2=0.53, radius_3=0.53,
                radius_4=0.53, radius_5=0.53, radius_6=0.52, radius_7=0.50,
                thickness=0.05, height=1.0, handle=1,
                handle_offset_0=0.30, handle_offset_1=0.38,
                handle_offset_2=0.38, handle_offset_3=0.30),
        _preset("dish", "teacup", _dish.PARAM_SPECS,
                radius_0=0.35, radius_1=0.42, radius_2=0.52, radius_3=0.62,
                radius_4=0.72, radius_5=0.80, radius_6=0.86, radius_7=0.90,
                thickness=0.03, height=0.62, handle=1,
                handle_offset_0=0.22, handle_offset_1=0.30,
                handle_offset_2=0.30, handle_offset_3=0.22),
        _preset("dish", "bowl", _dish.PARAM_SPECS,
                radius_0=0.45, radius_1=0.75, radius_2=1.00, radius_3=1.15,
                radius_4=1.25, radius_5=1.30, radius_6=1.32, radius_7=1.33,
                thickness=0.05, height=0.55, handle=0),
        _preset("dish", "jar", _dish.PARAM_SPECS,
                radius_0=0.45, radius_1=0.72, radius_2=0.88, radius_3=0.92,
                radius_4=0.85, radius_5=0.65, radius_6=0.45, radius_7=0.38,
                thickness=0.04, height=1.35, handle=0),
    ),
    "building": (
        _preset("building", "cottage", _building.PARAM_SPECS,
                width=1.6, depth=1.2, floor_height=0.45, floors=2, windows=2,
                window_width=0.5, window_height=0.55, roof_type=1,
                roof_height=0.45, door_width=0.18, door_height=0.85),
        _preset("building", "block", _building.PARAM_SPECS,
                width=2.4, depth=1.4, floor_height=0.4, floors=5, windows=5,
                window_width=0.55, window_height=0.5, roof_type=0,
                roof_height=0.1, door_width=0.1, door_height=0.8),
        _preset("building", "tower", _building.PARAM_SPECS,
                width=1.0, depth=1.0, floor_height=0.38, floors=9, windows=2,
                window_width=0.45, window_height=0.5, roof_type=0,
                roof_height=0.08, door_width=0.2, door_height=0.85),
        _preset("building", "rowhouse", _building.PARAM_SPECS,
                width=2.2, depth=0.9, floor_height=0.5, floors=4, windows=4,
                window_width=0.6, window_height=0.45, roof_type=0,
                roof_height=0.12, door_width=0.12, door_height=0.9),
    ),
    "tree": (
        _preset("tree", "sapling", _tree.PARAM_SPECS,
                trunk_length=1.0, trunk_radius=0.04, levels=2, branches=4,
                angle_mean=0.7, angle_spread=0.15, length_decay=0.6,
                curvature=0.15, leaf_size=0.12, leaf_density=8.0),
        _preset("tree", "oak", _tree.PARAM_SPECS,
                trunk_length=1.4, trunk_radius=0.08, levels=3, branches=5,
                angle_mean=0.85, angle_spread=0.25, length_decay=0.62,
                curvature=0.3, leaf_size=0.16, leaf_density=10.0),
        _preset("tree", "poplar", _tree.PARAM_SPECS,
                trunk_length=2.0, trunk_radius=0.06, levels=3, branches=4,
                angle_mean=0.4, angle_spread=0.1, length_decay=0.55,
                curvature=0.1, leaf_size=0.12, leaf_density=12.0),
    ),
}


def generator_registry() -> list[GeneratorInfo]:
    """Static registry of available generators."""
    return list(_REGISTRY.values())


def get_generator(generator_id: str) -> GeneratorInfo:
    try:
        return _REGISTRY[generator_id]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise KeyError(f"unknown generator {generator_id!r} (available: {known})") from None


def builtin_presets(generator_id: str) -> list[Preset]:
    get_generator(generator_id)
    return list(BUILTIN_PRESETS.get(generator_id, ()))


def generate(generator_id: str, P: ParameterVector, lod: int = 0,
             with_jacobian: bool = True, seed: int = 0
             ) -> tuple[TriangleMesh, Jacobian | None]:
    """Dispatch to the named generator; trees use ``seed``, others ``lod``."""
    info = get_generator(generator_id)
    if generator_id == "dish":
        return generate_dish(P, lod, with_jacobian)
    if generator_id == "building":
        return generate_building(P, lod, with_jacobian)
    return generate_tree(P, seed), None
