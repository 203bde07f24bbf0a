"""Parameter vectors, per-parameter metadata and the gene-space bijection.

Every optimizer in this package works on genes: values normalized to
[0, 1] per parameter. Discrete parameters live on a step grid and snap
with round-half-up when mapped back from gene space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence


class ParamKind(Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class ParamSpec:
    """Metadata for a single generator or camera parameter."""

    name: str
    kind: ParamKind
    min: float
    max: float
    step: float = 1.0
    description: str = ""

    def __post_init__(self):
        if not self.min < self.max:
            raise ValueError(f"{self.name}: min must be < max, got [{self.min}, {self.max}]")
        if self.kind is ParamKind.DISCRETE:
            if self.step <= 0:
                raise ValueError(f"{self.name}: discrete step must be positive")
            n = (self.max - self.min) / self.step
            if abs(n - round(n)) > 1e-9:
                raise ValueError(
                    f"{self.name}: (max - min) must be an integer multiple of step"
                )

    @property
    def span(self) -> float:
        return self.max - self.min

    def snap(self, value: float) -> float:
        """Project a raw value into [min, max], onto the grid if discrete."""
        v = min(max(value, self.min), self.max)
        if self.kind is ParamKind.DISCRETE:
            # round-half-up onto the step grid
            idx = math.floor((v - self.min) / self.step + 0.5)
            v = self.min + idx * self.step
            v = min(max(v, self.min), self.max)
        return v

    @property
    def midpoint(self) -> float:
        return self.snap(0.5 * (self.min + self.max))


@dataclass(frozen=True)
class ParameterVector:
    """An ordered, validated assignment of values to a parameter spec list."""

    spec: tuple[ParamSpec, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "spec", tuple(self.spec))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.spec) != len(self.values):
            raise ValueError(
                f"spec has {len(self.spec)} parameters but {len(self.values)} values given"
            )
        problems = []
        for s, v in zip(self.spec, self.values):
            if not (s.min - 1e-12 <= v <= s.max + 1e-12):
                problems.append(f"{s.name}={v} outside [{s.min}, {s.max}]")
            elif s.kind is ParamKind.DISCRETE:
                k = (v - s.min) / s.step
                if abs(k - round(k)) > 1e-6:
                    problems.append(f"{s.name}={v} not on step grid (step={s.step})")
        if problems:
            raise ValueError("invalid parameter vector: " + "; ".join(problems))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, name: str) -> float:
        for s, v in zip(self.spec, self.values):
            if s.name == name:
                return v
        raise KeyError(name)

    def replace(self, **updates: float) -> "ParameterVector":
        names = [s.name for s in self.spec]
        for k in updates:
            if k not in names:
                raise KeyError(k)
        vals = [updates.get(s.name, v) for s, v in zip(self.spec, self.values)]
        return ParameterVector(self.spec, tuple(vals))

    def as_dict(self) -> dict[str, float]:
        return {s.name: v for s, v in zip(self.spec, self.values)}


@dataclass(frozen=True)
class Preset:
    """A named, ready-to-generate parameter vector for one generator."""

    name: str
    generator_id: str
    vector: ParameterVector


def to_genes(v: ParameterVector) -> list[float]:
    """Map parameter values to genes in [0, 1] via the linear per-parameter map."""
    return [(val - s.min) / s.span for s, val in zip(v.spec, v.values)]


def from_genes(genes: Sequence[float], spec: Sequence[ParamSpec]) -> ParameterVector:
    """Inverse of :func:`to_genes`; discrete parameters snap to their grid."""
    if len(genes) != len(spec):
        raise ValueError(f"expected {len(spec)} genes, got {len(genes)}")
    for s, g in zip(spec, genes):
        if not (-1e-9 <= g <= 1 + 1e-9):
            raise ValueError(f"gene for {s.name} out of [0, 1]: {g}")
    values = []
    for s, g in zip(spec, genes):
        g = min(max(float(g), 0.0), 1.0)
        v = s.min + g * s.span
        if s.kind is ParamKind.DISCRETE:
            v = s.snap(v)
        values.append(v)
    return ParameterVector(tuple(spec), tuple(values))


def clamp(v: ParameterVector) -> ParameterVector:
    """Project every value into bounds (and onto the grid for discrete params)."""
    return ParameterVector(v.spec, tuple(s.snap(val) for s, val in zip(v.spec, v.values)))


def clamp_values(values: Sequence[float], spec: Sequence[ParamSpec]) -> ParameterVector:
    """Build a valid ParameterVector from arbitrary raw values."""
    return ParameterVector(tuple(spec), tuple(s.snap(float(v)) for s, v in zip(spec, values)))


def midpoint_vector(spec: Sequence[ParamSpec]) -> ParameterVector:
    return ParameterVector(tuple(spec), tuple(s.midpoint for s in spec))


def discrete_mask(spec: Sequence[ParamSpec]) -> list[bool]:
    """True at slots whose parameter is discrete (frozen for gradient steps)."""
    return [s.kind is ParamKind.DISCRETE for s in spec]


def preset_to_json(preset: Preset) -> dict:
    return {
        "name": preset.name,
        "generator": preset.generator_id,
        "values": preset.vector.as_dict(),
    }


def preset_from_json(data: dict, spec: Sequence[ParamSpec]) -> Preset:
    """Parse the preset JSON schema against a generator's parameter spec.

    Unknown parameter names are an error; missing ones take the spec midpoint.
    """
    known = {s.name for s in spec}
    values = data.get("values", {})
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"preset {data.get('name')!r}: unknown parameters {unknown}")
    vals = tuple(
        float(values[s.name]) if s.name in values else s.midpoint for s in spec
    )
    vector = ParameterVector(tuple(spec), vals)
    return Preset(str(data.get("name", "preset")), str(data.get("generator", "")), vector)


def load_presets(directory: Path, generator_id: str, spec: Sequence[ParamSpec]) -> list[Preset]:
    """Load all preset JSON files for one generator from ``directory/generator_id``."""
    gen_dir = Path(directory) / generator_id
    presets = []
    if gen_dir.is_dir():
        for path in sorted(gen_dir.glob("*.json")):
            with open(path) as fh:
                data = json.load(fh)
            if data.get("generator", generator_id) != generator_id:
                raise ValueError(f"{path}: preset is for generator {data.get('generator')!r}")
            presets.append(preset_from_json(data, spec))
    return presets


def save_preset(preset: Preset, directory: Path) -> Path:
    gen_dir = Path(directory) / preset.generator_id
    gen_dir.mkdir(parents=True, exist_ok=True)
    path = gen_dir / f"{preset.name}.json"
    with open(path, "w") as fh:
        json.dump(preset_to_json(preset), fh, indent=2)
    return path
