"""Forward-mode automatic differentiation scalars.

Generators build their geometry out of :class:`DualScalar` values so the
Jacobian of vertex positions with respect to the continuous parameters
falls out alongside the mesh. Discrete parameters are seeded with zero
partials, so their Jacobian columns stay exactly zero.

Parameter counts here are small, so a dense partials vector per scalar
is cheap and forward mode beats taping a reverse pass.
"""

from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np

from .params import ParameterVector, ParamKind

Number = Union[int, float]


class DualScalar:
    """Value plus a dense vector of partial derivatives."""

    __slots__ = ("value", "partials")

    def __init__(self, value: float, partials: np.ndarray):
        self.value = float(value)
        self.partials = partials

    @staticmethod
    def constant(value: float, n: int) -> "DualScalar":
        return DualScalar(value, np.zeros(n))

    def _coerce(self, other) -> "DualScalar":
        if isinstance(other, DualScalar):
            return other
        return DualScalar(float(other), np.zeros_like(self.partials))

    # arithmetic -------------------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        return DualScalar(self.value + o.value, self.partials + o.partials)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return DualScalar(self.value - o.value, self.partials - o.partials)

    def __rsub__(self, other):
        o = self._coerce(other)
        return DualScalar(o.value - self.value, o.partials - self.partials)

    def __mul__(self, other):
        o = self._coerce(other)
        return DualScalar(self.value * o.value, self.partials * o.value + o.partials * self.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.value == 0.0:
            raise ZeroDivisionError("dual division by zero value")
        inv = 1.0 / o.value
        return DualScalar(
            self.value * inv,
            (self.partials - self.value * inv * o.partials) * inv,
        )

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        return DualScalar(-self.value, -self.partials)

    def __pow__(self, exponent: Number):
        if self.value == 0.0 and exponent < 1:
            raise ValueError(f"pow: non-differentiable at 0 for exponent {exponent}")
        return DualScalar(
            self.value**exponent,
            exponent * self.value ** (exponent - 1) * self.partials,
        )

    # comparisons on values (branch selection) -------------------------

    def __lt__(self, other):
        return self.value < _value_of(other)

    def __le__(self, other):
        return self.value <= _value_of(other)

    def __gt__(self, other):
        return self.value > _value_of(other)

    def __ge__(self, other):
        return self.value >= _value_of(other)

    def __repr__(self):
        return f"DualScalar({self.value}, {self.partials})"


DualLike = Union[DualScalar, Number]


def _value_of(x: DualLike) -> float:
    return x.value if isinstance(x, DualScalar) else float(x)


def value_of(x: DualLike) -> float:
    return _value_of(x)


def sin(x: DualLike):
    if isinstance(x, DualScalar):
        return DualScalar(math.sin(x.value), math.cos(x.value) * x.partials)
    return math.sin(x)


def cos(x: DualLike):
    if isinstance(x, DualScalar):
        return DualScalar(math.cos(x.value), -math.sin(x.value) * x.partials)
    return math.cos(x)


def sqrt(x: DualLike):
    if isinstance(x, DualScalar):
        if x.value <= 0.0:
            raise ValueError(f"sqrt: non-positive value {x.value}")
        r = math.sqrt(x.value)
        return DualScalar(r, x.partials / (2.0 * r))
    if x < 0.0:
        raise ValueError(f"sqrt: negative value {x}")
    return math.sqrt(x)


def dmin(a: DualLike, b: DualLike):
    """min with subgradient semantics: ties take the first argument."""
    return a if _value_of(a) <= _value_of(b) else b


def dmax(a: DualLike, b: DualLike):
    """max with subgradient semantics: ties take the first argument."""
    return a if _value_of(a) >= _value_of(b) else b


def seed(values: ParameterVector) -> list[DualScalar]:
    """Seed one dual per parameter: unit basis partials for continuous slots.

    Discrete parameters get all-zero partials, which keeps their Jacobian
    columns identically zero through any arithmetic.
    """
    n = len(values)
    duals = []
    for i, (s, v) in enumerate(zip(values.spec, values.values)):
        partials = np.zeros(n)
        if s.kind is ParamKind.CONTINUOUS:
            partials[i] = 1.0
        duals.append(DualScalar(v, partials))
    return duals


class Jacobian:
    """Dense d(positions)/d(parameters), rows = 3 * vertex count."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.matrix[:, k]

    def vjp(self, d_pos: np.ndarray) -> np.ndarray:
        """Pull a position gradient back to parameter space: J^T d_pos."""
        return self.matrix.T @ np.asarray(d_pos, dtype=np.float64).ravel()


class DualArray:
    """Array-valued forward-mode dual: values of any shape, partials on a trailing axis.

    This is the vectorized sibling of DualScalar. Generators compute their
    profile/skeleton quantities with it so whole rings of vertices share one
    numpy operation instead of per-scalar Python arithmetic.
    """

    __slots__ = ("v", "p")

    def __init__(self, v: np.ndarray, p: np.ndarray):
        self.v = np.asarray(v, dtype=np.float64)
        self.p = np.asarray(p, dtype=np.float64)

    @staticmethod
    def constant(v, n_params: int) -> "DualArray":
        v = np.asarray(v, dtype=np.float64)
        return DualArray(v, np.zeros(v.shape + (n_params,)))

    @staticmethod
    def from_scalars(duals: Sequence[DualScalar]) -> "DualArray":
        return DualArray(
            np.array([d.value for d in duals]),
            np.array([d.partials for d in duals]),
        )

    @property
    def shape(self):
        return self.v.shape

    @property
    def n_params(self) -> int:
        return self.p.shape[-1]

    def scalar(self, idx=()) -> DualScalar:
        return DualScalar(float(self.v[idx]), np.array(self.p[idx]))

    def _coerce(self, other):
        if isinstance(other, DualArray):
            return other
        return DualArray.constant(other, self.n_params)

    def __add__(self, other):
        o = self._coerce(other)
        return DualArray(self.v + o.v, self.p + o.p)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return DualArray(self.v - o.v, self.p - o.p)

    def __rsub__(self, other):
        o = self._coerce(other)
        return DualArray(o.v - self.v, o.p - self.p)

    def __mul__(self, other):
        o = self._coerce(other)
        return DualArray(
            self.v * o.v,
            self.p * o.v[..., None] + o.p * self.v[..., None],
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        inv = 1.0 / o.v
        v = self.v * inv
        return DualArray(v, (self.p - o.p * v[..., None]) * inv[..., None])

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        return DualArray(-self.v, -self.p)

    def __getitem__(self, idx) -> "DualArray":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return DualArray(self.v[idx], self.p[idx + (slice(None),)])

    def expand(self) -> "DualArray":
        """Append a broadcast axis: shape (s,) -> (s, 1)."""
        return DualArray(self.v[..., None], self.p[..., None, :])

    def broadcast_to(self, shape) -> "DualArray":
        return DualArray(
            np.broadcast_to(self.v, shape),
            np.broadcast_to(self.p, tuple(shape) + (self.n_params,)),
        )

    def sqrt(self) -> "DualArray":
        if np.any(self.v <= 0.0):
            raise ValueError("DualArray.sqrt: non-positive values")
        r = np.sqrt(self.v)
        return DualArray(r, self.p / (2.0 * r[..., None]))


def seed_array(values: ParameterVector, with_jacobian: bool = True) -> DualArray:
    """Seed a (len,) DualArray from a parameter vector.

    Continuous slots get unit basis partials; discrete slots get zeros.
    With ``with_jacobian=False`` the partials axis is width zero, which
    turns all downstream dual math into plain (cheap) value arithmetic.
    """
    n = len(values)
    width = n if with_jacobian else 0
    p = np.zeros((n, width))
    if with_jacobian:
        for i, s in enumerate(values.spec):
            if s.kind is ParamKind.CONTINUOUS:
                p[i, i] = 1.0
    return DualArray(np.array(values.values), p)


def da_lincomb(weights: np.ndarray, a: DualArray) -> DualArray:
    """weights @ a for a 1D DualArray (linear combination of dual entries)."""
    return DualArray(weights @ a.v, weights @ a.p)


def da_outer(a: DualArray, w: np.ndarray) -> DualArray:
    """Outer product of a (n,) dual with a plain float vector (m,) -> (n, m)."""
    w = np.asarray(w, dtype=np.float64)
    return DualArray(np.outer(a.v, w), a.p[:, None, :] * w[None, :, None])


def da_concat(parts: Sequence[DualArray]) -> DualArray:
    return DualArray(
        np.concatenate([x.v for x in parts]),
        np.concatenate([x.p for x in parts]),
    )


def assemble_jacobian(verts: Sequence[Sequence[DualLike]]) -> tuple[np.ndarray, Jacobian]:
    """Flatten dual 3-vectors into (positions, Jacobian).

    positions is row-major (x, y, z per vertex); J[3i + axis, k] holds the
    k-th partial of vertex i's axis coordinate.
    """
    n_param = None
    for v in verts:
        for c in v:
            if isinstance(c, DualScalar):
                if n_param is None:
                    n_param = len(c.partials)
                elif len(c.partials) != n_param:
                    raise ValueError(
                        f"inconsistent partial lengths: {len(c.partials)} vs {n_param}"
                    )
    if n_param is None:
        n_param = 0

    positions = np.zeros(3 * len(verts))
    matrix = np.zeros((3 * len(verts), n_param))
    for i, v in enumerate(verts):
        for axis in range(3):
            c = v[axis]
            positions[3 * i + axis] = _value_of(c)
            if isinstance(c, DualScalar):
                matrix[3 * i + axis] = c.partials
    return positions, Jacobian(matrix)
