import math

import numpy as np
import pytest

from procrecon.autodiff import (
    DualArray,
    DualScalar,
    assemble_jacobian,
    cos,
    da_concat,
    da_lincomb,
    da_outer,
    dmax,
    dmin,
    seed,
    seed_array,
    sin,
    sqrt,
)
from procrecon.params import ParamKind, ParamSpec, ParameterVector

CONT = ParamKind.CONTINUOUS
DISC = ParamKind.DISCRETE


def test_seed_identity():
    s = (ParamSpec("x", CONT, 0, 10), ParamSpec("y", CONT, 0, 10))
    duals = seed(ParameterVector(s, (2.0, 3.0)))
    assert np.array_equal(duals[0].partials, [1.0, 0.0])
    assert np.array_equal(duals[1].partials, [0.0, 1.0])


def test_seed_discrete_zero():
    s = (ParamSpec("x", CONT, 0, 10), ParamSpec("d", DISC, 0, 3, 1))
    duals = seed(ParameterVector(s, (2.0, 1.0)))
    assert np.array_equal(duals[1].partials, [0.0, 0.0])


def test_seed_empty():
    assert seed(ParameterVector((), ())) == []


def test_product_rule():
    x = DualScalar(2.0, np.array([1.0]))
    y = DualScalar(3.0, np.array([0.0]))
    z = x * y
    assert z.value == 6.0
    assert np.allclose(z.partials, [3.0])


def test_sin_at_zero():
    x = DualScalar(0.0, np.array([1.0]))
    z = sin(x)
    assert z.value == 0.0
    assert np.allclose(z.partials, [1.0])  # cos(0) = 1


def test_max_branch_selection():
    a = DualScalar(1.0, np.array([1.0]))
    b = DualScalar(2.0, np.array([0.0]))
    z = dmax(a, b)
    assert z.value == 2.0
    assert np.allclose(z.partials, [0.0])
    # ties take the first argument
    c = DualScalar(1.0, np.array([5.0]))
    assert np.allclose(dmin(a, c).partials, [1.0])
    assert np.allclose(dmax(a, c).partials, [1.0])


def test_domain_errors():
    x = DualScalar(0.0, np.array([1.0]))
    with pytest.raises(ZeroDivisionError):
        DualScalar(1.0, np.array([0.0])) / x
    with pytest.raises(ValueError):
        sqrt(DualScalar(-1.0, np.array([0.0])))


def test_chain_rule_composite():
    # f(x) = sqrt(sin(x)^2 + 3) at x=0.7, df = sin(x)cos(x)/sqrt(...)
    x0 = 0.7
    x = DualScalar(x0, np.array([1.0]))
    f = sqrt(sin(x) * sin(x) + 3.0)
    expected = math.sin(x0) * math.cos(x0) / math.sqrt(math.sin(x0) ** 2 + 3)
    assert abs(f.partials[0] - expected) < 1e-12


def test_assemble_linear_map():
    p = DualScalar(2.5, np.array([1.0]))
    verts = [(p, 0.0, 0.0)]
    pos, jac = assemble_jacobian(verts)
    assert np.allclose(pos, [2.5, 0.0, 0.0])
    assert np.allclose(jac.matrix, [[1.0], [0.0], [0.0]])


def test_assemble_constant_vertex():
    p = DualScalar(2.5, np.array([1.0]))
    verts = [(p, 0.0, p), (1.0, 2.0, 3.0)]
    pos, jac = assemble_jacobian(verts)
    assert np.allclose(jac.matrix[3:], 0.0)


def test_assemble_lathe_vertex():
    # (r cos t, h, r sin t) with r the only parameter, t = 0
    r = DualScalar(1.2, np.array([1.0]))
    t = 0.0
    vert = (r * math.cos(t), 0.8, r * math.sin(t))
    pos, jac = assemble_jacobian([vert])
    assert np.allclose(jac.matrix[:, 0], [1.0, 0.0, 0.0])


def test_assemble_inconsistent_lengths():
    a = DualScalar(1.0, np.array([1.0]))
    b = DualScalar(1.0, np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        assemble_jacobian([(a, b, 0.0)])


def test_dual_array_matches_scalars():
    # the vectorized dual type must agree with per-scalar arithmetic
    rng = np.random.default_rng(3)
    vals = rng.uniform(0.5, 2.0, 4)
    partials = rng.normal(size=(4, 2))
    scalars = [DualScalar(v, p.copy()) for v, p in zip(vals, partials)]
    arr = DualArray(vals, partials)

    out_s = [(s * 2.0 + 1.0) / sqrt(s) for s in scalars]
    out_a = (arr * 2.0 + 1.0) / arr.sqrt()
    assert np.allclose(out_a.v, [o.value for o in out_s])
    assert np.allclose(out_a.p, [o.partials for o in out_s])

    lin = da_lincomb(np.array([[0.5, 0.5, 0.0, 0.0]]), arr)
    expected = scalars[0] * 0.5 + scalars[1] * 0.5
    assert np.allclose(lin.v, expected.value)
    assert np.allclose(lin.p[0], expected.partials)

    outer = da_outer(arr, np.array([2.0, -1.0]))
    assert np.allclose(outer.v[:, 0], vals * 2.0)
    assert np.allclose(outer.p[:, 1, :], -partials)

    cat = da_concat([arr, arr[0:1]])
    assert cat.shape == (5,)
    assert np.allclose(cat.v[-1], vals[0])


def test_seed_array_widths():
    s = (ParamSpec("x", CONT, 0, 1), ParamSpec("d", DISC, 0, 2, 1))
    v = ParameterVector(s, (0.5, 1.0))
    full = seed_array(v, True)
    assert full.p.shape == (2, 2)
    assert np.allclose(full.p, [[1, 0], [0, 0]])
    empty = seed_array(v, False)
    assert empty.p.shape == (2, 0)
