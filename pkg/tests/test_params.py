import numpy as np
import pytest

from procrecon.params import (
    ParamKind,
    ParamSpec,
    ParameterVector,
    Preset,
    clamp,
    from_genes,
    load_presets,
    preset_from_json,
    preset_to_json,
    save_preset,
    to_genes,
)

CONT = ParamKind.CONTINUOUS
DISC = ParamKind.DISCRETE


def spec3():
    return (
        ParamSpec("a", CONT, 2.0, 6.0),
        ParamSpec("b", CONT, -1.0, 1.0),
        ParamSpec("d", DISC, 0.0, 5.0, 1.0),
    )


def test_spec_invariants():
    with pytest.raises(ValueError):
        ParamSpec("bad", CONT, 1.0, 1.0)
    with pytest.raises(ValueError):
        ParamSpec("bad", DISC, 0.0, 5.5, 1.0)  # span not multiple of step


def test_vector_validation():
    s = spec3()
    ParameterVector(s, (3.0, 0.0, 2.0))
    with pytest.raises(ValueError):
        ParameterVector(s, (1.0, 0.0, 2.0))  # below min
    with pytest.raises(ValueError):
        ParameterVector(s, (3.0, 0.0, 2.5))  # off grid
    with pytest.raises(ValueError):
        ParameterVector(s, (3.0, 0.0))  # length mismatch


def test_to_genes_bounds():
    s = spec3()
    v = ParameterVector(s, (2.0, 1.0, 0.0))
    assert to_genes(v) == [0.0, 1.0, 0.0]
    v = ParameterVector(s, (6.0, -1.0, 5.0))
    assert to_genes(v) == [1.0, 0.0, 1.0]


def test_to_genes_linear_map():
    s = (ParamSpec("a", CONT, 2.0, 6.0),)
    assert to_genes(ParameterVector(s, (3.0,))) == [0.25]


def test_from_genes_lower_bound():
    s = spec3()
    v = from_genes([0.0, 0.0, 0.0], s)
    assert v.values == (2.0, -1.0, 0.0)


def test_from_genes_discrete_snap():
    # gene 0.49 on [0,5] maps to 2.45; nearest grid point oracle
    s = (ParamSpec("d", DISC, 0.0, 5.0, 1.0),)
    raw = 0.49 * 5.0
    assert from_genes([0.49], s).values[0] == float(round(raw))
    assert from_genes([0.49], s).values[0] == 2.0


def test_gene_out_of_range():
    s = spec3()
    with pytest.raises(ValueError):
        from_genes([1.2, 0.0, 0.0], s)
    with pytest.raises(ValueError):
        from_genes([0.5, 0.5], s)


def test_roundtrip_identity():
    rng = np.random.default_rng(0)
    s = spec3()
    for _ in range(200):
        vals = (
            rng.uniform(2, 6),
            rng.uniform(-1, 1),
            float(rng.integers(0, 6)),
        )
        v = ParameterVector(s, vals)
        back = from_genes(to_genes(v), s)
        assert np.allclose(back.values, v.values, atol=1e-12)
        # to_genes(from_genes(g)) equals g up to discrete snapping
        g = rng.random(3)
        g2 = to_genes(from_genes(g, s))
        assert np.allclose(g2[:2], g[:2], atol=1e-12)
        assert abs(g2[2] - g[2]) <= 0.5 / 5 + 1e-12


def test_clamp():
    s = spec3()
    v = ParameterVector(s, (3.0, 0.5, 2.0))
    assert clamp(v).values == v.values
    # out-of-range raw values project through clamp_values
    from procrecon.params import clamp_values

    c = clamp_values((1.0, -3.0, 2.7), s)
    assert c.values == (2.0, -1.0, 3.0)  # min-1 -> min; 2.7 -> round-half-up 3
    assert clamp(c).values == c.values  # idempotent


def test_clamp_idempotent_random():
    rng = np.random.default_rng(1)
    from procrecon.params import clamp_values

    s = spec3()
    for _ in range(100):
        raw = rng.uniform(-10, 10, 3)
        c = clamp_values(raw, s)
        assert clamp(c).values == c.values


def test_preset_json_schema(tmp_path):
    s = spec3()
    doc = {"name": "p1", "generator": "g", "values": {"a": 3.0, "d": 4}}
    p = preset_from_json(doc, s)
    assert p.vector["a"] == 3.0
    assert p.vector["b"] == 0.0  # missing -> midpoint
    assert p.vector["d"] == 4.0
    with pytest.raises(ValueError, match="unknown parameters"):
        preset_from_json({"name": "x", "values": {"zz": 1}}, s)
    # file round trip, one directory per generator
    save_preset(Preset("p1", "g", p.vector), tmp_path)
    loaded = load_presets(tmp_path, "g", s)
    assert len(loaded) == 1
    assert loaded[0].vector.values == p.vector.values
    assert preset_to_json(loaded[0])["values"]["a"] == 3.0
