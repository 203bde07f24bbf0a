import math

import numpy as np
import pytest

from procrecon.optim import (
    AdamState,
    EvalBudget,
    GAConfig,
    Genome,
    QualityTables,
    adam_step,
    collect_quality_tables,
    elementary_ga,
    fitness_proportionate_pick,
    genome_quality,
    memetic_optimize,
    mutate,
    one_dot_crossover,
    tree_structured_ga,
)
from procrecon.params import ParamKind, ParamSpec


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------

def test_adam_zero_grad():
    st = AdamState.fresh(3, lr=0.1)
    genes = np.array([0.2, 0.5, 0.8])
    st2, out = adam_step(st, genes, np.zeros(3), [False] * 3)
    assert np.array_equal(out, genes)
    assert st2.t == 1


def test_adam_first_step_is_lr():
    st = AdamState.fresh(1, lr=0.1)
    _, out = adam_step(st, np.array([0.5]), np.array([3.7]), [False])
    assert abs((0.5 - out[0]) - 0.1) < 1e-3


def test_adam_frozen_slot():
    st = AdamState.fresh(2, lr=0.1)
    genes = np.array([0.5, 0.5])
    _, out = adam_step(st, genes, np.array([1.0, 1.0]), [False, True])
    assert out[0] != 0.5
    assert out[1] == 0.5


def test_adam_clamps_to_unit_box():
    st = AdamState.fresh(1, lr=0.5)
    _, out = adam_step(st, np.array([0.1]), np.array([5.0]), [False])
    assert out[0] == 0.0


# ----------------------------------------------------------------------
# quality tables (Eqs. for V, P, P0, Q)
# ----------------------------------------------------------------------

def test_tables_linear_objective_v_is_one():
    f = lambda x: float(np.sum(x))
    t = collect_quality_tables([f], n_genes=4, sample_count=1000, h=0.01,
                               rng=np.random.default_rng(0))
    assert np.allclose(t.V, 1.0, atol=1e-9)


def test_tables_independent_gene_small_q():
    # f ignores gene 1 entirely; its Q entries stay near zero
    f = lambda x: float(x[0])
    t = collect_quality_tables([f], n_genes=2, sample_count=10000,
                               rng=np.random.default_rng(1))
    assert np.max(np.abs(t.Q_table[1])) < 1.2
    # while the informative gene shows strong signal
    assert np.max(np.abs(t.Q_table[0])) > 2.0


def test_tables_q_zero_when_p_equals_p0():
    # epsilon above every fitness value: P_ij = P0 = 0 -> sign(0) -> Q = 0
    f = lambda x: float(x[0])
    t = collect_quality_tables([f], n_genes=2, sample_count=500, epsilon=2.0,
                               rng=np.random.default_rng(2))
    assert np.all(t.Q_table == 0.0)


def test_tables_degenerate_family():
    t = collect_quality_tables([lambda x: 1.0], n_genes=3, sample_count=200,
                               rng=np.random.default_rng(3))
    assert t.degenerate
    assert np.all(t.Q_table == 0.0)


def test_tables_json_roundtrip(tmp_path):
    f = lambda x: float(x[0])
    t = collect_quality_tables([f], n_genes=2, sample_count=300,
                               rng=np.random.default_rng(4))
    path = tmp_path / "tables.json"
    t.save(path)
    back = QualityTables.load(path)
    assert np.array_equal(back.Q_table, t.Q_table)
    assert back.epsilon == t.epsilon


def test_tables_requires_objectives():
    with pytest.raises(ValueError):
        collect_quality_tables([], 2, 100)
    with pytest.raises(ValueError):
        collect_quality_tables([lambda x: 0.0], 2, 0)


# ----------------------------------------------------------------------
# genome quality (Eq. 8)
# ----------------------------------------------------------------------

def hand_tables():
    q = np.array([[0.0, 1, 2, 3], [0, -1, -2, -3]])
    return QualityTables(np.ones(2), np.zeros((2, 4)), 0.0, q, 4, 0.0, 1)


def test_quality_zero_tables():
    t = QualityTables.trivial(5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert genome_quality(Genome(rng.random(5)), t) == 0.0


def test_quality_hand_table():
    t = hand_tables()
    assert genome_quality(Genome(np.array([0.3, 0.9])), t) == -2.0


def test_quality_gene_at_one_uses_last_bin():
    t = hand_tables()
    assert genome_quality(Genome(np.array([1.0, 0.0])), t) == 3.0


# ----------------------------------------------------------------------
# mutation
# ----------------------------------------------------------------------

def test_mutate_zero_genes_selected():
    cfg = GAConfig(population_size=8, M_genes=0.2)
    g = Genome(np.full(2, 0.5))  # round(2 * 0.2) = 0
    out = mutate(g, QualityTables.trivial(2), cfg, np.random.default_rng(0))
    assert np.array_equal(out.genes, g.genes)


def test_mutate_v_mask():
    t = QualityTables(np.array([1.0, 0, 0, 0]), np.zeros((4, 16)), 0.0,
                      np.ones((4, 16)), 16, 0.0, 10)
    cfg = GAConfig(population_size=8, M_genes=0.25)
    g = Genome(np.full(4, 0.5))
    for s in range(30):
        out = mutate(g, t, cfg, np.random.default_rng(s))
        diff = np.flatnonzero(out.genes != g.genes)
        assert list(diff) == [0]


def test_mutate_prefers_high_quality_bins():
    # Q rewards bin 0 of every gene; changed genes should land there
    bins = 8
    q = np.full((6, bins), -5.0)
    q[:, 0] = 5.0
    t = QualityTables(np.ones(6), np.zeros((6, bins)), 0.0, q, bins, 0.0, 10)
    cfg = GAConfig(population_size=8, M_genes=0.34, mutation_candidates=500)
    g = Genome(np.full(6, 0.99))
    hits = total = 0
    for s in range(100):
        out = mutate(g, t, cfg, np.random.default_rng(s))
        changed = np.flatnonzero(out.genes != g.genes)
        total += len(changed)
        hits += int(np.sum(out.genes[changed] * bins < 1.0))
    assert total > 0
    assert hits / total >= 0.9


def test_mutate_returns_argmax_candidate():
    t = hand_tables()
    cfg = GAConfig(population_size=8, M_genes=0.5, mutation_candidates=64)
    g = Genome(np.array([0.1, 0.2]))
    out1 = mutate(g, t, cfg, np.random.default_rng(7))
    out2 = mutate(g, t, cfg, np.random.default_rng(7))
    assert np.array_equal(out1.genes, out2.genes)  # deterministic under seed
    assert genome_quality(out1, t) >= genome_quality(g, t) - 6.0  # sane range


# ----------------------------------------------------------------------
# elementary GA
# ----------------------------------------------------------------------

def sphere_objective(target):
    return lambda g: -float(np.sum((g - target) ** 2))


def test_ga_identical_population_fixed_point():
    cfg = GAConfig(population_size=8, generations=10, M_chance=0.0)
    genes = np.full(4, 0.25)
    init = [genes.copy() for _ in range(8)]
    out = elementary_ga(lambda g: 1.0, init, cfg, QualityTables.trivial(4),
                        np.random.default_rng(0))
    assert all(np.array_equal(g.genes, genes) for g in out)


def test_ga_best_non_decreasing_in_generations():
    target = np.array([0.3, 0.7, 0.1, 0.9])
    obj = sphere_objective(target)
    t = QualityTables.trivial(4)
    rng = np.random.default_rng(5)
    init = [rng.random(4) for _ in range(16)]
    bests = []
    for gens in (0, 5, 10, 20, 40):
        cfg = GAConfig(population_size=16, generations=gens)
        out = elementary_ga(obj, [g.copy() for g in init], cfg, t,
                            np.random.default_rng(9))
        bests.append(out[0].fitness)
    assert all(b2 >= b1 - 1e-12 for b1, b2 in zip(bests, bests[1:]))


def test_ga_converges_to_target():
    target = np.array([0.3, 0.7, 0.1, 0.9, 0.5, 0.25, 0.65, 0.85])
    cfg = GAConfig(population_size=32, generations=200)
    rng = np.random.default_rng(1)
    init = [rng.random(8) for _ in range(32)]
    out = elementary_ga(sphere_objective(target), init, cfg,
                        QualityTables.trivial(8), rng)
    assert np.abs(out[0].genes - target).max() < 0.05


def test_ga_population_size_constant_and_in_bounds():
    cfg = GAConfig(population_size=12, generations=15)
    rng = np.random.default_rng(2)
    init = [rng.random(5) for _ in range(12)]
    out = elementary_ga(sphere_objective(np.full(5, 0.5)), init, cfg,
                        QualityTables.trivial(5), rng)
    assert len(out) == 12
    for g in out:
        assert g.genes.min() >= 0.0 and g.genes.max() <= 1.0


def test_fitness_proportionate_frequency():
    rng = np.random.default_rng(0)
    gs = [Genome(np.array([0.1]), 1.0), Genome(np.array([0.9]), 3.0)]
    picks = sum(1 for _ in range(10000)
                if fitness_proportionate_pick(gs, rng) is gs[1])
    assert abs(picks / 10000 - 0.75) <= 0.02


def test_crossover_single_cut():
    rng = np.random.default_rng(0)
    a = np.zeros(6)
    b = np.ones(6)
    for _ in range(50):
        child = one_dot_crossover(a, b, rng)
        flips = np.flatnonzero(np.diff(child))
        assert len(flips) == 1  # exactly one cut point in [1, N-1]


# ----------------------------------------------------------------------
# tree-structured GA
# ----------------------------------------------------------------------

def test_tree_ga_depth_one_equals_elementary():
    obj = sphere_objective(np.array([0.2, 0.6, 0.8]))
    cfg = GAConfig(population_size=8, generations=12, tree_depth=1)
    t = QualityTables.trivial(3)
    got = tree_structured_ga(obj, cfg, t, np.random.default_rng(5), 3)

    rng = np.random.default_rng(5)
    seeds = rng.integers(0, 2**63 - 1, size=1)
    node_rng = np.random.default_rng(int(seeds[0]))
    init = [node_rng.random(3) for _ in range(8)]
    want = elementary_ga(obj, init, cfg, t, node_rng)[: cfg.elite_carryover]
    assert all(np.array_equal(a.genes, b.genes) for a, b in zip(got, want))


def test_tree_ga_root_is_global_best():
    # survivor persistence up the tree: root best equals the best of ALL evals
    seen = []

    def obj(g):
        v = -float(np.sum((g - 0.5) ** 2))
        seen.append(v)
        return v

    cfg = GAConfig(population_size=8, generations=6, tree_depth=3)
    out = tree_structured_ga(obj, cfg, QualityTables.trivial(4),
                             np.random.default_rng(3), 4)
    assert out[0].fitness == pytest.approx(max(seen))
    assert len(out) == cfg.elite_carryover


def test_tree_ga_deterministic():
    obj = sphere_objective(np.array([0.4, 0.1, 0.9, 0.3]))
    cfg = GAConfig(population_size=8, generations=5, tree_depth=2)
    a = tree_structured_ga(obj, cfg, QualityTables.trivial(4),
                           np.random.default_rng(11), 4)
    b = tree_structured_ga(obj, cfg, QualityTables.trivial(4),
                           np.random.default_rng(11), 4)
    assert all(np.array_equal(x.genes, y.genes) for x, y in zip(a, b))


# ----------------------------------------------------------------------
# memetic optimization
# ----------------------------------------------------------------------

def quad_spec(n):
    return tuple(ParamSpec(f"g{i}", ParamKind.CONTINUOUS, 0.0, 1.0)
                 for i in range(n))


def test_memetic_returns_zero_loss_preset():
    target = np.array([0.3, 0.8, 0.5])

    def lwg(genes, need_grad=False):
        loss = float(np.sum((genes - target) ** 2))
        return loss, (2 * (genes - target) if need_grad else None)

    cfg = GAConfig(population_size=8, eval_budget=100)
    best, bl = memetic_optimize(lwg, [target.copy()], quad_spec(3), cfg,
                                np.random.default_rng(0))
    assert bl == 0.0
    assert np.allclose(best.values, target)


def test_memetic_convex_quadratic():
    t4 = np.array([0.62, 0.31, 0.45, 0.77])

    def lwg(genes, need_grad=False):
        loss = float(np.mean((genes - t4) ** 2))
        return loss, (2 * (genes - t4) / 4 if need_grad else None)

    cfg = GAConfig(population_size=32, eval_budget=2000)
    _, bl = memetic_optimize(lwg, [np.full(4, 0.5)], quad_spec(4), cfg,
                             np.random.default_rng(3))
    assert bl < 1e-4


def test_memetic_recovers_discrete_branch():
    spec = (ParamSpec("d", ParamKind.DISCRETE, 0, 1, 1),
            ParamSpec("c", ParamKind.CONTINUOUS, 0, 1))

    def lwg(genes, need_grad=False):
        dval = 1.0 if genes[0] >= 0.5 else 0.0
        loss = (0.0 if dval == 1.0 else 1.0) + float((genes[1] - 0.5) ** 2)
        grad = np.array([0.0, 2 * (genes[1] - 0.5)]) if need_grad else None
        return loss, grad

    cfg = GAConfig(population_size=32, eval_budget=5000, M_genes=0.5)
    best, _ = memetic_optimize(lwg, [np.array([0.2, 0.9])], spec, cfg,
                               np.random.default_rng(4))
    assert best["d"] == 1.0


def test_memetic_respects_budget():
    calls = [0]

    def lwg(genes, need_grad=False):
        calls[0] += 1
        return float(np.sum(genes**2)), (2 * genes if need_grad else None)

    cfg = GAConfig(population_size=8, eval_budget=120)
    memetic_optimize(lwg, [np.full(3, 0.5)], quad_spec(3), cfg,
                     np.random.default_rng(1))
    assert calls[0] <= 120


def test_memetic_best_history_monotone():
    t3 = np.array([0.2, 0.9, 0.4])

    def lwg(genes, need_grad=False):
        loss = float(np.sum((genes - t3) ** 2))
        return loss, (2 * (genes - t3) if need_grad else None)

    cfg = GAConfig(population_size=8, eval_budget=300)
    budget = EvalBudget(300, maximize=False, log_every=10)
    memetic_optimize(lwg, [np.full(3, 0.1)], quad_spec(3), cfg,
                     np.random.default_rng(2), budget)
    bests = [b for _, _, b in budget.history]
    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(bests, bests[1:]))


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GAConfig(population_size=7)
    with pytest.raises(ValueError):
        GAConfig(M_genes=0.0)
    with pytest.raises(ValueError):
        GAConfig(M_chance=1.5)
    GAConfig(M_chance=0.0)  # zero mutation chance is allowed
