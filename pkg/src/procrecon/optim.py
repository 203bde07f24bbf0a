"""Optimization stack: Adam, quality-table mutation, elementary/tree GA, memetic.

All optimizers work on gene vectors in [0, 1]^N. The GA family follows one
strategy: drop the worst half each generation, refill by one-dot crossover
of fitness-proportionate-selected survivors, then mutate. Mutation is
guided by pre-collected quality tables: candidate mutants are scored by
bin statistics of the objective family and the best candidate wins. The
memetic optimizer adds Adam refinement of the fittest quarter using the
analytic silhouette gradients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .params import ParameterVector, ParamSpec, discrete_mask, from_genes


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def fresh(n: int, lr: float = 0.05) -> "AdamState":
        return AdamState(np.zeros(n), np.zeros(n), 0, lr)


def adam_step(state: AdamState, genes: np.ndarray, grad: np.ndarray,
              frozen_mask: Sequence[bool]) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam step; frozen (discrete) slots never move.

    The result is clamped into [0, 1] gene space.
    """
    genes = np.asarray(genes, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if genes.shape != grad.shape or len(genes) != len(state.m):
        raise ValueError("genes/grad/state length mismatch")
    frozen = np.asarray(frozen_mask, dtype=bool)
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    step[frozen] = 0.0
    out = np.clip(genes - step, 0.0, 1.0)
    return replace(state, m=m, v=v, t=t), out


@dataclass
class Genome:
    genes: np.ndarray
    fitness: float | None = None

    def __post_init__(self):
        self.genes = np.asarray(self.genes, dtype=np.float64)
        if self.genes.size and (self.genes.min() < -1e-9 or self.genes.max() > 1 + 1e-9):
            raise ValueError("genes must lie in [0, 1]")


@dataclass
class QualityTables:
    """Pre-collected objective-family statistics driving mutation (V, P, P0, Q)."""

    V: np.ndarray  # (N,) mean absolute rate of change per gene
    P_table: np.ndarray  # (N, B) conditional success probabilities
    P0: float
    Q_table: np.ndarray  # (N, B)
    bins: int
    epsilon: float
    sample_count: int
    degenerate: bool = False

    @property
    def n_genes(self) -> int:
        return len(self.V)

    def is_trivial(self) -> bool:
        return not np.any(self.Q_table)

    @staticmethod
    def trivial(n_genes: int, bins: int = 16) -> "QualityTables":
        return QualityTables(np.ones(n_genes), np.zeros((n_genes, bins)), 0.0,
                             np.zeros((n_genes, bins)), bins, 0.0, 0)

    def to_json(self) -> dict:
        return {
            "V": self.V.tolist(),
            "P": self.P_table.tolist(),
            "P0": self.P0,
            "Q": self.Q_table.tolist(),
            "bins": self.bins,
            "epsilon": self.epsilon,
            "sample_count": self.sample_count,
            "degenerate": self.degenerate,
        }

    @staticmethod
    def from_json(data: dict) -> "QualityTables":
        return QualityTables(
            np.asarray(data["V"], dtype=np.float64),
            np.asarray(data["P"], dtype=np.float64),
            float(data["P0"]),
            np.asarray(data["Q"], dtype=np.float64),
            int(data["bins"]),
            float(data["epsilon"]),
            int(data["sample_count"]),
            bool(data.get("degenerate", False)),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @staticmethod
    def load(path: Path) -> "QualityTables":
        return QualityTables.from_json(json.loads(Path(path).read_text()))


@dataclass
class GAConfig:
    population_size: int = 32
    generations: int = 60
    M_chance: float = 0.8
    M_genes: float = 0.2
    mutation_candidates: int = 500
    n: int | None = None  # genes-per-mutation scale; defaults to gene count
    h: float = 0.05  # probe step for V(k) collection
    tree_depth: int = 3
    elite_carryover: int = 4
    rng_seed: int = 0
    eval_budget: int = 5000
    adam_lr: float = 0.05
    adam_steps: int = 5

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 4")
        if not 0.0 <= self.M_chance <= 1.0:
            raise ValueError("M_chance must lie in [0, 1]")
        if not 0.0 < self.M_genes <= 1.0:
            raise ValueError("M_genes must lie in (0, 1]")
        if self.tree_depth < 1:
            raise ValueError("tree_depth must be >= 1")


# ----------------------------------------------------------------------
# quality tables (pre-collected family statistics)
# ----------------------------------------------------------------------

def collect_quality_tables(objectives: Sequence[Callable[[np.ndarray], float]],
                           n_genes: int, sample_count: int = 2000,
                           bins: int = 16, h: float = 0.05,
                           epsilon: float | None = None,
                           rng: np.random.Generator | None = None,
                           v_probe_samples: int = 128) -> QualityTables:
    """Sample the objective family at random genomes and build V/P/Q tables.

    The rate-of-change table V uses forward probes of step ``h`` on a
    subsample of genomes (each probe costs one evaluation per gene, so the
    full sample would be needlessly expensive). The success threshold
    ``epsilon`` defaults to the 75th percentile of the sampled fitness.
    """
    if not objectives:
        raise ValueError("objective family must contain at least one objective")
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)

    xs = rng.random((sample_count, n_genes))
    which = rng.integers(0, len(objectives), sample_count)
    f_vals = np.array([objectives[w](x) for w, x in zip(which, xs)])

    if epsilon is None:
        epsilon = float(np.percentile(f_vals, 75.0))
    success = f_vals > epsilon
    p0 = float(success.mean())

    spread = float(f_vals.max() - f_vals.min())
    degenerate = spread < 1e-12

    p_table = np.full((n_genes, bins), p0)
    q_table = np.zeros((n_genes, bins))
    if not degenerate:
        bin_idx = np.clip((xs * bins).astype(int), 0, bins - 1)
        for i in range(n_genes):
            for j in range(bins):
                sel = bin_idx[:, i] == j
                if np.any(sel):
                    p_table[i, j] = float(success[sel].mean())
        diff = p_table - p0
        hi = np.maximum(p_table, p0)
        lo = np.minimum(p_table, p0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lo > 0, hi / np.maximum(lo, 1e-300), 10.0)
        ratio = np.minimum(ratio, 10.0)
        q_table = np.sign(diff) * ratio

    # V(k): mean |f(x + h e_k) - f(x)| / h on a probe subsample
    n_probe = min(sample_count, v_probe_samples)
    xv = rng.random((n_probe, n_genes)) * (1.0 - h)
    wv = rng.integers(0, len(objectives), n_probe)
    base = np.array([objectives[w](x) for w, x in zip(wv, xv)])
    V = np.zeros(n_genes)
    for k in range(n_genes):
        probe = xv.copy()
        probe[:, k] += h
        vals = np.array([objectives[w](x) for w, x in zip(wv, probe)])
        V[k] = float(np.mean(np.abs(vals - base)) / h)
    if degenerate:
        V = np.ones(n_genes)

    return QualityTables(V, p_table, p0, q_table, bins, float(epsilon),
                         sample_count, degenerate)


def genome_quality(G: Genome, tables: QualityTables) -> float:
    """Sum of Q-table entries at each gene's bin (last bin absorbs gene = 1)."""
    genes = G.genes if isinstance(G, Genome) else np.asarray(G, dtype=np.float64)
    if len(genes) != tables.n_genes:
        raise ValueError(f"genome has {len(genes)} genes, tables expect {tables.n_genes}")
    idx = np.clip((genes * tables.bins).astype(int), 0, tables.bins - 1)
    return float(tables.Q_table[np.arange(len(genes)), idx].sum())


def mutate(G: Genome, tables: QualityTables, cfg: GAConfig,
           rng: np.random.Generator) -> Genome:
    """Quality-guided mutation.

    Generates candidate mutants, each resampling round(n * M_genes) genes
    chosen without replacement with probability proportional to V(k), and
    returns the candidate with the best genome quality score.
    """
    genes = G.genes
    n = len(genes)
    scale = cfg.n if cfg.n is not None else n
    k = int(round(scale * cfg.M_genes))
    if k <= 0:
        return Genome(genes.copy())
    weights = np.asarray(tables.V, dtype=np.float64).copy()
    if not np.any(weights > 0):
        weights = np.ones(n)
    k = min(k, int(np.count_nonzero(weights > 0)))

    # scoring is pointless on trivial tables; one candidate suffices
    n_cand = 1 if tables.is_trivial() else cfg.mutation_candidates

    # weighted sampling without replacement via exponential races
    keys = rng.exponential(size=(n_cand, n))
    with np.errstate(divide="ignore"):
        keys = np.where(weights[None, :] > 0, keys / weights[None, :], np.inf)
    chosen = np.argpartition(keys, k - 1, axis=1)[:, :k]
    values = rng.random((n_cand, k))

    cand = np.repeat(genes[None, :], n_cand, axis=0)
    np.put_along_axis(cand, chosen, values, axis=1)

    idx = np.clip((cand * tables.bins).astype(int), 0, tables.bins - 1)
    scores = np.take_along_axis(tables.Q_table, idx.T, axis=1).sum(axis=0)
    best = int(np.argmax(scores))
    return Genome(cand[best])


# ----------------------------------------------------------------------
# genetic algorithms
# ----------------------------------------------------------------------

def fitness_proportionate_pick(genomes: Sequence[Genome],
                               rng: np.random.Generator) -> Genome:
    """Pick one genome with probability proportional to (shifted) fitness."""
    fits = np.array([g.fitness for g in genomes], dtype=np.float64)
    lo = fits.min()
    if lo < 0:
        fits = fits - lo + 1e-9 * max(1.0, float(fits.max() - lo))
    total = fits.sum()
    if total <= 0:
        return genomes[int(rng.integers(0, len(genomes)))]
    return genomes[int(rng.choice(len(genomes), p=fits / total))]


def one_dot_crossover(a: np.ndarray, b: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    n = len(a)
    if n < 2:
        return a.copy()
    cut = int(rng.integers(1, n))
    return np.concatenate([a[:cut], b[cut:]])


def _sorted_desc(pop: list[Genome]) -> list[Genome]:
    return sorted(pop, key=lambda g: g.fitness, reverse=True)


def elementary_ga(objective: Callable[[np.ndarray], float],
                  initial_population: Sequence[np.ndarray] | Sequence[Genome],
                  cfg: GAConfig, tables: QualityTables,
                  rng: np.random.Generator,
                  budget: "EvalBudget | None" = None) -> list[Genome]:
    """One population's evolution; returns the final population sorted by
    fitness, best first. Survivors persist, so the best never degrades."""
    pop: list[Genome] = []
    for g in initial_population:
        pop.append(g if isinstance(g, Genome) else Genome(np.asarray(g)))
    if len(pop) != cfg.population_size:
        raise ValueError(
            f"initial population size {len(pop)} != cfg.population_size "
            f"{cfg.population_size}"
        )
    n = len(pop[0].genes)

    def ensure_eval(g: Genome) -> bool:
        if g.fitness is None:
            if budget is not None and budget.exhausted():
                return False
            g.fitness = float(objective(g.genes))
            if budget is not None:
                budget.spend(g.fitness)
        return True

    for g in pop:
        if not ensure_eval(g):
            g.fitness = -math.inf
    for _ in range(cfg.generations):
        if budget is not None and budget.exhausted():
            break
        pop = _sorted_desc(pop)
        survivors = pop[: cfg.population_size // 2]
        children: list[Genome] = []
        while len(children) < cfg.population_size // 2:
            p1 = fitness_proportionate_pick(survivors, rng)
            p2 = fitness_proportionate_pick(survivors, rng)
            child = Genome(one_dot_crossover(p1.genes, p2.genes, rng))
            if rng.random() < cfg.M_chance:
                child = mutate(child, tables, cfg, rng)
            if not ensure_eval(child):
                child.fitness = -math.inf
            children.append(child)
        pop = survivors + children
    return _sorted_desc(pop)


def tree_structured_ga(objective: Callable[[np.ndarray], float],
                       cfg: GAConfig, tables: QualityTables,
                       rng: np.random.Generator, n_genes: int,
                       budget: "EvalBudget | None" = None) -> list[Genome]:
    """Complete binary tree of elementary GAs of depth cfg.tree_depth.

    Leaves start from uniform random populations; each internal node merges
    the top halves of its two children's final populations. Returns the top
    cfg.elite_carryover genomes of the root population.
    """
    depth = cfg.tree_depth
    n_nodes = 2**depth - 1
    seeds = rng.integers(0, 2**63 - 1, size=n_nodes)
    counter = iter(range(n_nodes))

    def run(level: int) -> list[Genome]:
        node_rng = np.random.default_rng(int(seeds[next(counter)]))
        if level == 0:
            init: list[Genome] = [
                Genome(node_rng.random(n_genes)) for _ in range(cfg.population_size)
            ]
        else:
            half = cfg.population_size // 2
            left = run(level - 1)[:half]
            right = run(level - 1)[:half]
            init = [Genome(g.genes.copy(), g.fitness) for g in left + right]
        return elementary_ga(objective, init, cfg, tables, node_rng, budget)

    final = run(depth - 1)
    return final[: cfg.elite_carryover]


class EvalBudget:
    """Counts objective evaluations and keeps a best-so-far history."""

    def __init__(self, limit: int, maximize: bool = True,
                 log_every: int = 50):
        self.limit = limit
        self.count = 0
        self.maximize = maximize
        self.best = -math.inf if maximize else math.inf
        self.history: list[tuple[int, float, float]] = []
        self.log_every = log_every

    def exhausted(self) -> bool:
        return self.count >= self.limit

    def spend(self, value: float) -> None:
        self.count += 1
        better = value > self.best if self.maximize else value < self.best
        if better:
            self.best = value
        if self.count % self.log_every == 0 or better or self.count == 1:
            self.history.append((self.count, value, self.best))


# ----------------------------------------------------------------------
# memetic optimization (GA + Adam refinement)
# ----------------------------------------------------------------------

def memetic_optimize(loss_with_grad, presets: Sequence[np.ndarray],
                     spec: Sequence[ParamSpec], cfg: GAConfig,
                     rng: np.random.Generator,
                     budget: EvalBudget | None = None,
                     tables: QualityTables | None = None
                     ) -> tuple[ParameterVector, float]:
    """GA over presets with per-generation Adam refinement of the top quarter.

    loss_with_grad(genes, need_grad) must return (loss, d_genes or None)
    with gradients zeroed at discrete slots. presets are genomes in gene
    space. Pre-collected quality tables, when given, steer mutation exactly
    as in the plain GA. Returns (best parameter vector, best loss). Total
    evaluations (gradient probes included) stay within cfg.eval_budget.
    """
    if not presets:
        raise ValueError("memetic_optimize needs at least one preset")
    n = len(presets[0])
    frozen = np.array(discrete_mask(spec))
    if budget is None:
        budget = EvalBudget(cfg.eval_budget, maximize=False)

    best_genes = None
    best_loss = math.inf

    def evaluate(genes: np.ndarray, need_grad: bool = False):
        nonlocal best_genes, best_loss
        loss, grad = loss_with_grad(genes, need_grad)
        budget.spend(loss)
        if loss < best_loss:
            best_loss = loss
            best_genes = genes.copy()
        return loss, grad

    # population: presets first (unjittered), then jittered copies
    pop: list[Genome] = []
    for i in range(cfg.population_size):
        base = np.asarray(presets[i % len(presets)], dtype=np.float64)
        if i >= len(presets):
            base = np.clip(base + rng.normal(0.0, 0.05, n), 0.0, 1.0)
        pop.append(Genome(base))
    for g in pop:
        if budget.exhausted():
            g.fitness = -math.inf
            continue
        loss, _ = evaluate(g.genes)
        g.fitness = -loss

    if tables is None or tables.n_genes != n:
        tables = QualityTables.trivial(n)
    # Adam momentum persists per individual so repeated refinement of a
    # surviving genome continues its descent instead of restarting
    adam_states: dict[int, AdamState] = {}
    generation = 0
    while not budget.exhausted():
        pop = _sorted_desc(pop)
        survivors = pop[: cfg.population_size // 2]
        children: list[Genome] = []
        while len(children) < cfg.population_size // 2 and not budget.exhausted():
            p1 = fitness_proportionate_pick(survivors, rng)
            p2 = fitness_proportionate_pick(survivors, rng)
            child = Genome(one_dot_crossover(p1.genes, p2.genes, rng))
            if rng.random() < cfg.M_chance:
                child = mutate(child, tables, cfg, rng)
            loss, _ = evaluate(child.genes)
            child.fitness = -loss
            children.append(child)
        pop = survivors + children

        pop = _sorted_desc(pop)
        lr = cfg.adam_lr / (1.0 + 0.05 * generation)
        for slot in range(max(1, cfg.population_size // 4)):
            if budget.exhausted():
                break
            indiv = pop[slot]
            genes = indiv.genes.copy()
            state = adam_states.get(id(indiv))
            if state is None:
                state = AdamState.fresh(n, lr)
            state = replace(state, lr=lr)
            improved_any = False
            for _ in range(cfg.adam_steps):
                if budget.exhausted():
                    break
                loss, grad = evaluate(genes, need_grad=True)
                state, genes = adam_step(state, genes, grad, frozen)
                improved_any = True
            if improved_any and not budget.exhausted():
                loss, _ = evaluate(genes)
                if -loss > indiv.fitness:
                    indiv.genes = genes
                    indiv.fitness = -loss
                    adam_states[id(indiv)] = state
        generation += 1

    assert best_genes is not None
    return from_genes(np.clip(best_genes, 0.0, 1.0), spec), best_loss
