"""End-to-end reconstruction: staged memetic + Adam for differentiable
generators, tree-structured GA for trees, and the multi-view IoU harness.

The first stage searches globally with the memetic algorithm at low
resolution and level of detail; later stages refine the best genome with
Adam while the rendering resolution doubles. Camera parameters (azimuth,
elevation, distance, fov per view) ride along in the genome next to the
generator parameters.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .generators import (
    GeneratorInfo,
    builtin_presets,
    generate,
    generate_tree,
    get_generator,
    tree_characteristics,
)
from .loss import (
    SemanticMask,
    TreeCharacteristics,
    multiview_loss,
    semantic_from_color,
    semantic_from_mesh,
    stripe_decompose,
    tree_similarity,
    regularized_tree_loss,
)
from .mesh import TriangleMesh
from .optim import (
    AdamState,
    EvalBudget,
    GAConfig,
    QualityTables,
    adam_step,
    memetic_optimize,
    tree_structured_ga,
)
from .params import (
    ParameterVector,
    ParamKind,
    ParamSpec,
    Preset,
    discrete_mask,
    from_genes,
    to_genes,
)
from .render import Camera, SilhouetteMask, render_silhouette, silhouette_iou, uniform_viewpoints

CAMERA_FIELDS = ("azimuth", "elevation", "distance", "fov_y")
SEED_GENE_MAX = 1023
DEFAULT_FOV = 0.8
IOU_DISTANCE = 3.5


@dataclass(frozen=True)
class StageConfig:
    resolution: int
    method: str  # "memetic" | "adam" | "tree_ga"
    iterations: int
    lod: int

    def __post_init__(self):
        if self.resolution < 64 or self.resolution & (self.resolution - 1):
            raise ValueError("stage resolution must be a power of two >= 64")
        if self.iterations < 0:
            raise ValueError("stage iterations must be >= 0")
        if self.method not in ("memetic", "adam", "tree_ga"):
            raise ValueError(f"unknown stage method {self.method!r}")


@dataclass
class ReconstructionConfig:
    stages: list[StageConfig] = field(default_factory=list)
    ga: GAConfig = field(default_factory=GAConfig)
    rng_seed: int = 0
    presets: list[Preset] | None = None  # None -> built-in presets
    cameras_hint: list[Camera] | None = None
    n_stripes: int = 24
    tables: QualityTables | None = None
    log_every: int = 50


@dataclass
class ReconstructionResult:
    best_params: ParameterVector
    best_cameras: list[Camera]
    stage_history: list[list[tuple[int, float, float]]]
    final_mesh: TriangleMesh
    wall_time: float
    best_value: float
    history_kind: str  # "loss" (minimized) or "fitness" (maximized)
    stage_masks: list[list[SilhouetteMask]] = field(default_factory=list)
    tree_seed: int | None = None


def default_stages(gen_id: str) -> list[StageConfig]:
    """Memetic at 128 plus Adam stages with doubling resolution."""
    info = get_generator(gen_id)
    if not info.differentiable:
        return [StageConfig(256, "tree_ga", 50000, 0)]
    max_tier = max(info.lod_tiers)
    stages = [StageConfig(128, "memetic", 5000, min(0, max_tier))]
    for s in range(1, 4):
        stages.append(StageConfig(128 * 2**s, "adam", 250, min(s, max_tier)))
    return stages


# ----------------------------------------------------------------------
# genome layout helpers
# ----------------------------------------------------------------------

def camera_param_specs(info: GeneratorInfo, view: int) -> list[ParamSpec]:
    lo, hi = info.camera_distance
    return [
        ParamSpec(f"cam{view}_azimuth", ParamKind.CONTINUOUS, -math.pi, math.pi),
        ParamSpec(f"cam{view}_elevation", ParamKind.CONTINUOUS, -1.2, 1.2),
        ParamSpec(f"cam{view}_distance", ParamKind.CONTINUOUS, lo, hi),
        ParamSpec(f"cam{view}_fov", ParamKind.CONTINUOUS, 0.35, 1.2),
    ]


def combined_spec(info: GeneratorInfo, n_views: int,
                  with_seed_gene: bool = False) -> tuple[ParamSpec, ...]:
    specs = list(info.param_specs)
    for v in range(n_views):
        specs.extend(camera_param_specs(info, v))
    if with_seed_gene:
        specs.append(ParamSpec("gen_seed", ParamKind.DISCRETE, 0, SEED_GENE_MAX, 1))
    return tuple(specs)


def decode_genome(genes: np.ndarray, info: GeneratorInfo, n_views: int,
                  resolution: int, with_seed_gene: bool = False):
    """Split a genome into (generator params, cameras, tree seed or None)."""
    spec = combined_spec(info, n_views, with_seed_gene)
    vec = from_genes(np.clip(genes, 0.0, 1.0), spec)
    n_gen = len(info.param_specs)
    P = ParameterVector(info.param_specs, vec.values[:n_gen])
    cams = []
    for v in range(n_views):
        az, el, dist, fov = vec.values[n_gen + 4 * v: n_gen + 4 * v + 4]
        cams.append(Camera(az, el, dist, info.camera_target, fov,
                           (resolution, resolution)))
    seed = int(round(vec.values[-1])) if with_seed_gene else None
    return P, cams, seed


def initial_camera_genes(info: GeneratorInfo, n_views: int,
                         fill_fraction: float,
                         hint: list[Camera] | None = None) -> np.ndarray:
    """Initial camera genes: uniform azimuth ring at 15 deg elevation.

    Distance starts from a scale guess derived from the reference
    silhouette fill fraction (an object of radius ~0.8 filling that share
    of the frame), clamped into the generator's distance bounds.
    """
    lo, hi = info.camera_distance
    if hint is not None:
        rows = [(c.azimuth, c.elevation, c.distance, c.fov_y) for c in hint]
    else:
        t = math.tan(DEFAULT_FOV / 2.0)
        guess = 0.8 * math.sqrt(math.pi / (4.0 * max(fill_fraction, 0.01))) / t
        dist = min(max(guess, lo), hi)
        rows = [
            (-math.pi + (2.0 * math.pi) * (v + 0.5) / n_views,
             math.radians(15.0), dist, DEFAULT_FOV)
            for v in range(n_views)
        ]
    genes = []
    for v in range(n_views):
        for s, val in zip(camera_param_specs(info, v), rows[v]):
            genes.append((min(max(val, s.min), s.max) - s.min) / s.span)
    return np.asarray(genes)


def _resize_refs(refs: list[SilhouetteMask], resolution: int) -> list[SilhouetteMask]:
    out = []
    for ref in refs:
        if ref.width == resolution and ref.height == resolution:
            out.append(ref)
        elif ref.width % resolution == 0 and ref.width == ref.height:
            out.append(ref.downsampled(ref.width // resolution))
        else:
            raise ValueError(
                f"reference {ref.width}x{ref.height} cannot be reduced to "
                f"{resolution}x{resolution}"
            )
    return out


# ----------------------------------------------------------------------
# differentiable reconstruction
# ----------------------------------------------------------------------

def reconstruct_differentiable(gen_id: str, refs: list[SilhouetteMask],
                               config: ReconstructionConfig) -> ReconstructionResult:
    """Staged reconstruction for dish/building style generators."""
    t_start = time.time()
    info = get_generator(gen_id)
    if not info.differentiable:
        raise ValueError(f"{gen_id!r} is not differentiable; use reconstruct_tree")
    n_views = len(refs)
    if not 1 <= n_views <= 16:
        raise ValueError("need between 1 and 16 reference views")
    stages = config.stages or default_stages(gen_id)
    if stages[0].method != "memetic" or any(s.method != "adam" for s in stages[1:]):
        raise ValueError("differentiable pipeline expects memetic then adam stages")
    if config.cameras_hint is not None and len(config.cameras_hint) != n_views:
        raise ValueError("cameras_hint length must match reference count")

    spec = combined_spec(info, n_views)
    frozen = np.array(discrete_mask(spec))
    n_genes = len(spec)
    n_gen = len(info.param_specs)
    spans = np.array([s.span for s in spec])

    presets = config.presets if config.presets is not None else builtin_presets(gen_id)
    if not presets:
        raise ValueError(f"no presets available for {gen_id!r}")
    fill = float(np.mean(refs[0].coverage))
    cam_genes = initial_camera_genes(info, n_views, fill, config.cameras_hint)
    preset_genomes = [
        np.concatenate([to_genes(p.vector), cam_genes]) for p in presets
    ]

    def make_loss(resolution: int, lod: int):
        refs_at = _resize_refs(refs, resolution)
        calls = [0]

        def loss_fn(genes: np.ndarray, need_grad: bool = False):
            calls[0] += 1
            P, cams, _ = decode_genome(genes, info, n_views, resolution)
            loss, d_p, d_cams = multiview_loss(
                P, cams, refs_at, gen_id, lod,
                rng_seed=config.rng_seed * 7919 + calls[0],
                with_grad=need_grad,
            )
            if not need_grad:
                return loss, None
            d_genes = np.concatenate([d_p, d_cams.ravel()]) * spans
            d_genes[frozen] = 0.0
            return loss, d_genes

        return loss_fn

    rng = np.random.default_rng(config.rng_seed)
    stage_history: list[list[tuple[int, float, float]]] = []
    stage_masks: list[list[SilhouetteMask]] = []

    # stage 1: memetic global search, then a discrete polish pass.
    # The polish reserve comes out of the same stage budget: it sweeps each
    # discrete parameter's values with a short continuous re-optimization,
    # because single discrete flips judged at their unrefined loss always
    # lose against an optimized wrong-count plateau.
    stage0 = stages[0]
    loss0 = make_loss(stage0.resolution, stage0.lod)
    reserve = _polish_reserve(spec)
    reserve = min(reserve, stage0.iterations // 3)
    ga = replace(config.ga, eval_budget=max(stage0.iterations - reserve, 1))
    budget0 = EvalBudget(max(stage0.iterations - reserve, 1), maximize=False,
                         log_every=config.log_every)
    tables = _fit_tables(config.tables, n_genes)
    best_vec, best_loss = memetic_optimize(loss0, preset_genomes, spec, ga, rng,
                                           budget0, tables=tables)
    best_genes = np.array(to_genes(best_vec))
    polish_budget = EvalBudget(max(stage0.iterations - budget0.count, 0),
                               maximize=False, log_every=config.log_every)
    best_genes, best_loss = _discrete_polish(
        loss0, best_genes, best_loss, spec, frozen, polish_budget,
        config.ga.adam_lr)
    carry = budget0.best
    stage_history.append(budget0.history + [
        (budget0.count + c, v, min(carry, b)) for c, v, b in polish_budget.history
    ])
    stage_masks.append(_stage_masks(best_genes, info, n_views, gen_id, stage0))

    # later stages: Adam refinement at doubling resolution
    for stage in stages[1:]:
        budget = EvalBudget(max(stage.iterations, 1), maximize=False,
                            log_every=config.log_every)
        if stage.iterations > 0:
            loss_fn = make_loss(stage.resolution, stage.lod)
            best_genes, best_loss = _adam_stage(
                loss_fn, best_genes, frozen, stage.iterations,
                config.ga.adam_lr * 0.5, budget)
        stage_history.append(budget.history)
        stage_masks.append(_stage_masks(best_genes, info, n_views, gen_id, stage))

    last = stages[-1]
    P, cams, _ = decode_genome(best_genes, info, n_views, last.resolution)
    final_mesh, _ = generate(gen_id, P, max(info.lod_tiers), with_jacobian=False)
    return ReconstructionResult(
        best_params=P,
        best_cameras=cams,
        stage_history=stage_history,
        final_mesh=final_mesh,
        wall_time=time.time() - t_start,
        best_value=best_loss,
        history_kind="loss",
        stage_masks=stage_masks,
    )


POLISH_STEPS = 40  # Adam iterations per discrete hypothesis
POLISH_ROUNDS = 2
POLISH_MAX_VALUES = 16  # cap on alternatives swept per discrete parameter


def _polish_reserve(spec) -> int:
    alts = 0
    for s in spec:
        if s.kind is ParamKind.DISCRETE:
            grid = int(round(s.span / s.step)) + 1
            alts += min(grid - 1, POLISH_MAX_VALUES)
    return POLISH_ROUNDS * alts * (POLISH_STEPS + 2)


def _discrete_polish(loss_fn, genes: np.ndarray, best_loss: float, spec,
                     frozen: np.ndarray, budget: EvalBudget, adam_lr: float):
    """Coordinate descent over discrete parameter values.

    Each alternative value is given a short Adam run on the continuous
    genes before being compared against the incumbent, so hypotheses are
    judged at (approximately) their own plateau floor.
    """
    genes = genes.copy()
    for _ in range(POLISH_ROUNDS):
        improved = False
        for k, s in enumerate(spec):
            if s.kind is not ParamKind.DISCRETE or budget.exhausted():
                continue
            grid = int(round(s.span / s.step)) + 1
            values = np.linspace(0.0, 1.0, grid)
            if grid - 1 > POLISH_MAX_VALUES:
                current_idx = int(round(genes[k] * (grid - 1)))
                lo = max(0, current_idx - POLISH_MAX_VALUES // 2)
                values = values[lo: lo + POLISH_MAX_VALUES + 1]
            for v in values:
                if abs(v - genes[k]) < 0.5 / max(grid - 1, 1):
                    continue
                if budget.exhausted():
                    break
                cand = genes.copy()
                cand[k] = v
                cand, cand_loss = _adam_stage(
                    loss_fn, cand, frozen, POLISH_STEPS, adam_lr * 0.4, budget)
                if cand_loss < best_loss:
                    genes, best_loss = cand, cand_loss
                    improved = True
        if not improved or budget.exhausted():
            break
    return genes, best_loss


def _fit_tables(tables: QualityTables | None, n_genes: int) -> QualityTables | None:
    """Adapt generator-family tables (collected for one view) to the genome.

    Multi-view genomes append camera genes the tables never saw; those rows
    get neutral entries (V=1, Q=0).
    """
    if tables is None or tables.n_genes == n_genes:
        return tables
    if tables.n_genes > n_genes:
        return QualityTables(tables.V[:n_genes], tables.P_table[:n_genes],
                             tables.P0, tables.Q_table[:n_genes], tables.bins,
                             tables.epsilon, tables.sample_count, tables.degenerate)
    pad = n_genes - tables.n_genes
    return QualityTables(
        np.concatenate([tables.V, np.ones(pad)]),
        np.concatenate([tables.P_table, np.full((pad, tables.bins), tables.P0)]),
        tables.P0,
        np.concatenate([tables.Q_table, np.zeros((pad, tables.bins))]),
        tables.bins, tables.epsilon, tables.sample_count, tables.degenerate,
    )


def _adam_stage(loss_fn, genes: np.ndarray, frozen: np.ndarray,
                iterations: int, lr0: float, budget: EvalBudget):
    """Adam with cosine-decayed learning rate; returns the best point seen."""
    genes = genes.copy()
    state = AdamState.fresh(len(genes), lr0)
    best_genes, best_loss = genes.copy(), math.inf
    lr_end = lr0 / 50.0
    for t in range(iterations):
        if budget.exhausted():
            return best_genes, best_loss
        lr = lr_end + (lr0 - lr_end) * 0.5 * (1.0 + math.cos(math.pi * t / iterations))
        state = replace(state, lr=lr)
        loss, grad = loss_fn(genes, True)
        budget.spend(loss)
        if loss < best_loss:
            best_loss, best_genes = loss, genes.copy()
        state, genes = adam_step(state, genes, grad, frozen)
    if not budget.exhausted():
        loss, _ = loss_fn(genes, False)
        budget.spend(loss)
        if loss < best_loss:
            best_loss, best_genes = loss, genes.copy()
    return best_genes, best_loss


def _stage_masks(genes, info, n_views, gen_id, stage: StageConfig):
    P, cams, _ = decode_genome(genes, info, n_views, stage.resolution)
    mesh, _ = generate(gen_id, P, stage.lod, with_jacobian=False)
    idx = mesh.opaque_indices()
    return [render_silhouette(mesh.positions, idx, cam) for cam in cams]


# ----------------------------------------------------------------------
# tree reconstruction (non-differentiable path)
# ----------------------------------------------------------------------

def reconstruct_tree(ref_image: np.ndarray | SemanticMask,
                     ref_chars: TreeCharacteristics,
                     config: ReconstructionConfig) -> ReconstructionResult:
    """Single-view tree reconstruction with the tree-structured GA.

    The genome carries the generator parameters, one camera, and the
    stochastic seed as an explicit discrete gene.
    """
    t_start = time.time()
    info = get_generator("tree")
    semantic = (
        ref_image if isinstance(ref_image, SemanticMask)
        else semantic_from_color(ref_image)
    )
    if not np.any(semantic.classes):
        raise ValueError("reference has no foreground (branch/foliage) pixels")
    stages = config.stages or default_stages("tree")
    stage = stages[0]
    if stage.method != "tree_ga" or len(stages) != 1:
        raise ValueError("tree reconstruction uses a single tree_ga stage")
    if semantic.width != stage.resolution or semantic.height != stage.resolution:
        raise ValueError(
            f"reference resolution {semantic.width}x{semantic.height} must match "
            f"the stage resolution {stage.resolution}"
        )
    ref_stripes = stripe_decompose(semantic, config.n_stripes)

    spec = combined_spec(info, 1, with_seed_gene=True)
    n_genes = len(spec)
    tables = config.tables if config.tables is not None else QualityTables.trivial(n_genes)
    if tables.n_genes != n_genes:
        raise ValueError(
            f"quality tables cover {tables.n_genes} genes, genome has {n_genes}"
        )

    budget = EvalBudget(stage.iterations, maximize=True, log_every=config.log_every)

    def fitness(genes: np.ndarray) -> float:
        P, cams, seed = decode_genome(genes, info, 1, stage.resolution,
                                      with_seed_gene=True)
        mesh = generate_tree(P, seed)
        gen_sem = semantic_from_mesh(mesh, cams[0])
        tsim = tree_similarity(ref_stripes, stripe_decompose(gen_sem, config.n_stripes))
        gen_chars = TreeCharacteristics.from_dict(tree_characteristics(P, seed))
        return regularized_tree_loss(tsim, gen_chars, ref_chars)

    # split the budget across the GA tree nodes
    n_nodes = 2**config.ga.tree_depth - 1
    leaves = 2 ** (config.ga.tree_depth - 1)
    pop = config.ga.population_size
    gens = max(1, (stage.iterations - leaves * pop) // max(1, n_nodes * (pop // 2)))
    ga = replace(config.ga, generations=gens, eval_budget=stage.iterations)

    rng = np.random.default_rng(config.rng_seed)
    best = tree_structured_ga(fitness, ga, tables, rng, n_genes, budget)
    top = best[0]

    P, cams, seed = decode_genome(top.genes, info, 1, stage.resolution,
                                  with_seed_gene=True)
    final_mesh = generate_tree(P, seed)
    gen_sem = semantic_from_mesh(final_mesh, cams[0])
    return ReconstructionResult(
        best_params=P,
        best_cameras=cams,
        stage_history=[budget.history],
        final_mesh=final_mesh,
        wall_time=time.time() - t_start,
        best_value=float(top.fitness),
        history_kind="fitness",
        stage_masks=[[gen_sem.coverage()]],
        tree_seed=seed,
    )


# ----------------------------------------------------------------------
# IoU evaluation harness
# ----------------------------------------------------------------------

def worker_count() -> int:
    env = os.environ.get("PROCRECON_THREADS", "0").strip()
    n = int(env) if env.isdigit() else 0
    if n > 0:
        return n
    return min(8, os.cpu_count() or 1)


def evaluate_iou(mesh_a: TriangleMesh, mesh_b: TriangleMesh,
                 n_views: int = 64, resolution: int = 256) -> float:
    """Mean silhouette IoU over uniformly distributed viewpoints.

    Both meshes are centered and scaled to unit bounding-sphere radius, so
    the measure is invariant to rigid translation and uniform scaling.
    """
    if mesh_a.triangle_count == 0 or mesh_b.triangle_count == 0:
        raise ValueError("evaluate_iou requires non-empty meshes")
    a = mesh_a.normalized()
    b = mesh_b.normalized()
    cams = uniform_viewpoints(n_views, IOU_DISTANCE, (0.0, 0.0, 0.0),
                              fov_y=DEFAULT_FOV, resolution=(resolution, resolution))
    ia = a.opaque_indices()
    ib = b.opaque_indices()

    def one(cam: Camera) -> float:
        ma = render_silhouette(a.positions, ia, cam)
        mb = render_silhouette(b.positions, ib, cam)
        return silhouette_iou(ma, mb)

    workers = worker_count()
    if workers > 1 and n_views > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(one, cams))
    else:
        vals = [one(c) for c in cams]
    return float(np.mean(vals))
