"""Command-line surface: reconstruct, generate, evaluate, collect-tables.

Exit codes: 0 success, 1 config/IO/validation errors, 2 reconstruction
failure (reference without foreground).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .generators import builtin_presets, generate, get_generator
from .loss import TreeCharacteristics, semantic_from_color
from .mesh import load_obj, save_obj
from .optim import GAConfig, QualityTables, collect_quality_tables
from .params import Preset, load_presets, preset_from_json, preset_to_json, to_genes
from .pipeline import (
    ReconstructionConfig,
    StageConfig,
    combined_spec,
    decode_genome,
    default_stages,
    evaluate_iou,
    initial_camera_genes,
    reconstruct_differentiable,
    reconstruct_tree,
)
from .render import Camera, SilhouetteMask, load_mask, save_mask


class ConfigError(Exception):
    pass


def _load_job_config(path: Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _ga_config(overrides: dict) -> GAConfig:
    cfg = GAConfig()
    known = {f.name for f in fields(GAConfig)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(f"unknown ga config keys: {unknown}")
    return replace(cfg, **overrides)


def _stages(raw: list[dict], gen_id: str) -> list[StageConfig]:
    if not raw:
        return default_stages(gen_id)
    stages = []
    for entry in raw:
        try:
            stages.append(
                StageConfig(int(entry["resolution"]), str(entry["method"]),
                            int(entry["iterations"]), int(entry.get("lod", 0)))
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad stage entry {entry}: {exc}") from exc
    return stages


def _load_references(entries: list, gen_id: str):
    """Returns (masks, rgb_images); exactly one list is populated."""
    if not entries:
        raise ConfigError("config lists no references")
    default_type = "rgb" if gen_id == "tree" else "mask"
    masks, rgbs = [], []
    for entry in entries:
        if isinstance(entry, str):
            entry = {"path": entry}
        path = Path(entry["path"])
        if not path.is_file():
            raise ConfigError(f"reference file not found: {path}")
        kind = entry.get("type", default_type)
        if kind == "mask":
            masks.append(load_mask(path))
        elif kind == "rgb":
            rgbs.append(np.asarray(Image.open(path).convert("RGB")))
        else:
            raise ConfigError(f"reference type must be 'mask' or 'rgb', got {kind!r}")
    return masks, rgbs


def cmd_reconstruct(config_path: str) -> int:
    try:
        raw = _load_job_config(Path(config_path))
        gen_id = raw.get("generator")
        if not gen_id:
            raise ConfigError("config is missing the 'generator' key")
        info = get_generator(gen_id)
        masks, rgbs = _load_references(raw.get("references", []), gen_id)
        stages = _stages(raw.get("stages", []), gen_id)
        ga = _ga_config(raw.get("ga", {}))
        out_dir = Path(raw.get("out_dir", "."))
        seed = int(raw.get("seed", 0))

        presets = None
        if raw.get("presets_dir"):
            presets = load_presets(Path(raw["presets_dir"]), gen_id, info.param_specs)
            if not presets:
                presets = builtin_presets(gen_id)

        tables = None
        if raw.get("tables"):
            tables_path = Path(raw["tables"])
            if not tables_path.is_file():
                raise ConfigError(f"tables file not found: {tables_path}")
            tables = QualityTables.load(tables_path)

        config = ReconstructionConfig(
            stages=stages, ga=ga, rng_seed=seed, presets=presets, tables=tables,
            n_stripes=int(raw.get("stripes", 24)),
        )
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if info.differentiable:
            if not masks:
                raise ConfigError("differentiable generators take mask references")
            if any(not np.any(m.coverage >= 0.5) for m in masks):
                print("error: reference mask has no foreground", file=sys.stderr)
                return 2
            result = reconstruct_differentiable(gen_id, masks, config)
        else:
            if not rgbs:
                raise ConfigError("tree reconstruction takes an RGB reference")
            semantic = semantic_from_color(rgbs[0])
            if not np.any(semantic.classes):
                print("error: reference has no branch/foliage pixels", file=sys.stderr)
                return 2
            chars = TreeCharacteristics.from_dict(raw.get("characteristics", {}))
            result = reconstruct_tree(semantic, chars, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir.mkdir(parents=True, exist_ok=True)
    save_obj(result.final_mesh, out_dir / "result.obj")
    params_doc = preset_to_json(Preset("best", gen_id, result.best_params))
    if result.tree_seed is not None:
        params_doc["tree_seed"] = result.tree_seed
    (out_dir / "params.json").write_text(json.dumps(params_doc, indent=2))
    cams = [
        {"azimuth": c.azimuth, "elevation": c.elevation, "distance": c.distance,
         "target": list(c.target), "fov_y": c.fov_y, "resolution": list(c.resolution)}
        for c in result.best_cameras
    ]
    (out_dir / "cameras.json").write_text(json.dumps(cams, indent=2))
    _write_history(out_dir / "history.csv", result)
    for si, stage_masks in enumerate(result.stage_masks):
        for vi, mask in enumerate(stage_masks):
            save_mask(mask, out_dir / f"stage{si + 1}_view{vi}.png")
    print(f"best {result.history_kind}: {result.best_value:.6g} "
          f"({result.wall_time:.1f}s) -> {out_dir}")
    return 0


def _write_history(path: Path, result) -> None:
    minimize = result.history_kind == "loss"
    head = "evaluation,loss,best_loss" if minimize else "evaluation,fitness,best_fitness"
    lines = [head]
    offset = 0
    best = math.inf if minimize else -math.inf
    for stage in result.stage_history:
        last = 0
        for count, value, _ in stage:
            best = min(best, value) if minimize else max(best, value)
            lines.append(f"{offset + count},{value:.8g},{best:.8g}")
            last = count
        offset += last
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_generate(generator_id: str, params_path: str, lod: int, out_path: str,
                 seed: int | None = None) -> int:
    try:
        info = get_generator(generator_id)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    path = Path(params_path)
    if not path.is_file():
        print(f"error: params file not found: {path}", file=sys.stderr)
        return 1
    try:
        doc = json.loads(path.read_text())
        preset = preset_from_json(doc, info.param_specs)
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if lod not in info.lod_tiers:
        print(f"error: lod {lod} outside tiers {info.lod_tiers} for {generator_id}",
              file=sys.stderr)
        return 1
    if seed is None:
        seed = int(doc.get("tree_seed", 0))
    mesh, _ = generate(generator_id, preset.vector, lod=lod,
                       with_jacobian=False, seed=seed)
    save_obj(mesh, Path(out_path))
    print(f"wrote {out_path} ({mesh.triangle_count} triangles)")
    return 0


def cmd_evaluate(mesh_a_path: str, mesh_b_path: str) -> int:
    meshes = []
    for p in (mesh_a_path, mesh_b_path):
        path = Path(p)
        if not path.is_file():
            print(f"error: mesh file not found: {path}", file=sys.stderr)
            return 1
        try:
            mesh = load_obj(path)
        except (ValueError, IndexError) as exc:
            print(f"error: cannot parse {path}: {exc}", file=sys.stderr)
            return 1
        if mesh.triangle_count == 0:
            print(f"error: {path} contains no triangles", file=sys.stderr)
            return 1
        meshes.append(mesh)
    iou = evaluate_iou(meshes[0], meshes[1])
    print(f"{iou:.3f}")
    return 0


def cmd_collect_tables(generator_id: str, config_path: str) -> int:
    try:
        info = get_generator(generator_id)
        raw = _load_job_config(Path(config_path))
        sample_count = int(raw.get("sample_count", 0))
        if sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        seed = int(raw.get("seed", 0))
        resolution = int(raw.get("resolution", 128))
        family_size = int(raw.get("family_size", 6))
        bins = int(raw.get("bins", 16))
        h = float(raw.get("h", 0.05))
        v_probes = int(raw.get("v_probe_samples", 64))
        out = Path(raw.get("out", "tables.json"))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    objectives = _objective_family(info, family_size, resolution, seed)
    tables = collect_quality_tables(
        objectives, n_genes=_genome_size(info), sample_count=sample_count,
        bins=bins, h=h, rng=np.random.default_rng(seed),
        v_probe_samples=v_probes,
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    tables.save(out)
    print(f"wrote {out} (N={tables.n_genes}, B={tables.bins}, "
          f"P0={tables.P0:.3f}, eps={tables.epsilon:.4g})")
    return 0


def _genome_size(info) -> int:
    return len(combined_spec(info, 1, with_seed_gene=not info.differentiable))


def _objective_family(info, family_size: int, resolution: int, seed: int):
    """Objectives = fitness against references rendered from jittered presets."""
    from .loss import stripe_decompose, tree_similarity
    from .generators import generate_tree
    from .loss import semantic_from_mesh
    from .render import mse, render_silhouette

    rng = np.random.default_rng(seed ^ 0x51ED1E5)
    presets = builtin_presets(info.generator_id)
    with_seed = not info.differentiable
    # a tier where every feature exists, so no gene reads as inert
    lod = min(2, max(info.lod_tiers))
    objectives = []
    for k in range(family_size):
        preset = presets[k % len(presets)]
        genes = np.clip(
            np.array(to_genes(preset.vector))
            + rng.normal(0, 0.05, len(preset.vector.values)),
            0, 1,
        )
        cam_genes = rng.random(4) * 0.5 + 0.25
        full = np.concatenate([genes, cam_genes, [rng.random()]]) if with_seed \
            else np.concatenate([genes, cam_genes])
        P, cams, sd = decode_genome(full, info, 1, resolution, with_seed)
        if with_seed:
            mesh = generate_tree(P, sd)
            ref_sem = semantic_from_mesh(mesh, cams[0])
            ref_stripes = stripe_decompose(ref_sem)

            def objective(x, _ref=ref_stripes, _res=resolution):
                P2, cams2, sd2 = decode_genome(x, info, 1, _res, True)
                m2 = generate_tree(P2, sd2)
                sem2 = semantic_from_mesh(m2, cams2[0])
                return tree_similarity(_ref, stripe_decompose(sem2))

        else:
            mesh, _ = generate(info.generator_id, P, lod=lod, with_jacobian=False)
            ref = render_silhouette(mesh.positions, mesh.opaque_indices(), cams[0])

            def objective(x, _ref=ref, _res=resolution):
                P2, cams2, _ = decode_genome(x, info, 1, _res, False)
                m2, _j = generate(info.generator_id, P2, lod=lod, with_jacobian=False)
                rendered = render_silhouette(m2.positions, m2.opaque_indices(), cams2[0])
                return -mse(rendered, _ref)[0]

        objectives.append(objective)
    return objectives


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="procrecon",
        description="Reconstruct procedural 3D models from silhouette masks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_rec = sub.add_parser("reconstruct", help="run a reconstruction job")
    p_rec.add_argument("config", help="JobConfig JSON path")

    p_gen = sub.add_parser("generate", help="generate a mesh from a params file")
    p_gen.add_argument("generator")
    p_gen.add_argument("params", help="params.json (preset schema)")
    p_gen.add_argument("--lod", type=int, default=0)
    p_gen.add_argument("--seed", type=int, default=None, help="tree seed override")
    p_gen.add_argument("-o", "--output", default="out.obj")

    p_eval = sub.add_parser("evaluate", help="mean 64-view IoU between two OBJ meshes")
    p_eval.add_argument("mesh_a")
    p_eval.add_argument("mesh_b")

    p_tab = sub.add_parser("collect-tables", help="collect GA quality tables")
    p_tab.add_argument("generator")
    p_tab.add_argument("config")

    args = parser.parse_args(argv)
    if args.command == "reconstruct":
        return cmd_reconstruct(args.config)
    if args.command == "generate":
        return cmd_generate(args.generator, args.params, args.lod, args.output,
                            args.seed)
    if args.command == "evaluate":
        return cmd_evaluate(args.mesh_a, args.mesh_b)
    if args.command == "collect-tables":
        return cmd_collect_tables(args.generator, args.config)
    parser.error(f"unknown command {args.command}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
