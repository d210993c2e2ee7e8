"""Command-line pipeline: gen | predict | eval | ablate | render.

Every subcommand exits 0 on success; failures print a machine-readable JSON
error object to stderr and exit nonzero. FIM_LOG={error,info,debug} controls
verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics, occupancy, pipeline, render, rollout, scene as scene_mod
from .config import DEMO_HORIZON_FACTORS, RunConfig, config_to_text, load_config

log = logging.getLogger("gridcast")

VARIANT_BASELINE = "no_reasoning"


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("FIM_LOG", "error"), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "demo_horizon", None) is not None:
        overrides["demo_horizon_factor"] = args.demo_horizon
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg.validate()


def _echo_config(out_dir: Path, cfg: RunConfig) -> None:
    (out_dir / "config_used.cfg").write_text(config_to_text(cfg), encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for kind in scene_mod.SCENE_KINDS:
        for i in range(args.per_kind):
            seed = (args.seed << 16) ^ (scene_mod.SCENE_KINDS.index(kind) << 8) ^ i
            sc = scene_mod.generate_scene(kind, seed)
            name = f"{kind}_{i:04d}.json"
            scene_mod.save_scene(out_dir / name, sc)
            entries.append({"file": name, "kind": kind, "seed": seed,
                            "sha256": _sha256(out_dir / name)})
    manifest = {"version": 1, "count": len(entries), "entries": entries}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    log.info("wrote %d scenes to %s", len(entries), out_dir)
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def _predict_file(scene_path: Path, cfg: RunConfig, reasoning: bool):
    payload = scene_path.read_bytes()
    sc = scene_mod.load_scene(scene_path)
    key = pipeline.scene_stream_key(payload)
    return pipeline.predict_scene(sc, cfg, reasoning=reasoning, stream_key=key)


def cmd_predict(args) -> int:
    cfg = _load_effective_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_path = Path(args.scene)
    result = _predict_file(scene_path, cfg, reasoning=not args.no_reasoning)
    out_path = out_dir / (scene_path.stem + ".forecast.json")
    rollout.write_forecast(
        out_path, result.forecast, include_proposals=args.include_proposals,
        extra={"reasoning": result.reasoning, "scene": scene_path.name,
               "demo_horizon_factor": cfg.demo_horizon_factor, "seed": cfg.seed})
    _echo_config(out_dir, cfg)
    log.info("forecast written to %s", out_path)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _scene_files(scene_dir: Path) -> list:
    manifest = scene_dir / "manifest.json"
    if manifest.exists():
        entries = json.loads(manifest.read_text(encoding="utf-8"))["entries"]
        return [scene_dir / e["file"] for e in entries]
    return sorted(p for p in scene_dir.glob("*.json") if p.name != "manifest.json")


def cmd_eval(args) -> int:
    scene_dir = Path(args.scenes)
    forecast_dir = Path(args.forecasts)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_scene = {}
    skipped = []
    n_modes = 0
    for scene_path in _scene_files(scene_dir):
        fpath = forecast_dir / (scene_path.stem + ".forecast.json")
        if not fpath.exists():
            skipped.append(scene_path.name)
            continue
        sc = scene_mod.normalize_to_target(scene_mod.load_scene(scene_path))
        payload = json.loads(fpath.read_text(encoding="utf-8"))
        trajs = np.asarray([m["points"] for m in payload["modes"]])
        probs = np.asarray([m["prob"] for m in payload["modes"]])
        n_modes = len(probs)
        gt = sc.gt_future[: trajs.shape[1]]
        per_scene[scene_path.stem] = metrics.score_forecast(trajs, probs, gt)
    if per_scene:
        report = metrics.aggregate(per_scene.values(), k=n_modes)
        metrics.write_report_json(out_dir / "report.json", {"aggregate": report})
        (out_dir / "report.txt").write_text(
            metrics.format_report_table({"aggregate": report}), encoding="utf-8")
        with open(out_dir / "per_scene.json", "w", encoding="utf-8") as fh:
            json.dump({name: vars(m) for name, m in sorted(per_scene.items())},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
    if skipped:
        raise RuntimeError(f"missing forecasts for {len(skipped)} scene(s): "
                           + ", ".join(sorted(skipped)))
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def _ablate_one(task):
    """Worker: per-scene metrics for every variant (paired by construction)."""
    scene_path, cfg_dict = task
    cfg = RunConfig(**cfg_dict)
    out = {}
    scene_path = Path(scene_path)
    result = _predict_file(scene_path, cfg, reasoning=False)
    out[VARIANT_BASELINE] = vars(pipeline.score_prediction(result))
    for factor in DEMO_HORIZON_FACTORS:
        variant_cfg = replace(cfg, demo_horizon_factor=factor)
        result = _predict_file(scene_path, variant_cfg, reasoning=True)
        out[f"reasoning_h{factor}"] = vars(pipeline.score_prediction(result))
    return scene_path.stem, out


def cmd_ablate(args) -> int:
    cfg = _load_effective_config(args)
    scene_files = _scene_files(Path(args.scenes))
    if not scene_files:
        raise RuntimeError(f"no scene files found in {args.scenes}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(str(p), vars(cfg)) for p in scene_files]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_ablate_one, tasks))
    else:
        results = [_ablate_one(t) for t in tasks]
    results.sort(key=lambda kv: kv[0])

    variants = [VARIANT_BASELINE] + [f"reasoning_h{f}" for f in DEMO_HORIZON_FACTORS]
    reports = {}
    for variant in variants:
        ms = [metrics.SceneMetrics(**scene_out[variant]) for _, scene_out in results]
        reports[variant] = metrics.aggregate(ms, k=cfg.modes)
    metrics.write_report_json(out_dir / "ablation.json", reports)
    table = metrics.format_report_table(reports)
    base = reports[VARIANT_BASELINE]
    lines = [table, "deltas vs no_reasoning (negative is better):"]
    for variant in variants[1:]:
        r = reports[variant]
        lines.append(
            f"{variant}: brier-minFDE {r.brier_min_fde - base.brier_min_fde:+.4f}"
            f"  Brier {r.brier - base.brier:+.4f}")
    (out_dir / "ablation.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _echo_config(out_dir, cfg)
    return 0


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    path = Path(args.artifact)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        render.field_to_pgm(out_dir / (path.stem + ".pgm"), render.read_field_csv(path))
        return 0
    if path.suffix == ".stogm":
        ogm = occupancy.read_ogm_binary(path)
        render.occupancy_frames(out_dir, ogm, prefix=path.stem)
        return 0
    payload = json.loads(path.read_text(encoding="utf-8"))
    if "modes" in payload:  # forecast file: overlay only
        cfg = _load_effective_config(args)
        spec = cfg.grid_spec()
        trajs = [np.asarray(m["points"]) for m in payload["modes"]]
        gt = np.zeros((0, 2))
        if args.scene:
            sc = scene_mod.normalize_to_target(scene_mod.load_scene(args.scene))
            gt = sc.gt_future
        img = render.trajectory_overlay(spec, gt, trajs)
        render.write_ppm(out_dir / (path.stem + ".overlay.ppm"), img)
        return 0
    # scene file: run the pipeline and emit the full figure set
    cfg = _load_effective_config(args)
    result = _predict_file(path, cfg, reasoning=not args.no_reasoning)
    render.field_to_pgm(out_dir / "reward.pgm", result.reward)
    render.field_to_csv(out_dir / "reward.csv", result.reward)
    ogm = pipeline.predicted_occupancy(result, cfg)
    render.occupancy_frames(out_dir, ogm, prefix="occupancy")
    occupancy.write_ogm_binary(out_dir / "occupancy.stogm", ogm)
    img = render.trajectory_overlay(result.spec, result.scene.gt_future,
                                    result.forecast.trajectories, background=result.reward)
    render.write_ppm(out_dir / "overlay.ppm", img)
    _echo_config(out_dir, cfg)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridcast",
                                     description="grid-MDP intention reasoning and forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--per-kind", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("predict", help="forecast one scene")
    p.add_argument("scene")
    p.add_argument("--out", default=".")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-reasoning", action="store_true")
    p.add_argument("--demo-horizon", type=float, choices=DEMO_HORIZON_FACTORS)
    p.add_argument("--include-proposals", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score forecasts against scenes")
    p.add_argument("--forecasts", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="reasoning and horizon-supervision sweeps")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("render", help="emit PGM/PPM figures for an artifact")
    p.add_argument("artifact")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--scene")
    p.add_argument("--no-reasoning", action="store_true")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # structured failure contract
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        log.debug("command failed", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
