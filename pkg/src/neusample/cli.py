"""Command line entry point.

Subcommands: train, render, extract, eval, bench, gen-toy.  A run is
driven by a config file (JSON mirror of RunConfig) plus flag overrides;
every command writes its fully resolved configuration next to its outputs
so the run can be replayed.  Exit codes: 0 success, 2 configuration
errors, 3 data errors, 4 numerical aborts.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExtractionConfig, RunConfig, desk_profile
from .errors import ConfigError, DataError, NumericalError
from .extraction import ExtractionPlan, run_extraction
from .metrics import (aggregate_row, bench_render, hierarchical_ray_cost,
                      read_report, relative_cost, write_report)
from .pipeline import (HIERARCHICAL, NEUSAMPLE, build_pipeline,
                       pipeline_arch, pipeline_from_checkpoint, render_image,
                       sample_records)
from .scene import (camera_rays, load_scene, save_image, toy_preset)
from .train import TrainSettings, evaluate_dataset, train_pipeline

_OVERRIDE_FIELDS = [
    "pipeline", "n_samples", "n_coarse", "n_fine", "hidden", "sample_layers",
    "radiance_layers", "dir_hidden", "iters", "batch_rays", "lr", "lr_final",
    "noise_std", "seed", "out", "workers", "chunk_rays", "downscale",
    "eval_every", "checkpoint_every",
]


def _add_override_args(p):
    p.add_argument("--config", help="JSON config file (RunConfig fields)")
    p.add_argument("--profile", choices=["desk", "paper"], default="desk",
                   help="base profile when no --config is given "
                        "(desk: CPU-sized; paper: full-scale settings)")
    for name in _OVERRIDE_FIELDS:
        flag = "--" + name.replace("_", "-")
        if name == "pipeline":
            p.add_argument(flag, choices=[NEUSAMPLE, HIERARCHICAL])
        elif name in ("lr", "lr_final", "noise_std"):
            p.add_argument(flag, type=float)
        elif name in ("out",):
            p.add_argument(flag)
        else:
            p.add_argument(flag, type=int)


def _resolve_config(args):
    if args.config:
        cfg = RunConfig.load(args.config)
    elif args.profile == "paper":
        cfg = RunConfig()
    else:
        cfg = desk_profile()
    data = cfg.to_dict()
    for name in _OVERRIDE_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if getattr(args, "scene", None):
        data["scene"] = args.scene
    return RunConfig.from_dict(data)


def _out_dir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "resolved_config.json")
    return out


class _JsonlLog(list):
    """Training log that appends each row to a file as it arrives."""

    def __init__(self, path):
        super().__init__()
        self._path = Path(path)
        self._path.write_text("")

    def append(self, row):
        super().append(row)
        with open(self._path, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def _settings(cfg):
    return TrainSettings(iters=cfg.iters, batch_rays=cfg.batch_rays,
                         lr=cfg.lr, lr_final=cfg.lr_final,
                         lr_power=cfg.lr_power, noise_std=cfg.noise_std,
                         seed=cfg.seed, eval_every=cfg.eval_every,
                         checkpoint_every=cfg.checkpoint_every,
                         chunk_rays=cfg.chunk_rays, workers=cfg.workers)


def _adam_blob(state):
    return {"step": state.step, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps,
            "schedule": {"lr_initial": state.schedule.lr_initial,
                         "lr_final": state.schedule.lr_final,
                         "total_steps": state.schedule.total_steps,
                         "power": state.schedule.power},
            "m": {n: m for n, m in state.m.items()},
            "v": {n: v for n, v in state.v.items()}}


def cmd_train(args):
    cfg = _resolve_config(args)
    if not cfg.scene:
        raise ConfigError("train needs a scene (--scene or config field)")
    out = _out_dir(cfg)
    dataset = load_scene(cfg.scene_path(), downscale=cfg.downscale)
    pipeline = build_pipeline(cfg.arch(), seed=cfg.seed)
    log = _JsonlLog(out / "train_log.jsonl")

    def on_checkpoint(step, state):
        save_checkpoint(out / "ckpt", cfg.arch(), pipeline.named_params(),
                        train_step=step, optimizer=_adam_blob(state))

    try:
        train_pipeline(pipeline, dataset, _settings(cfg),
                       log=log, on_checkpoint=on_checkpoint)
    except NumericalError as e:
        (out / "abort_diagnostics.json").write_text(
            json.dumps(getattr(e, "diagnostics", {}), indent=1))
        raise
    print(f"trained {cfg.iters} iters; checkpoint at {out / 'ckpt.manifest'}")
    return 0


def cmd_render(args):
    ckpt = load_checkpoint(args.ckpt)
    pipeline = pipeline_from_checkpoint(ckpt)
    dataset = load_scene(args.scene, downscale=args.downscale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "render_config.json").write_text(json.dumps(
        {"ckpt": str(args.ckpt), "scene": str(args.scene),
         "split": args.split, "arch": ckpt.arch}, indent=1, sort_keys=True))
    for view_id in dataset.split(args.split):
        img, _, _ = render_image(pipeline, dataset.cameras[view_id],
                                 dataset.near, dataset.far,
                                 background=dataset.background,
                                 chunk=args.chunk_rays, workers=args.workers)
        save_image(out / f"{view_id:04d}.png", img)
    if args.dump_row is not None:
        view_id = dataset.split(args.split)[0]
        cam = dataset.cameras[view_id]
        rays = camera_rays(cam, dataset.near, dataset.far)
        row = rays[args.dump_row * cam.width:(args.dump_row + 1) * cam.width]
        records, _ = sample_records(pipeline, row,
                                    background=dataset.background)
        write_report(out / f"samples_view{view_id:04d}_row{args.dump_row}.jsonl",
                     records)
    print(f"rendered {len(dataset.split(args.split))} views into {out}")
    return 0


def _cost_ratio(pipeline):
    """Per-ray MAC cost relative to the standard 64+128 two-stage baseline
    built from the same radiance architecture."""
    rf = (pipeline.radiance_field if pipeline.kind == NEUSAMPLE
          else pipeline.fine_field)
    baseline = hierarchical_ray_cost(rf.layer_shapes(), rf.layer_shapes(), 64, 128)
    return relative_cost(baseline, pipeline.ray_macs())


def cmd_extract(args):
    cfg = _resolve_config(args)
    ckpt = load_checkpoint(args.ckpt)
    if ckpt.arch["pipeline"] != NEUSAMPLE:
        raise ConfigError("extraction applies to single-shot checkpoints")
    if args.n_extract is not None and args.n_extract > ckpt.arch["n_samples"]:
        raise ConfigError(
            f"cannot extract {args.n_extract} outputs from an "
            f"{ckpt.arch['n_samples']}-output sample field")
    regular = pipeline_from_checkpoint(ckpt)
    dataset = load_scene(args.scene, downscale=cfg.downscale)
    out = _out_dir(cfg)

    ext_cfg = cfg.extraction
    plan = ExtractionPlan(
        n_extract=args.n_extract if args.n_extract is not None else ext_cfg.n_extract,
        depth_boost=args.depth_boost if args.depth_boost is not None else ext_cfg.depth_boost,
        boost_pose_count=ext_cfg.boost_pose_count,
        boost_rays_per_iter=ext_cfg.boost_rays_per_iter,
        boost_lr=ext_cfg.boost_lr,
        boost_epochs=ext_cfg.boost_epochs,
        finetune_iters=(args.finetune_iters if args.finetune_iters is not None
                        else cfg.finetune_iters()))
    extracted, boost_log, _ = run_extraction(
        regular, dataset, plan, seed=cfg.seed, batch_rays=cfg.batch_rays,
        noise_std=cfg.noise_std)

    rows = []
    for label, pipe in (("regular", regular), ("extracted", extracted)):
        view_rows, _ = evaluate_dataset(pipe, dataset, chunk=cfg.chunk_rays,
                                        workers=cfg.workers)
        agg = aggregate_row(view_rows)
        rows.append({"model": label, "n_samples": pipe.n_samples,
                     "psnr": agg["psnr"], "ssim": agg["ssim"],
                     "cost_ratio": _cost_ratio(pipe),
                     "depth_boost": bool(boost_log) if label == "extracted" else None})
    write_report(out / "extraction_report.jsonl", rows)
    save_checkpoint(out / "ckpt_extracted", pipeline_arch(extracted),
                    extracted.named_params(), train_step=ckpt.train_step)
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return 0


def cmd_eval(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_rows = []
    sources = [("a", args.ckpt)] + ([("b", args.compare)] if args.compare else [])
    for label, path in sources:
        pipeline = pipeline_from_checkpoint(load_checkpoint(path))
        dataset = load_scene(args.scene, downscale=args.downscale)
        t0 = time.perf_counter()
        rows, _ = evaluate_dataset(pipeline, dataset, split=args.split,
                                   chunk=args.chunk_rays, workers=args.workers)
        wall_ms = (time.perf_counter() - t0) * 1e3 / max(1, len(rows))
        ratio = _cost_ratio(pipeline)
        for r in rows:
            r.update({"ckpt": label, "cost_ratio": ratio, "wall_ms": wall_ms})
        agg = aggregate_row(rows)
        agg.update({"ckpt": label, "cost_ratio": ratio, "wall_ms": wall_ms})
        report_rows += rows + [agg]
        print(f"[{label}] {path}: psnr={agg['psnr']:.2f} "
              f"ssim={agg['ssim']:.4f} cost_ratio={ratio:.3f}")
    write_report(out / "eval_report.jsonl", report_rows)
    (out / "eval_config.json").write_text(json.dumps(
        {k: str(v) for k, v in vars(args).items() if k != "func"},
        indent=1, sort_keys=True))
    return 0


def cmd_bench(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []

    arch = RunConfig(n_samples=args.n_samples).arch()
    ns = build_pipeline(arch, seed=0)
    base = build_pipeline(dict(arch, pipeline=HIERARCHICAL), seed=1)
    analytic = relative_cost(base.ray_macs(), ns.ray_macs())
    print(f"analytic cost ratio (N={args.n_samples} vs 64+128 baseline): "
          f"{analytic:.3f}")
    rows.append({"bench": "analytic_ratio", "n_samples": args.n_samples,
                 "ratio": analytic})

    if args.measure:
        scene = toy_preset("spheres", views=4, resolution=args.resolution)
        scene.ring.test_every = 2
        ds = scene.build_dataset()
        cam = ds.cameras[0]
        results = {}
        for name, pipe in (("neusample", ns), ("hierarchical-baseline", base)):
            stats = bench_render(
                lambda p=pipe: render_image(p, cam, ds.near, ds.far,
                                            background=ds.background,
                                            chunk=args.chunk_rays,
                                            workers=args.workers),
                repeats=args.repeats)
            rays_per_s = cam.width * cam.height / (stats["median_ms"] / 1e3)
            results[name] = stats
            rows.append({"bench": "render", "pipeline": name,
                         "backend": kernels.backend_name(),
                         "median_ms": stats["median_ms"],
                         "min_ms": stats["min_ms"],
                         "rays_per_s": rays_per_s,
                         "workers": args.workers})
            print(f"{name}: median {stats['median_ms']:.1f} ms "
                  f"({rays_per_s:.0f} rays/s, workers={args.workers}, "
                  f"kernels={kernels.backend_name()})")
        measured = (results["neusample"]["median_ms"]
                    / results["hierarchical-baseline"]["median_ms"])
        rows.append({"bench": "measured_ratio", "ratio": measured})
        print(f"measured wall-time ratio: {measured:.3f} "
              f"(analytic {analytic:.3f})")

    if args.compare_kernels:
        from .benchmarks import compare_kernel_backends
        for row in compare_kernel_backends(repeats=args.repeats):
            rows.append(row)
            print(f"kernel {row['kernel']}: python {row['python_ms']:.2f} ms, "
                  f"compiled {row['compiled_ms']} ms, "
                  f"speedup {row['speedup']}")
    write_report(out / "bench_report.jsonl", rows)
    return 0


def cmd_gen_toy(args):
    scene = toy_preset(args.preset, views=args.views, resolution=args.resolution)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(scene.to_dict(), indent=1, sort_keys=True))
    print(f"wrote toy scene spec {out}")
    if args.preview:
        ds = scene.build_dataset()
        preview_dir = out.parent / (out.stem + "_preview")
        preview_dir.mkdir(exist_ok=True)
        for view_id in ds.test_ids:
            save_image(preview_dir / f"{view_id:04d}.png", ds.images[view_id])
        print(f"wrote {len(ds.test_ids)} preview views to {preview_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="neusample",
        description="Train, render, and benchmark single-shot learned ray "
                    "sampling against the classic coarse/fine baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a pipeline on a scene")
    p.add_argument("--scene", help="dataset directory or toy spec JSON")
    _add_override_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render views from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--downscale", type=int, default=1)
    p.add_argument("--chunk-rays", type=int, default=1024)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-row", type=int,
                   help="dump per-sample records for this pixel row of the "
                        "first rendered view")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("extract",
                       help="shrink a trained sample field and fine-tune")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--n-extract", type=int)
    boost = p.add_mutually_exclusive_group()
    boost.add_argument("--depth-boost", dest="depth_boost",
                       action="store_true", default=None)
    boost.add_argument("--no-depth-boost", dest="depth_boost",
                       action="store_false")
    p.add_argument("--finetune-iters", type=int)
    _add_override_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="PSNR/SSIM/cost report for checkpoints")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--compare", help="second checkpoint for a side-by-side")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--downscale", type=int, default=1)
    p.add_argument("--chunk-rays", type=int, default=1024)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="analytic and measured cost comparison")
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int, default=192)
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--chunk-rays", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-measure", dest="measure", action="store_false")
    p.add_argument("--compare-kernels", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-toy", help="write a procedural toy scene spec")
    p.add_argument("--preset", choices=["spheres", "occluder", "fog"],
                   default="spheres")
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, default=25)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--preview", action="store_true")
    p.set_defaults(func=cmd_gen_toy)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
