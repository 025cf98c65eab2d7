"""Command-line entry point: ``semidepth <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 validation error (bad config, bad
input file), 3 numeric failure (non-finite loss, failed gradient check).
Every command that takes ``--out`` writes its resolved configuration
(``config.json``) and its results (``results.json``) there; wall-clock
timings go to a separate ``timing.json`` so that results are byte-identical
across reruns.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import plotting
from .core import CameraRig, SparseDepthMap, pyramid_shapes
from .diff import fd_check
from .errors import ConfigError, NumericError, ProbeExhaustionError, SemiDepthError
from .evaluation import Metrics, compute_metrics, format_table
from .experiments import ablation_checks, run_ablation
from .io import read_depth, read_png, write_depth_png, write_pfm, write_png
from .lidar import occlusion_filter, project_points, read_pointcloud_bin, write_pointcloud_bin
from .losses import StereoSample
from .synth import default_scene_spec, make_scene
from .varopt import optimize_pair

log = logging.getLogger("semidepth")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


class Outputs:
    """Writes results, config and figures into an (optional) output directory."""

    def __init__(self, out, figures=True):
        self.dir = Path(out) if out else None
        self.figures = figures and self.dir is not None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        return None if self.dir is None else self.dir / name

    def json(self, name, obj):
        if self.dir is not None:
            (self.dir / name).write_text(_dump(obj))

    def finish(self, command, cfg, args, results, seconds):
        self.json("config.json", {"command": command, "args": _arg_record(args), "config": cfg})
        self.json("results.json", results)
        self.json("timing.json", {"seconds": seconds})


def _arg_record(args):
    skip = {"func", "out", "config", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_config(args, overrides):
    base = {"seed": args.seed}
    return cfgmod.load(args.config, cfgmod._merge(base, overrides))


# -- commands ----------------------------------------------------------------

def cmd_synth(args):
    cfg = _load_config(args, {"scene": {"preset": args.preset, "width": args.width, "height": args.height,
                                        "gt_coverage": args.gt_coverage}})
    spec = cfgmod.build_scene_spec(cfg)
    scene = make_scene(spec)
    out = Outputs(args.out, not args.no_figures)
    if out.dir is not None:
        write_png(out.path("left.png"), scene.left)
        write_png(out.path("right.png"), scene.right)
        write_pfm(out.path("true_depth_left.pfm"), scene.true_depth_l)
        write_pfm(out.path("true_depth_right.pfm"), scene.true_depth_r)
        write_depth_png(out.path("lidar_raw.png"), scene.gt_raw)
        write_depth_png(out.path("lidar_clean.png"), scene.gt_clean)
        out.path("lidar.bin").write_bytes(write_pointcloud_bin(scene.cloud))
        out.json("rig.json", scene.rig.to_dict())
        out.json("scene.json", spec.to_dict())
        if out.figures:
            filtered = occlusion_filter(scene.gt_raw, cfg["lidar"]["window"], cfg["lidar"]["rel_tol"])
            plotting.sparse_overlay(out.path("lidar.png"), scene.left, [scene.gt_raw, filtered],
                                    ["raw projected LiDAR", "occlusion filtered"])
    results = {
        "shape": list(scene.left.shape),
        "lidar_points": len(scene.cloud),
        "gt_raw_pixels": scene.gt_raw.count,
        "gt_clean_pixels": scene.gt_clean.count,
        "artifact_pixels": int(scene.artifact_labels.sum()),
        "hashes": scene.hashes(),
    }
    return cfg, results, out


def _optimize_inputs(args, cfg):
    """``(sample, truth)``: files when --left/--right are given, otherwise the configured synthetic scene."""
    if args.left or args.right:
        if not (args.left and args.right and args.rig):
            raise UsageError("--left, --right and --rig must be given together")
        rig = CameraRig.from_dict(json.loads(Path(args.rig).read_text()))
        gts = [SparseDepthMap(read_depth(p)) if p else None for p in (args.gt_left, args.gt_right)]
        truth = SparseDepthMap(read_depth(args.truth)) if args.truth else None
        return StereoSample(read_png(args.left), read_png(args.right), rig, *gts), truth
    scene = make_scene(cfgmod.build_scene_spec(cfg))
    use_gt = cfg["weights"]["lambda3"] > 0 and scene.gt_clean.count + scene.gt_clean_r.count > 0
    gt_l, gt_r = (scene.gt_clean, scene.gt_clean_r) if use_gt else (None, None)
    return StereoSample(scene.left, scene.right, scene.rig, gt_l, gt_r), SparseDepthMap(scene.true_depth_l)


def cmd_optimize(args):
    cfg = _load_config(args, {"adam": {"total_steps": args.steps, "lr0": args.lr},
                              "weights": {f"lambda{i}": getattr(args, f"lambda{i}") for i in range(1, 5)}})
    sample, truth = _optimize_inputs(args, cfg)
    weights, adam = cfgmod.build_weights(cfg), cfgmod.build_adam(cfg)
    res = optimize_pair(sample, weights, adam, init=cfg["adam"]["init"], seed=cfg["seed"],
                        trace_every=max(1, adam.total_steps // 50))
    results = {"initial": res.initial.to_dict(), "final": res.final.to_dict()}
    if truth is not None:
        results["metrics"] = compute_metrics(res.depth_l(), truth, cfgmod.build_eval(cfg)).to_dict()
    out = Outputs(args.out, not args.no_figures)
    if out.dir is not None:
        write_pfm(out.path("depth_left.pfm"), res.depth_l())
        write_pfm(out.path("depth_right.pfm"), res.depth_r())
        write_depth_png(out.path("depth_left.png"), np.minimum(res.depth_l(), 255.0))
        out.json("trace.json", res.trace)
        if out.figures:
            plotting.depth_panel(out.path("depth.png"), sample.left, res.depth_l(),
                                 None if truth is None else truth.depth, cap=cfg["eval"]["depth_cap"])
            plotting.loss_curves(out.path("loss.png"), res.trace)
    return cfg, results, out


def cmd_eval(args):
    cfg = _load_config(args, {"eval": {"depth_cap": args.cap, "crop": args.crop}})
    pred, gt = read_depth(args.pred), SparseDepthMap(read_depth(args.gt))
    pred_mask = None
    if args.intersect:
        pred_mask = pred > 0
    m = compute_metrics(pred, gt, cfgmod.build_eval(cfg), pred_mask=pred_mask)
    print(format_table({Path(args.pred).name: m}))
    return cfg, {"metrics": m.to_dict()}, Outputs(args.out, False)


def cmd_lidar_project(args):
    cfg = _load_config(args, {"lidar": {"offset": args.offset}})
    rig = CameraRig.from_dict(json.loads(Path(args.rig).read_text()))
    cloud = read_pointcloud_bin(Path(args.cloud).read_bytes())
    offset = cfg["lidar"]["offset"]
    if offset is None:
        offset = list(rig.lidar_offset)
        cfg["lidar"]["offset"] = offset
    raw = project_points(cloud, rig, offset)
    out = Outputs(args.out, not args.no_figures)
    if out.dir is not None:
        write_depth_png(out.path("projected.png"), raw)
    return cfg, {"points": len(cloud), "projected_pixels": raw.count, "offset": list(offset)}, out


def cmd_lidar_filter(args):
    cfg = _load_config(args, {"lidar": {"window": args.window, "rel_tol": args.rel_tol}})
    raw = SparseDepthMap(read_depth(args.depth))
    kept = occlusion_filter(raw, cfg["lidar"]["window"], cfg["lidar"]["rel_tol"])
    out = Outputs(args.out, not args.no_figures)
    if out.dir is not None:
        write_depth_png(out.path("filtered.png"), kept)
    return cfg, {"input_points": raw.count, "kept_points": kept.count, "removed_points": raw.count - kept.count}, out


def gradcheck_fixture(seed, height=16, width=32):
    """Synthetic sample of the default layout with random inverse-depth pyramids."""
    scene = make_scene(default_scene_spec(width, height, seed=seed))
    sample = StereoSample(scene.left, scene.right, scene.rig, scene.gt_clean, scene.gt_clean_r)
    rng = np.random.default_rng(seed)
    shapes = pyramid_shapes(height, width)
    pyr_l = [rng.uniform(0.02, 0.3, s) for s in shapes]
    pyr_r = [rng.uniform(0.02, 0.3, s) for s in shapes]
    return sample, pyr_l, pyr_r


def cmd_gradcheck(args):
    cfg = _load_config(args, {})
    sample, pyr_l, pyr_r = gradcheck_fixture(cfg["seed"])
    err = fd_check(sample, pyr_l, pyr_r, cfgmod.build_weights(cfg), step=args.step, probes=args.probes, seed=cfg["seed"])
    ok = err < args.threshold
    print(f"max_rel_error {err:.3e} threshold {args.threshold:.1e} {'PASS' if ok else 'FAIL'}")
    results = {"max_rel_error": err, "threshold": args.threshold, "passed": bool(ok),
               "probes": args.probes, "step": args.step}
    if not ok:
        raise _CheckFailed(cfg, results, Outputs(args.out, False))
    return cfg, results, Outputs(args.out, False)


class _CheckFailed(Exception):
    def __init__(self, cfg, results, out):
        super().__init__("gradient check failed")
        self.payload = (cfg, results, out)


def cmd_ablate(args):
    cfg = _load_config(args, {"scene": {"preset": args.scene}, "adam": {"total_steps": args.steps, "lr0": args.lr}})
    scene = make_scene(cfgmod.build_scene_spec(cfg))
    results, depths = run_ablation(
        scene,
        cfgmod.build_weights(cfg),
        cfgmod.build_adam(cfg),
        seed=cfg["seed"],
        eval_cfg=cfgmod.build_eval(cfg),
        window=cfg["lidar"]["window"],
        rel_tol=cfg["lidar"]["rel_tol"],
        workers=args.threads,
    )
    table = format_table({k: Metrics(**v["metrics"]) for k, v in results.items()})
    print(table)
    seconds = {k: v.pop("seconds") for k, v in results.items()}
    payload = {"runs": results, "checks": ablation_checks(results), "table": table.splitlines()}
    out = Outputs(args.out, not args.no_figures)
    if out.figures:
        plotting.metrics_bars(out.path("ablation.png"), results)
        for name, depth in depths.items():
            plotting.depth_panel(out.path(f"depth_{name.replace('/', '_')}.png"), scene.left, depth,
                                 scene.true_depth_l, title=name, cap=cfg["eval"]["depth_cap"])
    out.json("run_timing.json", seconds)
    return cfg, payload, out


# -- parser ------------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="JSON experiment configuration")
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", type=int, help="master seed (scene generation, probes)")
    g.add_argument("--threads", type=int, default=1, help="worker processes for multi-run commands")
    g.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="semidepth", description="Semi-supervised stereo depth by direct optimisation.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="render a synthetic stereo scene with LiDAR")
    p.add_argument("--preset", choices=["default", "plane"])
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--gt-coverage", choices=["full", "bottom_half", "top_half", "none"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("optimize", parents=[common], help="fit inverse depth to a stereo pair")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--rig", help="rig JSON (as written by synth)")
    p.add_argument("--gt-left")
    p.add_argument("--gt-right")
    p.add_argument("--truth", help="dense depth to evaluate against")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    for i in range(1, 5):
        p.add_argument(f"--lambda{i}", type=float)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", parents=[common], help="depth metrics of a prediction against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--cap", type=float)
    p.add_argument("--crop", choices=["garg", "none"])
    p.add_argument("--intersect", action="store_true", help="only pixels valid in both maps")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lidar-project", parents=[common], help="project a .bin point cloud to a depth PNG")
    p.add_argument("cloud")
    p.add_argument("--rig", required=True)
    p.add_argument("--offset", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.set_defaults(func=cmd_lidar_project)

    p = sub.add_parser("lidar-filter", parents=[common], help="remove occlusion artifacts from sparse depth")
    p.add_argument("depth")
    p.add_argument("--window", type=int)
    p.add_argument("--rel-tol", type=float)
    p.set_defaults(func=cmd_lidar_filter)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the analytic gradient")
    p.add_argument("--probes", type=int, default=64)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", parents=[common], help="raw vs filtered LiDAR, with vs without LR consistency")
    p.add_argument("--scene", choices=["default", "plane"], default="default")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_ablate)
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("semidepth: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        cfg, results, out = args.func(args)
    except UsageError as exc:
        print(f"semidepth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _CheckFailed as exc:
        cfg, results, out = exc.payload
        code = EXIT_NUMERIC
    except (NumericError, ProbeExhaustionError, FloatingPointError) as exc:
        print(f"semidepth: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SemiDepthError, ValueError, OSError) as exc:
        print(f"semidepth: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out.finish(args.command, cfg, args, results, time.perf_counter() - t0)
    print(_dump(results), end="")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
