"""Reproducible experiment runners on synthetic scenes.

Each runner returns plain dicts of floats so that results can be dumped to
JSON unchanged.  Predictions are always evaluated against the exact depth of
the scene, never against the (sparse, possibly contaminated) LiDAR maps used
for supervision.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import SparseDepthMap
from .evaluation import EvalConfig, compute_metrics
from .lidar import occlusion_filter
from .losses import LossWeights, StereoSample
from .synth import restrict
from .varopt import AdamConfig, optimize_pair

log = logging.getLogger(__name__)

# learning rate used for the desk-scale runs; see AdamConfig.scaled
DEFAULT_LR = 0.02
DEFAULT_STEPS = 3000

ABLATION_RUNS = (
    ("raw", True),
    ("raw", False),
    ("filtered", True),
    ("filtered", False),
)


def ablation_name(gt_kind, with_lr):
    return f"{gt_kind}_gt/{'with' if with_lr else 'without'}_lr"


def true_depth_map(scene, region=None):
    """Dense ground truth of the left view, optionally restricted to a boolean region."""
    gt = SparseDepthMap(scene.true_depth_l)
    return gt if region is None else restrict(gt, region)


def evaluate_left(result, scene, eval_cfg=EvalConfig(), region=None):
    return compute_metrics(result.depth_l(), true_depth_map(scene, region), eval_cfg)


def run_single(scene, weights, adam, gt_left=None, gt_right=None, seed=0, eval_cfg=EvalConfig()):
    """Optimise one stereo pair and evaluate the left depth; returns ``(OptResult, summary dict)``."""
    sample = StereoSample(scene.left, scene.right, scene.rig, gt_left, gt_right)
    t0 = time.perf_counter()
    res = optimize_pair(sample, weights, adam, seed=seed, trace_every=max(1, adam.total_steps // 20))
    elapsed = time.perf_counter() - t0
    metrics = evaluate_left(res, scene, eval_cfg)
    summary = {
        "metrics": metrics.to_dict(),
        "initial_loss": res.initial.total,
        "final_loss": res.final.total,
        "final_terms": {k: v for k, v in res.final.to_dict().items() if k != "per_scale"},
        "seconds": elapsed,
    }
    log.info("run finished in %.1fs: abs_rel %.4f rmse %.3f", elapsed, metrics.abs_rel, metrics.rmse)
    return res, summary


def _ablation_job(args):
    scene, weights, adam, gt_kind, with_lr, seed, eval_cfg, window, rel_tol = args
    if gt_kind == "filtered":
        gl = occlusion_filter(scene.gt_raw, window, rel_tol)
        gr = occlusion_filter(scene.gt_raw_r, window, rel_tol)
    else:
        gl, gr = scene.gt_raw, scene.gt_raw_r
    w = weights if with_lr else weights.replace(lambda2=0.0)
    res, summary = run_single(scene, w, adam, gl, gr, seed, eval_cfg)
    summary.update(gt=gt_kind, with_lr=with_lr, gt_points=int(gl.count + gr.count))
    return ablation_name(gt_kind, with_lr), summary, res.depth_l()


def run_ablation(scene, weights=LossWeights(), adam=None, seed=0, eval_cfg=EvalConfig(),
                 window=7, rel_tol=0.05, workers=1, runs=ABLATION_RUNS):
    """Raw vs occlusion-filtered LiDAR supervision, each with and without the LR term.

    Returns ``(results, depths)`` keyed by run name.  With ``workers > 1`` the
    runs execute in separate processes; every run is deterministic on its own,
    so the output does not depend on ``workers``.
    """
    adam = adam or AdamConfig.scaled(DEFAULT_STEPS, DEFAULT_LR)
    jobs = [(scene, weights, adam, g, lr, seed, eval_cfg, window, rel_tol) for g, lr in runs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_ablation_job, jobs))
    else:
        out = [_ablation_job(j) for j in jobs]
    results = {name: summary for name, summary, _ in out}
    depths = {name: depth for name, _, depth in out}
    return results, depths


def ablation_checks(results):
    """Direction checks on an ablation result dict (missing runs give ``None``)."""

    def get(g, lr, key):
        r = results.get(ablation_name(g, lr))
        return None if r is None else r["metrics"][key]

    checks = {}
    a, b = get("filtered", True, "abs_rel"), get("filtered", False, "abs_rel")
    checks["lr_lowers_abs_rel"] = None if None in (a, b) else a < b
    a, b = get("filtered", True, "rmse"), get("raw", True, "rmse")
    checks["filtering_lowers_rmse"] = None if None in (a, b) else a < b
    if len(results) == 4:
        best = min(results, key=lambda k: results[k]["metrics"]["abs_rel"])
        checks["full_method_best"] = best == ablation_name("filtered", True)
    return checks


def half_masks(shape):
    h, w = shape
    top = np.zeros((h, w), dtype=bool)
    top[: h // 2] = True
    return top, ~top


def run_fusion(scene, weights=LossWeights(), adam=None, seed=0, gt="clean"):
    """Semi-supervised fusion with LiDAR on the bottom half of the image only.

    Compares the full loss with a supervised-only run (photometric, LR and
    smoothness weights zeroed) and an unsupervised-only run (no LiDAR term),
    reporting RMSE on the unsupervised top half and over the whole frame.
    """
    adam = adam or AdamConfig.scaled(DEFAULT_STEPS, DEFAULT_LR)
    top, bottom = half_masks(scene.left.shape[:2])
    src_l, src_r = (scene.gt_clean, scene.gt_clean_r) if gt == "clean" else (scene.gt_raw, scene.gt_raw_r)
    gl, gr = restrict(src_l, bottom), restrict(src_r, bottom)
    variants = {
        "full": weights,
        "supervised_only": weights.replace(lambda1=0.0, lambda2=0.0, lambda4=0.0),
        "unsupervised_only": weights.replace(lambda3=0.0),
    }
    cfg = EvalConfig(crop=None)
    results, depths = {}, {}
    for name, w in variants.items():
        res, summary = run_single(scene, w, adam, gl, gr, seed, cfg)
        summary["rmse_top"] = evaluate_left(res, scene, cfg, top).rmse
        summary["rmse_bottom"] = evaluate_left(res, scene, cfg, bottom).rmse
        summary["rmse_full"] = summary["metrics"]["rmse"]
        results[name] = summary
        depths[name] = res.depth_l()
    return results, depths


def fusion_checks(results):
    full = results["full"]
    return {
        "beats_supervised_on_top_half": full["rmse_top"] < results["supervised_only"]["rmse_top"],
        "beats_unsupervised_on_full_frame": full["rmse_full"] < results["unsupervised_only"]["rmse_full"],
    }
