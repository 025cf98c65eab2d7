"""Depth error metrics with the usual KITTI conventions (depth cap, Garg crop)."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import SparseDepthMap, as_scalar
from .errors import DegenerateInputError, DomainError, ShapeError

GARG_CROP = (0.40810811, 0.99189189, 0.03594771, 0.96405229)

COLUMNS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")
HEADERS = ("Abs Rel", "Sq Rel", "RMSE", "RMSE_log", "d<1.25", "d<1.25^2", "d<1.25^3")


@dataclass(frozen=True)
class EvalConfig:
    depth_cap: float = 80.0
    depth_floor: float = 1e-3
    crop: Optional[str] = "garg"

    def __post_init__(self):
        if not 0 < self.depth_floor < self.depth_cap:
            raise DomainError("need 0 < depth_floor < depth_cap")
        if self.crop not in (None, "garg", "none"):
            raise DomainError(f"unknown crop {self.crop!r}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Metrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    count: int = 0

    def to_dict(self):
        return asdict(self)


def garg_crop(height, width):
    """Pixel rectangle ``(row0, row1, col0, col1)``, half-open, of the Garg evaluation crop."""
    if height <= 0 or width <= 0:
        raise DomainError("image dimensions must be positive")
    r0, r1, c0, c1 = GARG_CROP
    return int(r0 * height), int(r1 * height), int(c0 * width), int(c1 * width)


def crop_mask(shape, crop):
    mask = np.zeros(shape, dtype=bool)
    if crop in (None, "none"):
        mask[:] = True
    else:
        r0, r1, c0, c1 = garg_crop(*shape)
        mask[r0:r1, c0:c1] = True
    return mask


def compute_metrics(pred_depth, gt, cfg=EvalConfig(), pred_mask=None):
    """Standard depth metrics over ground-truth pixels inside the crop and the depth range.

    Predictions are clamped to ``[floor, cap]``; ground truth outside
    ``(floor, cap]`` is excluded.  ``pred_mask`` further restricts evaluation
    to pixels where a (sparse) prediction exists.
    """
    pred = as_scalar(pred_depth, "pred_depth")
    if not isinstance(gt, SparseDepthMap):
        gt = SparseDepthMap(as_scalar(gt, "gt"))
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    valid = gt.mask & (gt.depth > cfg.depth_floor) & (gt.depth <= cfg.depth_cap)
    valid &= crop_mask(gt.shape, cfg.crop)
    if pred_mask is not None:
        valid &= np.asarray(pred_mask, dtype=bool)
    if not valid.any():
        raise DegenerateInputError("no valid ground-truth pixels to evaluate")
    g = gt.depth[valid]
    p = np.clip(pred[valid], cfg.depth_floor, cfg.depth_cap)
    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return Metrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        count=int(valid.sum()),
    )


def format_table(rows):
    """Aligned plain-text table; ``rows`` maps a label to :class:`Metrics`."""
    label_w = max([len("method")] + [len(k) for k in rows])
    col_w = max(len(h) for h in HEADERS) + 2
    lines = ["method".ljust(label_w) + "".join(h.rjust(col_w) for h in HEADERS)]
    for name, m in rows.items():
        vals = "".join(f"{getattr(m, c):.4f}".rjust(col_w) for c in COLUMNS)
        lines.append(name.ljust(label_w) + vals)
    return "\n".join(lines)
